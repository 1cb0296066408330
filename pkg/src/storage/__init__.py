# Output writers package
