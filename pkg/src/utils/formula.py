"""
Formula - rate expression grammar

Grammar version "1":

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | "n" | "i" | "(" expr ")"

Numbers are integer or decimal literals. "^" binds tighter than unary minus
on its left and is right-associative, so -2^2 is -4 and 2^3^2 is 512.
"""
import math
import operator
import re
from dataclasses import dataclass
from typing import Callable, List, Tuple

from src.utils.exceptions import FormulaError

GRAMMAR_VERSION = "1"

_TOKEN_RE = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([ni])|(\*\*|[-+*/^()]))")

_BINARY_OPS = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
    "^": operator.pow,
}

Evaluator = Callable[[float, float], float]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


def tokenize(source: str) -> List[Token]:
    """Split a formula into tokens; columns are 1-based"""
    tokens: List[Token] = []
    position = 0
    stripped_end = len(source.rstrip())
    while position < stripped_end:
        match = _TOKEN_RE.match(source, position)
        if not match:
            offending = len(source) - len(source[position:].lstrip())
            raise FormulaError(f"Unexpected character {source[offending]!r} in formula", 1, offending + 1)
        number, variable, symbol = match.groups()
        column = match.start(match.lastindex) + 1
        if number is not None:
            tokens.append(Token("number", number, column))
        elif variable is not None:
            tokens.append(Token("variable", variable, column))
        else:
            tokens.append(Token("op", "^" if symbol == "**" else symbol, column))
        position = match.end()
    tokens.append(Token("end", "", stripped_end + 1))
    return tokens


class _Parser:
    """Recursive-descent parser building nested closures"""

    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.index = 0

    def peek(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> None:
        token = self.advance()
        if token.text != text:
            raise FormulaError(f"Expected {text!r} but found {token.text or 'end of formula'!r}", 1, token.column)

    def parse(self) -> Evaluator:
        node = self.expr()
        token = self.peek()
        if token.kind != "end":
            raise FormulaError(f"Unexpected token {token.text!r}", 1, token.column)
        return node

    def expr(self) -> Evaluator:
        node = self.term()
        while self.peek().text in ("+", "-"):
            node = _binary(_BINARY_OPS[self.advance().text], node, self.term())
        return node

    def term(self) -> Evaluator:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            node = _binary(_BINARY_OPS[self.advance().text], node, self.unary())
        return node

    def unary(self) -> Evaluator:
        if self.peek().text == "-":
            self.advance()
            inner = self.unary()
            return lambda n, i: -inner(n, i)
        return self.power()

    def power(self) -> Evaluator:
        base = self.atom()
        if self.peek().text == "^":
            self.advance()
            return _binary(operator.pow, base, self.unary())
        return base

    def atom(self) -> Evaluator:
        token = self.advance()
        if token.kind == "number":
            value = float(token.text)
            return lambda n, i: value
        if token.kind == "variable":
            if token.text == "n":
                return lambda n, i: n
            return lambda n, i: i
        if token.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise FormulaError(f"Unexpected token {token.text or 'end of formula'!r}", 1, token.column)


def _binary(op: Callable[[float, float], float], left: Evaluator, right: Evaluator) -> Evaluator:
    return lambda n, i: op(left(n, i), right(n, i))


def parse_formula(source: str) -> Evaluator:
    """
    Compile a rate formula over the variables n and i

    Args:
        source: Formula text, e.g. "n^2" or "1 + n/10"

    Returns:
        Evaluator: f(n, i) -> float

    Raises:
        FormulaError: Syntax errors, with the offending column
    """
    if not source or not source.strip():
        raise FormulaError("Empty formula")
    compiled = _Parser(source).parse()

    def evaluate(n: float, i: float) -> float:
        try:
            value = compiled(float(n), float(i))
        except (ZeroDivisionError, OverflowError) as e:
            raise FormulaError(f"Formula {source!r} failed at n={n}, i={i}: {e}")
        if isinstance(value, complex) or not math.isfinite(value):
            raise FormulaError(f"Formula {source!r} is not a finite real at n={n}, i={i}")
        return float(value)

    return evaluate


def formula_variables(source: str) -> Tuple[str, ...]:
    """Variables referenced by a formula, sorted"""
    return tuple(sorted({t.text for t in tokenize(source) if t.kind == "variable"}))
