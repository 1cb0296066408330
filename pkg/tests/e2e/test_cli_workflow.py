"""
End-to-End Tests - Command line workflow
"""
import csv
import io
import json

import pytest

from src.main import main
from src.models.domain import ValidationReport
from src.services.crosscheck_service import CrosscheckService
from src.services.pmf_service import PmfService
from src.services.rate_service import RateService
from src.utils.constants import ExitCodes


def read_csv(text: str):
    return list(csv.reader(io.StringIO(text)))


@pytest.mark.e2e
class TestInspectCommands:
    """theta and explosion"""

    def test_theta_listing(self, capsys):
        assert main(["theta", "3", "2"]) == ExitCodes.OK
        assert capsys.readouterr().out.strip() == "[[1,1,1],[1,2,0],[2,0,1]]"

    def test_explosion_of_quadratic_birth_rates(self, capsys):
        code = main(["explosion", "--preset", "fpbp", "--rates", "n^2", "--terms", "5000"])
        assert code == ExitCodes.OK
        assert capsys.readouterr().out.splitlines()[0] == "verdict: PossiblyExploding"

    def test_usage_error(self, capsys):
        assert main(["theta", "three", "2"]) == ExitCodes.INPUT_ERROR


@pytest.mark.e2e
class TestPmfCommand:
    """pmf tables through the command line"""

    def test_malformed_model_file(self, tmp_path, capsys):
        model = tmp_path / "model.json"
        model.write_text('{"n0": 0,\n "k": ', encoding="utf-8")

        code = main(["pmf", "--model", str(model), "--alpha", "0.7", "--t-grid", "0:1:0.5"])
        assert code == ExitCodes.INPUT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_pmf_writes_table_and_manifest(self, tmp_path, capsys):
        """Test a Poisson table with its manifest"""
        out = tmp_path / "tfpp.csv"
        argv = ["pmf", "--preset", "tfpp", "--lambda", "1", "--alpha", "0.8", "--t-grid", "0:1:0.5",
                "--mass-tol", "1e-8", "--out", str(out)]

        assert main(argv) == ExitCodes.OK
        rows = read_csv(out.read_text(encoding="utf-8"))
        assert rows[0] == ["t", "n", "p", "error_bound"]
        model = RateService.preset("tfpp", {"lambda": 1.0})
        for t, n, p, _ in rows[1:]:
            assert float(p) == pytest.approx(PmfService.pmf(model, 0.8, int(n), float(t)), abs=1e-12)

        manifest = json.loads((tmp_path / "tfpp.csv.manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "pmf"
        assert manifest["arguments"] == argv
        assert manifest["order"] == {"alpha": 0.8}
        assert manifest["tool_version"] == "1.0.0"

    def test_gfcp_on_stdout(self, capsys):
        """Test that stdout values equal the library values"""
        code = main(["pmf", "--preset", "gfcp", "--lambdas", "1,3", "--alpha", "0.5",
                     "--t-grid", "1:1:1", "--states", "4"])
        assert code == ExitCodes.OK

        rows = read_csv(capsys.readouterr().out)
        model = RateService.preset("gfcp", {"lambdas": [1.0, 3.0]})
        assert [row[1] for row in rows[1:]] == ["0", "1", "2", "3"]
        for t, n, p, _ in rows[1:]:
            assert float(p) == pytest.approx(PmfService.pmf(model, 0.5, int(n), 1.0), rel=1e-12)

    def test_pattern_budget_exit_code(self, capsys):
        code = main(["pmf", "--formula", "1 + n/10 + i", "--k", "2", "--alpha", "0.7", "--t-grid", "1:1:1",
                     "--mass-tol", "1e-12", "--strategy", "signatures", "--pattern-budget", "2"])
        assert code == ExitCodes.BUDGET_EXCEEDED
        assert "pattern_budget_exhausted" in capsys.readouterr().err

    def test_finite_rate_list(self, capsys):
        """Test that a listed-rate birth process tabulates its listed states"""
        code = main(["pmf", "--preset", "fpbp", "--lambdas", "1,2,3,4", "--alpha", "0.8", "--t-grid", "1:1:1"])
        assert code == ExitCodes.TOLERANCE_FAILURE

        captured = capsys.readouterr()
        assert [row[1] for row in read_csv(captured.out)[1:]] == ["1", "2", "3", "4"]
        assert "rate_table_exhausted" in captured.err

    def test_ml_eval(self, capsys):
        assert main(["ml-eval", "--alpha", "1", "--z", "0,-1"]) == ExitCodes.OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "alpha,z,value,error_bound,reduced_accuracy"
        assert float(lines[1].split(",")[2]) == 1.0
        assert float(lines[2].split(",")[2]) == pytest.approx(0.36787944117144233, rel=1e-14)

    def test_invalid_alpha(self, capsys):
        assert main(["ml-eval", "--alpha", "1.5", "--z", "0"]) == ExitCodes.INPUT_ERROR


@pytest.mark.e2e
class TestSimulateAndValidate:
    """simulate and validate commands"""

    def test_simulate_is_reproducible(self, tmp_path, capsys):
        """Test that the same seed writes identical bytes"""
        outputs = []
        for name in ("first", "second"):
            paths = tmp_path / f"{name}.jsonl"
            ensemble = tmp_path / f"{name}.csv"
            code = main(["simulate", "--preset", "tfpp", "--lambda", "2", "--horizon", "1", "--paths", "300",
                         "--seed", "99", "--out", str(paths), "--ensemble-out", str(ensemble)])
            assert code == ExitCodes.OK
            outputs.append((paths.read_bytes(), ensemble.read_bytes()))

        assert outputs[0] == outputs[1]
        assert len(outputs[0][0].splitlines()) == 300

    def test_simulate_rejects_other_orders(self, capsys):
        code = main(["simulate", "--preset", "tfpp", "--alpha", "0.7", "--horizon", "1", "--paths", "10",
                     "--seed", "1"])
        assert code == ExitCodes.INPUT_ERROR

    def test_validate_residual(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["validate", "--preset", "tfpp", "--alpha", "1", "--mode", "residual",
                     "--t-grid", "0:1:0.001", "--states", "4", "--out", str(out)])

        assert code == ExitCodes.OK
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["mode"] == "residual"
        assert report["passed"] is True
        assert (tmp_path / "report.json.manifest.json").exists()

    def test_validate_failure_exit_code(self, capsys):
        """Test that a coarse grid fails the residual check"""
        code = main(["validate", "--preset", "tfpp", "--alpha", "0.7", "--mode", "residual",
                     "--t-grid", "0:1:0.05", "--states", "3"])
        assert code == ExitCodes.TOLERANCE_FAILURE
        assert json.loads(capsys.readouterr().out)["passed"] is False

    def test_validate_forwards_options(self, mocker, capsys):
        """Test the options handed to the crosscheck suite"""
        report = ValidationReport(mode="laplace", passed=True, max_deviation=0.0, tolerance=1e-6)
        run = mocker.patch.object(CrosscheckService, "run", return_value=report)

        code = main(["validate", "--preset", "tfpp", "--alpha", "0.9", "--mode", "laplace",
                     "--s-values", "0.5,2", "--states", "3", "--seed", "11"])

        assert code == ExitCodes.OK
        args, kwargs = run.call_args
        assert args[0] == "laplace"
        assert args[2].alpha == 0.9
        assert kwargs["s_values"] == [0.5, 2.0]
        assert kwargs["states"] == 3
        assert kwargs["seed"] == 11
