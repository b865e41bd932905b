import csv
import json
import math

import numpy as np
import pytest

from gpide import cli
from gpide.config import ExperimentConfig
from gpide.errors import ConfigError, InvariantViolation
from gpide.grid import read_binary, write_binary

SMALL_GRID = {"bounds": [[-6, 6], [-1, 1], [-12, 12]], "points": [13, 9, 13]}
GAUSSIAN_MODEL = {"sigma2_lo": 1.0, "sigma2_hi": 1.0, "gamma_lo": 0.0, "gamma_hi": 0.0,
                  "lambda_lo": 0.01, "lambda_hi": 0.02}


def write_config(tmp_path, **blocks):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(blocks))
    return path


def run(tmp_path, command, *extra, **blocks):
    out = tmp_path / "out"
    return cli.main([command, "--config", str(write_config(tmp_path, **blocks)),
                     "--out", str(out), *extra]), out


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict({"model": {"gamma_hi": 0.25},
                                          "scheme": {"n": [2, 4], "grid": SMALL_GRID},
                                          "phi": {"name": "tanh_x"}})
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()

    def test_defaults_round_trip(self):
        cfg = ExperimentConfig()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("raw", [
        {"modle": {}},
        {"model": {"alpha": 1.5, "colour": 1}},
        {"scheme": {"grid": {"pointz": 3}}},
        {"scheme": {"n": [8, 4]}},
        {"scheme": {"jump_projection": "spline"}},
        {"output": {"formats": ["xml"]}},
        {"model": {"alpha": 2.5}},
        {"phi": {"name": "sin_q"}},
    ])
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            cfg = ExperimentConfig.from_dict(raw)
            cfg.phi.build()


class TestExitCodes:
    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", model={"nope": 1})
        assert code == cli.EXIT_CONFIG
        assert "nope" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_bad_workers(self, tmp_path):
        code, _ = run(tmp_path, "report", "--workers", "0")
        assert code == cli.EXIT_CONFIG

    def test_infeasible_law(self, tmp_path):
        code, _ = run(tmp_path, "solve", model={"lambda_lo": 0.5, "lambda_hi": 1.0},
                      scheme={"n": [2], "grid": SMALL_GRID})
        assert code == cli.EXIT_NUMERICS

    def test_narrow_grid(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", scheme={"n": [4], "grid": {
            "bounds": [[-0.5, 0.5], [-0.1, 0.1], [-0.5, 0.5]], "points": 5}})
        assert code == cli.EXIT_NUMERICS
        assert "boundary bound" in capsys.readouterr().err

    def test_invariant_violation(self, tmp_path, monkeypatch):
        def broken(*args, **kwargs):
            raise InvariantViolation("layer 1: sup norm too large")

        monkeypatch.setattr(cli, "solve", broken)
        code, _ = run(tmp_path, "solve", scheme={"n": [2], "grid": SMALL_GRID})
        assert code == cli.EXIT_CHECK

    def test_degenerate_fit(self, tmp_path, monkeypatch):
        values = iter([0.5, 0.5, 0.5, 0.5 + 1e-3, 0.5 + 1e-4])
        monkeypatch.setattr(cli, "limit_functional", lambda *a, **k: next(values))
        code, _ = run(tmp_path, "rate-study", scheme={"n": [1, 2, 3, 4, 5], "grid": SMALL_GRID},
                      analysis={"reference": 0.5})
        assert code == cli.EXIT_CHECK

    def test_too_few_n(self, tmp_path):
        code, _ = run(tmp_path, "rate-study", scheme={"n": [2, 4, 8, 16], "grid": SMALL_GRID})
        assert code == cli.EXIT_CONFIG

    def test_seed_is_accepted(self, tmp_path):
        code, _ = run(tmp_path, "generator-eval", "--seed", "7")
        assert code == cli.EXIT_OK


class TestSolve:
    def test_constant(self, tmp_path):
        code, out = run(tmp_path, "solve", scheme={"n": [3], "grid": SMALL_GRID},
                        phi={"name": "constant", "params": {"value": 0.25}})
        assert code == cli.EXIT_OK
        summary = json.loads((out / "solve_summary.json").read_text())
        assert summary["invariants"] == "pass"
        assert summary["layer_sup_norms"] == pytest.approx([0.25] * 4, abs=1e-15)
        layer = read_binary(out / "layer_3.bin")
        assert np.max(np.abs(layer.values - 0.25)) < 1e-14

    def test_default_config_round_trips(self, tmp_path):
        code, out = run(tmp_path, "solve", scheme={"n": [8]})
        assert code == cli.EXIT_OK
        layer = read_binary(out / "layer_8.bin")
        write_binary(layer, tmp_path / "again.bin")
        assert (tmp_path / "again.bin").read_bytes() == (out / "layer_8.bin").read_bytes()
        with open(out / "layers.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "x", "y", "z", "value"]
        last = np.array([float(r[4]) for r in rows[1:] if r[0] == "8"])
        assert np.array_equal(last, layer.values.ravel())

    def test_drift_lattice_grid(self, tmp_path):
        code, out = run(tmp_path, "solve",
                        model={"gamma_lo": -1.0, "gamma_hi": 1.0},
                        scheme={"n": [4], "grid": {"bounds": [[-6, 6], [-2, 2], [-12, 12]],
                                                   "points": [9, 2, 9], "y_drift_lattice": True}},
                        phi={"name": "tanh_y"})
        assert code == cli.EXIT_OK
        assert read_binary(out / "layer_4.bin").grid.shape == (9, 17, 9)
        summary = json.loads((out / "solve_summary.json").read_text())
        assert summary["value_at_origin"] == pytest.approx(math.tanh(1.0), abs=1e-12)


class TestRateStudy:
    def test_gaussian_case(self, tmp_path):
        code, out = run(tmp_path, "rate-study", model=GAUSSIAN_MODEL, phi={"name": "cos_x"},
                        scheme={"n": [2, 4, 8, 16], "grid": {
                            "bounds": [[-8, 8], [-1, 1], [-12, 12]], "points": [201, 3, 9]},
                            "boundary_tol": 1.0},
                        analysis={"reference": math.exp(-0.5)})
        assert code == cli.EXIT_OK
        summary = json.loads((out / "rate_report.json").read_text())
        assert summary["reference"] == math.exp(-0.5)
        assert summary["reference_kind"] == "closed_form"
        assert summary["pass"] is True

    def test_drift_case_is_exact(self, tmp_path):
        code, out = run(tmp_path, "rate-study", model={"gamma_lo": -1.0, "gamma_hi": 1.0},
                        phi={"name": "tanh_y"},
                        scheme={"n": [1, 2, 3, 4], "grid": {
                            "bounds": [[-6, 6], [-2, 2], [-12, 12]], "points": [9, 2, 9],
                            "y_drift_lattice": True}},
                        analysis={"reference": math.tanh(1.0)})
        assert code == cli.EXIT_OK
        summary = json.loads((out / "rate_report.json").read_text())
        assert summary["exact"] is True and summary["pass"] is True
        with open(out / "rate_report.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["abs_residual"]) for r in rows] == pytest.approx([0.0] * 4, abs=1e-12)

    def test_full_model_theory_order(self, tmp_path):
        code, out = run(tmp_path, "rate-study", analysis={"delta": 1.2},
                        scheme={"n": [1, 2, 3, 4, 6], "grid": {
                            "bounds": [[-6, 6], [-0.5, 0.5], [-12, 12]], "points": [13, 2, 13],
                            "y_drift_lattice": True}, "boundary_tol": 1.0})
        assert code in (cli.EXIT_OK, cli.EXIT_CHECK)
        summary = json.loads((out / "rate_report.json").read_text())
        assert summary["theory_order"] == pytest.approx(0.3 / 16.2, abs=1e-15)
        assert summary["pass"] == (summary["fitted_order"] >= summary["theory_order"] - 0.02)
        assert summary["config"]["analysis"]["delta"] == 1.2


class TestOtherCommands:
    def test_consistency_constant(self, tmp_path):
        code, out = run(tmp_path, "consistency", phi={"name": "constant"})
        assert code == cli.EXIT_OK
        with open(out / "consistency.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 9
        assert all(float(r["residual"]) == 0.0 for r in rows)

    def test_generator_eval(self, tmp_path):
        code, out = run(tmp_path, "generator-eval", phi={"name": "constant"},
                        analysis={"p": 1.0, "A": 2.0})
        assert code == cli.EXIT_OK
        # G(p, A, const) = sup q p + sup sigma2 A / 2 = 0.5 + 1.0
        assert json.loads((out / "generator.json").read_text())["G"] == pytest.approx(1.5)

    def test_report(self, tmp_path):
        code, out = run(tmp_path, "report", analysis={"delta": 1.2, "N_max": 4},
                        scheme={"n": [8, 16]})
        assert code == cli.EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["rate_exponent"] == pytest.approx(0.3 / 16.2)
        assert set(rep["bounds"]) == {"8", "16"}
        assert rep["moments"]["M_Z_proxy_is_lower_bound"] is True
