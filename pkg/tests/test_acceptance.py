import csv
import json
import math
import time

import numpy as np
import pytest

from gpide import cli
from gpide.analysis import rate_exponent
from gpide.generator import (GeneratorInput, consistency_residual, corner_laws, eval_G,
                             fit_c_alpha_beta, lhat_bound, q0_from_beta)
from gpide.grid import Grid, GridFunction
from gpide.scheme import default_grid, drift_lattice_axis, limit_functional, solve
from gpide.sublinear_step import StepContext, sup_step
from gpide.testfunctions import make_test_function

from conftest import make_box, record_acceptance
from test_cli import run
from test_generator import cos_wave, wave_sides
from test_grid_scheme import TINY, brute_force, reachable_grid

GAUSSIAN_MODEL = {"sigma2_lo": 1.0, "sigma2_hi": 1.0, "gamma_lo": 0.0, "gamma_hi": 0.0,
                  "lambda_lo": 0.01, "lambda_hi": 0.02}
FULL_GRID = {"bounds": [[-6, 6], [-0.5, 0.5], [-12, 12]], "points": [49, 2, 49],
             "y_drift_lattice": True}


def gaussian_study(tmp_path, workers=1):
    return run(tmp_path, "rate-study", "--workers", str(workers), model=GAUSSIAN_MODEL,
               phi={"name": "cos_x"}, scheme={"n": [8, 16, 32, 64]},
               analysis={"reference": math.exp(-0.5)})


def full_study(tmp_path, workers=1):
    return run(tmp_path, "rate-study", "--workers", str(workers), analysis={"delta": 1.2},
               scheme={"n": [8, 16, 32, 64, 128, 256], "grid": FULL_GRID})


@pytest.fixture(scope="module")
def gaussian_run(tmp_path_factory):
    return gaussian_study(tmp_path_factory.mktemp("c4"))


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    return full_study(tmp_path_factory.mktemp("c6"))


def test_c1_sublinearity_axioms():
    box = make_box()
    ctx = StepContext.build(box, 1 / 16, interior_order=16, tail_order=24, gaussian_order=8)
    grid = Grid.uniform(((-2, 2), (-1, 1), (-3, 3)), (5, 5, 5))
    rng = np.random.default_rng(2024)

    def E(values, point):
        return sup_step(ctx, GridFunction(grid, 0, values), point).value

    start = time.perf_counter()
    worst = dict(monotone=0.0, constant=0.0, subadditive=0.0, homogeneous=0.0)
    pairs = 100
    for _ in range(pairs):
        v, w = rng.uniform(-1, 1, (2, *grid.shape))
        p = tuple(rng.uniform(-0.5, 0.5, 3))
        lam, c = rng.uniform(0.1, 10), rng.uniform(-5, 5)
        ev, ew = E(v, p), E(w, p)
        worst["monotone"] = max(worst["monotone"], ev - E(v + np.abs(w), p))
        worst["constant"] = max(worst["constant"], abs(E(np.full(grid.shape, c), p) - c))
        worst["subadditive"] = max(worst["subadditive"], E(v + w, p) - ev - ew)
        worst["homogeneous"] = max(worst["homogeneous"], abs(E(lam * v, p) - lam * ev))
    seconds = time.perf_counter() - start
    passed = (worst["constant"] <= 1e-12 and seconds < 60
              and all(worst[k] <= 1e-9 for k in ("monotone", "subadditive", "homogeneous")))
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record_acceptance(1, "sublinearity axioms", passed, f"{pairs} pairs, {detail}, {seconds:.1f}s")
    assert passed, detail


def test_c2_bounded_and_lipschitz():
    box = make_box()
    g = default_grid(box, 17)
    worst_sup, worst_lip = 0.0, 0.0
    for name in ("cos_xyz", "tanh_product", "tanh_x", "cos_z"):
        phi = make_test_function(name)
        for layer in solve(phi, box, 8, g, StepContext.build(box, 1 / 8), boundary_tol=np.inf):
            worst_sup = max(worst_sup, layer.sup_norm / phi.sup_norm)
            worst_lip = max(worst_lip, max(got / bound for got, bound in
                                           zip(layer.lipschitz_per_axis(), phi.lipschitz_axes)
                                           if bound > 0))
    passed = worst_sup <= 1.0 and worst_lip <= 1 + 1e-6
    record_acceptance(2, "boundedness and Lipschitz", passed,
                      f"max |u|/|phi| {worst_sup:.6f}, max Lip ratio {worst_lip:.6f}")
    assert passed


ORACLE_CASES = [
    (dict(sigma2_lo=1.0, sigma2_hi=1.0, gamma_lo=0.0, gamma_hi=0.0), "cos_xyz"),
    (dict(sigma2_lo=0.5, sigma2_hi=0.5, gamma_lo=0.3, gamma_hi=0.3), "cos_xyz"),
    (dict(sigma2_lo=0.8, sigma2_hi=0.8, gamma_lo=-1.0, gamma_hi=1.0), "tanh_y"),
    (dict(sigma2_lo=0.6, sigma2_hi=0.6, gamma_lo=0.0, gamma_hi=0.0), "tanh_product"),
    (dict(sigma2_lo=1.0, sigma2_hi=1.0, gamma_lo=0.5, gamma_hi=0.5, lambda_lo=0.01,
          lambda_hi=0.02), "cos_z"),
]


def test_c3_nested_sup_oracle():
    start, worst = time.perf_counter(), 0.0
    for over, name in ORACLE_CASES:
        b, phi = make_box(**over), make_test_function(name)
        ctx = StepContext.build(b, 0.5, **TINY)
        got = limit_functional(phi, b, 2, reachable_grid(ctx, 2), ctx, method="pointwise",
                               boundary_tol=np.inf, check_invariants=False)
        worst = max(worst, abs(got - brute_force(phi, ctx, 2, (0.0, 0.0, 0.0))))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-6 and seconds < 120
    record_acceptance(3, "nested-sup oracle n=2", passed,
                      f"{len(ORACLE_CASES)} configs, max diff {worst:.1e}, {seconds:.1f}s")
    assert passed


def test_c4_gaussian_case(gaussian_run):
    code, out = gaussian_run
    with open(out / "rate_report.csv", newline="") as fh:
        errs = [float(r["abs_residual"]) for r in csv.DictReader(fh)]
    decreasing = all(b < a + 1e-4 for a, b in zip(errs, errs[1:]))
    passed = errs[-1] <= 0.02 and decreasing
    record_acceptance(4, "Gaussian degenerate case", passed,
                      "errors " + ", ".join(f"{e:.2e}" for e in errs) + " for n = 8..64")
    assert passed


def test_c5_drift_case():
    b = make_box(gamma_lo=-1.0, gamma_hi=1.0)
    phi = make_test_function("tanh_y")
    errs = []
    for n in (1, 2, 4, 8, 16, 32, 64):
        xs, _, zs = default_grid(b, 9).axes
        g = Grid((xs, drift_lattice_axis(b, 1.0 / n, (-2.0, 2.0)), zs))
        ctx = StepContext.build(b, 1.0 / n, x_spacing=g.uniform_spacing(0))
        errs.append(abs(limit_functional(phi, b, n, g, ctx, boundary_tol=np.inf)
                        - math.tanh(1.0)))
    passed = max(errs) <= 1e-12
    record_acceptance(5, "drift degenerate case", passed, f"max error {max(errs):.1e}, n = 1..64")
    assert passed


def test_c6_full_model_rate(full_run):
    code, out = full_run
    rep = json.loads((out / "rate_report.json").read_text())
    theory = rate_exponent(1.5, 1.2, q0_from_beta(1.5, 1.8))
    passed = (code == cli.EXIT_OK and rep["pass"]
              and rep["fitted_order"] >= theory - 0.02 and rep["theory_order"] == theory)
    record_acceptance(6, "full-model rate study", passed,
                      f"fitted {rep['fitted_order']:.4f} vs Gamma {theory:.6f}, n = 8..128 "
                      f"against n = 256")
    assert passed


def test_c7_consistency_sweep():
    box, alpha = make_box(), 1.5
    laws = corner_laws(box)
    phi = make_test_function("cos_z").z_slice(0.0, 0.0)
    norms = (phi.d1_sup, phi.d2_sup)
    q0 = q0_from_beta(alpha, 1.8)
    s_values = [2.0**-k for k in range(4, 13)]
    res = [consistency_residual(phi, 0.0, s, 0.0, 0.0, box, laws) for s in s_values]
    slope = np.polyfit(np.log(s_values), np.log(res), 1)[0]
    target = min(q0, (2 - alpha) / alpha) - 0.05
    C = fit_c_alpha_beta(res, s_values, norms, q0, alpha)
    fresh = [2.0**-k for k in np.arange(4.5, 12.0, 1.0)]
    dominated = all(consistency_residual(phi, 0.0, s, 0.0, 0.0, box, laws)
                    <= lhat_bound(norms, s, q0, C, alpha) for s in fresh)
    passed = slope >= target and dominated
    record_acceptance(7, "consistency sweep", passed,
                      f"slope {slope:.4f} vs {target:.4f}, fitted C {C:.3f} "
                      f"{'dominates' if dominated else 'fails on'} fresh s")
    assert dominated
    assert slope >= target, f"slope {slope:.4f}"


def test_c8_generator_decomposition():
    box = make_box()
    rng = np.random.default_rng(8)
    qs = np.linspace(box.gamma_lo, box.gamma_hi, 65)
    ss = np.linspace(box.sigma2_lo, box.sigma2_hi, 65)
    ks = np.linspace(box.lambda_lo, box.lambda_hi, 65)
    start, worst = time.perf_counter(), 0.0
    for _ in range(50):
        p, A, z = rng.uniform(-2, 2, 3)
        amp, omega, theta = rng.uniform(0.2, 2), rng.uniform(0.3, 3), rng.uniform(0, 6.3)
        left, right = wave_sides(amp, omega, theta, z)
        brute = (np.max(p * qs) + np.max(0.5 * A * ss)
                 + np.max(ks[:, None] * left + ks[None, :] * right))
        got = eval_G(GeneratorInput(p, A, cos_wave(amp, omega, theta), z), box)
        worst = max(worst, abs(got - brute))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-8 and seconds < 60
    record_acceptance(8, "generator decomposition", passed,
                      f"50 draws, max diff {worst:.1e}, {seconds:.1f}s")
    assert passed


def test_c9_robust_clt(tmp_path):
    code, out = run(tmp_path, "rate-study",
                    model={"sigma2_lo": 0.5, "sigma2_hi": 1.0, "gamma_lo": 0.0, "gamma_hi": 0.0,
                           "lambda_lo": 0.01, "lambda_hi": 0.02},
                    phi={"name": "cos_x"},
                    scheme={"n": [4, 8, 16, 32, 64], "grid": {
                        "bounds": [[-8, 8], [-1, 1], [-12, 12]], "points": [401, 3, 9]}})
    rep = json.loads((out / "rate_report.json").read_text())
    passed = rep["fitted_order"] >= 1 / 6
    record_acceptance(9, "robust CLT order", passed,
                      f"fitted {rep['fitted_order']:.4f} vs 1/6, n = 4..32 against n = 64")
    assert passed


def test_c10_determinism(gaussian_run, full_run, tmp_path):
    same = []
    for study, (_, out) in ((gaussian_study, gaussian_run), (full_study, full_run)):
        where = tmp_path / study.__name__
        where.mkdir()
        _, again = study(where, workers=2)
        same.append((again / "rate_report.csv").read_bytes()
                    == (out / "rate_report.csv").read_bytes())
    passed = all(same)
    record_acceptance(10, "determinism across workers", passed,
                      f"CSV identical for criterion 4: {same[0]}, criterion 6: {same[1]}")
    assert passed
