"""Batch front-end: ``gpide {solve,rate-study,consistency,generator-eval,report} --config PATH``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (K_ZETA, LhatTerms, RateReport, compute_moments, default_delta,
                       fit_order, minimized_bounds, rate_exponent)
from .config import ExperimentConfig
from .errors import (ConfigError, DegenerateFit, DeltaOutOfRange, GridTooNarrow,
                     InfeasibleCompletion, InvariantViolation)
from .generator import (GeneratorInput, consistency_residual, corner_laws, eval_G,
                        fit_c_alpha_beta, q0_from_beta)
from .grid import write_binary, write_csv
from .scheme import limit_functional, solve

log = logging.getLogger("gpide")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_CHECK = 0, 2, 3, 4
NOISE_FLOOR = 1e-13


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def cmd_solve(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    box = cfg.model.box()
    n = max(cfg.scheme.n)
    grid = cfg.scheme.grid.build(box, n)
    phi = cfg.phi.build()
    ctx = cfg.scheme.context(cfg.model, box, grid, n)
    sol = solve(phi, box, n, grid, ctx, workers=workers, sigma2_points=cfg.scheme.sigma2_points,
                boundary_tol=cfg.scheme.boundary_tol, jump_projection=cfg.scheme.jump_projection)
    fmts = cfg.output.formats
    if "binary" in fmts:
        write_binary(sol.final, out / f"layer_{n}.bin")
    if "csv" in fmts:
        write_csv([sol[0], sol.final], out / "layers.csv")
    summary = {
        "n": n,
        "value_at_origin": sol.final.at((0.0, 0.0, 0.0)),
        "boundary_bound": sol.report.boundary_bound,
        "tail_remainder": sol.report.tail_remainder,
        "accumulated_tail_bound": n * 2.0 * phi.sup_norm * sol.report.tail_remainder,
        "invariants": "pass",
        "layer_sup_norms": [layer.sup_norm for layer in sol],
        "seconds": sol.report.seconds,
        "config": cfg.to_dict(),
    }
    _write_json(out / "solve_summary.json", summary)
    print(f"u_1/{n}(1,0,0,0) = {summary['value_at_origin']:.12g}")
    return EXIT_OK


def run_rate_study(cfg: ExperimentConfig, workers: int = 1) -> RateReport:
    box = cfg.model.box()
    phi = cfg.phi.build()
    ns = list(cfg.scheme.n)
    need = 4 if cfg.analysis.reference is not None else 5  # the finest n becomes the reference
    if len(ns) < need:
        raise ConfigError(f"rate-study needs at least {need} values of n")
    values = []
    for n in ns:
        grid = cfg.scheme.grid.build(box, n)
        ctx = cfg.scheme.context(cfg.model, box, grid, n)
        values.append(limit_functional(phi, box, n, grid, ctx, workers=workers,
                                       sigma2_points=cfg.scheme.sigma2_points,
                                       boundary_tol=cfg.scheme.boundary_tol,
                                       jump_projection=cfg.scheme.jump_projection))
        log.info("n=%d value=%r", n, values[-1])
    if cfg.analysis.reference is None:
        reference, kind = values[-1], "finest"
        pairs = list(zip(ns[:-1], values[:-1]))
    else:
        reference, kind = float(cfg.analysis.reference), "closed_form"
        pairs = list(zip(ns, values))
    delta = cfg.analysis.delta or default_delta(box.alpha)
    theory = rate_exponent(box.alpha, delta, q0_from_beta(box.alpha, cfg.model.beta_tail,
                                                          cfg.model.eps0))
    residuals = [abs(v - reference) for _, v in pairs]
    if all(r < 10 * NOISE_FLOOR for r in residuals):
        report = RateReport([n for n, _ in pairs], [v for _, v in pairs], reference, math.inf,
                            theory, True, [False] * len(pairs), kind, exact=True)
    else:
        report = fit_order(pairs, reference, theory, NOISE_FLOOR)
        report.reference_kind = kind
    report.config = cfg.to_dict()
    return report


def cmd_rate_study(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    report = run_rate_study(cfg, workers)
    if "csv" in cfg.output.formats:
        report.write_csv(out / "rate_report.csv")
    if "json" in cfg.output.formats:
        report.write_json(out / "rate_report.json")
    print(f"fitted order {report.fitted_order:.4f} vs theory {report.theory_order:.6f}: "
          f"{'pass' if report.passed else 'fail'}{' (exact case)' if report.exact else ''}")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_consistency(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    box = cfg.model.box()
    phi = cfg.phi.build()
    a = cfg.analysis
    zs = phi.z_slice(0.0, 0.0)
    laws = corner_laws(box, cfg.model.a1, cfg.model.a2, cfg.model.beta_tail)
    s_values = [2.0 ** -k for k in a.s_exponents]
    res = [consistency_residual(zs, a.z, s, a.p, a.A, box, laws) for s in s_values]
    q0 = q0_from_beta(box.alpha, cfg.model.beta_tail, cfg.model.eps0)
    threshold = min(q0, (2 - box.alpha) / box.alpha) - 0.05
    norms = (zs.d1_sup, zs.d2_sup)
    positive = [(s, r) for s, r in zip(s_values, res) if r > 0]
    slope = (float(np.polyfit(np.log([s for s, _ in positive]), np.log([r for _, r in positive]), 1)[0])
             if len(positive) >= 2 else math.inf)
    C = fit_c_alpha_beta(res, s_values, norms, q0, box.alpha) if any(norms) else 0.0
    with open(out / "consistency.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "residual"])
        for s, r in zip(s_values, res):
            w.writerow([repr(s), repr(r)])
    passed = slope >= threshold
    _write_json(out / "consistency.json", {"slope": slope, "threshold": threshold,
                                            "C_alpha_beta": C, "q0": q0, "pass": passed,
                                            "p": a.p, "A": a.A, "z": a.z})
    print(f"slope {slope:.4f} (threshold {threshold:.4f}), C_alpha_beta {C:.4g}: "
          f"{'pass' if passed else 'fail'}")
    return EXIT_OK if passed else EXIT_CHECK


def cmd_generator_eval(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    box = cfg.model.box()
    phi = cfg.phi.build()
    a = cfg.analysis
    value = eval_G(GeneratorInput(a.p, a.A, phi.z_slice(0.0, 0.0), a.z), box)
    _write_json(out / "generator.json", {"G": value, "p": a.p, "A": a.A, "z": a.z,
                                          "phi": phi.name})
    print(f"G = {value:.12g}")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    box = cfg.model.box()
    phi = cfg.phi.build()
    a = cfg.analysis
    delta = a.delta or default_delta(box.alpha)
    q0 = q0_from_beta(box.alpha, cfg.model.beta_tail, cfg.model.eps0)
    laws = corner_laws(box, cfg.model.a1, cfg.model.a2, cfg.model.beta_tail)
    m = compute_moments(box, delta, phi.lipschitz, laws, a.N_max)
    K = a.K_zeta or K_ZETA
    lh = LhatTerms(a.C_alpha_beta or 1.0, q0, box.alpha)
    bounds = {str(n): dict(zip(("upper", "lower"), minimized_bounds(1.0 / n, m, K, lh)))
              for n in cfg.scheme.n if n > 1}
    payload = {"moments": m.__dict__, "q0": q0, "delta": delta,
               "rate_exponent": rate_exponent(box.alpha, delta, q0), "K_zeta": K,
               "C_alpha_beta": lh.C_alpha_beta, "C_alpha_beta_is_default": a.C_alpha_beta is None,
               "bounds": bounds, "M_Z_proxy_note": "lower-bound proxy over n <= N_max"}
    _write_json(out / "report.json", payload)
    print(json.dumps({"C0": m.C0, "M0": m.M0, "rate_exponent": payload["rate_exponent"]}))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "rate-study": cmd_rate_study, "consistency": cmd_consistency,
            "generator-eval": cmd_generator_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpide", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        out = args.out or Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return COMMANDS[args.command](cfg, out, args.workers)
    except (ConfigError, DeltaOutOfRange) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridTooNarrow as exc:
        print(f"grid too narrow: boundary bound {exc.bound:.6g} > tolerance {exc.tolerance:.6g}",
              file=sys.stderr)
        return EXIT_NUMERICS
    except InfeasibleCompletion as exc:
        print(f"infeasible law: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except (InvariantViolation, DegenerateFit) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
