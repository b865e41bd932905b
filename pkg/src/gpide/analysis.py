"""Moment constants, theoretical exponents and error budgets, and empirical order fits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFit, DeltaOutOfRange
from .generator import corner_laws, lhat_bound
from .grid import axis_operator
from .quadrature import DEFAULT_RADIUS, wk_rule
from .uncertainty import UncertaintyBox, WkLaw, wk_fractional_moment

# max over the used mixed-derivative orders of the L1 norm of the unit-mass bump
# zeta(t, e) = C exp(-1 / (1 - (2t+1)^2 - e^2)) on [-1, 0] x (-1, 1); attained by
# d^3/de^3.  Trapezoid grids of 801^2, 1601^2, 3201^2 give 91.08687, 91.08750, 91.08761.
K_ZETA = 91.0876
K_ZETA_ORDERS = tuple((i, j) for i in range(3) for j in range(4) if i + j >= 1 and 2 * i + j <= 4)
ABS_NORMAL_THIRD = 2.0 * math.sqrt(2.0 / math.pi)
DEFAULT_N_MAX = 32


def compute_k_zeta(points: int = 801) -> float:
    """Recompute K_ZETA with sympy derivatives and a trapezoid grid of points^2 nodes."""
    import sympy as sp

    u, e = sp.symbols("u e", real=True)
    bump = sp.exp(-1 / (1 - u**2 - e**2))
    g = np.linspace(-1.0, 1.0, points)
    U, E = np.meshgrid(g, g, indexing="ij")
    inside = U**2 + E**2 < 1.0 - 1e-12
    d = g[1] - g[0]

    def integral(expr) -> float:
        f = sp.lambdify((u, e), expr, "numpy")
        vals = np.zeros_like(U)
        vals[inside] = np.abs(f(U[inside], E[inside]))
        # u = 2t + 1, so dt = du / 2
        return float(np.trapezoid(np.trapezoid(vals, dx=d), dx=d)) / 2.0

    scale = 1.0 / integral(bump)
    return max(scale * 2.0**i * integral(sp.diff(bump, u, i, e, j)) for i, j in K_ZETA_ORDERS)


def delta_window(alpha: float) -> tuple[float, float]:
    return max(0.75 * alpha, 1.0), alpha


def default_delta(alpha: float) -> float:
    lo, hi = delta_window(alpha)
    return 0.5 * (lo + hi)


def check_delta(alpha: float, delta: float) -> None:
    lo, hi = delta_window(alpha)
    if not lo < delta < hi:
        raise DeltaOutOfRange(f"delta={delta} outside ({lo}, {hi}) for alpha={alpha}")


def rate_exponent(alpha: float, delta: float, q0: float) -> float:
    """min{(4 delta - 3 alpha) / (2 alpha (2 delta + 3)), (2 - alpha) / (2 alpha), q0 / 2}."""
    check_delta(alpha, delta)
    return min((4 * delta - 3 * alpha) / (2 * alpha * (2 * delta + 3)),
               (2 - alpha) / (2 * alpha), q0 / 2)


@dataclass(frozen=True)
class MomentSet:
    M_X2: float
    M_X3: float
    M_Y1: float
    M_Y2: float
    M_Zdelta: float
    M_Z1: float
    delta: float
    M_Z_proxy: float
    C_phi: float
    C0: float
    M0: float
    M_Z_proxy_is_lower_bound: bool = True


def assemble_M0(M_X2, M_X3, M_Y1, M_Y2, M_Zdelta, M_Z1) -> float:
    return (M_X2 + M_X3 + M_Y1 + M_Y2 + M_X3 ** (1 / 3) * M_Zdelta ** (2 / 3)
            + math.sqrt(M_Y2) * math.sqrt(M_Z1) + M_Z1)


def assemble_C0(C_phi: float, M_X2: float, M_Y1: float, M_Z: float) -> float:
    return max(C_phi * (math.sqrt(M_X2) + M_Y1 + M_Z), C_phi)


def m_z_proxy(laws: Sequence[WkLaw], N_max: int = DEFAULT_N_MAX, half_width: float = 100.0,
              points: int = 801, radius: float = DEFAULT_RADIUS) -> float:
    """max_{n <= N_max} n^(-1/alpha) E^[|S_n|] from the sequential sup recursion on a z-lattice.

    Clamping at +-half_width only shrinks |z|, so this is a lower-bound proxy
    for the supremum over all n.
    """
    zs = np.linspace(-half_width, half_width, points)
    ops = []
    for law in laws:
        rule = wk_rule(law, truncation_radius=radius).renormalized()
        ops.append(axis_operator(zs, rule.nodes, rule.weights))
    alpha = laws[0].alpha
    v = np.abs(zs)
    mid = points // 2
    best = 0.0
    for n in range(1, N_max + 1):
        v = np.max(np.stack([op @ v for op in ops]), axis=0)
        best = max(best, v[mid] * n ** (-1.0 / alpha))
    return float(best)


def compute_moments(box: UncertaintyBox, delta: float, C_phi: float = 1.0,
                    laws: Sequence[WkLaw] | None = None, N_max: int = DEFAULT_N_MAX,
                    proxy_points: int = 801) -> MomentSet:
    check_delta(box.alpha, delta)
    laws = tuple(laws) if laws is not None else corner_laws(box)
    s_hi = box.sigma_hi
    M_X2 = box.sigma2_hi
    M_X3 = s_hi**3 * ABS_NORMAL_THIRD
    M_Y1 = box.gamma_abs_max
    M_Y2 = box.gamma_abs_max**2
    M_Zdelta = max(wk_fractional_moment(law, delta) for law in laws)
    M_Z1 = max(wk_fractional_moment(law, 1.0) for law in laws)
    proxy = m_z_proxy(laws, N_max, points=proxy_points)
    C0 = assemble_C0(C_phi, M_X2, M_Y1, proxy)
    M0 = assemble_M0(M_X2, M_X3, M_Y1, M_Y2, M_Zdelta, M_Z1)
    return MomentSet(M_X2, M_X3, M_Y1, M_Y2, M_Zdelta, M_Z1, delta, proxy, C_phi, C0, M0)


@dataclass(frozen=True)
class LhatTerms:
    C_alpha_beta: float
    q0: float
    alpha: float


@dataclass(frozen=True)
class ErrorBudget:
    eps: float
    h: float
    K_zeta: float
    E1: float
    E2: float
    gamma: float
    C0: float
    M0: float

    @property
    def eps_term(self) -> float:
        return 4 * self.C0 * self.eps

    @property
    def upper(self) -> float:
        """u_h - u <= C0 h^(1/2) + 4 C0 eps + E2."""
        return self.C0 * math.sqrt(self.h) + self.eps_term + self.E2

    @property
    def lower(self) -> float:
        """u - u_h <= 2 C0 h^(1/2) + 4 C0 eps + E1."""
        return 2 * self.C0 * math.sqrt(self.h) + self.eps_term + self.E1


def _E2(eps, h, m: MomentSet, K, lh: LhatTerms) -> float:
    a, d = lh.alpha, m.delta
    powers = (2 * eps**-3 * h + 5 * eps**-2 * h**0.5
              + eps ** (-2 * d / 3) * h ** ((4 * d - 3 * a) / (6 * a)) + eps**-0.5 * h ** (1 / (2 * a)))
    # mollified norms: |D u^eps| <= 2 C0 K, |D^2 u^eps| <= 2 C0 K / eps
    D1 = 2 * m.C0 * K
    D2 = D1 / eps
    return 4 * m.C0 * K * m.M0 * powers + lhat_bound((D1, D2), h, lh.q0, lh.C_alpha_beta, a)


def _E1(eps, h, m: MomentSet, K, lh: LhatTerms) -> float:
    a, d = lh.alpha, m.delta
    powers = (2 * eps**-4 * h + 5 * eps**-3 * h**0.5
              + eps ** (-(2 * d + 3) / 3) * h ** ((4 * d - 3 * a) / (6 * a))
              + eps**-1.5 * h ** (1 / (2 * a)))
    # |D^k u_h^eps| <= 2 C0 K (eps + h^(1/2)) eps^-k
    D1 = 2 * m.C0 * K * (eps + math.sqrt(h)) / eps
    D2 = D1 / eps
    return (4 * m.C0 * K * m.M0 * (eps + math.sqrt(h)) * powers
            + lhat_bound((D1, D2), h, lh.q0, lh.C_alpha_beta, a))


def error_budget(eps: float, h: float, moments: MomentSet, K_zeta: float = K_ZETA,
                 lhat_terms: LhatTerms | None = None) -> ErrorBudget:
    if not (0 < eps < 1 and 0 < h < 1):
        raise ValueError("eps and h must lie in (0, 1)")
    lh = lhat_terms or LhatTerms(1.0, 0.2, 1.5)
    gamma = rate_exponent(lh.alpha, moments.delta, lh.q0)
    return ErrorBudget(eps, h, K_zeta, _E1(eps, h, moments, K_zeta, lh),
                       _E2(eps, h, moments, K_zeta, lh), gamma, moments.C0, moments.M0)


def eps_grid(h: float, steps: int = 64) -> np.ndarray:
    """eps = h^g for g in (0, 1/2] on a uniform grid of ``steps`` exponents."""
    g = np.arange(1, steps + 1) / (2 * steps)
    return h**g


def minimized_bounds(h: float, moments: MomentSet, K_zeta: float = K_ZETA,
                     lhat_terms: LhatTerms | None = None, steps: int = 64) -> tuple[float, float]:
    """(upper, lower) totals with eps chosen on the log grid."""
    budgets = [error_budget(e, h, moments, K_zeta, lhat_terms) for e in eps_grid(h, steps)]
    return min(b.upper for b in budgets), min(b.lower for b in budgets)


@dataclass
class RateReport:
    n_values: list[int]
    functional_values: list[float]
    reference: float
    fitted_order: float
    theory_order: float
    passed: bool
    used: list[bool] = field(default_factory=list)
    reference_kind: str = "finest"
    exact: bool = False  # every residual below the noise floor
    config: dict = field(default_factory=dict)

    def rows(self):
        for n, v, u in zip(self.n_values, self.functional_values, self.used):
            r = abs(v - self.reference)
            yield n, v, r, (math.log(r) if r > 0 else float("-inf")), u

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "value", "abs_residual", "log_residual", "used_in_fit"])
            for n, v, r, lr, u in self.rows():
                w.writerow([n, repr(v), repr(r), repr(lr), int(u)])

    def summary(self) -> dict:
        return {"fitted_order": self.fitted_order, "theory_order": self.theory_order,
                "pass": self.passed, "reference": self.reference,
                "reference_kind": self.reference_kind, "n_values": self.n_values,
                "exact": self.exact,
                "config": self.config}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def fit_order(pairs: Sequence[tuple[int, float]], reference: float, theory_order: float = 0.0,
              noise_floor: float = 1e-13, tolerance: float = 0.02) -> RateReport:
    """Least-squares slope of -log|value - reference| against log n."""
    if len(pairs) < 4:
        raise DegenerateFit(f"need at least 4 (n, value) pairs, got {len(pairs)}")
    if not math.isfinite(reference):
        raise DegenerateFit("reference must be finite")
    ns = [int(n) for n, _ in pairs]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n values must be strictly increasing")
    vals = [float(v) for _, v in pairs]
    res = np.abs(np.array(vals) - reference)
    used = res >= 10.0 * noise_floor
    if used.sum() < 3:
        raise DegenerateFit(f"only {int(used.sum())} residuals above the noise floor")
    slope = np.polyfit(np.log(np.array(ns)[used]), np.log(res[used]), 1)[0]
    order = float(-slope)
    return RateReport(ns, vals, float(reference), order, float(theory_order),
                      bool(order >= theory_order - tolerance), used.tolist())

