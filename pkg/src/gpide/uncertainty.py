"""Uncertainty set and the heavy-tailed step laws W_k.

The parameter set is the product ``[lambda_lo, lambda_hi]^2 x [gamma_lo, gamma_hi]
x [sigma2_lo, sigma2_hi]``.  For every spectral pair ``k = (k1, k2)`` the jump
component of one step is a classical random variable ``W_k`` whose CDF is

    F(z) = (k1/alpha) |z|^-alpha + a1 |z|^-beta           z <= -1
    1 - F(z) = (k2/alpha) z^-alpha + a2 z^-beta          z >= 1

and, on (-1, 1), a cubic density chosen so that the law has unit mass, mean
zero and a density that is continuous at +-1.  All four constraints are linear
in (k1, k2), so the whole law is affine in k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (
    AlphaOutOfRange,
    BetaOutOfRange,
    ConfigError,
    DeltaOutOfRange,
    InfeasibleCompletion,
    OrderViolation,
)

BOX_KEYS = ("lambda_lo", "lambda_hi", "gamma_lo", "gamma_hi", "sigma2_lo", "sigma2_hi", "alpha")
DEFAULT_A = 0.05
FEASIBILITY_POINTS = 1024


@dataclass(frozen=True)
class UncertaintyBox:
    lambda_lo: float
    lambda_hi: float
    gamma_lo: float
    gamma_hi: float
    sigma2_lo: float
    sigma2_hi: float
    alpha: float

    @property
    def corners(self) -> tuple[tuple[float, float], ...]:
        """The four (k1, k2) vertices, in a fixed order."""
        lo, hi = self.lambda_lo, self.lambda_hi
        return ((lo, lo), (lo, hi), (hi, lo), (hi, hi))

    @property
    def sigma_hi(self) -> float:
        return float(np.sqrt(self.sigma2_hi))

    @property
    def gamma_abs_max(self) -> float:
        return max(abs(self.gamma_lo), abs(self.gamma_hi))

    def as_dict(self) -> dict[str, float]:
        return {key: float(getattr(self, key)) for key in BOX_KEYS}


def validate_box(raw_config: Mapping[str, float]) -> UncertaintyBox:
    """Build an :class:`UncertaintyBox`, reporting every violated constraint at once."""
    missing = [key for key in BOX_KEYS if key not in raw_config]
    if missing:
        raise ConfigError([f"missing key: {key}" for key in missing])
    try:
        vals = {key: float(raw_config[key]) for key in BOX_KEYS}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric bound: {exc}") from None

    order: list[str] = []
    if not vals["lambda_lo"] > 0:
        order.append("lambda_lo must be > 0")
    if not vals["lambda_lo"] < vals["lambda_hi"]:
        order.append("lambda_lo must be < lambda_hi")
    if not vals["gamma_lo"] <= vals["gamma_hi"]:
        order.append("gamma_lo must be <= gamma_hi")
    if not vals["sigma2_lo"] >= 0:
        order.append("sigma2_lo must be >= 0")
    if not vals["sigma2_lo"] <= vals["sigma2_hi"]:
        order.append("sigma2_lo must be <= sigma2_hi")
    alpha_bad = [] if 1.0 < vals["alpha"] < 2.0 else ["alpha must lie in (1, 2)"]

    if order:
        raise OrderViolation(order + alpha_bad)
    if alpha_bad:
        raise AlphaOutOfRange(alpha_bad)
    return UncertaintyBox(**vals)


@dataclass(frozen=True)
class StableParams:
    alpha: float
    k1: float
    k2: float
    a1: float = DEFAULT_A
    a2: float = DEFAULT_A
    beta_tail: float = 1.8

    def __post_init__(self):
        problems = []
        if not 1.0 < self.alpha < 2.0:
            problems.append("alpha must lie in (1, 2)")
        if self.k1 <= 0 or self.k2 <= 0:
            problems.append("k1, k2 must be positive")
        if self.a1 <= 0 or self.a2 <= 0:
            problems.append("a1, a2 must be positive")
        if problems:
            raise ConfigError(problems)
        if not self.beta_tail > self.alpha:
            raise BetaOutOfRange(f"beta_tail={self.beta_tail} must exceed alpha={self.alpha}")

    def check_in_box(self, box: UncertaintyBox) -> None:
        for name, k in (("k1", self.k1), ("k2", self.k2)):
            if not box.lambda_lo <= k <= box.lambda_hi:
                raise ConfigError(f"{name}={k} outside [{box.lambda_lo}, {box.lambda_hi}]")
        if self.alpha != box.alpha:
            raise ConfigError("StableParams.alpha differs from the box alpha")


def tail_cdf_left(z, k1: float, a1: float, alpha: float, beta: float):
    """F(z) for z <= -1."""
    r = np.abs(np.asarray(z, dtype=float))
    return (k1 / alpha + a1 * r ** (alpha - beta)) * r ** (-alpha)


def tail_survival_right(z, k2: float, a2: float, alpha: float, beta: float):
    """1 - F(z) for z >= 1."""
    r = np.asarray(z, dtype=float)
    return (k2 / alpha + a2 * r ** (alpha - beta)) * r ** (-alpha)


def _completion_coeffs(p: StableParams) -> np.ndarray:
    al, be = p.alpha, p.beta_tail
    mass_left = p.k1 / al + p.a1
    mass_right = p.k2 / al + p.a2
    interior_mass = 1.0 - mass_left - mass_right
    dens_left = p.k1 + p.a1 * be  # density at z = -1
    dens_right = p.k2 + p.a2 * be  # density at z = +1
    mean_left = -(p.k1 / (al - 1.0) + p.a1 * be / (be - 1.0))
    mean_right = p.k2 / (al - 1.0) + p.a2 * be / (be - 1.0)
    interior_mean = -(mean_left + mean_right)

    # even part: c0 + c2 = E, 2 c0 + 2 c2 / 3 = interior_mass
    even = 0.5 * (dens_left + dens_right)
    c2 = 1.5 * (even - 0.5 * interior_mass)
    c0 = even - c2
    # odd part: c1 + c3 = D, 2 c1 / 3 + 2 c3 / 5 = interior_mean
    odd = 0.5 * (dens_right - dens_left)
    c3 = -7.5 * (0.5 * interior_mean - odd / 3.0)
    c1 = odd - c3
    return np.array([c0, c1, c2, c3])


@dataclass(frozen=True)
class WkLaw:
    params: StableParams
    interior_coeffs: np.ndarray = field(repr=False)
    tail_mass_left: float
    tail_mass_right: float

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def beta(self) -> float:
        return self.params.beta_tail

    def interior_density(self, z):
        c0, c1, c2, c3 = self.interior_coeffs
        z = np.asarray(z, dtype=float)
        return c0 + z * (c1 + z * (c2 + z * c3))

    def _interior_primitive(self, z):
        c0, c1, c2, c3 = self.interior_coeffs
        z = np.asarray(z, dtype=float)
        return z * (c0 + z * (c1 / 2 + z * (c2 / 3 + z * c3 / 4)))

    def cdf(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        left = z <= -1.0
        right = z >= 1.0
        mid = ~(left | right)
        out[left] = tail_cdf_left(z[left], p.k1, p.a1, p.alpha, p.beta_tail)
        out[right] = 1.0 - tail_survival_right(z[right], p.k2, p.a2, p.alpha, p.beta_tail)
        out[mid] = self.tail_mass_left + self._interior_primitive(z[mid]) - self._interior_primitive(-1.0)
        return out if out.ndim else float(out)

    def density(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        r = np.abs(z)
        out = np.where(r < 1.0, self.interior_density(z), 0.0)
        with np.errstate(divide="ignore"):
            rr = np.maximum(r, 1.0)
            left = p.k1 * rr ** (-p.alpha - 1) + p.a1 * p.beta_tail * rr ** (-p.beta_tail - 1)
            right = p.k2 * rr ** (-p.alpha - 1) + p.a2 * p.beta_tail * rr ** (-p.beta_tail - 1)
        out = np.where(z <= -1.0, left, out)
        out = np.where(z >= 1.0, right, out)
        return out if out.ndim else float(out)

    def tail_density_terms(self, side: int) -> tuple[tuple[float, float], ...]:
        """Tail density on |z| >= 1 as a sum of ``coef * |z|^(-power-1)`` terms."""
        p = self.params
        k, a = (p.k1, p.a1) if side < 0 else (p.k2, p.a2)
        return ((k, p.alpha), (a * p.beta_tail, p.beta_tail))

    def partial_moment(self, j: int, a, b):
        """int_a^b w^j dF(w) in closed form for j in {0, 1, 2}; a <= b, entries may be infinite."""
        if j not in (0, 1, 2):
            raise ValueError("j must be 0, 1 or 2")
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        out = np.zeros(a.shape)
        # interior cubic
        lo, hi = np.clip(a, -1.0, 1.0), np.clip(b, -1.0, 1.0)
        for i, c in enumerate(self.interior_coeffs):
            e = i + j + 1
            out = out + c * (hi**e - lo**e) / e
        # tails in r = |w| >= 1
        for side in (-1, 1):
            if side > 0:
                r1, r2 = np.maximum(a, 1.0), np.maximum(b, 1.0)
            else:
                r1, r2 = np.maximum(-b, 1.0), np.maximum(-a, 1.0)
            for coef, p in self.tail_density_terms(side):
                e = j - p  # r^j * coef r^(-p-1) integrates to coef r^e / e
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    part = np.where(r2 > r1, coef * (r2**e - r1**e) / e, 0.0)
                out = out + side**j * part
        return out if out.ndim else float(out)

    def abs_survival(self, t):
        """P(|W| > t) for t >= 0."""
        p = self.params
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 1.0)
        tails = tail_cdf_left(-tt, p.k1, p.a1, p.alpha, p.beta_tail) + tail_survival_right(
            tt, p.k2, p.a2, p.alpha, p.beta_tail
        )
        ts = np.minimum(t, 1.0)
        inner = 1.0 - (self._interior_primitive(ts) - self._interior_primitive(-ts))
        return np.where(t >= 1.0, tails, inner)

    def first_moment(self) -> float:
        p = self.params
        c0, c1, c2, c3 = self.interior_coeffs
        interior = 2 * c1 / 3 + 2 * c3 / 5
        left = -(p.k1 / (p.alpha - 1) + p.a1 * p.beta_tail / (p.beta_tail - 1))
        right = p.k2 / (p.alpha - 1) + p.a2 * p.beta_tail / (p.beta_tail - 1)
        return float(interior + left + right)

    def total_mass(self) -> float:
        c0, c1, c2, c3 = self.interior_coeffs
        return float(self.tail_mass_left + self.tail_mass_right + 2 * c0 + 2 * c2 / 3)


def build_wk_law(params: StableParams) -> WkLaw:
    coeffs = _completion_coeffs(params)
    mass_left = params.k1 / params.alpha + params.a1
    mass_right = params.k2 / params.alpha + params.a2
    interior_mass = 1.0 - mass_left - mass_right
    if interior_mass < 0:
        raise InfeasibleCompletion(
            f"tail masses {mass_left:.6g} + {mass_right:.6g} exceed 1 (interior mass {interior_mass:.6g})"
        )
    law = WkLaw(params, coeffs, mass_left, mass_right)
    grid = np.linspace(-1.0, 1.0, FEASIBILITY_POINTS)
    dmin = float(np.min(law.interior_density(grid)))
    if dmin < 0:
        raise InfeasibleCompletion(
            f"interior density dips to {dmin:.6g} < 0; reduce k, a1 or a2"
        )
    return law


def law_for_corner(box: UncertaintyBox, corner: tuple[float, float], a1: float = DEFAULT_A,
                   a2: float = DEFAULT_A, beta_tail: float = 1.8) -> WkLaw:
    params = StableParams(box.alpha, corner[0], corner[1], a1, a2, beta_tail)
    params.check_in_box(box)
    return build_wk_law(params)


def _gl_log_panels(fn, lo: float, hi: float, width: float = 1.0, order: int = 16) -> float:
    """Integrate ``fn(r)`` over [lo, hi] with Gauss-Legendre panels in log r."""
    x, w = np.polynomial.legendre.leggauss(order)
    ulo, uhi = np.log(lo), np.log(hi)
    npan = max(1, int(np.ceil((uhi - ulo) / width)))
    edges = np.linspace(ulo, uhi, npan + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    u = mids + half * x[None, :]
    r = np.exp(u)
    vals = fn(r) * r * half * w[None, :]
    return float(np.sum(vals))


def wk_fractional_moment(law: WkLaw, delta: float, tol: float = 1e-10) -> float:
    """E|W_k|^delta from the tail-integral identity E|W|^d = int_0^inf P(|W| > r^(1/d)) dr.

    On r in [0, 1] the survival function is a polynomial in t = r^(1/d), so that
    piece is integrated exactly.  The remaining range is integrated numerically
    up to a cutoff chosen so that the closed-form remainder is below ``tol``.
    """
    p = law.params
    if not 0.0 < delta < p.alpha:
        raise DeltaOutOfRange(f"delta={delta} must lie in (0, alpha={p.alpha})")
    c0, _, c2, _ = law.interior_coeffs
    # P(|W| > t) = 1 - 2 c0 t - (2/3) c2 t^3 on [0, 1]; substitute r = t^delta.
    part_inner = 1.0 - 2 * c0 * delta / (delta + 1) - (2.0 / 3.0) * c2 * delta / (delta + 3)

    ka = (p.k1 + p.k2) / p.alpha
    aa = p.a1 + p.a2
    ea, eb = p.alpha / delta, p.beta_tail / delta

    def remainder(T: float) -> float:
        return ka * T ** (1 - ea) / (ea - 1) + aa * T ** (1 - eb) / (eb - 1)

    # smallest T = 10^m with certified remainder below tol
    log_t = 1.0
    while remainder(10.0 ** log_t) > tol and log_t < 250:
        log_t += 1.0
    cutoff = 10.0 ** log_t
    part_tail = _gl_log_panels(lambda r: ka * r ** (-ea) + aa * r ** (-eb), 1.0, cutoff)
    rem = remainder(cutoff)
    if rem > tol:
        # cutoff cap reached: the remainder is known in closed form, add it
        part_tail += rem
    return float(part_inner + part_tail)
