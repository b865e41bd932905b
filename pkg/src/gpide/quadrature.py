"""Deterministic quadrature: Gaussian factor, W_k law, and the stable generator integral."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import RadiusTooSmall
from .uncertainty import WkLaw

DEFAULT_SPLIT = 1e-3
DEFAULT_CUT = 1e4
DEFAULT_INTERIOR_ORDER = 64
DEFAULT_TAIL_ORDER = 96
DEFAULT_GAUSS_ORDER = 16
DEFAULT_RADIUS = 1e8


def tree_sum(values) -> float:
    """Pairwise sum in a fixed left-to-right tree order (independent of threading)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0])


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    tail_remainder: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def mass(self) -> float:
        return tree_sum(self.weights)

    def expect(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        return tree_sum(self.weights * g(self.nodes))

    def renormalized(self) -> "QuadratureRule":
        """Weights rescaled to unit mass; the dropped tail stays recorded."""
        return QuadratureRule(self.nodes, self.weights / self.mass, self.tail_remainder)


def gaussian_rule(order: int = DEFAULT_GAUSS_ORDER) -> QuadratureRule:
    """Gauss-Hermite rule for the standard normal law, exact up to degree 2*order - 1."""
    if order < 2:
        raise ValueError("order must be >= 2")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    x = 0.5 * (x - x[::-1])  # exact antisymmetry of the nodes
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x, w)


@lru_cache(maxsize=256)
def _lattice_weights(ratio: float) -> tuple[np.ndarray, np.ndarray]:
    # ratio = variance / spacing^2
    if ratio == 0.0:
        return np.array([0]), np.array([1.0])
    if ratio < 1.0 / 3.0:
        # 3 points: mass and variance exact; a nonnegative lattice law cannot
        # match the normal fourth moment below this ratio
        return np.array([-1, 0, 1]), np.array([ratio / 2, 1.0 - ratio, ratio / 2])
    if ratio <= 4.0 / 3.0:
        # 5 points: moments 0, 2, 4 exact
        w2 = (3 * ratio**2 - ratio) / 24.0
        w1 = (4 * ratio - 3 * ratio**2) / 6.0
        w0 = 1.0 - 2 * w1 - 2 * w2
        return np.arange(-2, 3), np.array([w2, w1, w0, w1, w2])
    # sampled normal density; moment errors ~ exp(-2 pi^2 ratio) < 1e-11
    m_max = int(np.ceil(9.0 * np.sqrt(ratio)))
    m = np.arange(-m_max, m_max + 1)
    w = np.exp(-0.5 * m.astype(float) ** 2 / ratio)
    w = 0.5 * (w + w[::-1])
    return m, w / tree_sum(w)


def lattice_gaussian_rule(variance: float, spacing: float) -> QuadratureRule:
    """Nonnegative rule for N(0, variance) whose nodes are integer multiples of ``spacing``.

    Used on a uniform axis so that every node of the rule lands on a lattice
    point and no interpolation is needed along that axis.
    """
    if variance < 0 or spacing <= 0:
        raise ValueError("variance must be >= 0 and spacing > 0")
    m, w = _lattice_weights(float(variance / spacing**2))
    return QuadratureRule(m * spacing, w)


def wk_rule(law: WkLaw, interior_order: int = DEFAULT_INTERIOR_ORDER,
            truncation_radius: float = DEFAULT_RADIUS,
            tail_order: int = DEFAULT_TAIL_ORDER) -> QuadratureRule:
    """Composite rule for W_k: Gauss-Legendre on (-1, 1) against the cubic density,
    Gauss-Legendre in log|z| on 1 <= |z| <= R against the tail density.

    The nodes do not depend on (k1, k2), and the weights are affine in them.
    """
    R = float(truncation_radius)
    if R < 1.0:
        raise RadiusTooSmall(f"truncation radius {R} < 1")
    t, wt = np.polynomial.legendre.leggauss(interior_order)
    w_int = wt * law.interior_density(t)
    if R > 1.0:
        u, wu = np.polynomial.legendre.leggauss(tail_order)
        half = 0.5 * np.log(R)
        u = half * (u + 1.0)
        z = np.exp(u)
        jac = wu * half * z
        dens_r = sum(c * z ** (-p - 1) for c, p in law.tail_density_terms(+1))
        dens_l = sum(c * z ** (-p - 1) for c, p in law.tail_density_terms(-1))
        nodes = np.concatenate([-z[::-1], t, z])
        weights = np.concatenate([(jac * dens_l)[::-1], w_int, jac * dens_r])
    else:
        nodes, weights = t, w_int
    remainder = float(law.cdf(-R) + (1.0 - law.cdf(R)))
    return QuadratureRule(nodes, np.maximum(weights, 0.0), remainder)


@lru_cache(maxsize=8)
def _gl(order: int):
    return np.polynomial.legendre.leggauss(order)


def power_tail_integral(g: Callable[[np.ndarray], np.ndarray],
                        terms: tuple[tuple[float, float], ...],
                        lo: float, hi: float) -> float:
    """int_lo^hi g(y) * sum_i c_i y^(-p_i - 1) dy for 0 < lo < hi.

    Log-spaced panels below y = 1, unit-length panels above (resolves
    oscillatory g such as cos).
    """
    if hi <= lo:
        return 0.0
    parts = []
    if lo < 1.0:
        x, w = _gl(16)
        top = min(hi, 1.0)
        ulo, uhi = np.log(lo), np.log(top)
        npan = max(1, int(np.ceil((uhi - ulo) / 0.5)))
        edges = np.linspace(ulo, uhi, npan + 1)
        half = 0.5 * np.diff(edges)[:, None]
        u = 0.5 * (edges[:-1] + edges[1:])[:, None] + half * x[None, :]
        y = np.exp(u)
        dens = sum(c * y ** (-p - 1) for c, p in terms)
        parts.append(np.sum(g(y) * dens * y * half * w[None, :], axis=1))
    if hi > 1.0:
        x, w = _gl(8)
        start = max(lo, 1.0)
        npan = max(1, int(np.ceil(hi - start)))
        edges = np.linspace(start, hi, npan + 1)
        half = 0.5 * np.diff(edges)[:, None]
        y = 0.5 * (edges[:-1] + edges[1:])[:, None] + half * x[None, :]
        dens = sum(c * y ** (-p - 1) for c, p in terms)
        parts.append(np.sum(g(y) * dens * half * w[None, :], axis=1))
    return tree_sum(np.concatenate(parts))


@dataclass(frozen=True)
class Smooth1D:
    """A C_b^3 function of one variable with its first three derivatives and their sup-norms."""

    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    sup: float
    d1_sup: float
    d2_sup: float
    d3_sup: float
    name: str = ""

    def scaled(self, lam: float) -> "Smooth1D":
        a = abs(lam)
        return Smooth1D(lambda z: lam * self.f(z), lambda z: lam * self.d1(z),
                        lambda z: lam * self.d2(z), lambda z: lam * self.d3(z),
                        a * self.sup, a * self.d1_sup, a * self.d2_sup, a * self.d3_sup,
                        f"{lam}*{self.name}")

    def shifted(self, c: float) -> "Smooth1D":
        return Smooth1D(lambda z: self.f(z + c), lambda z: self.d1(z + c),
                        lambda z: self.d2(z + c), lambda z: self.d3(z + c),
                        self.sup, self.d1_sup, self.d2_sup, self.d3_sup, f"{self.name}(+{c})")


def far_average(g: Callable[[np.ndarray], np.ndarray], cut: float) -> float:
    """Mean of g over [cut/2, cut] (unit Gauss-Legendre panels); stands in for g beyond the cut."""
    x, w = _gl(8)
    edges = np.arange(np.floor(cut / 2), np.floor(cut) + 1.0)
    y = 0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * x[None, :]
    return tree_sum(g(y) * w[None, :]) / (2.0 * (edges.size - 1))


@dataclass(frozen=True)
class GeneratorIntegral:
    value: float
    error: float
    left: float  # int over lambda < 0 with unit spectral weight
    right: float  # int over lambda > 0 with unit spectral weight


def _one_side(phi: Smooth1D, z: float, sign: int, alpha: float, split: float, cut: float):
    f0, d1 = float(phi.f(z)), float(phi.d1(z))
    # Taylor terms of order 2 to 4 on lam < split, integrated in closed form; the
    # fourth derivative is a central difference of the third
    eps = 1e-3
    d4 = (float(phi.d3(z + eps)) - float(phi.d3(z - eps))) / (2 * eps)
    taylor = (0.5 * float(phi.d2(z)) * split ** (2 - alpha) / (2 - alpha)
              + sign * float(phi.d3(z)) / 6.0 * split ** (3 - alpha) / (3 - alpha)
              + d4 / 24.0 * split ** (4 - alpha) / (4 - alpha))

    def delta(lam):
        return phi.f(z + sign * lam) - f0 - sign * d1 * lam

    body = power_tail_integral(delta, ((1.0, alpha),), split, cut)
    # beyond the cut the gradient part is exact; phi(z+lam) - phi(z) is replaced by
    # its average over [cut/2, cut].  Both lie in an interval of width 2 ||phi||.
    far = far_average(lambda lam: phi.f(z + sign * lam) - f0, cut)
    tail = far * cut ** (-alpha) / alpha - sign * d1 * cut ** (1 - alpha) / (alpha - 1)
    # the remainder uses |D^3 phi(xi) - D^3 phi(z)| <= 2 ||D^3 phi||
    err = (phi.d3_sup / 3.0) * split ** (3 - alpha) / (3 - alpha) + 2.0 * phi.sup * cut ** (-alpha) / alpha
    return taylor + body + tail, err


def stable_generator_integral(k: tuple[float, float], phi: Smooth1D, z: float, alpha: float,
                              split: float = DEFAULT_SPLIT, cut: float = DEFAULT_CUT) -> GeneratorIntegral:
    """k1 * int_{lam<0} delta_lam phi(z) |lam|^(-1-alpha) + k2 * int_{lam>0} (same).

    ``delta_lam phi(z) = phi(z+lam) - phi(z) - phi'(z) lam``.  Near the origin the
    Taylor terms of order 2 to 4 are integrated in closed form; ``error`` is the
    certified Taylor remainder plus the bound on the truncated tail.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    left, err_l = _one_side(phi, z, -1, alpha, split, cut)
    right, err_r = _one_side(phi, z, +1, alpha, split, cut)
    k1, k2 = k
    value = k1 * left + k2 * right
    return GeneratorIntegral(float(value), float(abs(k1) * err_l + abs(k2) * err_r), left, right)


def scaled_law_expectation(law: WkLaw, g: Callable[[np.ndarray], np.ndarray], c: float,
                           g_far: float | tuple[float, float] = 0.0, g_bound: float = 0.0,
                           interior_order: int = DEFAULT_INTERIOR_ORDER,
                           cut: float = DEFAULT_CUT) -> tuple[float, float]:
    """E[g(c W)] for the law of W and scale c > 0, returning (value, error bound).

    The tails are integrated in the variable y = c w up to ``cut``.  Beyond it
    ``g`` is treated as ``g_far`` (one value, or a (left, right) pair) plus a part
    bounded by ``g_bound``.
    """
    far_values = g_far if isinstance(g_far, tuple) else (g_far, g_far)
    t, wt = _gl(interior_order)
    interior = tree_sum(wt * law.interior_density(t) * g(c * t))
    total = interior
    err = 0.0
    for side in (-1, +1):
        terms = tuple((coef * c**p, p) for coef, p in law.tail_density_terms(side))
        lo = c
        hi = max(cut, 2.0 * c)
        body = power_tail_integral(lambda y: g(side * y), terms, lo, hi)
        far_mass = sum(coef * hi ** (-p) / p for coef, p in terms)
        total += body + far_values[side > 0] * far_mass
        err += g_bound * far_mass
    return float(total), float(err)
