"""One step of the sublinear expectation: inner classical expectation, outer sup over the box."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import GridFunction, locate, locate_scalar
from .quadrature import (DEFAULT_GAUSS_ORDER, DEFAULT_INTERIOR_ORDER, DEFAULT_RADIUS,
                         DEFAULT_TAIL_ORDER, QuadratureRule, gaussian_rule,
                         lattice_gaussian_rule, tree_sum, wk_rule)
from .uncertainty import DEFAULT_A, UncertaintyBox, WkLaw, law_for_corner

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

Field3 = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParamSearchConfig:
    coarse_grid: int = 9
    refine_tol: float = 1e-8
    sweeps: int = 2
    tie_break: str = "smallest"

    def __post_init__(self):
        if self.coarse_grid < 2:
            raise ValueError("coarse_grid must be >= 2")
        if self.refine_tol <= 0:
            raise ValueError("refine_tol must be positive")
        if self.tie_break != "smallest":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")


@dataclass(frozen=True)
class StepContext:
    h: float
    box: UncertaintyBox
    gaussian: QuadratureRule
    wk_rules: tuple[QuadratureRule, ...]
    search: ParamSearchConfig = field(default_factory=ParamSearchConfig)
    x_spacing: float | None = None  # when set, X uses a lattice rule on this spacing
    laws: tuple[WkLaw, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not 0.0 < self.h <= 1.0:
            raise ValueError(f"h must lie in (0, 1], got {self.h}")
        if len(self.wk_rules) != 4:
            raise ValueError("one W_k rule per corner of the k-box is required")
        renorm = tuple(r.renormalized() for r in self.wk_rules)
        object.__setattr__(self, "wk_rules", renorm)

    @classmethod
    def build(cls, box: UncertaintyBox, h: float, *, a1: float = DEFAULT_A, a2: float = DEFAULT_A,
              beta_tail: float = 1.8, gaussian_order: int = DEFAULT_GAUSS_ORDER,
              interior_order: int = DEFAULT_INTERIOR_ORDER, truncation_radius: float = DEFAULT_RADIUS,
              tail_order: int = DEFAULT_TAIL_ORDER, search: ParamSearchConfig | None = None,
              x_spacing: float | None = None) -> "StepContext":
        laws = tuple(law_for_corner(box, c, a1, a2, beta_tail) for c in box.corners)
        rules = tuple(wk_rule(law, interior_order, truncation_radius, tail_order) for law in laws)
        return cls(h, box, gaussian_rule(gaussian_order), rules, search or ParamSearchConfig(),
                   x_spacing, laws)

    @property
    def z_scale(self) -> float:
        return self.h ** (1.0 / self.box.alpha)

    @property
    def tail_remainder(self) -> float:
        return max(r.tail_remainder for r in self.wk_rules)

    def x_rule(self, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
        """Offsets and weights of sqrt(h) * sigma * X."""
        var = self.h * sigma2
        if self.x_spacing is not None:
            r = lattice_gaussian_rule(var, self.x_spacing)
            return r.nodes, r.weights
        if var == 0.0:
            return np.zeros(1), np.ones(1)
        return math.sqrt(var) * self.gaussian.nodes, self.gaussian.weights

    def z_rule(self, corner: int) -> tuple[np.ndarray, np.ndarray]:
        """Offsets and weights of h^(1/alpha) * W_k at a corner index."""
        r = self.wk_rules[corner]
        return self.z_scale * r.nodes, r.weights


def inner_expectation(ctx: StepContext, v: Field3, point, q: float, sigma2: float,
                      k_corner: int) -> float:
    """Classical expectation of v(x + sqrt(h) sigma X, y + h q, z + h^(1/alpha) W) at one parameter."""
    x, y, z = (float(c) for c in point)
    dx, wx = ctx.x_rule(sigma2)
    dz, wz = ctx.z_rule(k_corner)
    vals = v((x + dx)[:, None], np.full((1, 1), y + ctx.h * q), (z + dz)[None, :])
    vals = np.broadcast_to(vals, (dx.size, dz.size))
    return tree_sum(wx[:, None] * wz[None, :] * vals)


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    return np.array([lo]) if hi == lo else np.linspace(lo, hi, n)


class _Best:
    """Running maximum; ties go to the lexicographically smallest parameter."""

    def __init__(self):
        self.value = -math.inf
        self.param: tuple[float, ...] | None = None

    def offer(self, value: float, param: tuple[float, ...]) -> None:
        if value > self.value or (value == self.value and param < self.param):
            self.value, self.param = value, param


def _golden(fn: Callable[[float], float], lo: float, hi: float, tol: float) -> None:
    # maximizes fn on [lo, hi]; results are collected by fn's side effects
    if hi - lo <= tol:
        fn(lo)
        return
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)


def search_parameters(objective: Callable[[float, float], float], box: UncertaintyBox,
                      cfg: ParamSearchConfig) -> tuple[float, float, float]:
    """Max of objective(q, sigma2) over Gamma x Sigma: coarse grid then golden refinement."""
    best = _Best()
    cache: dict[tuple[float, float], float] = {}

    def f(q: float, s: float) -> float:
        key = (float(q), float(s))
        if key not in cache:
            cache[key] = objective(*key)
            best.offer(cache[key], key)
        return cache[key]

    qs = _axis(box.gamma_lo, box.gamma_hi, cfg.coarse_grid)
    ss = _axis(box.sigma2_lo, box.sigma2_hi, cfg.coarse_grid)
    for q in qs:
        for s in ss:
            f(q, s)
    q_step = (box.gamma_hi - box.gamma_lo) / (cfg.coarse_grid - 1)
    s_step = (box.sigma2_hi - box.sigma2_lo) / (cfg.coarse_grid - 1)
    for _ in range(cfg.sweeps):
        if q_step > 0:
            q0, s0 = best.param
            _golden(lambda t: f(t, s0), max(box.gamma_lo, q0 - q_step),
                    min(box.gamma_hi, q0 + q_step), cfg.refine_tol)
        if s_step > 0:
            q0, s0 = best.param
            _golden(lambda t: f(q0, t), max(box.sigma2_lo, s0 - s_step),
                    min(box.sigma2_hi, s0 + s_step), cfg.refine_tol)
    return best.value, best.param[0], best.param[1]


@dataclass(frozen=True)
class StepResult:
    value: float
    k: tuple[float, float]
    q: float
    sigma2: float

    @property
    def argmax(self) -> tuple[float, float, float, float]:
        return (self.k[0], self.k[1], self.q, self.sigma2)


def _grid_objective(ctx: StepContext, v: GridFunction, point, corner: int):
    """inner_expectation for a grid function, with the z-average taken once.

    The trilinear interpolant is linear in its values, so averaging over the
    z-offsets first leaves a bilinear problem in (x, y) for each (q, sigma2).
    """
    x, y, z = (float(c) for c in point)
    xs, ys, zs = v.grid.axes
    dz, wz = ctx.z_rule(corner)
    iz, tz = locate(zs, z + dz)
    V = v.values
    M = V[:, :, iz] @ (wz * (1.0 - tz)) + V[:, :, iz + 1] @ (wz * tz)

    x_cache: dict[float, tuple] = {}

    def objective(q: float, sigma2: float) -> float:
        if sigma2 not in x_cache:
            dx, wx = ctx.x_rule(sigma2)
            x_cache[sigma2] = (wx, *locate(xs, x + dx))
        wx, ix, tx = x_cache[sigma2]
        iy, ty = locate_scalar(ys, y + ctx.h * q)
        col = M[:, iy] * (1.0 - ty) + M[:, iy + 1] * ty
        return tree_sum(wx * (col[ix] * (1.0 - tx) + col[ix + 1] * tx))

    return objective


def sup_step(ctx: StepContext, v: Field3, point) -> StepResult:
    """Sublinear one-step expectation at ``point``.

    The law of W_k is affine in (k1, k2), so the sup over the k-box is taken
    exactly over its four corners; (q, sigma2) is searched numerically.
    """
    best = _Best()
    for idx, corner in enumerate(ctx.box.corners):
        if isinstance(v, GridFunction):
            objective = _grid_objective(ctx, v, point, idx)
        else:
            def objective(q, s, idx=idx):
                return inner_expectation(ctx, v, point, q, s, idx)
        val, q, s = search_parameters(objective, ctx.box, ctx.search)
        param = (corner[0], corner[1], q, s)
        best.offer(val, param)
    k1, k2, q, s = best.param
    return StepResult(best.value, (k1, k2), q, s)
