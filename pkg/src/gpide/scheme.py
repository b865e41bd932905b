"""Piecewise-constant-in-time solver u_h on a 3-D lattice and the limit functional."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import GridTooNarrow
from .grid import (Grid, GridFunction, axis_operator, hat_jump_operator, jump_lattice_operator,
                   locate)
from .sublinear_step import StepContext, sup_step
from .testfunctions import TestFunction
from .uncertainty import UncertaintyBox

DEFAULT_BOUNDARY_TOL = 0.05
DEFAULT_SIGMA2_POINTS = 9
JUMP_PROJECTIONS = ("exact", "moment", "linear")


def default_grid(box: UncertaintyBox, points: int = 48) -> Grid:
    """|x| <= 6 sigma_hi, |y| <= 2 max|gamma| (at least 1), |z| <= 12."""
    xr = 6.0 * box.sigma_hi if box.sigma2_hi > 0 else 1.0
    yr = 2.0 * box.gamma_abs_max if box.gamma_abs_max > 0 else 1.0
    return Grid.uniform(((-xr, xr), (-yr, yr), (-12.0, 12.0)), points)


def drift_lattice_unit(box: UncertaintyBox, max_denominator: int = 64) -> float:
    """Largest d with gamma_lo / d and gamma_hi / d integers; a y spacing of h d keeps y + h q on nodes."""
    ends = []
    for g in (box.gamma_lo, box.gamma_hi):
        e = Fraction(g).limit_denominator(max_denominator)
        if abs(float(e) - g) > 1e-12:
            raise ValueError(f"drift endpoint {g!r} is not a ratio with denominator <= {max_denominator}")
        if e != 0:
            ends.append(e)
    if not ends:
        return 1.0
    num = math.gcd(*(e.numerator for e in ends))
    den = math.lcm(*(e.denominator for e in ends))
    return num / den


def drift_lattice_axis(box: UncertaintyBox, h: float, y_bounds, max_points: int = 4097) -> np.ndarray:
    """Uniform y axis on ``y_bounds`` with spacing h d (see drift_lattice_unit)."""
    lo, hi = map(float, y_bounds)
    step = h * drift_lattice_unit(box)
    cells = (hi - lo) / step
    if abs(cells - round(cells)) > 1e-9 * max(1.0, cells) or round(cells) < 1:
        raise ValueError(f"y range {hi - lo:g} is not a multiple of the drift lattice step {step:g}")
    if round(cells) + 1 > max_points:
        raise ValueError(f"drift lattice needs {round(cells) + 1} y points (limit {max_points})")
    return np.linspace(lo, hi, round(cells) + 1)


def _normal_overshoot(L: float, s: float) -> float:
    # E[(|s N| - L)^+]
    if s == 0.0:
        return 0.0
    a = L / s
    pdf = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    sf = 0.5 * math.erfc(a / math.sqrt(2.0))
    return 2.0 * (s * pdf - L * sf)


def boundary_influence(phi: TestFunction, box: UncertaintyBox, grid: Grid, n: int,
                       tail_remainder: float = 0.0, point=(0.0, 0.0, 0.0)) -> float:
    """Estimate of how much clamping at the lattice edges can move u_{1/n}(1, point).

    Sum of per-axis terms: reflected Gaussian overshoot in x, drift overshoot
    in y, stable tail probability past the z edge, plus the dropped W-mass.
    """
    (xl, xh), (yl, yh), (zl, zh) = grid.bounds
    px, py, pz = point
    lx, ly, lz = phi.lipschitz_axes
    Lx = min(px - xl, xh - px)
    term_x = lx * 2.0 * _normal_overshoot(Lx, box.sigma_hi)
    term_y = ly * max(0.0, py + box.gamma_hi - yh, yl - (py + box.gamma_lo))
    Lz = min(pz - zl, zh - pz)
    if lz > 0:
        k_sum = 2.0 * box.lambda_hi
        term_z = 2.0 * phi.sup_norm * (k_sum / box.alpha) * Lz ** (-box.alpha)
    else:
        term_z = 0.0
    return term_x + term_y + term_z + n * 2.0 * phi.sup_norm * tail_remainder


def sigma2_grid(box: UncertaintyBox, points: int = DEFAULT_SIGMA2_POINTS) -> np.ndarray:
    if box.sigma2_hi == box.sigma2_lo:
        return np.array([box.sigma2_lo])
    return np.linspace(box.sigma2_lo, box.sigma2_hi, points)


class GridStepOperator:
    """One sublinear step applied to a whole lattice layer.

    The inner expectation is separable: x and z act through fixed matrices
    (one per sigma2 on a finite grid, one per k-corner), and the sup over the
    drift q is exact because the y-interpolant is piecewise linear in q.
    """

    def __init__(self, ctx: StepContext, grid: Grid, sigma2_points: int = DEFAULT_SIGMA2_POINTS,
                 jump_projection: str = "exact"):
        if jump_projection not in JUMP_PROJECTIONS:
            raise ValueError(f"unknown jump_projection {jump_projection!r}")
        self.ctx, self.grid = ctx, grid
        xs, ys, zs = grid.axes
        self.sigma2 = sigma2_grid(ctx.box, sigma2_points)
        self.Lx = []
        for s2 in self.sigma2:
            dx, wx = ctx.x_rule(s2)
            self.Lx.append(axis_operator(xs, dx, wx))
        dz_uniform = grid.uniform_spacing(2)
        self.Lz = []
        for idx in range(4):
            if jump_projection == "exact" and dz_uniform is not None:
                self.Lz.append(hat_jump_operator(zs.size, dz_uniform, ctx.laws[idx], ctx.z_scale))
                continue
            dz, wz = ctx.z_rule(idx)
            if jump_projection == "moment" and dz_uniform is not None:
                self.Lz.append(jump_lattice_operator(zs, dz, wz, dz_uniform))
            else:
                self.Lz.append(axis_operator(zs, dz, wz))
        h = ctx.h
        lo, hi = ctx.box.gamma_lo, ctx.box.gamma_hi
        self.y_lo = locate(ys, ys + h * lo)
        self.single_q = hi == lo
        self.y_hi = None if self.single_q else locate(ys, ys + h * hi)
        self.window_rows = self.window_index = None
        if not self.single_q:
            # nodes strictly inside [y + h lo, y + h hi] form a contiguous index range
            a = np.clip(ys + h * lo, ys[0], ys[-1])
            b = np.clip(ys + h * hi, ys[0], ys[-1])
            first = np.searchsorted(ys, a, side="right")
            last = np.searchsorted(ys, b, side="left") - 1
            rows = np.nonzero(first <= last)[0]
            if rows.size:
                width = int(np.max(last[rows] - first[rows])) + 1
                d = np.arange(width)[None, :]
                self.window_rows = rows
                self.window_index = np.minimum(first[rows, None] + d, last[rows, None])
        self.y_gather = self._node_table()

    def _node_table(self) -> np.ndarray | None:
        """When every drift endpoint is a node, the y-sup is a max over node sets: one
        padded index row per y-node.  None when interpolation is needed."""
        ends = [self.y_lo] if self.single_q else [self.y_lo, self.y_hi]
        if any(np.any((t != 0.0) & (t != 1.0)) for _, t in ends):
            return None
        cols = [(i + (t == 1.0)).astype(int)[:, None] for i, t in ends]
        table = np.concatenate(cols, axis=1)
        if self.window_index is not None:
            extra = np.repeat(table[:, :1], self.window_index.shape[1], axis=1)
            extra[self.window_rows] = self.window_index
            table = np.concatenate([table, extra], axis=1)
        return table

    @property
    def combos(self) -> list[tuple[int, int]]:
        return [(c, s) for c in range(4) for s in range(self.sigma2.size)]

    @staticmethod
    def _interp_y(W: np.ndarray, where) -> np.ndarray:
        i, t = where
        return W[:, i, :] * (1.0 - t)[None, :, None] + W[:, i + 1, :] * t[None, :, None]

    def _y_sup(self, W: np.ndarray) -> np.ndarray:
        out = self._interp_y(W, self.y_lo)
        if self.single_q:
            return out
        out = np.maximum(out, self._interp_y(W, self.y_hi))
        if self.window_rows is not None:
            inner = W[:, self.window_index, :].max(axis=2)
            out[:, self.window_rows, :] = np.maximum(out[:, self.window_rows, :], inner)
        return out

    @staticmethod
    def _along_z(L: np.ndarray, values: np.ndarray) -> np.ndarray:
        return (values.reshape(-1, values.shape[2]) @ L.T).reshape(values.shape)

    @staticmethod
    def _along_x(L: np.ndarray, values: np.ndarray) -> np.ndarray:
        return (L @ values.reshape(values.shape[0], -1)).reshape(values.shape)

    def candidate(self, values: np.ndarray, corner: int, s_idx: int,
                  z_applied: np.ndarray | None = None) -> np.ndarray:
        Z = z_applied if z_applied is not None else self._along_z(self.Lz[corner], values)
        return self._y_sup(self._along_x(self.Lx[s_idx], Z))

    def apply(self, values: np.ndarray, workers: int = 1) -> np.ndarray:
        values = np.ascontiguousarray(values)
        Zs = [self._along_z(L, values) for L in self.Lz]
        combos = self.combos

        def run(cs):
            return self.candidate(values, cs[0], cs[1], Zs[cs[0]])

        if self.y_gather is not None:
            # pure node maxima commute with the max over combos
            def run(cs):
                return self._along_x(self.Lx[cs[1]], Zs[cs[0]])

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, combos))
        else:
            results = [run(cs) for cs in combos]
        out = results[0]
        for r in results[1:]:
            out = np.maximum(out, r)  # max is exact, so order cannot change bits
        if self.y_gather is not None:
            out = out[:, self.y_gather, :].max(axis=2)
        return out


@dataclass
class SolveReport:
    n: int
    boundary_bound: float
    tail_remainder: float
    seconds: float = 0.0
    method: str = "operator"
    sigma2_points: int = DEFAULT_SIGMA2_POINTS


@dataclass
class Solution:
    layers: list[GridFunction]
    report: SolveReport
    h: float = field(default=0.0)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, k):
        return self.layers[k]

    def __iter__(self):
        return iter(self.layers)

    @property
    def final(self) -> GridFunction:
        return self.layers[-1]


def _check_h(ctx: StepContext, n: int) -> None:
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not math.isclose(ctx.h, 1.0 / n, rel_tol=1e-14, abs_tol=0.0):
        raise ValueError(f"ctx.h={ctx.h} does not equal 1/n={1.0 / n}")


def _pointwise_layer(ctx: StepContext, prev: GridFunction, workers: int) -> np.ndarray:
    X, Y, Z = prev.grid.mesh()
    pts = list(zip(X.ravel(), Y.ravel(), Z.ravel()))

    def one(p):
        return sup_step(ctx, prev, p).value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(one, pts))
    else:
        vals = [one(p) for p in pts]
    return np.array(vals).reshape(prev.grid.shape)


def solve(phi: TestFunction, box: UncertaintyBox, n: int, grid: Grid, ctx: StepContext, *,
          workers: int = 1, sigma2_points: int = DEFAULT_SIGMA2_POINTS,
          boundary_tol: float = DEFAULT_BOUNDARY_TOL, check_invariants: bool = True,
          method: str = "operator", keep_history: bool = True,
          jump_projection: str = "exact") -> Solution:
    """u_h on the lattice for h = 1/n; layer k holds u_h on [kh, (k+1)h).

    ``method="operator"`` uses the separable lattice operator with a finite
    sigma2 grid; ``method="pointwise"`` calls sup_step at every node (slow,
    continuous parameter search).  On a uniform z axis the default
    ``jump_projection="exact"`` integrates the jump law against the linear
    interpolant in closed form; "moment" and "linear" use the W_k quadrature rule.
    """
    _check_h(ctx, n)
    if method not in ("operator", "pointwise"):
        raise ValueError(f"unknown method {method!r}")
    bound = boundary_influence(phi, box, grid, n, ctx.tail_remainder)
    if bound > boundary_tol:
        raise GridTooNarrow(bound, boundary_tol)
    start = time.perf_counter()
    layer = GridFunction(grid, 0, grid.sample(phi), phi.sup_norm)
    if check_invariants:
        layer.check_invariants(phi.lipschitz_axes)
    layers = [layer]
    op = GridStepOperator(ctx, grid, sigma2_points, jump_projection) if method == "operator" else None
    for k in range(1, n + 1):
        if op is not None:
            vals = op.apply(layer.values, workers)
        else:
            vals = _pointwise_layer(ctx, layer, workers)
        layer = GridFunction(grid, k, vals, phi.sup_norm)
        if check_invariants:
            layer.check_invariants(phi.lipschitz_axes)
        if keep_history or k == n:
            layers.append(layer)
    report = SolveReport(n, bound, ctx.tail_remainder, time.perf_counter() - start, method,
                         sigma2_points)
    return Solution(layers, report, 1.0 / n)


def apply_S(ctx: StepContext, point, p_value: float, v) -> float:
    """(p - E^[v(...)]) / h."""
    return (p_value - sup_step(ctx, v, point).value) / ctx.h


def limit_functional(phi: TestFunction, box: UncertaintyBox, n: int, grid: Grid,
                     ctx: StepContext, **solve_kwargs) -> float:
    """u_{1/n}(1, 0, 0, 0)."""
    if not grid.contains((0.0, 0.0, 0.0)):
        raise ValueError("the origin must lie inside the grid")
    sol = solve(phi, box, n, grid, ctx, keep_history=False, **solve_kwargs)
    return sol.final.at((0.0, 0.0, 0.0))


def evaluate(history, t: float, point) -> float:
    """Piecewise constant in time: layer floor(t / h), with t = 1 mapped to the last layer."""
    layers = list(history)
    n = len(layers) - 1
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    k = n if t >= 1.0 else min(int(math.floor(t * n + 1e-12)), n)
    return layers[k].at(point)


def check_time_regularity(history, C0: float, pairs=None) -> float:
    """Largest ratio |u(kh) - u(lh)| / (C0 sqrt(|k-l| h)) over layer pairs (should be <= 1)."""
    layers = list(history)
    n = len(layers) - 1
    if pairs is None:
        pairs = [(0, k) for k in range(1, n + 1)] + [(k, n) for k in range(1, n)]
    worst = 0.0
    for k, l in pairs:
        diff = np.max(np.abs(layers[k].values - layers[l].values))
        worst = max(worst, diff / (C0 * math.sqrt(abs(k - l) / n)))
    return worst
