"""Rectilinear 3-D lattice, grid functions with clamped trilinear interpolation, and layer IO."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvariantViolation

AXES = ("x", "y", "z")
MAGIC = b"GPIDE\0"
HEADER = struct.Struct("<6sH3HH6d")  # 64 bytes
SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) != 3:
            raise ValueError("a grid needs exactly three axes")
        for name, a in zip(AXES, axes):
            if a.ndim != 1 or a.size < 2:
                raise ValueError(f"axis {name} needs at least 2 points")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {name} must be strictly increasing")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, bounds, points) -> "Grid":
        bounds = tuple(bounds)
        if isinstance(points, int):
            points = (points,) * 3
        axes = []
        for name, (lo, hi), n in zip(AXES, bounds, points):
            if not lo < hi:
                raise ValueError(f"axis {name}: bounds must satisfy lo < hi")
            axes.append(np.linspace(lo, hi, int(n)))
        return cls(tuple(axes))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(a.size for a in self.axes)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    @property
    def spacings(self) -> tuple[np.ndarray, ...]:
        return tuple(np.diff(a) for a in self.axes)

    def uniform_spacing(self, axis: int) -> float | None:
        d = np.diff(self.axes[axis])
        if np.allclose(d, d[0], rtol=1e-12, atol=0.0):
            return float((self.axes[axis][-1] - self.axes[axis][0]) / (d.size))
        return None

    @property
    def is_uniform(self) -> bool:
        return all(self.uniform_spacing(i) is not None for i in range(3))

    def contains(self, point) -> bool:
        return all(lo <= float(p) <= hi for p, (lo, hi) in zip(point, self.bounds))

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def sample(self, f) -> np.ndarray:
        X, Y, Z = self.mesh()
        return np.broadcast_to(np.asarray(f(X, Y, Z), dtype=float), self.shape).copy()


def locate(coords: np.ndarray, q) -> tuple[np.ndarray, np.ndarray]:
    """Cell index and fractional position of clamped queries; near-node hits snap onto the node."""
    q = np.clip(np.asarray(q, dtype=float), coords[0], coords[-1])
    i = np.clip(np.searchsorted(coords, q, side="right") - 1, 0, coords.size - 2)
    theta = (q - coords[i]) / (coords[i + 1] - coords[i])
    theta = np.where(theta < SNAP, 0.0, np.where(theta > 1.0 - SNAP, 1.0, theta))
    return i, theta


def locate_scalar(coords: np.ndarray, q: float) -> tuple[int, float]:
    """:func:`locate` for one query, without array overhead (same arithmetic)."""
    q = min(max(float(q), float(coords[0])), float(coords[-1]))
    i = min(max(int(np.searchsorted(coords, q, side="right")) - 1, 0), coords.size - 2)
    c0, c1 = float(coords[i]), float(coords[i + 1])
    theta = (q - c0) / (c1 - c0)
    if theta < SNAP:
        theta = 0.0
    elif theta > 1.0 - SNAP:
        theta = 1.0
    return i, theta


def interpolation_matrix(coords: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Dense matrix mapping nodal values to clamped linear interpolants at ``queries``."""
    i, th = locate(coords, queries)
    M = np.zeros((np.size(queries), coords.size))
    rows = np.arange(np.size(queries))
    np.add.at(M, (rows, i), 1.0 - th)
    np.add.at(M, (rows, i + 1), th)
    return M


def axis_operator(coords: np.ndarray, offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Matrix of v -> sum_j w_j v(c_i + d_j) with clamped linear interpolation."""
    n = coords.size
    M = np.zeros((n, n))
    rows = np.arange(n)
    for d, w in zip(offsets, weights):
        i, th = locate(coords, coords + d)
        np.add.at(M, (rows, i), w * (1.0 - th))
        np.add.at(M, (rows, i + 1), w * th)
    return M


def jump_lattice_operator(coords: np.ndarray, offsets: np.ndarray, weights: np.ndarray,
                          spacing: float) -> np.ndarray:
    """Like :func:`axis_operator` on a uniform axis, but offsets shorter than one cell are
    replaced by a three-point law on {-spacing, 0, spacing} with the same mass, mean and
    second moment.

    Linear interpolation of a sub-cell offset d adds |d| (spacing - |d|) of spurious
    variance; over many small steps that error grows like the number of steps.
    Falls back to plain interpolation when the three-point weights would be negative.
    """
    offsets = np.asarray(offsets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    small = np.abs(offsets) < spacing
    m = float(np.sum(weights[small]))
    mu = float(np.sum(weights[small] * offsets[small])) / spacing
    v = float(np.sum(weights[small] * offsets[small] ** 2)) / spacing**2
    p_hi, p_lo = 0.5 * (v + mu), 0.5 * (v - mu)
    p0 = m - p_hi - p_lo
    if not small.any() or min(p_hi, p_lo, p0) < 0.0:
        return axis_operator(coords, offsets, weights)
    d = np.concatenate([[-spacing, 0.0, spacing], offsets[~small]])
    w = np.concatenate([[p_lo, p0, p_hi], weights[~small]])
    return axis_operator(coords, d, w)


def hat_jump_operator(points: int, spacing: float, law, scale: float) -> np.ndarray:
    """Matrix of v -> E[v_lin(z_i + scale W)] on a uniform axis of ``points`` nodes.

    ``v_lin`` is the clamped piecewise-linear interpolant, integrated exactly from
    the closed-form partial moments of the law (``law.partial_moment``).  Jumps
    shorter than one cell go to a three-point law on {-1, 0, 1} cells with their
    mass, mean and second moment, as in :func:`jump_lattice_operator`.
    """
    K = points
    r = spacing / scale  # one cell in units of W
    edges = np.arange(-K, K + 1, dtype=float)  # cell boundaries in units of spacing
    P = law.partial_moment(0, edges[:-1] * r, edges[1:] * r)
    Q = law.partial_moment(1, edges[:-1] * r, edges[1:] * r) / r - edges[:-1] * P
    k = edges[:-1]
    far = (k != -1) & (k != 0)  # the two cells touching 0 are the sub-cell part
    offsets = np.arange(-K, K + 1)
    w = np.zeros(offsets.size)
    # cell [k, k+1]: node k gets P - Q, node k+1 gets Q
    np.add.at(w, (k[far] + K).astype(int), (P - Q)[far])
    np.add.at(w, (k[far] + K + 1).astype(int), Q[far])
    w[0] += law.partial_moment(0, -np.inf, -K * r)
    w[-1] += law.partial_moment(0, K * r, np.inf)
    m0 = law.partial_moment(0, -r, r)
    m1 = law.partial_moment(1, -r, r) / r
    m2 = law.partial_moment(2, -r, r) / r**2
    three = np.array([0.5 * (m2 - m1), m0 - m2, 0.5 * (m2 + m1)])
    if three.min() < 0.0:
        # plain interpolation of the sub-cell part
        q_neg = -law.partial_moment(1, -r, 0.0) / r
        q_pos = law.partial_moment(1, 0.0, r) / r
        three = np.array([q_neg, m0 - q_neg - q_pos, q_pos])
    w[K - 1:K + 2] += three
    L = np.zeros((points, points))
    idx = np.arange(points)
    for off, weight in zip(offsets, w):
        np.add.at(L, (idx, np.clip(idx + off, 0, points - 1)), weight)
    return L / L.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    time_index: int
    values: np.ndarray = field(repr=False)
    sup_norm_phi: float = np.inf

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, x, y, z) -> np.ndarray:
        """Clamped trilinear interpolation; arguments broadcast against each other."""
        x, y, z = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x, y, z)))
        (ix, tx), (iy, ty), (iz, tz) = (locate(a, c) for a, c in zip(self.grid.axes, (x, y, z)))
        v = self.values
        out = np.zeros(x.shape)
        for dx, wx in ((0, 1.0 - tx), (1, tx)):
            for dy, wy in ((0, 1.0 - ty), (1, ty)):
                for dz, wz in ((0, 1.0 - tz), (1, tz)):
                    out = out + wx * wy * wz * v[ix + dx, iy + dy, iz + dz]
        return out

    def at(self, point) -> float:
        return float(self(*point))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lipschitz_per_axis(self) -> tuple[float, float, float]:
        out = []
        for ax in range(3):
            d = np.diff(self.values, axis=ax)
            shape = [1, 1, 1]
            shape[ax] = -1
            out.append(float(np.max(np.abs(d) / np.diff(self.grid.axes[ax]).reshape(shape))))
        return tuple(out)

    def check_invariants(self, lipschitz, slack: float = 1e-6) -> None:
        """Boundedness by the recorded sup-norm of phi and the discrete Lipschitz bound per axis."""
        if self.sup_norm > self.sup_norm_phi * (1.0 + 1e-12) + 1e-14:
            raise InvariantViolation(
                f"layer {self.time_index}: sup norm {self.sup_norm} exceeds {self.sup_norm_phi}")
        lips = np.broadcast_to(np.asarray(lipschitz, dtype=float), (3,))
        for name, got, bound in zip(AXES, self.lipschitz_per_axis(), lips):
            if got > bound * (1.0 + slack) + 1e-12:
                raise InvariantViolation(
                    f"layer {self.time_index}: Lipschitz along {name} is {got} > {bound}")


def write_csv(layers, path) -> None:
    """Columns k, x, y, z, value; one row per lattice point, z fastest."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x", "y", "z", "value"])
        for layer in layers:
            X, Y, Z = layer.grid.mesh()
            for x, y, z, v in zip(X.ravel(), Y.ravel(), Z.ravel(), layer.values.ravel()):
                w.writerow([layer.time_index, repr(float(x)), repr(float(y)), repr(float(z)),
                            repr(float(v))])


def write_binary(layer: GridFunction, path) -> None:
    """64-byte header then row-major little-endian float64 values (z fastest).

    Version 1 is a uniform grid described by its bounds.  Version 2 appends
    the three coordinate arrays after the header.
    """
    g = layer.grid
    version = 1 if g.is_uniform else 2
    flat_bounds = [b for pair in g.bounds for b in pair]
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, version, *g.shape, layer.time_index, *flat_bounds))
        if version == 2:
            for a in g.axes:
                fh.write(a.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(layer.values).astype("<f8").tobytes())


def read_binary(path, sup_norm_phi: float | None = None) -> GridFunction:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise ValueError("file too short for a header")
    magic, version, nx, ny, nz, k, *flat = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("bad magic")
    offset = HEADER.size
    shape = (nx, ny, nz)
    if version == 1:
        grid = Grid.uniform(list(zip(flat[0::2], flat[1::2])), shape)
    elif version == 2:
        axes = []
        for n in shape:
            axes.append(np.frombuffer(data, "<f8", n, offset).copy())
            offset += 8 * n
        grid = Grid(tuple(axes))
    else:
        raise ValueError(f"unsupported version {version}")
    values = np.frombuffer(data, "<f8", nx * ny * nz, offset).reshape(shape).copy()
    norm = float(np.max(np.abs(values))) if sup_norm_phi is None else sup_norm_phi
    return GridFunction(grid, k, values, norm)
