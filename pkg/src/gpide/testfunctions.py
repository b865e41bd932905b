"""Bounded Lipschitz terminal data with exact norm bounds, and a small catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .quadrature import Smooth1D

TANH_BOUNDS = (1.0, 1.0, 4.0 / (3.0 * math.sqrt(3.0)), 2.0)  # sup |f|, |f'|, |f''|, |f'''|


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # keep pytest from collecting this class

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    sup_norm: float
    lipschitz: float  # Euclidean Lipschitz constant C_phi
    lipschitz_axes: tuple[float, float, float]
    derivative_bounds: tuple[float, float, float]  # operator norms of D, D^2, D^3
    z_slice: Callable[[float, float], Smooth1D] | None = None

    def __post_init__(self):
        vals = (self.sup_norm, self.lipschitz, *self.lipschitz_axes, *self.derivative_bounds)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"{self.name}: bounds must be finite and nonnegative")

    def __call__(self, x, y, z):
        return self.evaluator(x, y, z)

    def spot_check(self, half_width: float = 4.0, points: int = 33) -> None:
        """Sampled values and finite differences must respect the declared bounds."""
        axis = np.linspace(-half_width, half_width, points)
        X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
        v = np.broadcast_to(self.evaluator(X, Y, Z), X.shape)
        if np.max(np.abs(v)) > self.sup_norm * (1 + 1e-12) + 1e-15:
            raise ValueError(f"{self.name}: sampled values exceed sup_norm")
        step = axis[1] - axis[0]
        for ax, bound in enumerate(self.lipschitz_axes):
            slope = np.max(np.abs(np.diff(v, axis=ax))) / step
            if slope > bound * (1 + 1e-12) + 1e-15:
                raise ValueError(f"{self.name}: finite differences exceed the Lipschitz bound")


def _zeros(x, y, z):
    return np.zeros(np.broadcast(x, y, z).shape)


def _smooth_tanh(shift: float = 0.0) -> Smooth1D:
    def f(z):
        return np.tanh(z + shift)

    def d1(z):
        return 1.0 - np.tanh(z + shift) ** 2

    def d2(z):
        t = np.tanh(z + shift)
        return -2.0 * t * (1.0 - t**2)

    def d3(z):
        t = np.tanh(z + shift)
        return -2.0 * (1.0 - t**2) * (1.0 - 3.0 * t**2)

    return Smooth1D(f, d1, d2, d3, *TANH_BOUNDS, name="tanh")


def _smooth_cos(shift: float = 0.0) -> Smooth1D:
    return Smooth1D(lambda z: np.cos(z + shift), lambda z: -np.sin(z + shift),
                    lambda z: -np.cos(z + shift), lambda z: np.sin(z + shift),
                    1.0, 1.0, 1.0, 1.0, name="cos")


def _const_smooth(c: float) -> Smooth1D:
    return Smooth1D(lambda z: np.full(np.shape(z), c), lambda z: np.zeros(np.shape(z)),
                    lambda z: np.zeros(np.shape(z)), lambda z: np.zeros(np.shape(z)),
                    abs(c), 0.0, 0.0, 0.0, name="const")


def constant(value: float = 1.0) -> TestFunction:
    c = float(value)
    return TestFunction(f"constant({c})", lambda x, y, z: _zeros(x, y, z) + c, abs(c), 0.0,
                        (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), lambda x, y: _const_smooth(c))


def tanh_axis(axis: str) -> TestFunction:
    idx = "xyz".index(axis)
    lips = tuple(1.0 if i == idx else 0.0 for i in range(3))

    def f(x, y, z):
        return np.tanh((x, y, z)[idx]) + _zeros(x, y, z)

    def zs(x, y):
        if idx == 2:
            return _smooth_tanh()
        return _const_smooth(float(np.tanh((x, y)[idx])))

    return TestFunction(f"tanh_{axis}", f, 1.0, 1.0, lips, TANH_BOUNDS[1:], zs)


def cos_axis(axis: str) -> TestFunction:
    idx = "xyz".index(axis)
    lips = tuple(1.0 if i == idx else 0.0 for i in range(3))

    def f(x, y, z):
        return np.cos((x, y, z)[idx]) + _zeros(x, y, z)

    def zs(x, y):
        if idx == 2:
            return _smooth_cos()
        return _const_smooth(float(np.cos((x, y)[idx])))

    return TestFunction(f"cos_{axis}", f, 1.0, 1.0, lips, (1.0, 1.0, 1.0), zs)


def cos_sum() -> TestFunction:
    """cos(x + y + z): gradient, Hessian and third derivative are multiples of (1,1,1) tensors."""
    r3 = math.sqrt(3.0)
    return TestFunction("cos_xyz", lambda x, y, z: np.cos(x + y + z), 1.0, r3, (1.0, 1.0, 1.0),
                        (r3, 3.0, 3.0 * r3), lambda x, y: _smooth_cos(x + y))


def tanh_product() -> TestFunction:
    """tanh(x) tanh(y) tanh(z); each partial is bounded by the one-variable tanh bounds."""
    r3 = math.sqrt(3.0)
    d2 = max(TANH_BOUNDS[2], 1.0)
    d3 = max(TANH_BOUNDS[3], 1.0, TANH_BOUNDS[2])

    def zs(x, y):
        return _smooth_tanh().scaled(float(np.tanh(x) * np.tanh(y)))

    return TestFunction("tanh_product", lambda x, y, z: np.tanh(x) * np.tanh(y) * np.tanh(z),
                        1.0, r3, (1.0, 1.0, 1.0), (r3, 3.0 * d2, 3.0 * r3 * d3), zs)


def catalog() -> dict[str, Callable[..., TestFunction]]:
    return {
        "constant": constant,
        "tanh_x": lambda: tanh_axis("x"),
        "tanh_y": lambda: tanh_axis("y"),
        "tanh_z": lambda: tanh_axis("z"),
        "cos_x": lambda: cos_axis("x"),
        "cos_y": lambda: cos_axis("y"),
        "cos_z": lambda: cos_axis("z"),
        "cos_xyz": cos_sum,
        "tanh_product": tanh_product,
    }


def make_test_function(name: str, **kwargs) -> TestFunction:
    table = catalog()
    if name not in table:
        raise ConfigError(f"unknown test function {name!r}; choose from {sorted(table)}")
    return table[name](**kwargs)
