"""Experiment configuration: one JSON document, strict keys, validated by the owning modules."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .grid import Grid
from .quadrature import (DEFAULT_GAUSS_ORDER, DEFAULT_INTERIOR_ORDER, DEFAULT_RADIUS,
                         DEFAULT_TAIL_ORDER)
from .scheme import (DEFAULT_BOUNDARY_TOL, DEFAULT_SIGMA2_POINTS, JUMP_PROJECTIONS, default_grid,
                     drift_lattice_axis)
from .sublinear_step import ParamSearchConfig, StepContext
from .testfunctions import TestFunction, make_test_function
from .uncertainty import DEFAULT_A, UncertaintyBox, validate_box


def _build(cls, raw, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError([f"{where}: unknown key {k!r}" for k in unknown])
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ModelConfig:
    lambda_lo: float = 0.15
    lambda_hi: float = 0.25
    gamma_lo: float = -0.5
    gamma_hi: float = 0.5
    sigma2_lo: float = 0.5
    sigma2_hi: float = 1.0
    alpha: float = 1.5
    a1: float = DEFAULT_A
    a2: float = DEFAULT_A
    beta_tail: float = 1.8
    eps0: float = 0.01

    def box(self) -> UncertaintyBox:
        return validate_box({k: getattr(self, k) for k in
                             ("lambda_lo", "lambda_hi", "gamma_lo", "gamma_hi",
                              "sigma2_lo", "sigma2_hi", "alpha")})


@dataclass
class GridConfig:
    bounds: list | None = None  # [[x_lo, x_hi], [y_lo, y_hi], [z_lo, z_hi]]
    points: list | int = 48
    y_drift_lattice: bool = False  # y spacing h d so that y + h gamma lands on nodes

    def build(self, box: UncertaintyBox, n: int | None = None) -> Grid:
        points = self.points if isinstance(self.points, int) else tuple(self.points)
        try:
            if self.bounds is None:
                base = default_grid(box, points) if isinstance(points, int) else \
                    Grid.uniform(default_grid(box, 2).bounds, points)
            else:
                base = Grid.uniform([tuple(b) for b in self.bounds], points)
            if not self.y_drift_lattice:
                return base
            if n is None:
                raise ValueError("y_drift_lattice needs the step count n")
            xs, _, zs = base.axes
            return Grid((xs, drift_lattice_axis(box, 1.0 / n, base.bounds[1]), zs))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scheme.grid: {exc}") from None


@dataclass
class SchemeConfig:
    n: list = field(default_factory=lambda: [8, 16, 32, 64])
    grid: GridConfig = field(default_factory=GridConfig)
    gaussian_order: int = DEFAULT_GAUSS_ORDER
    interior_order: int = DEFAULT_INTERIOR_ORDER
    tail_order: int = DEFAULT_TAIL_ORDER
    truncation_radius: float = DEFAULT_RADIUS
    coarse_grid: int = 9
    refine_tol: float = 1e-8
    sigma2_points: int = DEFAULT_SIGMA2_POINTS
    boundary_tol: float = DEFAULT_BOUNDARY_TOL
    x_lattice: bool = True
    jump_projection: str = "exact"

    def __post_init__(self):
        if isinstance(self.grid, dict):
            self.grid = _build(GridConfig, self.grid, "scheme.grid")
        ns = list(self.n)
        if not ns or any(int(k) != k or k < 1 for k in ns):
            raise ConfigError("scheme.n: positive integers required")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("scheme.n: must be strictly increasing")
        if self.jump_projection not in JUMP_PROJECTIONS:
            raise ConfigError(f"scheme.jump_projection: one of {', '.join(JUMP_PROJECTIONS)}")

    def context(self, model: ModelConfig, box: UncertaintyBox, grid: Grid, n: int) -> StepContext:
        try:
            search = ParamSearchConfig(self.coarse_grid, self.refine_tol)
        except ValueError as exc:
            raise ConfigError(f"scheme: {exc}") from None
        spacing = grid.uniform_spacing(0) if self.x_lattice else None
        return StepContext.build(box, 1.0 / n, a1=model.a1, a2=model.a2, beta_tail=model.beta_tail,
                                 gaussian_order=self.gaussian_order,
                                 interior_order=self.interior_order,
                                 truncation_radius=self.truncation_radius,
                                 tail_order=self.tail_order, search=search, x_spacing=spacing)


@dataclass
class AnalysisConfig:
    delta: float | None = None
    N_max: int = 32
    K_zeta: float | None = None
    reference: float | None = None  # closed-form reference; None means finest n
    s_exponents: list = field(default_factory=lambda: list(range(4, 13)))
    p: float = 0.0
    A: float = 0.0
    z: float = 0.0
    C_alpha_beta: float | None = None


@dataclass
class PhiConfig:
    name: str = "cos_xyz"
    params: dict = field(default_factory=dict)

    def build(self) -> TestFunction:
        try:
            return make_test_function(self.name, **self.params)
        except TypeError as exc:
            raise ConfigError(f"phi.params: {exc}") from None


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json", "binary"])

    def __post_init__(self):
        bad = sorted(set(self.formats) - {"csv", "json", "binary"})
        if bad:
            raise ConfigError([f"output.formats: unknown format {b!r}" for b in bad])


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    phi: PhiConfig = field(default_factory=PhiConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        parts = {"model": ModelConfig, "scheme": SchemeConfig, "analysis": AnalysisConfig,
                 "phi": PhiConfig, "output": OutputConfig}
        unknown = sorted(set(raw) - set(parts))
        if unknown:
            raise ConfigError([f"unknown top-level key {k!r}" for k in unknown])
        cfg = cls(**{k: _build(c, raw.get(k), k) for k, c in parts.items()})
        cfg.model.box()  # validate early
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)
