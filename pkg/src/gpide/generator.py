"""The nonlocal generator G(p, A, phi(z + .)) and the one-step consistency residual."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BetaOutOfRange
from .quadrature import (DEFAULT_CUT, DEFAULT_INTERIOR_ORDER, DEFAULT_SPLIT, Smooth1D,
                         far_average, scaled_law_expectation, stable_generator_integral)
from .uncertainty import DEFAULT_A, UncertaintyBox, WkLaw, law_for_corner


@dataclass(frozen=True)
class GeneratorInput:
    p: float
    A: float
    phi: Smooth1D
    z: float = 0.0

    def __post_init__(self):
        norms = (self.phi.d1_sup, self.phi.d2_sup, self.phi.d3_sup)
        if not all(np.isfinite(n) and n >= 0 for n in norms):
            raise ValueError("derivative bounds must be finite and nonnegative")


def drift_diffusion_sup(p: float, A: float, box: UncertaintyBox) -> float:
    """max over q of p q plus max over sigma2 of A sigma2 / 2 (both linear, so endpoints)."""
    return max(box.gamma_hi * p, box.gamma_lo * p) + 0.5 * max(box.sigma2_hi * A, box.sigma2_lo * A)


def eval_G(inp: GeneratorInput, box: UncertaintyBox, split: float = DEFAULT_SPLIT,
           cut: float = DEFAULT_CUT) -> float:
    """G over the product set: jump, drift and diffusion suprema separate."""
    jumps = max(stable_generator_integral(k, inp.phi, inp.z, box.alpha, split, cut).value
                for k in box.corners)
    return jumps + drift_diffusion_sup(inp.p, inp.A, box)


def q0_from_beta(alpha: float, beta_tail: float, eps0: float = 0.01) -> float:
    if beta_tail <= alpha:
        raise BetaOutOfRange(f"beta_tail={beta_tail} must exceed alpha={alpha}")
    if beta_tail == 2.0:
        return (2.0 - alpha) / alpha - eps0
    return min((beta_tail - alpha) / alpha, (2.0 - alpha) / alpha)


def lhat_bound(phi_norms: tuple[float, float], s: float, q0: float, C_alpha_beta: float,
               alpha: float) -> float:
    d1, d2 = phi_norms
    return C_alpha_beta * ((d1 + d2) * s**q0 + d2 * s ** ((2.0 - alpha) / alpha))


def corner_laws(box: UncertaintyBox, a1: float = DEFAULT_A, a2: float = DEFAULT_A,
                beta_tail: float = 1.8) -> tuple[WkLaw, ...]:
    return tuple(law_for_corner(box, c, a1, a2, beta_tail) for c in box.corners)


def jump_increment(law: WkLaw, phi: Smooth1D, z: float, s: float,
                   interior_order: int = DEFAULT_INTERIOR_ORDER, cut: float = DEFAULT_CUT) -> float:
    """E[phi(z + s^(1/alpha) W) - phi(z)] under one W_k law."""
    c = s ** (1.0 / law.alpha)
    f0 = float(phi.f(z))
    far = tuple(far_average(lambda y, side=side: phi.f(z + side * y) - f0, max(cut, 2.0 * c))
                for side in (-1, 1))
    value, _ = scaled_law_expectation(law, lambda y: phi.f(z + y) - f0, c, g_far=far,
                                      g_bound=2.0 * phi.sup, interior_order=interior_order, cut=cut)
    return value


def consistency_residual(phi: Smooth1D, z: float, s: float, p: float, A: float,
                         box: UncertaintyBox, laws: Sequence[WkLaw] | None = None,
                         interior_order: int = DEFAULT_INTERIOR_ORDER) -> float:
    """(1/s) |E^[phi(z + s^(1/alpha) Z) - phi(z) + s p Y + A s X^2 / 2] - s G(p, A, phi(z + .))|.

    The sublinear expectation splits over the product set: the jump part is a
    max over the k-corners (affine law), the rest is linear in q and sigma2.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    laws = tuple(laws) if laws is not None else corner_laws(box)
    jump = max(jump_increment(law, phi, z, s, interior_order) for law in laws)
    e_hat = jump + s * drift_diffusion_sup(p, A, box)
    g = eval_G(GeneratorInput(p, A, phi, z), box)
    return abs(e_hat - s * g) / s


def fit_c_alpha_beta(residuals: Sequence[float], s_values: Sequence[float],
                     phi_norms: tuple[float, float], q0: float, alpha: float) -> float:
    """Smallest C with residual(s) <= lhat_bound(s; C) on the sweep."""
    ratios = [r / lhat_bound(phi_norms, s, q0, 1.0, alpha) for r, s in zip(residuals, s_values)]
    return float(max(ratios))
