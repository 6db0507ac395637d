"""Closed-form threshold curves: scaling, volume fractions and the mu_c bound envelopes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import unit_ball_volume

# Published simulation estimates of the critical covered volume fraction of
# the Boolean model with unit-radius balls, 1 - exp(-pi_d lambda_c(2)).
CRITICAL_VOLUME_FRACTION = {2: 0.67635, 3: 0.28957}


@dataclass(frozen=True)
class BoundCurveParams:
    c: float
    c_prime: float
    lambda_c_ref: float
    r: float
    d: int

    def __post_init__(self):
        for name in ("c", "c_prime", "lambda_c_ref", "r", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def lambda_c_scaled(lambda_c_2: float, r: float, d: int) -> float:
    """``lambda_c(2r) = r**-d * lambda_c(2)``."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return lambda_c_2 * r ** (-d)


def volume_fraction_to_intensity(phi: float, d: int, radius: float = 1.0) -> float:
    """Intensity whose Boolean model with balls of ``radius`` covers fraction ``phi``."""
    if not 0 < phi < 1:
        raise ValueError(f"volume fraction must lie in (0, 1), got {phi}")
    if not radius > 0:
        raise ValueError("radius must be positive")
    return -math.log1p(-phi) / (unit_ball_volume(d) * radius ** d)


def intensity_to_volume_fraction(lam: float, d: int, radius: float = 1.0) -> float:
    return -math.expm1(-lam * unit_ball_volume(d) * radius ** d)


def critical_intensity(d: int, edge_length: float = 1.0) -> float:
    """Reference ``lambda_c(edge_length)`` derived from the published volume fraction."""
    lam2 = volume_fraction_to_intensity(CRITICAL_VOLUME_FRACTION[d], d, 1.0)
    return lambda_c_scaled(lam2, edge_length / 2, d)


def upper_bound_constant(lambda_c_2r: float, r: float, d: int) -> float:
    """Constant ``(4 lambda_c(2r)^2 / r)^d d^(3d) (d+1) pi_d`` of the limsup upper envelope."""
    if not (lambda_c_2r > 0 and r > 0 and d >= 1):
        raise ValueError("lambda_c_2r, r and d must be positive")
    return (4 * lambda_c_2r ** 2 / r) ** d * d ** (3 * d) * (d + 1) * unit_ball_volume(d)


def upper_envelope(delta: float, constant: float, d: int) -> float:
    """``constant * delta**(-2d) * |log delta|``: asymptotic upper envelope of ``mu_c``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return constant * delta ** (-2 * d) * abs(math.log(delta))


def lower_bound_curve(params, delta: float) -> float:
    """``c log(c / delta)``, clipped to 0 where the bound is vacuous (``c / delta <= 1``).

    ``params`` is a :class:`BoundCurveParams` or the constant ``c`` itself.
    """
    c = params.c if isinstance(params, BoundCurveParams) else float(params)
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    gap = math.log(c) - math.log(delta)  # avoids overflow of c / delta for tiny delta
    return c * gap if gap > 0 else 0.0


def delta_of_mu(c_prime: float, mu: float) -> float:
    """``c' exp(-mu / c')``; inverse of :func:`lower_bound_curve` with ``c = c'``."""
    if not c_prime > 0:
        raise ValueError("c_prime must be positive")
    if not mu >= 0:
        raise ValueError("mu must be >= 0")
    return c_prime * math.exp(-mu / c_prime)
