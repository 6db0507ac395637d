"""Useful/useless marking of A-points and the coupled (p, q)-thinning.

An A-point is *useful* when some B-point lies within ``usefulness_radius``
(default 1/2) of it.  Each A-point carries one uniform; it is retained at
``(p, q)`` iff its uniform is below ``p`` (useful) or ``q`` (useless).  Fixing
the uniforms couples every ``(p, q)`` on the same configuration, so retained
sets grow monotonically in both parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PointConfig, Role, RngStream, cross_pairs_within, unit_ball_volume

USEFULNESS_RADIUS = 0.5


@dataclass(frozen=True)
class ThinningParams:
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class MarkedConfig:
    base: PointConfig
    useful: np.ndarray
    thinning_uniform: np.ndarray
    usefulness_radius: float = USEFULNESS_RADIUS
    # -1 = follow the uniform, 0 = forced out, 1 = forced in
    forced: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.base)
        forced = self.forced if self.forced is not None else np.full(n, -1, dtype=np.int8)
        for name, arr in (("useful", self.useful), ("thinning_uniform", self.thinning_uniform),
                          ("forced", forced)):
            arr = np.array(arr, copy=True)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per point")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.base)

    def retained_mask(self, params: ThinningParams) -> np.ndarray:
        thresh = np.where(self.useful, params.p, params.q)
        keep = self.thinning_uniform < thresh
        keep[self.forced == 1] = True
        keep[self.forced == 0] = False
        return keep


def useful_flags(a_points: np.ndarray, b_points: np.ndarray, radius: float) -> np.ndarray:
    """Per A-point flag: some B-point within closed distance ``radius``."""
    flags = np.zeros(len(a_points), dtype=np.bool_)
    if len(a_points) and len(b_points):
        ia, _ = cross_pairs_within(a_points, b_points, radius)
        flags[ia] = True
    return flags


def classify_useful(A: PointConfig, B: PointConfig, radius: float = USEFULNESS_RADIUS,
                    stream: RngStream | None = None, uniforms=None) -> MarkedConfig:
    """Mark each A-point useful/useless against ``B`` and attach thinning uniforms.

    ``B.region`` must cover ``A.region`` enlarged by ``radius``; otherwise
    points near the edge of ``A.region`` could be misclassified as useless.
    Uniforms come from ``stream`` (one per point, in index order) unless given
    explicitly.
    """
    if A.role is not Role.A or B.role is not Role.B:
        raise ValueError("classify_useful needs an A configuration and a B configuration")
    if not radius > 0:
        raise ValueError(f"usefulness radius must be positive, got {radius}")
    covers = getattr(B.region, "covers_enlargement", None)
    if covers is None or not covers(A.region, radius):
        raise ValueError(
            "B region must contain the radius-enlargement of the A region; "
            "boundary A-points would otherwise be misclassified")
    if uniforms is None:
        if stream is None:
            raise ValueError("need a stream or explicit uniforms")
        uniforms = stream.generator().random(len(A))
    flags = useful_flags(A.points, B.points, radius)
    return MarkedConfig(A, flags, np.asarray(uniforms, dtype=np.float64), float(radius))


def pq_thin(marked: MarkedConfig, params: ThinningParams) -> PointConfig:
    """The retained points of ``marked`` under ``(p, q)``, in original index order."""
    keep = marked.retained_mask(params)
    base = marked.base
    # retained intensity is not a single number when p != q; p = q gives lambda0 * p
    intensity = base.intensity * params.p if params.p == params.q else base.intensity
    return PointConfig(base.points[keep], base.role, base.region, intensity)


def force_state(marked: MarkedConfig, index: int, retained: bool) -> MarkedConfig:
    """Copy of ``marked`` with point ``index`` retained (or removed) for every ``(p, q)``."""
    if not (0 <= index < len(marked)):
        raise ValueError(f"index {index} out of range for {len(marked)} points")
    forced = np.array(marked.forced, copy=True)
    forced[index] = 1 if retained else 0
    return MarkedConfig(marked.base, marked.useful, marked.thinning_uniform,
                        marked.usefulness_radius, forced)


def useful_probability(mu: float, d: int, radius: float = USEFULNESS_RADIUS) -> float:
    """Probability that a fixed site has a B-point within ``radius``: ``1 - exp(-mu pi_d radius^d)``."""
    return 1.0 - math.exp(-mu * unit_ball_volume(d) * radius ** d)
