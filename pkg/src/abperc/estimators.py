"""Monte Carlo estimators: crossing probabilities, thresholds, Russo derivatives, pivotal ratios.

Every trial ``t`` of an estimate draws its randomness from
``RngStream.for_trial(seed, t, purpose)`` with separate purposes for the
A-process, the B-process and the thinning uniforms.  Two consequences:

* results are bit-identical however trials are scheduled (``workers``);
* the same seed couples runs across parameters.  Poisson counts are drawn by
  CDF inversion and positions are a fixed sequence, so raising an intensity
  only adds points, and raising ``p`` or ``q`` only adds retained points.
  Per-trial crossing indicators are therefore monotone along such chains.

The annulus event for ``theta_n`` is simulated on ``B_{n+1}``.  This is exact,
not an approximation: the first vertex outside ``B_n`` on any path from
``B_1`` lies within distance 1 of ``B_n``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .geometry import (Ball, Box, Purpose, Role, RngStream, cross_pairs_within, pairs_within,
                       sample_poisson, sample_poisson_nested)
from .thinning import USEFULNESS_RADIUS, classify_useful

Z95 = 1.959963984540054
EDGE_LENGTH = 1.0


class BracketError(ValueError):
    """The bracket endpoints do not straddle the target level."""

    def __init__(self, message, low_estimate=None, high_estimate=None):
        super().__init__(message)
        self.low_estimate = low_estimate
        self.high_estimate = high_estimate


class InsufficientDataError(ValueError):
    pass


# ------------------------------------------------------------ result types

def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # clamp so the interval always contains the point estimate despite rounding
    return min(max(centre - half, 0.0), phat), max(min(centre + half, 1.0), phat)


@dataclass(frozen=True)
class CrossingEstimate:
    p_hat: float
    trials: int
    std_err: float
    ci_low: float
    ci_high: float
    seed: int
    successes: int

    @classmethod
    def from_counts(cls, successes: int, trials: int, seed: int = 0) -> CrossingEstimate:
        successes = int(successes)
        phat = successes / trials
        lo, hi = wilson_interval(successes, trials)
        return cls(phat, trials, math.sqrt(phat * (1 - phat) / trials), lo, hi, int(seed), successes)

    def contains(self, level: float) -> bool:
        return self.ci_low <= level <= self.ci_high


@dataclass(frozen=True)
class AnnulusSpec:
    """Annulus crossing geometry: from ``B_1`` to outside ``B_n``, simulated in ``B_{n+margin}``."""

    n: int
    sim_margin: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not self.sim_margin >= 1:
            raise ValueError(f"sim_margin must be >= 1, got {self.sim_margin}")

    @property
    def sim_radius(self) -> float:
        return self.n + self.sim_margin


@dataclass(frozen=True)
class ThresholdEstimate:
    bracket_low: float
    bracket_high: float
    target_prob: float
    spec: dict
    trace: list = field(default_factory=list)
    conclusive: bool = True

    @property
    def estimate(self) -> float:
        return 0.5 * (self.bracket_low + self.bracket_high)

    @property
    def width(self) -> float:
        return self.bracket_high - self.bracket_low


@dataclass(frozen=True)
class DerivativeEstimate:
    d_dp: float
    d_dq: float
    std_err_p: float
    std_err_q: float
    trials: int


@dataclass(frozen=True)
class RatioEstimate:
    x: tuple
    num_hat: float
    den_hat: float
    ratio: float
    trials: int
    std_err: float = math.nan
    degenerate: bool = False


# ---------------------------------------------------------------- helpers

def _map_trials(fn: Callable[[int], object], trials: int, workers: int = 1) -> list:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if workers <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials)))


def _check_pq(p, q, open_interval=False):
    for name, v in (("p", p), ("q", q)):
        ok = 0 < v < 1 if open_interval else 0 <= v <= 1
        if not ok:
            bounds = "(0, 1)" if open_interval else "[0, 1]"
            raise ValueError(f"{name} must lie in {bounds}, got {v}")


def _origin(d):
    return (0.0,) * d


@dataclass
class _AnnulusTrial:
    """One sampled (A, B, uniforms) triple with its full edge list at length 1."""

    points: np.ndarray
    useful: np.ndarray
    uniforms: np.ndarray
    b_points: np.ndarray
    pi: np.ndarray
    pj: np.ndarray
    inner: np.ndarray
    outer: np.ndarray

    def retained(self, p, q):
        return self.uniforms < np.where(self.useful, p, q)

    def crosses(self, active) -> bool:
        return bool(_kernels.masked_crossing(len(self.points), self.pi, self.pj, active,
                                             self.inner, self.outer))


def annulus_trial(lam0, mu, spec: AnnulusSpec, seed, t, d=2,
                  usefulness_radius=USEFULNESS_RADIUS) -> _AnnulusTrial:
    """Sample trial ``t``: A on ``B_{n+margin}``, B on its usefulness-radius enlargement."""
    a_region = Ball(_origin(d), spec.sim_radius)
    A = sample_poisson(lam0, a_region, RngStream.for_trial(seed, t, Purpose.A_POINTS))
    B = sample_poisson(mu, a_region.enlarged(usefulness_radius),
                       RngStream.for_trial(seed, t, Purpose.B_POINTS), Role.B)
    uniforms = RngStream.for_trial(seed, t, Purpose.THINNING).generator().random(len(A))
    marked = classify_useful(A, B, usefulness_radius, uniforms=uniforms)
    pts = A.points
    pi, pj = pairs_within(pts, EDGE_LENGTH)
    r2 = np.einsum("ij,ij->i", pts, pts)
    return _AnnulusTrial(pts, marked.useful, marked.thinning_uniform, B.points, pi, pj,
                         r2 <= 1.0, r2 > float(spec.n) ** 2)


def theta_indicators(lam0, mu, pq_list, spec: AnnulusSpec, seed, t, d=2) -> np.ndarray:
    """Crossing indicators of trial ``t`` at each ``(p, q)`` in ``pq_list`` (shared uniforms)."""
    tr = annulus_trial(lam0, mu, spec, seed, t, d)
    return np.array([tr.crosses(tr.retained(p, q)) for p, q in pq_list], dtype=np.bool_)


# ------------------------------------------------------- crossing estimates

def estimate_theta_n(lam0, mu, p, q, spec: AnnulusSpec, trials, seed, *, d=2,
                     workers=1) -> CrossingEstimate:
    """Estimate ``theta_n(p, q)``: a component of the thinned graph joins ``B_1`` and ``B_n^c``.

    Only retained points are vertices, so the ``B_1`` witness must itself survive
    the thinning.
    """
    if not lam0 > 0 or not mu >= 0:
        raise ValueError("need lambda0 > 0 and mu >= 0")
    _check_pq(p, q)
    hits = _map_trials(lambda t: theta_indicators(lam0, mu, [(p, q)], spec, seed, t, d)[0],
                       trials, workers)
    return CrossingEstimate.from_counts(sum(hits), trials, seed)


def annulus_crossing_indicator(lam, spec: AnnulusSpec, seed, t, d=2) -> bool:
    """Unthinned annulus crossing for ``P_lam`` in trial ``t`` (same A-stream as theta_n)."""
    A = sample_poisson(lam, Ball(_origin(d), spec.sim_radius),
                       RngStream.for_trial(seed, t, Purpose.A_POINTS))
    pts = A.points
    pi, pj = pairs_within(pts, EDGE_LENGTH)
    r2 = np.einsum("ij,ij->i", pts, pts)
    return bool(_kernels.masked_crossing(len(pts), pi, pj, np.ones(len(pts), dtype=np.bool_),
                                         r2 <= 1.0, r2 > float(spec.n) ** 2))


def estimate_annulus_crossing(lam, spec: AnnulusSpec, trials, seed, *, d=2,
                              workers=1) -> CrossingEstimate:
    """Annulus crossing probability of the plain Poisson graph ``G(P_lam, 1)``."""
    hits = _map_trials(lambda t: annulus_crossing_indicator(lam, spec, seed, t, d), trials, workers)
    return CrossingEstimate.from_counts(sum(hits), trials, seed)


def _box_faces(points, L, r):
    x0 = points[:, 0]
    return x0 <= r, x0 >= L - r


def _check_box(L, r):
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if not L > 4 * r:
        raise ValueError(f"box side L={L} must exceed 4r={4 * r}")


def one_type_box_indicator(lam, r, L, seed, t, d=2) -> bool:
    """Left-right crossing of ``G(P_lam, r)`` on ``[0, L]^d`` in trial ``t``.

    Witness faces are the slabs ``x_0 <= r`` and ``x_0 >= L - r``.
    """
    A = sample_poisson(lam, Box.cube(L, d), RngStream.for_trial(seed, t, Purpose.A_POINTS))
    pts = A.points
    pi, pj = pairs_within(pts, r)
    left, right = _box_faces(pts, L, r)
    return bool(_kernels.masked_crossing(len(pts), pi, pj, np.ones(len(pts), dtype=np.bool_),
                                         left, right))


def estimate_one_type_crossing(lam, r, L, trials, seed, *, d=2, workers=1) -> CrossingEstimate:
    """Box crossing probability for the one-type graph ``G(P_lam, r)``."""
    _check_box(L, r)
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    hits = _map_trials(lambda t: one_type_box_indicator(lam, r, L, seed, t, d), trials, workers)
    return CrossingEstimate.from_counts(sum(hits), trials, seed)


def ab_box_sample(lam, mu, r, L, seed, t, d=2):
    """A on ``[0, L]^d`` and B on ``[-r, L + r]^d`` for trial ``t``."""
    box = Box.cube(L, d)
    A = sample_poisson(lam, box, RngStream.for_trial(seed, t, Purpose.A_POINTS))
    B = sample_poisson(mu, box.enlarged(r), RngStream.for_trial(seed, t, Purpose.B_POINTS), Role.B)
    return A, B


def ab_box_indicator(lam, mu, r, L, seed, t, d=2, witness_role=None) -> bool:
    """Left-right crossing of the bipartite graph ``G(A, B, r)`` in trial ``t``."""
    A, B = ab_box_sample(lam, mu, r, L, seed, t, d)
    n_a = len(A)
    if n_a == 0 or len(B) == 0:
        return False
    pi, pj = cross_pairs_within(A.points, B.points, r)
    verts = np.vstack([A.points, B.points])
    n = len(verts)
    parent, _ = _kernels.union_edges(n, pi, pj + n_a, np.ones(n, dtype=np.bool_))
    left, right = _box_faces(verts, L, r)
    active = np.ones(n, dtype=np.bool_)
    if witness_role is not None:
        active[:n_a] = Role(witness_role) is Role.A
        active[n_a:] = Role(witness_role) is Role.B
    return bool(_kernels.roots_cross(parent, active, left, right))


def estimate_ab_crossing(lam, mu, r, L, trials, seed, *, d=2, workers=1,
                         witness_role=None) -> CrossingEstimate:
    """Box crossing probability for the AB graph ``G(P_lam, Q_mu, r)``."""
    _check_box(L, r)
    if not (lam >= 0 and mu >= 0):
        raise ValueError("intensities must be >= 0")
    hits = _map_trials(lambda t: ab_box_indicator(lam, mu, r, L, seed, t, d, witness_role),
                       trials, workers)
    return CrossingEstimate.from_counts(sum(hits), trials, seed)


# ------------------------------------------------------------- bisection

def threshold_bisect(prob: Callable[[float, int], CrossingEstimate], lo: float, hi: float,
                     target: float, tol: float, trials_per_eval: int, *,
                     stop_on_overlap: bool = True, spec: dict | None = None) -> ThresholdEstimate:
    """Bracket the parameter where a monotone crossing probability reaches ``target``.

    ``prob(x, trials)`` must be nondecreasing in ``x``.  The endpoints must be
    separated from the target by their confidence intervals.  Bisection stops
    when the bracket is narrower than ``tol``, or (with ``stop_on_overlap``)
    when both endpoint intervals contain the target, in which case the result
    is flagged inconclusive at this trial budget.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if not tol > 0:
        raise ValueError("tol must be positive")
    est_lo = prob(lo, trials_per_eval)
    est_hi = prob(hi, trials_per_eval)
    trace = [(lo, est_lo), (hi, est_hi)]
    if not (est_lo.ci_high < target < est_hi.ci_low):
        raise BracketError(
            f"bracket [{lo}, {hi}] does not straddle {target}: "
            f"p({lo})={est_lo.p_hat:.4f} [{est_lo.ci_low:.4f}, {est_lo.ci_high:.4f}], "
            f"p({hi})={est_hi.p_hat:.4f} [{est_hi.ci_low:.4f}, {est_hi.ci_high:.4f}]",
            est_lo, est_hi)
    conclusive = True
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        est = prob(mid, trials_per_eval)
        trace.append((mid, est))
        if est.p_hat < target:
            lo, est_lo = mid, est
        else:
            hi, est_hi = mid, est
        if stop_on_overlap and est_lo.contains(target) and est_hi.contains(target):
            conclusive = hi - lo <= tol
            break
    return ThresholdEstimate(lo, hi, target, dict(spec or {}), trace, conclusive)


def threshold_lambda(r, L, target, lo, hi, tol, trials, seed, *, d=2, workers=1,
                     stop_on_overlap=True) -> ThresholdEstimate:
    """Bisect the one-type box-crossing curve in ``lambda`` (coupled across evaluations)."""
    prob = lambda lam, n: estimate_one_type_crossing(lam, r, L, n, seed, d=d, workers=workers)
    return threshold_bisect(prob, lo, hi, target, tol, trials, stop_on_overlap=stop_on_overlap,
                            spec={"kind": "one-type box", "d": d, "r": r, "L": L, "seed": seed})


def threshold_mu(lam, r, L, target, lo, hi, tol, trials, seed, *, d=2, workers=1,
                 stop_on_overlap=True) -> ThresholdEstimate:
    """Bisect the AB box-crossing curve in ``mu`` at fixed ``lambda``."""
    prob = lambda mu, n: estimate_ab_crossing(lam, mu, r, L, n, seed, d=d, workers=workers)
    return threshold_bisect(prob, lo, hi, target, tol, trials, stop_on_overlap=stop_on_overlap,
                            spec={"kind": "AB box", "d": d, "r": r, "L": L, "lambda": lam,
                                  "seed": seed})


# ------------------------------------------------------- Russo derivative

def pivotal_counts(lam0, mu, p, q, spec: AnnulusSpec, seed, t, d=2) -> tuple[int, int]:
    """Numbers of useful and useless A-points pivotal for the annulus crossing in trial ``t``."""
    tr = annulus_trial(lam0, mu, spec, seed, t, d)
    n = len(tr.points)
    if n == 0:
        return 0, 0
    indptr, indices = _kernels.csr_adjacency(n, tr.pi, tr.pj)
    piv = _kernels.pivotal_flags(indptr, indices, tr.retained(p, q), tr.inner, tr.outer)
    n_useful = int(np.count_nonzero(piv & tr.useful))
    return n_useful, int(np.count_nonzero(piv)) - n_useful


def russo_pivotal_estimate(lam0, mu, p, q, spec: AnnulusSpec, trials, seed, *, d=2,
                           workers=1) -> DerivativeEstimate:
    """Estimate the partial derivatives of ``theta_n`` by counting pivotal points.

    The derivative in ``p`` is the mean number of useful pivotal points and the
    derivative in ``q`` the mean number of useless ones.
    """
    _check_pq(p, q, open_interval=True)
    counts = np.array(_map_trials(lambda t: pivotal_counts(lam0, mu, p, q, spec, seed, t, d),
                                  trials, workers), dtype=np.int64).reshape(trials, 2)
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(2)
    return DerivativeEstimate(float(mean[0]), float(mean[1]), float(se[0]), float(se[1]), trials)


def finite_difference_theta(lam0, mu, p, q, h, spec: AnnulusSpec, trials, seed, *, d=2,
                            workers=1) -> DerivativeEstimate:
    """Coupled central differences of ``theta_n`` in ``p`` and in ``q`` with step ``h``."""
    if not h > 0:
        raise ValueError("h must be positive")
    for name, v in (("p", p), ("q", q)):
        if not (0 < v - h and v + h < 1):
            raise ValueError(f"{name} +/- h must stay inside (0, 1); got {name}={v}, h={h}")
    pq_list = [(p + h, q), (p - h, q), (p, q + h), (p, q - h)]
    ind = np.array(_map_trials(lambda t: theta_indicators(lam0, mu, pq_list, spec, seed, t, d),
                               trials, workers), dtype=np.int64).reshape(trials, 4)
    diff_p = (ind[:, 0] - ind[:, 1]) / (2 * h)
    diff_q = (ind[:, 2] - ind[:, 3]) / (2 * h)
    se = (lambda v: float(v.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0)
    return DerivativeEstimate(float(diff_p.mean()), float(diff_q.mean()), se(diff_p), se(diff_q),
                              trials)


# --------------------------------------------------------- pivotal ratio

def ratio_events_sweep(x, lam0, mus, p, q, spec: AnnulusSpec, seed, t, d=2) -> np.ndarray:
    """``(A_x, F_x)`` in trial ``t`` for each ``mu`` in ``mus``, shape ``(len(mus), 2)``.

    ``A_x``: adding the site ``x`` (retained) switches the annulus crossing on.
    ``F_x``: some B-point lies within the usefulness radius of ``x``.  The
    B-samples for the different ``mu`` are the nested prefixes produced by one
    stream, so row ``k`` equals what a single-``mu`` run would produce.
    """
    x = np.asarray(x, dtype=np.float64)
    a_region = Ball(_origin(d), spec.sim_radius)
    A = sample_poisson(lam0, a_region, RngStream.for_trial(seed, t, Purpose.A_POINTS))
    Bs = sample_poisson_nested(mus, a_region.enlarged(USEFULNESS_RADIUS),
                               RngStream.for_trial(seed, t, Purpose.B_POINTS), Role.B)
    uniforms = RngStream.for_trial(seed, t, Purpose.THINNING).generator().random(len(A))
    b_all = max(Bs, key=len).points
    pts = A.points
    n = len(pts)
    # index of the earliest B-point within reach decides usefulness at every mu
    first_b = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    if n and len(b_all):
        ia, jb = cross_pairs_within(pts, b_all, USEFULNESS_RADIUS)
        np.minimum.at(first_b, ia, jb)
    near_x = np.flatnonzero(np.sum((b_all - x) ** 2, axis=1) <= USEFULNESS_RADIUS ** 2)
    first_x = int(near_x[0]) if len(near_x) else np.iinfo(np.int64).max
    pi, pj = pairs_within(pts, EDGE_LENGTH)
    r2 = np.einsum("ij,ij->i", pts, pts)
    inner = r2 <= 1.0
    outer = r2 > float(spec.n) ** 2
    rx2 = float(x @ x)
    out = np.zeros((len(Bs), 2), dtype=np.bool_)
    cache = {}
    for k, B in enumerate(Bs):
        keep = uniforms < np.where(first_b < len(B), p, q)
        key = keep.tobytes()
        if key not in cache:
            if n:
                without_x, with_x = _kernels.added_point_pivotal(
                    pts, keep, inner, outer, x, rx2 <= 1.0, rx2 > float(spec.n) ** 2,
                    EDGE_LENGTH, pi, pj)
                cache[key] = with_x and not without_x
            else:
                cache[key] = False
        out[k, 0] = cache[key]
        out[k, 1] = first_x < len(B)
    return out


def mid_annulus_point(spec: AnnulusSpec, d=2) -> tuple:
    """Default ratio probe: on the first axis at radius ``(n + 1) / 2``."""
    return ((spec.n + 1) / 2,) + (0.0,) * (d - 1)


def _ratio_from_events(x, events, trials) -> RatioEstimate:
    num = int(np.count_nonzero(events[:, 0] & ~events[:, 1]))
    den = int(np.count_nonzero(events[:, 0] & events[:, 1]))
    if den == 0:
        return RatioEstimate(x, num / trials, 0.0, math.inf if num else math.nan, trials,
                             math.nan, True)
    ratio = num / den
    # delta method on the multinomial frequencies
    se = ratio * math.sqrt(1 / num + 1 / den) if num else math.nan
    return RatioEstimate(x, num / trials, den / trials, ratio, trials, se, False)


def estimate_pivotal_ratio_sweep(x, lam0, mus, p, q, spec: AnnulusSpec, trials, seed, *, d=2,
                                 workers=1) -> list[RatioEstimate]:
    """:func:`estimate_pivotal_ratio` at several ``mu`` with one sampling pass per trial."""
    x = tuple(float(v) for v in x)
    if len(x) != d or sum(v * v for v in x) > spec.sim_radius ** 2:
        raise ValueError(f"x must be a {d}-dimensional point in B_(n+1)")
    _check_pq(p, q, open_interval=True)
    mus = [float(m) for m in mus]
    ev = np.array(_map_trials(lambda t: ratio_events_sweep(x, lam0, mus, p, q, spec, seed, t, d),
                              trials, workers), dtype=np.bool_).reshape(trials, len(mus), 2)
    return [_ratio_from_events(x, ev[:, k, :], trials) for k in range(len(mus))]


def estimate_pivotal_ratio(x, lam0, mu, p, q, spec: AnnulusSpec, trials, seed, *, d=2,
                           workers=1) -> RatioEstimate:
    """Estimate ``P[A_x & not F_x] / P[A_x & F_x]`` for a fixed site ``x``.

    A zero denominator is reported through ``degenerate`` rather than raised.
    """
    return estimate_pivotal_ratio_sweep(x, lam0, [mu], p, q, spec, trials, seed, d=d,
                                        workers=workers)[0]


def ratio_decay_fit(results: Sequence[tuple[float, RatioEstimate]]) -> tuple[float, float, float]:
    """Least-squares fit ``log ratio = log c - mu / c'`` over positive finite ratios.

    Returns ``(c_hat, slope, rms_residual)`` with ``c_hat = exp(intercept)``.
    """
    pts = [(float(mu), math.log(est.ratio)) for mu, est in results
           if est.ratio > 0 and math.isfinite(est.ratio)]
    if len(pts) < 3:
        raise InsufficientDataError(f"need at least 3 positive ratios, got {len(pts)}")
    mus, logs = np.array(pts).T
    slope, intercept = np.polyfit(mus, logs, 1)
    resid = logs - (intercept + slope * mus)
    return float(math.exp(intercept)), float(slope), float(np.sqrt(np.mean(resid ** 2)))
