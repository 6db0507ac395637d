"""Numerical verification of the two local rerouting constructions near a sphere.

Both constructions take two far-apart points ``x, y`` close to the sphere of
radius ``R`` and move each of them by slightly less than 1 towards the
inside, producing ``x', y'`` that keep a clearance of ``1 + delta`` from the
relevant outside region.  The checks return signed margins per item
(non-negative means satisfied), and :func:`search_constants` scans a grid of
``(R, r, delta)`` for values where every sampled configuration passes.

Distances to sets of the form ``{|z| >= R} minus B_1(c)`` are computed in
closed form (see :func:`dist_to_shell_minus_ball`).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import RngStream

EPSILON = 1e-3  # angular offset of the second construction, fixed
CHUNK = 4096  # candidate pairs drawn per RNG stream in search_constants

GEO1_ITEMS = ("contain_x", "contain_y", "i", "ii", "iii", "iv", "v")
GEO2_ITEMS = ("contain_x", "contain_y", "i", "ii", "iii", "iv", "v", "vi", "vii")


class PreconditionError(ValueError):
    """A lemma hypothesis does not hold for the given input."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        super().__init__(f"hypothesis violated: {hypothesis}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class LemmaConstants:
    """Constants ``(R, r, delta)`` plus optional thresholds ``K`` (geo1), ``K_prime`` (geo2).

    Values produced by :func:`search_constants` are empirical and non-canonical.
    """

    R: float
    r: float
    delta: float
    K: float | None = None
    K_prime: float | None = None

    def __post_init__(self):
        if not self.R > 10:
            raise ValueError(f"R must exceed 10, got {self.R}")
        if float(self.R) != math.floor(self.R):
            raise ValueError(f"R must be an integer, got {self.R}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.delta < self.R / 99:
            raise ValueError("delta must be below R/99")
        for name in ("K", "K_prime"):
            k = getattr(self, name)
            if k is not None and not k > 10:
                raise ValueError(f"{name} must exceed 10, got {k}")

    @property
    def implied_K(self) -> float:
        """Supremum of thresholds ``K`` compatible with these constants."""
        return min(self.R, 1 / self.r, 1 / self.delta)

    def check_usage(self, lemma: str) -> None:
        if lemma == "geo1" and self.K is not None:
            if not (self.R > self.K and self.r < 1 / self.K and self.delta < 1 / self.K):
                raise PreconditionError("R > K and r, delta < 1/K")
        if lemma == "geo2" and self.K_prime is not None:
            if not (self.R > self.K_prime and self.delta < 1 / self.K_prime):
                raise PreconditionError("R > K' and delta < 1/K'")


@dataclass(frozen=True)
class ConstructionResult:
    x_prime: np.ndarray
    y_prime: np.ndarray
    item_margins: dict
    worst_item: str

    @property
    def min_margin(self) -> float:
        return self.item_margins[self.worst_item]

    @property
    def passed(self) -> bool:
        return all(m >= 0 for m in self.item_margins.values())


def _norm(a):
    return np.sqrt(np.einsum("...i,...i->...", a, a))


def _unit_fallback(c):
    """Direction of ``c``, or the first axis where ``c`` vanishes."""
    n = _norm(c)[..., None]
    e0 = np.zeros_like(c)
    e0[..., 0] = 1.0
    return np.where(n > 0, c / np.where(n > 0, n, 1.0), e0)


def dist_to_shell_minus_ball(a, R: float, c):
    """Distance from ``a`` to ``{|z| >= R}`` minus the open unit ball around ``c``.

    The nearest point is either the projection onto ``{|z| >= R}`` (if it
    avoids the ball), the projection onto the complement of the ball (if it
    lies outside radius ``R``), or a point of the intersection sphere
    ``|z| = R, |z - c| = 1``.  The last distance has a closed form in the
    coordinates parallel and orthogonal to ``c``.  Broadcasts over leading axes.
    """
    a = np.asarray(a, dtype=np.float64)
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), a.shape)
    ch = _unit_fallback(c)
    na = _norm(a)
    best = np.full(na.shape, np.inf)

    # projection onto {|z| >= R}; from the origin pick the point farthest from c
    ahat = np.where((na > 0)[..., None], a / np.where(na > 0, na, 1.0)[..., None], -ch)
    p1 = np.where((na >= R)[..., None], a, R * ahat)
    ok = _norm(p1 - c) >= 1.0
    best = np.where(ok, np.minimum(best, _norm(a - p1)), best)

    # projection onto the complement of B_1(c); from c pick the outward direction
    w = a - c
    nw = _norm(w)
    what = np.where((nw > 0)[..., None], w / np.where(nw > 0, nw, 1.0)[..., None], ch)
    p2 = np.where((nw >= 1)[..., None], a, c + what)
    ok = _norm(p2) >= R
    best = np.where(ok, np.minimum(best, _norm(a - p2)), best)

    # intersection sphere of the two boundaries
    nc = _norm(c)
    exists = (nc > 0) & (nc >= R - 1) & (nc <= R + 1)
    safe_nc = np.where(nc > 0, nc, 1.0)
    h = (R * R + nc * nc - 1.0) / (2 * safe_nc)
    rho = np.sqrt(np.maximum(R * R - h * h, 0.0))
    apar = np.einsum("...i,...i->...", a, ch)
    aperp = _norm(a - apar[..., None] * ch)
    d3 = np.hypot(apar - h, aperp - rho)
    best = np.where(exists, np.minimum(best, d3), best)
    return best


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.shape[-1] < 2:
        raise ValueError("x and y must be points of the same dimension d >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("coordinates must be finite")
    if np.any(_norm(x - y) == 0):
        raise ValueError("x and y coincide")
    if np.any(_norm(x) == 0) or np.any(_norm(y) == 0):
        raise ValueError("x and y must be nonzero")
    return x, y


def _geo1_formula(x, y, delta):
    dxy = _norm(x - y)[..., None]
    xp = x - (1 - 3 * delta) * x / _norm(x)[..., None] + 2 * delta * (x - y) / dxy
    yp = y - (1 - 3 * delta) * y / _norm(y)[..., None] + 2 * delta * (y - x) / dxy
    return xp, yp


def geo1_construct(x, y, delta: float):
    """Radial pull-in by ``1 - 3 delta`` plus a ``2 delta`` push away from the partner."""
    x, y = _check_pair(x, y)
    return _geo1_formula(x, y, delta)


def _rotated(e, e2, theta):
    return math.cos(theta) * e - math.sin(theta) * e2


def geo2_construct(x, y, delta: float, R: float = None, r: float = None):
    """Near-parallelogram construction in the plane of ``x`` and ``y``.

    ``u`` and ``v`` make angles ``pi/3 + eps`` and ``pi/3 + 2 eps`` with
    ``y - x`` and point to the side of that line away from ``x``'s radial
    direction (the most negative scalar product with ``x``).  Then
    ``x' = x + (1 - 3 delta) v`` and ``y' = y + (1 - 3 delta) u``.  Pairs with
    ``|x - y| >= 2`` use :func:`geo1_construct` instead.  ``R`` and ``r`` are
    accepted for signature symmetry; the formulas do not depend on them.
    """
    x, y = _check_pair(x, y)
    diff = y - x
    dxy = _norm(diff)
    e = diff / dxy[..., None]
    w = x - np.einsum("...i,...i->...", x, e)[..., None] * e
    nw = _norm(w)
    near = dxy < 2
    if np.any(near & (nw <= 1e-12 * _norm(x))):
        raise ValueError("x, y and the origin are collinear; the construction plane is degenerate")
    e2 = w / np.where(nw > 0, nw, 1.0)[..., None]
    u = _rotated(e, e2, math.pi / 3 + EPSILON)
    v = _rotated(e, e2, math.pi / 3 + 2 * EPSILON)
    xp = x + (1 - 3 * delta) * v
    yp = y + (1 - 3 * delta) * u
    fx, fy = _geo1_formula(x, y, delta)
    xp = np.where(near[..., None], xp, fx)
    yp = np.where(near[..., None], yp, fy)
    return xp, yp


def geo1_margins(x, y, R, delta):
    """Signed margins, one column per entry of ``GEO1_ITEMS``; batched over rows."""
    xp, yp = _geo1_formula(x, y, delta)
    return np.stack([
        (R - 0.5) - _norm(xp),
        (R - 0.5) - _norm(yp),
        (1 - delta) - _norm(x - xp),
        (1 - delta) - _norm(y - yp),
        _norm(xp - yp) - (1 + 2 * delta),
        dist_to_shell_minus_ball(xp, R, x) - (1 + delta),
        dist_to_shell_minus_ball(yp, R, y) - (1 + delta),
    ], axis=-1), xp, yp


def geo2_margins(x, y, R, r, delta):
    """Signed margins, one column per entry of ``GEO2_ITEMS``; batched over rows."""
    xp, yp = geo2_construct(x, y, delta)
    return np.stack([
        (R - 0.5) - _norm(xp),
        (R - 0.5) - _norm(yp),
        (1 - delta) - _norm(x - xp),
        (1 - delta) - _norm(y - yp),
        _norm(xp - yp) - (1 + 2 * delta),
        _norm(xp - y) - (1 + delta),
        _norm(yp - x) - (1 + delta),
        dist_to_shell_minus_ball(yp, R, y) - (1 + delta),
        dist_to_shell_minus_ball(xp, R + r, x) - (1 + delta),
    ], axis=-1), xp, yp


def geo1_hypotheses(x, y, R, r):
    """Boolean mask of pairs satisfying the geo1 hypotheses."""
    nx, ny = _norm(x), _norm(y)
    return (nx > R - r) & (nx <= R + r) & (ny > R - r) & (ny <= R + r) & (_norm(x - y) > 1)


def geo2_hypotheses(x, y, R, r):
    """Boolean mask for geo2; the last condition uses the outside of ``B_{R+r}``."""
    nx, ny = _norm(x), _norm(y)
    return ((nx > R - r) & (nx <= R) & (ny <= R - r) & (_norm(x - y) > 1)
            & (dist_to_shell_minus_ball(y, R + r, x) <= 1))


def _result(margins, xp, yp, items):
    m = {name: float(v) for name, v in zip(items, margins)}
    worst = min(m, key=m.get)
    return ConstructionResult(xp, yp, m, worst)


def geo1_check(x, y, constants: LemmaConstants) -> ConstructionResult:
    """Evaluate the geo1 construction and report margins for every item."""
    x, y = _check_pair(x, y)
    R, r = constants.R, constants.r
    constants.check_usage("geo1")
    for name, p in (("x", x), ("y", y)):
        n = float(_norm(p))
        if not (R - r < n <= R + r):
            raise PreconditionError(f"{name} in B_(R+r) minus B_(R-r)", f"|{name}| = {n}")
    if not float(_norm(x - y)) > 1:
        raise PreconditionError("|x - y| > 1")
    margins, xp, yp = geo1_margins(x, y, R, constants.delta)
    return _result(margins, xp, yp, GEO1_ITEMS)


def geo2_check(x, y, constants: LemmaConstants) -> ConstructionResult:
    """Evaluate the geo2 construction and report margins for every item."""
    x, y = _check_pair(x, y)
    R, r = constants.R, constants.r
    constants.check_usage("geo2")
    nx, ny = float(_norm(x)), float(_norm(y))
    if not (R - r < nx <= R):
        raise PreconditionError("x in B_R minus B_(R-r)", f"|x| = {nx}")
    if not ny <= R - r:
        raise PreconditionError("y in B_(R-r)", f"|y| = {ny}")
    if not float(_norm(x - y)) > 1:
        raise PreconditionError("|x - y| > 1")
    dy = float(dist_to_shell_minus_ball(y, R + r, x))
    if not dy <= 1:
        raise PreconditionError("distance from y to the outside of B_(R+r) minus B_1(x) <= 1",
                                f"distance = {dy}")
    margins, xp, yp = geo2_margins(x, y, R, r, constants.delta)
    return _result(margins, xp, yp, GEO2_ITEMS)


# --- constant search ----------------------------------------------------------

def _radii(gen, n, lo, hi, d):
    u = gen.random(n)
    return (lo ** d + u * (hi ** d - lo ** d)) ** (1.0 / d)


def _directions(gen, n, d):
    g = gen.standard_normal((n, d))
    return g / _norm(g)[:, None]


def _cap_directions(gen, axis, alpha, d):
    """Uniform directions within angle ``alpha`` of each row of ``axis``."""
    n = len(axis)
    phi = np.empty(n)
    todo = np.arange(n)
    top = math.sin(min(alpha, math.pi / 2))
    while len(todo):
        cand = gen.random(len(todo)) * alpha
        keep = gen.random(len(todo)) < (np.sin(cand) / top) ** (d - 2)
        phi[todo[keep]] = cand[keep]
        todo = todo[~keep]
    g = gen.standard_normal((n, d))
    g -= np.einsum("ij,ij->i", g, axis)[:, None] * axis
    g /= _norm(g)[:, None]
    return np.cos(phi)[:, None] * axis + np.sin(phi)[:, None] * g


def _candidate_pairs(lemma, d, R, r, window, stream):
    """One chunk of hypothesis-satisfying pairs with ``|x - y| <= window``."""
    gen = stream.generator()
    if lemma == "geo1":
        x_lo, x_hi, y_lo, y_hi = R - r, R + r, R - r, R + r
    else:
        x_lo, x_hi, y_lo, y_hi = R - r, R, R + r - 1, R - r
    x = _radii(gen, CHUNK, x_lo, x_hi, d)[:, None] * _directions(gen, CHUNK, d)
    alpha = 2 * math.asin(min(1.0, window / (2 * y_lo)))
    y = _radii(gen, CHUNK, y_lo, y_hi, d)[:, None] * _cap_directions(
        gen, x / _norm(x)[:, None], alpha, d)
    ok = _norm(x - y) <= window
    ok &= (geo1_hypotheses if lemma == "geo1" else geo2_hypotheses)(x, y, R, r)
    return x[ok], y[ok]


def sample_pairs(lemma: str, d: int, R: float, r: float, samples: int, seed: int,
                 window: float = 3.0):
    """First ``samples`` pairs of a fixed stream of uniform hypothesis-satisfying pairs.

    Pairs are restricted to ``|x - y| <= window``; a larger ``samples`` extends
    the same sequence, so minima over it are monotone in ``samples``.
    """
    xs, ys, have, chunk = [], [], 0, 0
    while have < samples:
        x, y = _candidate_pairs(lemma, d, R, r, window, RngStream(seed, chunk))
        xs.append(x)
        ys.append(y)
        have += len(x)
        chunk += 1
        if chunk > 1000 and have == 0:
            raise RuntimeError("no pair satisfies the hypotheses; check R, r and window")
    return np.concatenate(xs)[:samples], np.concatenate(ys)[:samples]


@dataclass(frozen=True)
class SearchRow:
    R: float
    r: float
    delta: float
    min_margin: float
    worst_item: str
    samples: int
    worst_x: np.ndarray = field(repr=False)
    worst_y: np.ndarray = field(repr=False)

    @property
    def feasible(self) -> bool:
        return self.min_margin >= 0


@dataclass(frozen=True)
class SearchReport:
    lemma: str
    d: int
    rows: list
    best: LemmaConstants
    best_row: SearchRow

    @property
    def feasible(self) -> bool:
        return self.best_row.feasible


def verify_constants(lemma: str, d: int, constants: LemmaConstants, samples: int, seed: int,
                     window: float = 3.0) -> SearchRow:
    """Worst margin of one construction over ``samples`` random pairs."""
    R, r, delta = constants.R, constants.r, constants.delta
    x, y = sample_pairs(lemma, d, R, r, samples, seed, window)
    if lemma == "geo1":
        margins, _, _ = geo1_margins(x, y, R, delta)
        items = GEO1_ITEMS
    else:
        margins, _, _ = geo2_margins(x, y, R, r, delta)
        items = GEO2_ITEMS
    flat = int(np.argmin(margins))
    row, col = divmod(flat, margins.shape[1])
    return SearchRow(R, r, delta, float(margins[row, col]), items[col], samples,
                     x[row].copy(), y[row].copy())


def _grid_points(grid):
    if isinstance(grid, dict):
        return list(itertools.product(grid["R"], grid["r"], grid["delta"]))
    return [tuple(g) for g in grid]


def search_constants(d: int, lemma: str, grid, samples: int, seed: int, *,
                     window: float = 3.0, workers: int = 1) -> SearchReport:
    """Scan ``grid`` for the ``(R, r, delta)`` maximising the worst sampled margin.

    ``grid`` is a dict with keys ``R``, ``r``, ``delta`` (Cartesian product) or
    an iterable of ``(R, r, delta)`` triples.  Every grid point sees the same
    RNG streams.  The report is returned even when no point is feasible; check
    ``report.feasible``.
    """
    if lemma not in ("geo1", "geo2"):
        raise ValueError(f"lemma must be geo1 or geo2, got {lemma!r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if d < 2:
        raise ValueError("the constructions need d >= 2")
    consts = [LemmaConstants(float(R), float(r), float(delta)) for R, r, delta in _grid_points(grid)]
    if not consts:
        raise ValueError("empty grid")

    def run(c):
        return verify_constants(lemma, d, c, samples, seed, window)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(run, consts))
    else:
        rows = [run(c) for c in consts]
    i = max(range(len(rows)), key=lambda k: rows[k].min_margin)
    return SearchReport(lemma, d, rows, consts[i], rows[i])
