"""Points, regions, seeded Poisson sampling and cell-list neighbour search.

All distance predicates are closed (``|x - y| <= r`` counts as a hit) and all
arithmetic is float64 with no epsilon slack.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels

#: Bumped whenever the mapping (master_seed, stream_id) -> random stream changes.
RNG_SCHEME_VERSION = 1

_MASK64 = (1 << 64) - 1

# Maximum query radius, in units of the grid cell size.
MAX_QUERY_MULTIPLE = 3


class Role(str, enum.Enum):
    A = "A"
    B = "B"


# --------------------------------------------------------------------- RNG

class Purpose(enum.IntEnum):
    """Sub-stream tags used inside one Monte Carlo trial."""

    A_POINTS = 0
    B_POINTS = 1
    THINNING = 2
    EXTRA = 3


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(master_seed, stream_id)``.

    The key pair is hashed by :class:`numpy.random.SeedSequence` into the key
    of a counter-based Philox4x64 generator, so streams with different ids are
    statistically independent and never depend on the order in which other
    streams are consumed.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0 or value > _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    @classmethod
    def for_trial(cls, master_seed: int, trial: int, purpose: int = 0) -> RngStream:
        # low byte carries the purpose tag
        return cls(int(master_seed), (int(trial) << 8) | int(purpose))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([int(self.master_seed), int(self.stream_id), RNG_SCHEME_VERSION])
        return np.random.Generator(np.random.Philox(seq))


# ----------------------------------------------------------------- regions

def _as_point(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError(f"point must have d >= 1 finite coordinates, got {x!r}")
    return a


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in _as_point(self.center)))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"ball radius must be positive and finite, got {self.radius}")

    @property
    def d(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        return unit_ball_volume(self.d) * self.radius ** self.d

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        diff = pts - np.array(self.center)
        return np.einsum("ij,ij->i", diff, diff) <= self.radius * self.radius

    def distance(self, a) -> float:
        gap = float(np.linalg.norm(_as_point(a) - np.array(self.center))) - self.radius
        return max(gap, 0.0)

    def enlarged(self, margin: float) -> Ball:
        return Ball(self.center, self.radius + margin)

    def covers_enlargement(self, other, margin: float) -> bool:
        if isinstance(other, (Ball, Annulus)):
            outer = other.radius if isinstance(other, Ball) else other.outer
            gap = np.linalg.norm(np.array(other.center) - np.array(self.center))
            return gap + outer + margin <= self.radius
        if isinstance(other, Box):
            lo, hi = other.bounding_box()
            corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.d, -1).T
            far = np.max(np.linalg.norm(corners - np.array(self.center), axis=1))
            return far + margin <= self.radius
        return False


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lower, upper]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = _as_point(self.lower)
        hi = _as_point(self.upper)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def cube(cls, side: float, d: int, lower: float = 0.0) -> Box:
        return cls((lower,) * d, (lower + side,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    def bounding_box(self):
        return np.array(self.lower), np.array(self.upper)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return np.all((pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=1)

    def distance(self, a) -> float:
        a = _as_point(a)
        gap = np.maximum(np.array(self.lower) - a, 0.0) + np.maximum(a - np.array(self.upper), 0.0)
        return float(np.linalg.norm(gap))

    def enlarged(self, margin: float) -> Box:
        return Box(tuple(v - margin for v in self.lower), tuple(v + margin for v in self.upper))

    def covers_enlargement(self, other, margin: float) -> bool:
        lo, hi = other.bounding_box()
        return bool(np.all(lo - margin >= np.array(self.lower))
                    and np.all(hi + margin <= np.array(self.upper)))


@dataclass(frozen=True)
class Annulus:
    """Closed shell ``inner <= |x - center| <= outer``."""

    center: tuple
    inner: float
    outer: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in _as_point(self.center)))
        if not (0 < self.inner < self.outer and math.isfinite(self.outer)):
            raise ValueError("annulus needs 0 < inner < outer < inf")

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> float:
        return self.outer

    def volume(self) -> float:
        return unit_ball_volume(self.d) * (self.outer ** self.d - self.inner ** self.d)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.outer, c + self.outer

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        diff = pts - np.array(self.center)
        r2 = np.einsum("ij,ij->i", diff, diff)
        return (r2 >= self.inner * self.inner) & (r2 <= self.outer * self.outer)

    def distance(self, a) -> float:
        rho = float(np.linalg.norm(_as_point(a) - np.array(self.center)))
        if rho < self.inner:
            return self.inner - rho
        return max(rho - self.outer, 0.0)

    def enlarged(self, margin: float):
        if margin >= self.inner:
            return Ball(self.center, self.outer + margin)
        return Annulus(self.center, self.inner - margin, self.outer + margin)


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space ``x[axis] <= bound`` (``below``) or ``x[axis] >= bound``."""

    d: int
    axis: int
    bound: float
    below: bool = True

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        col = pts[:, self.axis]
        return col <= self.bound if self.below else col >= self.bound

    def volume(self) -> float:
        return math.inf


@dataclass(frozen=True)
class Complement:
    """Open complement of a region; used as the "outside B_n" side of a crossing."""

    region: object

    @property
    def d(self) -> int:
        return self.region.d

    def contains(self, pts) -> np.ndarray:
        return ~self.region.contains(pts)

    def volume(self) -> float:
        return math.inf


# ------------------------------------------------------------ point configs

@dataclass(frozen=True)
class PointConfig:
    """A finite point configuration with its role and generating window."""

    points: np.ndarray
    role: Role
    region: object
    intensity: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        d = self.region.d
        pts = pts.reshape(-1, d)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if len(pts) and not np.all(self.region.contains(pts)):
            raise ValueError("all points must lie in the generating region")
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise ValueError(f"intensity must be finite and >= 0, got {self.intensity}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "role", Role(self.role))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def _prefix(self, k: int, intensity: float) -> PointConfig:
        # first k points of an already validated sample; skips re-validation
        out = object.__new__(PointConfig)
        for name, value in (("points", self.points[:k]), ("role", self.role),
                            ("region", self.region), ("intensity", intensity)):
            object.__setattr__(out, name, value)
        return out

    def subset(self, mask) -> PointConfig:
        return PointConfig(self.points[np.asarray(mask)], self.role, self.region, self.intensity)

    def scaled(self, s: float) -> PointConfig:
        """Image under ``x -> s x``; intensity becomes ``intensity * s**-d``."""
        return PointConfig(self.points * s, self.role, _scale_region(self.region, s),
                           self.intensity * s ** (-self.d))


def _scale_region(region, s):
    if isinstance(region, Ball):
        return Ball(tuple(c * s for c in region.center), region.radius * s)
    if isinstance(region, Box):
        return Box(tuple(v * s for v in region.lower), tuple(v * s for v in region.upper))
    if isinstance(region, Annulus):
        return Annulus(tuple(c * s for c in region.center), region.inner * s, region.outer * s)
    raise TypeError(f"cannot scale {type(region).__name__}")


def unit_ball_volume(d: int) -> float:
    """Volume ``pi^(d/2) / Gamma(d/2 + 1)`` of the unit ball in ``R^d``."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    # recurrence pi_d = pi_(d-2) * 2 pi / d avoids Gamma rounding in low d
    v = 2.0 if d % 2 else 1.0
    for k in range(2 if d % 2 == 0 else 3, int(d) + 1, 2):
        v *= 2 * math.pi / k
    return v


def poisson_quantile(u: float, mean: float) -> int:
    """Smallest ``k`` with ``P[Poisson(mean) <= k] >= u``.

    Inversion keeps the count nondecreasing in ``mean`` for a fixed ``u``,
    which is what couples samples across intensities.
    """
    if mean <= 0.0:
        return 0
    guess = mean + math.sqrt(mean) * float(special.ndtri(min(max(u, 1e-300), 1 - 1e-16)))
    k = max(int(guess), 0)
    while k > 0 and special.pdtr(k - 1, mean) >= u:
        k -= 1
    while special.pdtr(k, mean) < u:
        k += 1
    return k


def _uniform_in(region, n: int, gen: np.random.Generator) -> np.ndarray:
    lo, hi = region.bounding_box()
    d = len(lo)
    if isinstance(region, Box):
        return lo + (hi - lo) * gen.random((n, d))
    # rejection from the bounding box; accepted points keep generation order so
    # the first k points do not depend on n
    out = np.empty((n, d))
    filled = 0
    while filled < n:
        batch = max(2 * (n - filled), 16)
        cand = lo + (hi - lo) * gen.random((batch, d))
        cand = cand[region.contains(cand)]
        take = min(len(cand), n - filled)
        out[filled:filled + take] = cand[:take]
        filled += take
    return out


def sample_poisson(intensity: float, region, stream: RngStream, role: Role = Role.A) -> PointConfig:
    """Homogeneous Poisson sample of the given intensity on ``region``.

    The count is drawn by inverting the Poisson CDF at the stream's first
    uniform; positions follow from the same stream.  For a fixed stream the
    sample at a lower intensity is a prefix of the sample at a higher one.
    """
    return sample_poisson_nested([intensity], region, stream, role)[0]


def sample_poisson_nested(intensities, region, stream: RngStream, role: Role = Role.A) -> list[PointConfig]:
    """Samples at several intensities from one stream; each equals ``sample_poisson`` on it.

    Because of the inversion coupling the samples are nested prefixes of the
    sample at the largest intensity, so this costs one draw.
    """
    intensities = [float(v) for v in intensities]
    for v in intensities:
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"intensity must be finite and >= 0, got {v}")
    vol = region.volume()
    if not (math.isfinite(vol) and vol > 0):
        raise ValueError("region must have finite positive volume")
    gen = stream.generator()
    u = gen.random()
    counts = [poisson_quantile(u, v * vol) for v in intensities]
    full = PointConfig(_uniform_in(region, max(counts), gen), role, region, max(intensities))
    return [full._prefix(k, v) for k, v in zip(counts, intensities)]


# --------------------------------------------------------------- cell grid

@dataclass(frozen=True)
class CellGrid:
    """Cell-list index over a point set.

    ``order[cell_start[c]:cell_start[c + 1]]`` are the point indices in the
    cell with linear id ``c`` over a dense grid of shape ``dims``.
    """

    cell_size: float
    origin: np.ndarray
    dims: np.ndarray
    order: np.ndarray
    cell_start: np.ndarray
    points: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)

    @property
    def buckets(self) -> dict[tuple, list[int]]:
        out: dict[tuple, list[int]] = {}
        for i in self.order:
            out.setdefault(tuple(int(c) for c in self.cells[i]), []).append(int(i))
        return out

    def offsets(self, radius: float) -> np.ndarray:
        reach = max(1, math.ceil(radius / self.cell_size))
        if reach > MAX_QUERY_MULTIPLE:
            raise ValueError(
                f"query radius {radius} exceeds {MAX_QUERY_MULTIPLE} x cell size {self.cell_size}")
        return _offsets(self.points.shape[1], reach)


_OFFSET_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _offsets(d, reach):
    key = (d, reach)
    if key not in _OFFSET_CACHE:
        _OFFSET_CACHE[key] = _kernels.cell_offsets(d, reach)
    return _OFFSET_CACHE[key]


def build_cell_grid(config, cell_size: float, origin=None) -> CellGrid:
    """Index ``config`` (a :class:`PointConfig` or ``(n, d)`` array) into cells."""
    if not (cell_size > 0 and math.isfinite(cell_size)):
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    pts = config.points if isinstance(config, PointConfig) else np.asarray(config, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    pts = np.ascontiguousarray(pts)
    origin, dims, order, cell_start, cells = _kernels.grid_layout(pts, cell_size, origin)
    return CellGrid(float(cell_size), origin, dims, order, cell_start, pts, cells)


def neighbors_within(grid: CellGrid, query, radius: float) -> np.ndarray:
    """Ascending indices of grid points within closed distance ``radius`` of ``query``."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    offsets = grid.offsets(radius)
    q = _as_point(query)
    if q.shape[0] != grid.points.shape[1]:
        raise ValueError("query dimension does not match the grid")
    if grid.points.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return _kernels.query_ball(grid.points, grid.order, grid.cell_start, grid.dims, grid.origin,
                               grid.cell_size, offsets, q, float(radius))


def pairs_within(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All pairs ``i < j`` at distance ``<= radius`` using a grid with cell size ``radius``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(points) < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    grid = build_cell_grid(points, radius)
    return _kernels.pairs_within(points, grid.order, grid.cell_start, grid.dims, grid.origin,
                                 grid.cell_size, grid.offsets(radius), float(radius))


def cross_pairs_within(a: np.ndarray, b: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All pairs ``(i, j)`` with ``|a_i - b_j| <= radius``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    grid = build_cell_grid(b, radius)
    return _kernels.cross_pairs_within(a, b, grid.order, grid.cell_start, grid.dims, grid.origin,
                                       grid.cell_size, grid.offsets(radius), float(radius))


def distance_to_set(a, target) -> float:
    """Euclidean distance from ``a`` to a point configuration or a region.

    An empty configuration gives ``math.inf``.
    """
    a = _as_point(a)
    if isinstance(target, PointConfig) or isinstance(target, np.ndarray):
        pts = target.points if isinstance(target, PointConfig) else np.atleast_2d(target)
        if len(pts) == 0:
            return math.inf
        return float(np.sqrt(np.min(np.sum((pts - a) ** 2, axis=1))))
    return target.distance(a)
