"""Connected components of the one-type graph G(X, r) and the bipartite graph G(X, Y, r).

Edges are found with the cell grid and fed straight into a union-find with
union by size and full path compression; they are never stored as a graph
object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import PointConfig, Role, cross_pairs_within, pairs_within


@dataclass(frozen=True)
class ClusterLabels:
    """Union-find result over a vertex set.

    In bipartite mode the vertex space is ``X`` followed by ``Y``: vertex
    ``i < n_a`` is ``X[i]`` and vertex ``n_a + j`` is ``Y[j]``.
    """

    parent: np.ndarray
    roles: np.ndarray
    edge_radius: float
    bipartite: bool = False

    @property
    def n_vertices(self) -> int:
        return self.parent.shape[0]

    def find(self, i: int) -> int:
        return int(self.parent[i])

    @property
    def labels(self) -> np.ndarray:
        """Component ids ``0..k-1`` numbered by first appearance in index order."""
        _, first, inverse = np.unique(self.parent, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        return rank[inverse]

    def components(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for i, root in enumerate(self.parent):
            groups.setdefault(int(root), []).append(i)
        return list(groups.values())

    def same(self, i: int, j: int) -> bool:
        return self.parent[i] == self.parent[j]


def _require_radius(r):
    if not r > 0:
        raise ValueError(f"edge radius must be positive, got {r}")


def one_type_components(X: PointConfig, r: float) -> ClusterLabels:
    """Components of ``G(X, r)``: points joined when ``|x - x'| <= r``."""
    _require_radius(r)
    pts = X.points if isinstance(X, PointConfig) else np.asarray(X, dtype=np.float64)
    n = len(pts)
    pi, pj = pairs_within(pts, r)
    parent, _ = _kernels.union_edges(n, pi, pj, np.ones(n, dtype=np.bool_))
    role = X.role.value if isinstance(X, PointConfig) else Role.A.value
    return ClusterLabels(parent, np.full(n, role), float(r))


def ab_components(X: PointConfig, Y: PointConfig, r: float) -> ClusterLabels:
    """Components of the bipartite graph ``G(X, Y, r)``; only A-B edges are used."""
    _require_radius(r)
    if X.role is not Role.A or Y.role is not Role.B:
        raise ValueError(f"ab_components needs roles (A, B), got ({X.role.value}, {Y.role.value})")
    n_a, n_b = len(X), len(Y)
    pi, pj = cross_pairs_within(X.points, Y.points, r)
    n = n_a + n_b
    parent, _ = _kernels.union_edges(n, pi, pj + n_a, np.ones(n, dtype=np.bool_))
    roles = np.array([Role.A.value] * n_a + [Role.B.value] * n_b)
    return ClusterLabels(parent, roles, float(r), bipartite=True)


@dataclass(frozen=True)
class CrossingQuery:
    """A crossing asks for one component touching both ``inner`` and ``outer``."""

    inner: object
    outer: object


def stack_vertices(X: PointConfig, Y: PointConfig | None = None) -> np.ndarray:
    """Vertex coordinates in the index order used by :class:`ClusterLabels`."""
    if Y is None:
        return X.points
    return np.vstack([X.points, Y.points]) if len(Y) else X.points


def crosses(labels: ClusterLabels, vertices, query: CrossingQuery, restrict_to_role=None) -> bool:
    """True iff a single component has a vertex in ``query.inner`` and one in ``query.outer``.

    With ``restrict_to_role`` only vertices of that role count as witnesses.
    """
    pts = np.asarray(vertices, dtype=np.float64)
    if pts.shape[0] != labels.n_vertices:
        raise ValueError("vertices do not match the labelled vertex set")
    if pts.shape[0] == 0:
        return False
    active = np.ones(pts.shape[0], dtype=np.bool_)
    if restrict_to_role is not None:
        active = labels.roles == Role(restrict_to_role).value
    inner = np.asarray(query.inner.contains(pts), dtype=np.bool_)
    outer = np.asarray(query.outer.contains(pts), dtype=np.bool_)
    return bool(_kernels.roots_cross(labels.parent, active, inner, outer))
