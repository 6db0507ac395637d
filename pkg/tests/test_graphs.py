import numpy as np
import pytest
from hypothesis import given, strategies as st

from abperc.geometry import Ball, Box, Complement, PointConfig, Role, RngStream, sample_poisson
from abperc.graphs import (CrossingQuery, ab_components, crosses, one_type_components,
                           stack_vertices)
from oracles import bfs_crosses, bfs_labels, brute_cross_pairs, brute_pairs

BOX = Box((-1.0, -1.0), (12.0, 12.0))


def cfg(pts, role=Role.A, region=BOX):
    return PointConfig(np.asarray(pts, dtype=float).reshape(-1, region.d), role, region, 1.0)


def test_one_type_small():
    lab = one_type_components(cfg([(0, 0), (0.9, 0), (2.5, 0)]), 1.0)
    assert sorted(map(sorted, lab.components())) == [[0, 1], [2]]
    assert lab.labels.tolist() == [0, 0, 1]


def test_one_type_empty():
    lab = one_type_components(cfg(np.zeros((0, 2))), 1.0)
    assert lab.components() == [] and lab.n_vertices == 0


def test_invalid_radius():
    with pytest.raises(ValueError):
        one_type_components(cfg([(0, 0)]), 0.0)


def test_one_type_matches_bfs():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 10, (300, 2))
    lab = one_type_components(cfg(pts), 0.4)
    assert np.array_equal(lab.labels, bfs_labels(300, brute_pairs(pts, 0.4)))


def test_ab_small_cases():
    lab = ab_components(cfg([(0, 0)]), cfg([(0.4, 0)], Role.B), 0.5)
    assert lab.components() == [[0, 1]]
    lab = ab_components(cfg([(0, 0), (0.8, 0)]), cfg([(0.4, 0)], Role.B), 0.5)
    assert len(lab.components()) == 1
    lab = ab_components(cfg([(0, 0), (0.8, 0)]), cfg(np.zeros((0, 2)), Role.B), 0.5)
    assert sorted(lab.components()) == [[0], [1]]


def test_ab_never_joins_same_type():
    # two A-points at distance 0.1 with no B nearby stay apart
    lab = ab_components(cfg([(0, 0), (0.1, 0)]), cfg([(5, 5)], Role.B), 0.5)
    assert not lab.same(0, 1)


def test_ab_role_check():
    with pytest.raises(ValueError):
        ab_components(cfg([(0, 0)]), cfg([(0.1, 0)]), 0.5)


@given(st.integers(0, 120), st.integers(0, 120), st.floats(0.1, 1.0), st.integers(0, 2 ** 31))
def test_ab_matches_bfs(na, nb, r, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 6, (na, 2)), rng.uniform(0, 6, (nb, 2))
    lab = ab_components(cfg(a), cfg(b, Role.B), r)
    edges = [(i, na + j) for i, j in brute_cross_pairs(a, b, r)]
    assert np.array_equal(lab.labels, bfs_labels(na + nb, edges))


@given(st.integers(0, 2 ** 31))
def test_ab_dominated_by_one_type_at_2r(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 5, (60, 2)), rng.uniform(0, 5, (60, 2))
    ab = ab_components(cfg(a), cfg(b, Role.B), 0.5)
    one = one_type_components(cfg(a), 1.0)
    la, lo = ab.labels[:60], one.labels
    for i in range(60):
        for j in range(i + 1, 60):
            if la[i] == la[j]:
                assert lo[i] == lo[j]


@given(st.integers(0, 2 ** 31), st.floats(0.1, 0.5), st.floats(0.0, 0.5))
def test_monotone_in_radius(seed, r, extra):
    pts = np.random.default_rng(seed).uniform(0, 5, (80, 2))
    fine = one_type_components(cfg(pts), r).labels
    coarse = one_type_components(cfg(pts), r + extra).labels
    # every fine component sits inside one coarse component
    for k in np.unique(fine):
        assert len(np.unique(coarse[fine == k])) == 1


def test_adding_vertex_never_disconnects():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 5, (100, 2))
    before = one_type_components(cfg(pts[:99]), 0.5).labels
    after = one_type_components(cfg(pts), 0.5).labels[:99]
    for k in np.unique(before):
        assert len(np.unique(after[before == k])) == 1


def test_crossing_chain():
    chain = np.array([(0.9 * k, 0.0) for k in range(12)])
    query = CrossingQuery(Ball((0, 0), 1), Complement(Ball((0, 0), 9)))
    lab = one_type_components(cfg(chain), 1.0)
    assert crosses(lab, chain, query)
    gap = np.delete(chain, 5, axis=0)
    lab = one_type_components(cfg(gap), 1.0)
    assert not crosses(lab, gap, query)


def test_crossing_matches_bfs():
    rng = np.random.default_rng(4)
    query = CrossingQuery(Ball((0, 0), 1), Complement(Ball((0, 0), 4)))
    region = Ball((0, 0), 5)
    for t in range(100):
        A = sample_poisson(1.6, region, RngStream(t))
        lab = one_type_components(A, 1.0)
        n = np.linalg.norm(A.points, axis=1)
        expect = bfs_crosses(len(A), brute_pairs(A.points, 1.0), n <= 1, n > 4)
        assert crosses(lab, A.points, query) == expect


def test_crossing_role_restriction():
    A = cfg([(0.0, 0.0), (1.8, 0.0)])
    B = cfg([(0.9, 0.0), (2.7, 0.0)], Role.B)
    lab = ab_components(A, B, 1.0)
    verts = stack_vertices(A, B)
    query = CrossingQuery(HalfSpaceLike(0.1, below=True), HalfSpaceLike(2.5, below=False))
    assert crosses(lab, verts, query)
    # with A-only witnesses the right end (a B-point) no longer counts
    assert not crosses(lab, verts, query, restrict_to_role=Role.A)


class HalfSpaceLike:
    def __init__(self, bound, below):
        self.bound, self.below = bound, below

    def contains(self, pts):
        x = np.asarray(pts)[:, 0]
        return x <= self.bound if self.below else x >= self.bound
