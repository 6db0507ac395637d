import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.spatial.distance import cdist

from abperc.geometry import (Annulus, Ball, Box, Complement, HalfSpace, PointConfig, Role,
                             RngStream, build_cell_grid, cross_pairs_within, distance_to_set,
                             neighbors_within, pairs_within, poisson_quantile, sample_poisson,
                             sample_poisson_nested, unit_ball_volume)
from oracles import brute_cross_pairs, brute_pairs


def test_unit_ball_volume():
    assert unit_ball_volume(1) == 2
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4.18879020, abs=1e-8)
    with pytest.raises(ValueError):
        unit_ball_volume(0)


def test_regions_are_closed():
    assert Ball((0, 0), 1).contains(np.array([[1.0, 0.0]]))[0]
    assert Box.cube(1, 2).contains(np.array([[1.0, 0.0]]))[0]
    ann = Annulus((0, 0), 1, 2)
    assert ann.contains(np.array([[1.0, 0], [2.0, 0]])).all()
    assert not ann.contains(np.array([[0.5, 0]]))[0]


@pytest.mark.parametrize("bad", [lambda: Ball((0, 0), 0), lambda: Box((0, 0), (1, 0)),
                                 lambda: Annulus((0, 0), 2, 1)])
def test_degenerate_regions_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_halfspace_and_complement():
    h = HalfSpace(2, 0, 1.0)
    assert h.contains(np.array([[1.0, 5.0]]))[0] and not h.contains(np.array([[1.5, 0]]))[0]
    outside = Complement(Ball((0, 0), 2))
    assert not outside.contains(np.array([[2.0, 0]]))[0]
    assert outside.contains(np.array([[2.1, 0]]))[0]


def test_rng_stream_validation_and_determinism():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 1 << 64)
    a = RngStream(5, 3).generator().random(4)
    b = RngStream(5, 3).generator().random(4)
    c = RngStream(5, 4).generator().random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_zero_intensity_is_empty():
    cfg = sample_poisson(0.0, Box.cube(10, 2), RngStream(1))
    assert len(cfg) == 0 and cfg.d == 2


def test_invalid_intensity():
    with pytest.raises(ValueError):
        sample_poisson(float("nan"), Box.cube(1, 2), RngStream(0))
    with pytest.raises(ValueError):
        sample_poisson(-1.0, Box.cube(1, 2), RngStream(0))


def test_poisson_count_mean_box():
    counts = [len(sample_poisson(2.0, Box.cube(10, 2), RngStream(11, t))) for t in range(10_000)]
    assert abs(np.mean(counts) - 200) <= 4 * math.sqrt(200) / 100
    assert np.var(counts) == pytest.approx(200, rel=0.1)


def test_poisson_count_mean_ball_3d():
    mean = 4 * math.pi * 8 / 3
    counts = [len(sample_poisson(1.0, Ball((0, 0, 0), 2), RngStream(3, t))) for t in range(10_000)]
    assert abs(np.mean(counts) - mean) <= 4 * math.sqrt(mean / 10_000)


def test_points_uniform_in_ball():
    pts = np.vstack([sample_poisson(5.0, Ball((0, 0), 1), RngStream(2, t)).points
                     for t in range(200)])
    assert np.all(np.linalg.norm(pts, axis=1) <= 1)
    # radius^2 is uniform on [0, 1] for a uniform point in the disc
    assert stats.kstest(np.sum(pts ** 2, axis=1), "uniform").pvalue > 1e-3


@given(st.floats(1e-3, 1 - 1e-9), st.floats(0.01, 500))
def test_poisson_quantile_matches_scipy(u, mean):
    assert poisson_quantile(u, mean) == int(stats.poisson.ppf(u, mean))


@given(st.lists(st.floats(0, 5), min_size=1, max_size=4), st.integers(0, 2 ** 32))
def test_nested_samples_are_prefixes(lams, seed):
    region = Ball((0.0, 0.0), 3.0)
    nested = sample_poisson_nested(lams, region, RngStream(seed))
    top = max(range(len(lams)), key=lambda k: lams[k])
    for lam, cfg in zip(lams, nested):
        single = sample_poisson(lam, region, RngStream(seed))
        assert np.array_equal(cfg.points, single.points)
        assert np.array_equal(cfg.points, nested[top].points[:len(cfg)])


def test_sampling_independent_of_threads():
    def draw(t):
        return sample_poisson(3.0, Ball((0, 0), 4), RngStream(9, t)).points
    seq = [draw(t) for t in range(64)]
    with ThreadPoolExecutor(8) as ex:
        par = list(ex.map(draw, reversed(range(64))))[::-1]
    assert all(np.array_equal(a, b) for a, b in zip(seq, par))


def test_point_config_invariants():
    box = Box.cube(1, 2)
    with pytest.raises(ValueError):
        PointConfig(np.array([[2.0, 0.0]]), Role.A, box, 1.0)
    with pytest.raises(ValueError):
        PointConfig(np.array([[np.nan, 0.0]]), Role.A, box, 1.0)
    cfg = PointConfig(np.array([[0.5, 0.5]]), "B", box, 1.0)
    assert cfg.role is Role.B
    with pytest.raises(ValueError):
        cfg.points[0, 0] = 0.1


def test_scaled_config():
    cfg = sample_poisson(2.0, Box.cube(3, 2), RngStream(4))
    big = cfg.scaled(2.0)
    assert np.array_equal(big.points, cfg.points * 2)
    assert big.intensity == 0.5 and big.region.upper[0] == 6


def test_cell_grid_small_cases():
    assert build_cell_grid(np.zeros((0, 2)), 1.0).buckets == {}
    g = build_cell_grid(np.array([[0.0, 0.0], [0.3, 0.0]]), 1.0)
    assert g.buckets == {(0, 0): [0, 1]}
    with pytest.raises(ValueError):
        build_cell_grid(np.zeros((1, 2)), 0.0)


def test_cell_grid_partitions_points():
    pts = np.random.default_rng(0).uniform(0, 8, (1000, 2))
    g = build_cell_grid(pts, 1.0)
    seen = sorted(i for idx in g.buckets.values() for i in idx)
    assert seen == list(range(1000))
    for cell, idx in g.buckets.items():
        assert np.all(np.floor((pts[idx] - g.origin) / 1.0).astype(int) == cell)


def test_neighbors_boundary():
    g = build_cell_grid(np.array([[0.5, 0.0]]), 0.5)
    assert neighbors_within(g, (0, 0), 0.5).tolist() == [0]
    g = build_cell_grid(np.array([[0.6, 0.0]]), 0.5)
    assert neighbors_within(g, (0, 0), 0.5).tolist() == []


def test_neighbors_match_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 8, (1000, 2))
    g = build_cell_grid(pts, 1.0)
    for _ in range(100):
        q = rng.uniform(-1, 9, 2)
        rad = rng.uniform(0.01, 3.0)
        expect = np.nonzero(np.linalg.norm(pts - q, axis=1) <= rad)[0]
        assert np.array_equal(neighbors_within(g, q, rad), expect)


def test_neighbors_query_range():
    g = build_cell_grid(np.zeros((3, 2)), 1.0)
    with pytest.raises(ValueError):
        neighbors_within(g, (0, 0), 3.5)
    with pytest.raises(ValueError):
        neighbors_within(g, (0, 0), 0.0)


@given(st.integers(1, 6), st.integers(0, 120), st.floats(0.05, 1.5), st.integers(0, 2 ** 31))
def test_pairs_within_matches_brute(d, n, r, seed):
    pts = np.random.default_rng(seed).uniform(0, 3, (n, d))
    pi, pj = pairs_within(pts, r)
    assert set(zip(pi.tolist(), pj.tolist())) == brute_pairs(pts, r)


@given(st.integers(1, 4), st.integers(0, 80), st.integers(0, 80), st.floats(0.05, 1.0),
       st.integers(0, 2 ** 31))
def test_cross_pairs_match_brute(d, na, nb, r, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 2, (na, d)), rng.uniform(0, 2, (nb, d))
    ia, ib = cross_pairs_within(a, b, r)
    assert set(zip(ia.tolist(), ib.tolist())) == brute_cross_pairs(a, b, r)


def test_distance_to_set():
    box = Box.cube(10, 2)
    assert distance_to_set((0, 0), PointConfig(np.array([[3.0, 4.0]]), Role.A, box, 1)) == 5.0
    assert distance_to_set((1, 1), box) == 0.0
    assert distance_to_set((0, 0), PointConfig(np.zeros((0, 2)), Role.A, box, 1)) == math.inf
    rng = np.random.default_rng(2)
    for _ in range(50):
        pts = rng.uniform(0, 10, (rng.integers(1, 40), 2))
        a = rng.uniform(-2, 12, 2)
        cfg = PointConfig(pts, Role.A, box, 1)
        assert distance_to_set(a, cfg) == pytest.approx(cdist([a], pts).min(), abs=1e-12)
    assert distance_to_set((3, 0), Ball((0, 0), 1)) == pytest.approx(2.0)
