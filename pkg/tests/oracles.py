"""Slow, obviously-correct reference implementations used as test oracles."""

from collections import deque

import numpy as np
from scipy.spatial.distance import cdist

from abperc.geometry import Ball, Purpose, Role, RngStream, sample_poisson


def brute_pairs(pts, r):
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return set()
    dist = cdist(pts, pts)
    i, j = np.nonzero(np.triu(dist <= r, k=1))
    return set(zip(i.tolist(), j.tolist()))


def brute_cross_pairs(a, b, r):
    if len(a) == 0 or len(b) == 0:
        return set()
    i, j = np.nonzero(cdist(a, b) <= r)
    return set(zip(i.tolist(), j.tolist()))


def bfs_labels(n, edges):
    """Component ids numbered by first appearance, found by breadth-first search."""
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    label = [-1] * n
    nxt = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = nxt
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = nxt
                    queue.append(v)
        nxt += 1
    return np.array(label, dtype=np.int64)


def bfs_crosses(n, edges, inner, outer):
    lab = bfs_labels(n, edges)
    return bool(set(lab[np.asarray(inner, bool)]) & set(lab[np.asarray(outer, bool)]))


def naive_theta_indicator(lam0, mu, p, q, n, seed, t, d=2, margin=1.0):
    """Annulus crossing of the thinned graph with explicit edges and BFS, same streams."""
    region = Ball((0.0,) * d, n + margin)
    A = sample_poisson(lam0, region, RngStream.for_trial(seed, t, Purpose.A_POINTS)).points
    B = sample_poisson(mu, region.enlarged(0.5), RngStream.for_trial(seed, t, Purpose.B_POINTS),
                       Role.B).points
    u = RngStream.for_trial(seed, t, Purpose.THINNING).generator().random(len(A))
    if len(A) == 0:
        return False
    useful = (cdist(A, B) <= 0.5).any(axis=1) if len(B) else np.zeros(len(A), bool)
    keep = u < np.where(useful, p, q)
    pts = A[keep]
    norms = np.linalg.norm(pts, axis=1)
    return bfs_crosses(len(pts), brute_pairs(pts, 1.0), norms <= 1.0, norms > n)


def naive_ab_indicator(A, B, r, L):
    """Left-right crossing of the bipartite graph from explicit A-B edges."""
    n_a = len(A)
    if n_a == 0 or len(B) == 0:
        return False
    edges = [(i, n_a + j) for i, j in brute_cross_pairs(A, B, r)]
    verts = np.vstack([A, B])
    return bfs_crosses(len(verts), edges, verts[:, 0] <= r, verts[:, 0] >= L - r)


def scan_dist_2d(a, R, c, m=20_000, rounds=3):
    """Distance to {|z| >= R} minus the open unit ball at c by scanning both boundary circles.

    Each circle is scanned on a uniform angle grid, then rescanned on a finer grid around the
    best admissible angle, so minima sitting at the corners of the set are resolved too.
    """
    a = np.asarray(a, float)
    c = np.asarray(c, float)
    if np.linalg.norm(a) >= R and np.linalg.norm(a - c) >= 1:
        return 0.0

    def circle(centre, radius, keep):
        lo, hi, best = 0.0, 2 * np.pi, np.inf
        for _ in range(rounds):
            t = np.linspace(lo, hi, m)
            pts = centre + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
            ok = keep(pts)
            if not ok.any():
                return best
            dist = np.where(ok, np.linalg.norm(pts - a, axis=1), np.inf)
            k = int(np.argmin(dist))
            best = min(best, dist[k])
            step = (hi - lo) / (m - 1)
            lo, hi = t[k] - 2 * step, t[k] + 2 * step
        return best

    d1 = circle(np.zeros(2), R, lambda p: np.linalg.norm(p - c, axis=1) >= 1)
    d2 = circle(c, 1.0, lambda p: np.linalg.norm(p, axis=1) >= R)
    return float(min(d1, d2))
