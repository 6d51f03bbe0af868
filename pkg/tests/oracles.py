"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here touches the numba kernels or the precomputed neighbour
tables: adjacency is rebuilt from coordinates.
"""

from __future__ import annotations

import itertools
from collections import deque


def vertices(lower, upper):
    return list(itertools.product(*[range(a, b + 1) for a, b in zip(lower, upper)]))


def edge_list(lower, upper, periodic=False):
    """Edges ``(v, axis)`` in lexicographic order of ``(v, axis)``; with
    periodic wrap the tail is the vertex on the last layer."""
    d = len(lower)
    out = []
    for v in vertices(lower, upper):
        for k in range(d):
            if v[k] < upper[k]:
                out.append((v, k))
            elif periodic:
                out.append((v, k))
    return out


def head(v, k, lower, upper, periodic=False):
    w = list(v)
    w[k] += 1
    if w[k] > upper[k]:
        assert periodic
        w[k] = lower[k]
    return tuple(w)


def adjacency(lower, upper, open_flags, periodic=False):
    adj = {v: [] for v in vertices(lower, upper)}
    for (v, k), is_open in zip(edge_list(lower, upper, periodic), open_flags):
        if is_open:
            w = head(v, k, lower, upper, periodic)
            adj[v].append(w)
            adj[w].append(v)
    return adj


def components(adj):
    """List of components (sorted vertex lists), ordered by smallest vertex."""
    seen = set()
    comps = []
    for v in sorted(adj):
        if v in seen:
            continue
        comp = []
        q = deque([v])
        seen.add(v)
        while q:
            u = q.popleft()
            comp.append(u)
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    q.append(w)
        comps.append(sorted(comp))
    return comps


def giant(adj):
    comps = components(adj)
    best = max(len(c) for c in comps)
    return set(next(c for c in comps if len(c) == best))


def bfs(adj, source):
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


def distance(adj, x, y):
    return bfs(adj, x).get(y)


def geodesic(adj, x, y):
    """Shortest path x -> y rebuilt from y by stepping to the
    lexicographically smallest neighbour one layer closer to x."""
    dist = bfs(adj, x)
    if y not in dist:
        return None
    path = [y]
    cur = y
    while cur != x:
        cur = min(w for w in adj[cur] if dist.get(w) == dist[cur] - 1)
        path.append(cur)
    return path[::-1]


def sq_dist(a, b, lower=None, upper=None, periodic=False):
    total = 0
    for k, (s, t) in enumerate(zip(a, b)):
        diff = abs(s - t)
        if periodic:
            L = upper[k] - lower[k] + 1
            diff = min(diff, L - diff)
        total += diff * diff
    return total


def regularize(giant_set, x, lower=None, upper=None, periodic=False):
    return min(giant_set, key=lambda v: (sq_dist(v, x, lower, upper, periodic), v))


def tau(lower, upper, flags, x, y):
    """Regularized distance and points, recomputed from scratch."""
    adj = adjacency(lower, upper, flags)
    g = giant(adj)
    rx, ry = regularize(g, x), regularize(g, y)
    return distance(adj, rx, ry), rx, ry


def influence(lower, upper, flags, e, x, y):
    """``(re_holds, ell, delta_tau)`` for edge ``e`` from three independent
    recomputations; ``None`` stands for an infinite distance."""
    base, bx, by = tau(lower, upper, flags, x, y)
    closed = list(flags)
    closed[e] = False
    opened = list(flags)
    opened[e] = True
    d0, cx, cy = tau(lower, upper, closed, x, y)
    d1, _, _ = tau(lower, upper, opened, x, y)
    if flags[e]:
        re_holds = (cx, cy) == (bx, by)
        ell = None if d0 is None else d0 - base
    else:
        re_holds, ell = True, 0
    delta = None if d0 is None or d1 is None else d0 - d1
    return re_holds, ell, delta
