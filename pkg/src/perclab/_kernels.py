"""Numba kernels shared by labeling, distance and surgery code.

The lattice is passed as two ``(V, 2d)`` tables: ``nbr[v, j]`` is the
neighbour of ``v`` in direction ``j`` (order +e1, -e1, ..., +ed, -ed) or -1,
and ``slot[v, j]`` is the edge slot joining them.  ``slot_open`` holds the
open/closed state per slot.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def label_components(nbr, slot, slot_open):
    """Union-find labeling.

    Component ids are assigned in order of each component's smallest vertex,
    so the labeling of a given partition is canonical.
    """
    n_vertices, n_dirs = nbr.shape
    parent = np.arange(n_vertices)
    size = np.ones(n_vertices, dtype=np.int64)
    for v in range(n_vertices):
        for j in range(0, n_dirs, 2):
            w = nbr[v, j]
            if w < 0 or not slot_open[slot[v, j]]:
                continue
            ra = _find(parent, v)
            rb = _find(parent, w)
            if ra == rb:
                continue
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]

    labels = np.empty(n_vertices, dtype=np.int64)
    root_label = np.full(n_vertices, -1, dtype=np.int64)
    n_comp = 0
    for v in range(n_vertices):
        r = _find(parent, v)
        if root_label[r] < 0:
            root_label[r] = n_comp
            n_comp += 1
        labels[v] = root_label[r]
    sizes = np.zeros(n_comp, dtype=np.int64)
    for v in range(n_vertices):
        sizes[labels[v]] += 1
    return labels, sizes


@njit(cache=True)
def bfs_distances(nbr, slot, slot_open, source, target, banned):
    """Single-source BFS. Unreached vertices keep -1.

    If ``target >= 0`` the search stops as soon as the target is discovered;
    every vertex closer than the target is final at that point.  ``banned``
    is a slot treated as closed (-1 for none).
    """
    n_vertices, n_dirs = nbr.shape
    dist = np.full(n_vertices, -1, dtype=np.int64)
    queue = np.empty(n_vertices, dtype=np.int64)
    dist[source] = 0
    if source == target:
        return dist
    head = 0
    tail = 1
    queue[0] = source
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for j in range(n_dirs):
            w = nbr[u, j]
            if w < 0 or dist[w] >= 0:
                continue
            s = slot[u, j]
            if s == banned or not slot_open[s]:
                continue
            dist[w] = du
            if w == target:
                return dist
            queue[tail] = w
            tail += 1
    return dist


@njit(cache=True)
def bfs_pair(nbr, slot, slot_open, source, target, banned, work):
    """Bidirectional BFS distance, -1 when disconnected.

    The side with the smaller frontier is expanded one full layer at a time;
    the best meeting found during a layer expansion is exact.  ``work`` is a
    ``(7, V)`` int64 scratch array whose row 0 holds the generation stamps;
    it never needs clearing between calls.
    """
    if source == target:
        return 0
    n_dirs = nbr.shape[1]
    stamp = work[0]
    dist_a = work[1]
    dist_b = work[2]
    front_a = work[3]
    front_b = work[4]
    nxt = work[5]
    gen = work[6, 0] + 2
    # stamp == gen: seen from the source side; gen + 1: from the target side.
    stamp[source] = gen
    dist_a[source] = 0
    stamp[target] = gen + 1
    dist_b[target] = 0
    front_a[0] = source
    front_b[0] = target
    len_a = 1
    len_b = 1
    work[6, 0] = gen + 1
    while len_a > 0 and len_b > 0:
        expand_a = len_a <= len_b
        if expand_a:
            front, mine, other, n_front, tag = front_a, dist_a, dist_b, len_a, gen
        else:
            front, mine, other, n_front, tag = front_b, dist_b, dist_a, len_b, gen + 1
        other_tag = gen + 1 if expand_a else gen
        best = -1
        n_next = 0
        for i in range(n_front):
            u = front[i]
            du = mine[u] + 1
            for j in range(n_dirs):
                w = nbr[u, j]
                if w < 0:
                    continue
                s = slot[u, j]
                if s == banned or not slot_open[s]:
                    continue
                sw = stamp[w]
                if sw == other_tag:
                    cand = du + other[w]
                    if best < 0 or cand < best:
                        best = cand
                elif sw != tag:
                    stamp[w] = tag
                    mine[w] = du
                    nxt[n_next] = w
                    n_next += 1
        if best >= 0:
            return best
        for i in range(n_next):
            front[i] = nxt[i]
        if expand_a:
            len_a = n_next
        else:
            len_b = n_next
    return -1


@njit(cache=True)
def trace_back(nbr, slot, slot_open, dist, target):
    """Walk from ``target`` to the BFS source, always stepping to the
    smallest-index neighbour one layer closer. Returns the vertex path
    source -> target."""
    n_dirs = nbr.shape[1]
    d = dist[target]
    path = np.empty(d + 1, dtype=np.int64)
    path[d] = target
    cur = target
    for k in range(d, 0, -1):
        best = -1
        for j in range(n_dirs):
            w = nbr[cur, j]
            if w < 0 or dist[w] != k - 1:
                continue
            if not slot_open[slot[cur, j]]:
                continue
            if best < 0 or w < best:
                best = w
        path[k - 1] = best
        cur = best
    return path


@njit(cache=True)
def split_side(nbr, slot, slot_open, u, v, banned, work):
    """Grow BFS balls around ``u`` and ``v`` one vertex at a time, avoiding
    slot ``banned``.

    Returns ``(-1, empty)`` when the balls meet (``u`` and ``v`` stay
    connected), otherwise ``(side, vertices)`` where ``side`` is 0 for the
    ``u`` side and 1 for the ``v`` side and ``vertices`` is the complete
    component of that endpoint.  Cost is about twice the smaller side.
    """
    n_dirs = nbr.shape[1]
    stamp = work[0]
    qa = work[3]
    qb = work[4]
    gen = work[6, 0] + 2
    work[6, 0] = gen + 1
    tag_a = gen
    tag_b = gen + 1
    stamp[u] = tag_a
    stamp[v] = tag_b
    qa[0] = u
    qb[0] = v
    ha = 0
    ta = 1
    hb = 0
    tb = 1
    while True:
        if ha == ta:
            return 0, qa[:ta].copy()
        if hb == tb:
            return 1, qb[:tb].copy()
        for side in range(2):
            if side == 0:
                x = qa[ha]
                ha += 1
                mine = tag_a
                other = tag_b
            else:
                x = qb[hb]
                hb += 1
                mine = tag_b
                other = tag_a
            for j in range(n_dirs):
                w = nbr[x, j]
                if w < 0:
                    continue
                s = slot[x, j]
                if s == banned or not slot_open[s]:
                    continue
                if stamp[w] == other:
                    return -1, qa[:0].copy()
                if stamp[w] != mine:
                    stamp[w] = mine
                    if side == 0:
                        qa[ta] = w
                        ta += 1
                    else:
                        qb[tb] = w
                        tb += 1
            if side == 0 and ha == ta:
                break
