"""Chemical distance and deterministic geodesics on the open subgraph."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import total_ordering
from pathlib import Path
from typing import Sequence

import numpy as np

from perclab import _kernels
from perclab.lattice import Configuration, LatticeBox


@total_ordering
class _Infinite:
    """Distance between disconnected vertices.

    Compares greater than every integer; any arithmetic raises TypeError.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        if other is self or isinstance(other, (int, np.integer)):
            return False
        return NotImplemented

    def __hash__(self):
        return hash("perclab.INFINITE")

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


_scratch = threading.local()


def _workspace(lattice: LatticeBox) -> np.ndarray:
    """Per-thread BFS scratch buffer for ``lattice``."""
    cache = getattr(_scratch, "buffers", None)
    if cache is None:
        cache = _scratch.buffers = {}
    work = cache.get(lattice)
    if work is None:
        if len(cache) > 8:
            cache.clear()
        work = cache[lattice] = np.zeros((7, lattice.n_vertices), dtype=np.int64)
    return work


def _to_distance(raw: int):
    return INFINITE if raw < 0 else int(raw)


def chemical_distance(config: Configuration, x: Sequence[int], y: Sequence[int]):
    """Length of a shortest open path from ``x`` to ``y`` (bidirectional BFS),
    or ``INFINITE``."""
    lat = config.lattice
    raw = _kernels.bfs_pair(lat.nbr, lat.slot, config.slot_open, lat.index(x), lat.index(y), -1, _workspace(lat))
    return _to_distance(raw)


def distance_between(lattice: LatticeBox, slot_open: np.ndarray, u: int, v: int, banned: int = -1) -> int:
    """Raw bidirectional BFS on flat indices; -1 when disconnected."""
    return int(_kernels.bfs_pair(lattice.nbr, lattice.slot, slot_open, u, v, banned, _workspace(lattice)))


def bfs_distances(config: Configuration, source: Sequence[int]) -> np.ndarray:
    """Plain single-source BFS over the whole box; -1 marks unreachable."""
    lat = config.lattice
    return _kernels.bfs_distances(lat.nbr, lat.slot, config.slot_open, lat.index(source), -1, -1)


@dataclass(frozen=True)
class GeodesicResult:
    """``path`` lists vertex coordinates from the first endpoint to the
    second; it is empty when the endpoints coincide or are disconnected."""

    distance: object
    path: tuple[tuple[int, ...], ...]
    endpoints: tuple[tuple[int, ...], tuple[int, ...]]
    vertex_path: np.ndarray | None = None

    @property
    def finite(self) -> bool:
        return self.distance is not INFINITE

    def edges(self, lattice: LatticeBox) -> list[int]:
        """Dense edge indices of the path's edges, in path order."""
        if self.vertex_path is None or len(self.vertex_path) < 2:
            return []
        out = []
        for a, b in zip(self.vertex_path[:-1], self.vertex_path[1:]):
            j = int(np.flatnonzero(lattice.nbr[a] == b)[0])
            out.append(int(lattice.edge_of_slot[lattice.slot[a, j]]))
        return out


def geodesic_from_slots(lattice: LatticeBox, slot_open: np.ndarray, x: Sequence[int], y: Sequence[int]) -> GeodesicResult:
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    sx, sy = lattice.index(x), lattice.index(y)
    if sx == sy:
        return GeodesicResult(0, (), (x, y), np.array([sx]))
    dist = _kernels.bfs_distances(lattice.nbr, lattice.slot, slot_open, sx, sy, -1)
    if dist[sy] < 0:
        return GeodesicResult(INFINITE, (), (x, y), None)
    vpath = _kernels.trace_back(lattice.nbr, lattice.slot, slot_open, dist, sy)
    coords = lattice.all_coords[vpath]
    path = tuple(tuple(int(c) for c in row) for row in coords)
    return GeodesicResult(int(dist[sy]), path, (x, y), vpath)


def geodesic(config: Configuration, x: Sequence[int], y: Sequence[int]) -> GeodesicResult:
    """Shortest open path from ``x`` to ``y``.

    BFS runs from ``x``; the path is rebuilt from ``y`` by repeatedly moving
    to the lexicographically smallest neighbour one step closer to ``x``.
    """
    return geodesic_from_slots(config.lattice, config.slot_open, x, y)


def box_intersection_count(path: GeodesicResult, z: Sequence[int], m: int) -> int:
    """Number of path vertices in ``z + Lambda_m`` (sup-norm ball)."""
    if not path.path:
        return 0
    pts = np.asarray(path.path, dtype=np.int64)
    inside = np.abs(pts - np.asarray(z, dtype=np.int64)).max(axis=1) <= m
    return int(inside.sum())


def write_path(path: GeodesicResult, target: str | Path) -> None:
    lines = [" ".join(map(str, v)) for v in path.path]
    Path(target).write_text("".join(line + "\n" for line in lines))


def read_path(source: str | Path) -> list[tuple[int, ...]]:
    return [tuple(int(c) for c in line.split()) for line in Path(source).read_text().splitlines() if line.strip()]
