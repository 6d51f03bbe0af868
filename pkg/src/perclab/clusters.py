"""Cluster labeling, the giant-component proxy, regularized points and the
cluster tail events."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from perclab import _kernels
from perclab.lattice import Configuration, LatticeBox, ParameterError


class EmptyGiantError(RuntimeError):
    pass


class BoxTooSmallError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClusterLabels:
    """Component id per vertex (ids ordered by smallest member vertex),
    component sizes and the id of the giant component."""

    lattice: LatticeBox
    label: np.ndarray
    size: np.ndarray
    giant: int

    @cached_property
    def giant_mask(self) -> np.ndarray:
        m = self.label == self.giant
        m.setflags(write=False)
        return m

    @property
    def giant_size(self) -> int:
        return int(self.size[self.giant])

    @property
    def n_components(self) -> int:
        return int(self.size.size)

    def in_giant(self, x: Sequence[int]) -> bool:
        return bool(self.giant_mask[self.lattice.index(x)])

    def same_partition(self, other: "ClusterLabels") -> bool:
        return np.array_equal(self.label, other.label)


def labels_from_slots(lattice: LatticeBox, slot_open: np.ndarray) -> ClusterLabels:
    label, size = _kernels.label_components(lattice.nbr, lattice.slot, slot_open)
    # argmax keeps the first maximum, i.e. the smallest minimal vertex.
    giant = int(np.argmax(size))
    label.setflags(write=False)
    size.setflags(write=False)
    return ClusterLabels(lattice, label, size, giant)


def label_clusters(config: Configuration) -> ClusterLabels:
    """Connected components of the open subgraph."""
    return labels_from_slots(config.lattice, config.slot_open)


@dataclass(frozen=True)
class RegularizedPoint:
    anchor: tuple[int, ...]
    resolved: tuple[int, ...]
    displacement: float

    @property
    def moved(self) -> bool:
        return self.resolved != self.anchor


def _axis_window(lattice: LatticeBox, k: int, center: int, r: int):
    """Box coordinates along axis ``k`` within ``r`` of ``center``, with
    their displacements (minimum image when periodic), sorted by coordinate."""
    lo, L = int(lattice.lower[k]), lattice.shape[k]
    if lattice.periodic:
        rel = np.arange(L)
        disp = (rel - (center - lo)) % L
        disp = np.where(disp > L // 2, disp - L, disp)
        keep = np.abs(disp) <= r
        return rel[keep], disp[keep], bool(keep.all())
    a = max(center - r, lo)
    b = min(center + r, lo + L - 1)
    rel = np.arange(a, b + 1) - lo
    return rel, rel + lo - center, (a == lo and b == lo + L - 1)


def regularize(labels: ClusterLabels, x: Sequence[int]) -> RegularizedPoint:
    """Closest giant vertex to ``x`` in Euclidean distance, ties broken by
    the lexicographically smallest coordinates."""
    return regularize_in(labels.lattice, labels.giant_mask, x)


def regularize_in(lattice: LatticeBox, mask: np.ndarray, x: Sequence[int]) -> RegularizedPoint:
    """Closest vertex of ``mask`` to ``x``.

    Cubes of growing sup-radius ``r`` around ``x`` are scanned; the search
    stops once the best squared distance found is at most ``r**2``, since
    everything outside the cube is farther than ``r``.
    """
    lat = lattice
    x = tuple(int(c) for c in x)
    if mask[lat.index(x)]:
        return RegularizedPoint(x, x, 0.0)
    grid = mask.reshape(lat.shape)
    r = 0
    while True:
        r += 1
        windows = [_axis_window(lat, k, x[k], r) for k in range(lat.d)]
        whole_box = all(w[2] for w in windows)
        sub = grid[np.ix_(*[w[0] for w in windows])]
        if sub.any():
            d2 = np.zeros(sub.shape, dtype=np.int64)
            for k, w in enumerate(windows):
                shape = [1] * lat.d
                shape[k] = -1
                d2 = d2 + w[1].reshape(shape) ** 2
            d2 = np.where(sub, d2, np.iinfo(np.int64).max)
            flat = int(np.argmin(d2))
            best = int(d2.flat[flat])
            if best <= r * r or whole_box:
                pos = np.unravel_index(flat, sub.shape)
                rel = [int(w[0][i]) for w, i in zip(windows, pos)]
                resolved = tuple(int(c + o) for c, o in zip(rel, lat.origin_offset))
                return RegularizedPoint(x, resolved, float(np.sqrt(best)))
        elif whole_box:
            raise EmptyGiantError("giant component is empty")


def _require_box(lattice: LatticeBox, n: int) -> None:
    need_lo = -(n + 1) * np.ones(lattice.d, dtype=np.int64)
    if lattice.periodic or np.any(lattice.lower > need_lo) or np.any(lattice.upper < -need_lo):
        raise BoxTooSmallError(
            f"box {tuple(lattice.lower)}..{tuple(lattice.upper)} does not contain "
            f"Lambda_{n} and its outer boundary in a free box"
        )


def _sup_norm(lattice: LatticeBox) -> np.ndarray:
    return np.abs(lattice.all_coords).max(axis=1)


def outer_boundary_mask(lattice: LatticeBox, n: int) -> np.ndarray:
    """Vertices outside Lambda_n with a neighbour inside it."""
    c = np.abs(lattice.all_coords)
    return (c.max(axis=1) == n + 1) & ((c == n + 1).sum(axis=1) == 1)


def finite_cluster_reach_event(
    config: Configuration, n: int, labels: ClusterLabels | None = None
) -> bool:
    """Origin lies outside the giant but its cluster touches the outer
    boundary of Lambda_n."""
    labels = labels if labels is not None else label_clusters(config)
    return reach_event_from_labels(labels, n)


def reach_event_from_labels(labels: ClusterLabels, n: int) -> bool:
    if n < 1:
        raise ParameterError("n must be >= 1")
    lat = labels.lattice
    _require_box(lat, n)
    lab = labels.label[lat.index((0,) * lat.d)]
    if lab == labels.giant:
        return False
    return bool(np.any(labels.label[outer_boundary_mask(lat, n)] == lab))


def hole_event(config: Configuration, n: int, labels: ClusterLabels | None = None) -> bool:
    """The giant component misses Lambda_n entirely."""
    labels = labels if labels is not None else label_clusters(config)
    return hole_from_labels(labels, n)


def hole_from_labels(labels: ClusterLabels, n: int) -> bool:
    if n < 0:
        raise ParameterError("n must be >= 0")
    lat = labels.lattice
    if lat.periodic or np.any(lat.lower > -n) or np.any(lat.upper < n):
        raise BoxTooSmallError(f"box does not contain Lambda_{n}")
    return not bool(np.any(labels.giant_mask[_sup_norm(lat) <= n]))
