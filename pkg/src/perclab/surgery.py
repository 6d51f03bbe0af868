"""Single-edge surgery: the giant after closing an edge, moved regularized
points, and the change in regularized chemical distance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from perclab import _kernels
from perclab.clusters import ClusterLabels, label_clusters, labels_from_slots, regularize, regularize_in
from perclab.geodesics import INFINITE, GeodesicResult, _workspace, distance_between
from perclab.lattice import Configuration


@dataclass(frozen=True)
class InfluenceRecord:
    edge: int
    on_geodesic: bool
    re_holds: bool
    ell: object
    delta_tau: object
    base_distance: int
    edge_open: bool = True
    flagged: bool = False


def _split(config: Configuration, e: int):
    lat = config.lattice
    u, v = lat.edge_endpoints(e)
    s = int(lat.slot_of_edge[e])
    side, verts = _kernels.split_side(lat.nbr, lat.slot, config.slot_open, u, v, s, _workspace(lat))
    return side, verts


def surgered_giant(config: Configuration, labels: ClusterLabels, e: int) -> ClusterLabels:
    """Labels of ``config`` with edge ``e`` forced closed.

    Only a bridge can change the partition; for a bridge the box is
    relabeled from scratch.
    """
    lat = config.lattice
    lat.check_edge(e)
    if not config.open_edges[e]:
        return labels
    side, _ = _split(config, e)
    if side < 0:
        return labels
    slots = config.slot_open.copy()
    slots[lat.slot_of_edge[e]] = False
    return labels_from_slots(lat, slots)


def closed_giant_mask(config: Configuration, labels: ClusterLabels, e: int) -> tuple[np.ndarray, bool, bool]:
    """Giant mask with ``e`` closed, whether it differs from the base, and
    whether the largest size is tied after the cut.

    When ``e`` is a bridge of the giant the cut-off side is known from the
    split search, so the new giant is the remainder unless the remainder
    fails to beat every other component strictly; then the box is relabeled.
    """
    base = labels.giant_mask
    if not config.open_edges[e]:
        return base, False, False
    side, verts = _split(config, e)
    if side < 0 or labels.label[verts[0]] != labels.giant:
        return base, False, False
    rest = labels.giant_size - verts.size
    others = labels.size.copy()
    others[labels.giant] = 0
    if rest > verts.size and rest > others.max(initial=0):
        mask = base.copy()
        mask[verts] = False
        return mask, True, False
    lat = config.lattice
    slots = config.slot_open.copy()
    slots[lat.slot_of_edge[e]] = False
    new = labels_from_slots(lat, slots)
    top = np.sort(new.size)[-2:]
    return new.giant_mask, True, bool(top.size == 2 and top[0] == top[1])


def _regularized_distance(lat, slots, labels, anchors, banned=-1):
    rx, ry = regularize(labels, anchors[0]), regularize(labels, anchors[1])
    raw = distance_between(lat, slots, lat.index(rx.resolved), lat.index(ry.resolved), banned)
    disp = max(rx.displacement, ry.displacement)
    return (INFINITE if raw < 0 else raw), rx.resolved, ry.resolved, disp


def regularized_tau(config: Configuration, anchors, labels: ClusterLabels | None = None):
    """``(D(x~, y~), x~, y~, max displacement)`` for anchors ``(x, y)``."""
    labels = labels if labels is not None else label_clusters(config)
    return _regularized_distance(config.lattice, config.slot_open, labels, anchors)


def _resolve(lat, mask, anchor, previous):
    # A giant that still contains the old point is a subset of the old giant,
    # so the old point is still the closest one.
    if mask[lat.index(previous)]:
        return previous, float(np.linalg.norm(np.subtract(previous, anchor)))
    rp = regularize_in(lat, mask, anchor)
    return rp.resolved, rp.displacement


def influence(
    config: Configuration,
    labels: ClusterLabels,
    anchors: Sequence[Sequence[int]],
    geo: GeodesicResult,
    e: int,
    max_displacement: float | None = None,
    geodesic_edges: frozenset[int] | None = None,
    with_delta: bool = True,
) -> InfluenceRecord:
    """Surgery outcome for edge ``e``.

    ``geo`` must join the regularized anchors of ``config``.  ``ell`` compares
    the closed-edge distance between re-regularized anchors with the base
    distance; ``delta_tau`` is the regularized distance with ``e`` closed
    minus the one with ``e`` open.  Records whose regularized points sit
    farther than ``max_displacement`` from their anchors, or whose surgered
    giant is tied, are flagged.  With ``with_delta=False`` closed edges skip
    the reopened-configuration solve and report ``delta_tau=None``.
    """
    lat = config.lattice
    lat.check_edge(e)
    x, y = anchors
    base = geo.distance
    if base is INFINITE:
        raise ValueError("base geodesic is infinite")
    x0, y0 = geo.endpoints
    if geodesic_edges is None:
        geodesic_edges = frozenset(geo.edges(lat))
    on_geo = int(e) in geodesic_edges
    s = int(lat.slot_of_edge[e])
    is_open = bool(config.open_edges[e])

    tie = False
    if is_open:
        mask, _, tie = closed_giant_mask(config, labels, e)
        rx, dx = _resolve(lat, mask, x, x0)
        ry, dy = _resolve(lat, mask, y, y0)
        disp = max(dx, dy)
        re_holds = rx == x0 and ry == y0
        if re_holds and not on_geo:
            # The base geodesic avoids e and removal cannot shorten paths.
            raw = base
        else:
            raw = distance_between(lat, config.slot_open, lat.index(rx), lat.index(ry), banned=s)
        ell = INFINITE if raw < 0 else raw - base
        delta = ell
    elif not with_delta:
        re_holds, ell, delta = True, 0, None
        disp = max(float(np.linalg.norm(np.subtract(x0, x))), float(np.linalg.norm(np.subtract(y0, y))))
    else:
        re_holds, ell = True, 0
        slots = config.slot_open.copy()
        slots[s] = True
        d_open, _, _, disp = _regularized_distance(lat, slots, labels_from_slots(lat, slots), anchors)
        base_disp = max(float(np.linalg.norm(np.subtract(x0, x))), float(np.linalg.norm(np.subtract(y0, y))))
        disp = max(disp, base_disp)
        delta = base - d_open
    flagged = tie or ell is INFINITE or (max_displacement is not None and disp > max_displacement)
    return InfluenceRecord(int(e), on_geo, bool(re_holds), ell, delta, int(base), is_open, bool(flagged))


def geodesic_influence_sum(
    config: Configuration,
    anchors: Sequence[Sequence[int]],
    geo: GeodesicResult,
    labels: ClusterLabels | None = None,
    max_displacement: float | None = None,
) -> tuple[int, list[InfluenceRecord]]:
    """Sum of ``ell(e)**2`` over geodesic edges on which the regularized
    points are unchanged, plus the per-edge records. Flagged records do not
    enter the sum."""
    labels = labels if labels is not None else label_clusters(config)
    edges = geo.edges(config.lattice)
    edge_set = frozenset(edges)
    records = [influence(config, labels, anchors, geo, e, max_displacement, edge_set) for e in edges]
    total = sum(r.ell ** 2 for r in records if r.re_holds and not r.flagged)
    return int(total), records


INFLUENCE_COLUMNS = ("n", "replica", "edge_index", "on_geodesic", "re_holds", "ell", "delta_tau")


def influence_rows(n: int, replica: int, records) -> list[tuple]:
    return [
        (n, replica, r.edge, int(r.on_geodesic), int(r.re_holds),
         "inf" if r.ell is INFINITE else r.ell,
         "inf" if r.delta_tau is INFINITE else r.delta_tau)
        for r in records
    ]


def records_consistent(records) -> np.ndarray:
    """Per record: the structural invariants hold (ell >= 0 and even on R_e;
    zero delta for open off-geodesic edges with R_e)."""
    ok = []
    for r in records:
        good = True
        if r.re_holds and r.ell is not INFINITE:
            good &= r.ell >= 0 and r.ell % 2 == 0
        if r.re_holds and r.edge_open and not r.on_geodesic:
            good &= r.delta_tau == 0
        ok.append(good)
    return np.array(ok, dtype=bool)
