import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perclab.geodesics import (
    INFINITE, bfs_distances, box_intersection_count, chemical_distance, geodesic, read_path, write_path,
)
from perclab.lattice import Configuration, box_around, build_lattice, force_edge, full_configuration, sample_configuration

import oracles


def _adj(cfg):
    lat = cfg.lattice
    return oracles.adjacency(tuple(lat.lower), tuple(lat.upper), cfg.open_edges, lat.periodic)


def _only(lat, pairs):
    mask = np.zeros(lat.n_edges, dtype=bool)
    for a, b in pairs:
        mask[lat.edge_between(a, b)] = True
    return Configuration.from_open(lat, mask)


def test_infinite_sentinel():
    assert INFINITE > 10 ** 18
    assert not INFINITE < 5
    assert INFINITE == INFINITE and INFINITE != 3
    with pytest.raises(TypeError):
        INFINITE + 1
    with pytest.raises(TypeError):
        INFINITE - INFINITE
    assert max(3, INFINITE) is INFINITE


def test_full_lattice_l1():
    cfg = full_configuration(box_around(2, (-1, -1), (5, 5)))
    assert chemical_distance(cfg, (0, 0), (3, 4)) == 7


def test_two_edge_configuration():
    lat = build_lattice(2, 3)
    cfg = _only(lat, [((0, 0), (1, 0)), ((1, 0), (1, 1))])
    assert chemical_distance(cfg, (0, 0), (1, 1)) == 2
    assert chemical_distance(cfg, (0, 0), (2, 0)) is INFINITE
    g = geodesic(cfg, (0, 0), (2, 0))
    assert g.distance is INFINITE and g.path == () and not g.finite


def test_random_48_matches_bfs_oracle():
    cfg = sample_configuration(build_lattice(2, 48), 0.7, 606)
    adj = _adj(cfg)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = tuple(int(c) for c in rng.integers(0, 48, 2))
        y = tuple(int(c) for c in rng.integers(0, 48, 2))
        want = oracles.distance(adj, x, y)
        got = chemical_distance(cfg, x, y)
        assert got == (INFINITE if want is None else want)


def test_single_source_bfs_matches_oracle():
    cfg = sample_configuration(build_lattice(3, 8, "periodic"), 0.4, 3)
    dist = bfs_distances(cfg, (1, 2, 3))
    ref = oracles.bfs(_adj(cfg), (1, 2, 3))
    lat = cfg.lattice
    for v in range(lat.n_vertices):
        assert dist[v] == ref.get(lat.coords(v), -1)


def test_same_point():
    cfg = sample_configuration(build_lattice(2, 5), 0.5, 1)
    g = geodesic(cfg, (2, 2), (2, 2))
    assert g.distance == 0 and g.path == ()
    assert chemical_distance(cfg, (2, 2), (2, 2)) == 0


def test_straight_geodesic():
    g = geodesic(full_configuration(build_lattice(2, 4)), (0, 0), (2, 0))
    assert g.path == ((0, 0), (1, 0), (2, 0))


def test_four_cycle_tie_break():
    # Both routes (0,0)->(1,0)->(1,1) and (0,0)->(0,1)->(1,1) are open. From
    # (1,1) the predecessors at distance 1 are (0,1) and (1,0); (0,1) is
    # lexicographically smaller.
    lat = build_lattice(2, 2)
    cfg = full_configuration(lat)
    g = geodesic(cfg, (0, 0), (1, 1))
    assert g.path == ((0, 0), (0, 1), (1, 1))
    assert geodesic(cfg, (0, 0), (1, 1)).path == g.path
    assert g.edges(lat) == [lat.edge_between((0, 0), (0, 1)), lat.edge_between((0, 1), (1, 1))]


def test_geodesics_match_oracle_paths():
    for seed in range(20):
        cfg = sample_configuration(build_lattice(2, 16), 0.65, seed)
        adj = _adj(cfg)
        rng = np.random.default_rng(seed)
        for _ in range(10):
            x = tuple(int(c) for c in rng.integers(0, 16, 2))
            y = tuple(int(c) for c in rng.integers(0, 16, 2))
            ref = oracles.geodesic(adj, x, y)
            g = geodesic(cfg, x, y)
            if ref is None:
                assert g.distance is INFINITE
            elif x == y:
                assert g.path == ()
            else:
                assert list(g.path) == ref


def test_path_invariants_and_subpaths():
    cfg = sample_configuration(build_lattice(2, 24), 0.7, 8)
    lat = cfg.lattice
    g = geodesic(cfg, (2, 3), (20, 17))
    assert g.finite
    assert len(g.path) - 1 == g.distance
    for a, b in zip(g.path, g.path[1:]):
        assert cfg.is_open(lat.edge_between(a, b))
    for i in range(0, len(g.path), 5):
        for j in range(i + 1, len(g.path), 7):
            assert chemical_distance(cfg, g.path[i], g.path[j]) == j - i


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([0.55, 0.7]), st.lists(st.integers(0, 12), min_size=6, max_size=6))
def test_parity_triangle(seed, p, c):
    cfg = sample_configuration(build_lattice(2, 13), p, seed)
    x, y, z = (c[0], c[1]), (c[2], c[3]), (c[4], c[5])
    dxy = chemical_distance(cfg, x, y)
    if dxy is not INFINITE:
        assert (dxy - abs(x[0] - y[0]) - abs(x[1] - y[1])) % 2 == 0
        assert dxy >= abs(x[0] - y[0]) + abs(x[1] - y[1])
    dxz, dyz = chemical_distance(cfg, x, z), chemical_distance(cfg, y, z)
    if INFINITE not in (dxy, dyz):
        assert dxz <= dxy + dyz


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 10 ** 6))
def test_opening_never_lengthens(seed, e):
    cfg = sample_configuration(build_lattice(2, 12), 0.6, seed)
    e %= cfg.lattice.n_edges
    before = chemical_distance(cfg, (1, 1), (10, 9))
    after = chemical_distance(force_edge(cfg, e, True), (1, 1), (10, 9))
    assert after <= before


def test_box_intersection_count():
    g = geodesic(full_configuration(box_around(2, (-6, -1), (6, 1))), (-5, 0), (5, 0))
    assert g.distance == 10
    assert box_intersection_count(g, (0, 0), 2) == 5
    assert box_intersection_count(g, (0, 0), 50) == 11
    assert box_intersection_count(g, (0, 5), 2) == 0
    empty = geodesic(full_configuration(build_lattice(2, 3)), (1, 1), (1, 1))
    assert box_intersection_count(empty, (1, 1), 3) == 0


def test_path_dump_roundtrip(tmp_path):
    cfg = sample_configuration(build_lattice(2, 10), 0.7, 4)
    g = geodesic(cfg, (0, 0), (9, 9))
    write_path(g, tmp_path / "p.txt")
    assert read_path(tmp_path / "p.txt") == list(g.path)
