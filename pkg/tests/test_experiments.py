import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from perclab import experiments as ex
from perclab.clusters import label_clusters
from perclab.experiments import SpecRangeError, SweepSpec
from perclab.lattice import ParameterError, build_lattice, full_configuration

import oracles

P1 = SweepSpec(p=1.0, n_grid=(16, 32), replicas=20, bootstrap=100, margin_min=8, c_margin=0.0)


def test_averaging_radius():
    assert [ex.averaging_radius(n) for n in (1, 15, 16, 80, 81, 255, 256, 10 ** 8)] == [1, 1, 2, 2, 3, 3, 4, 100]


def test_margin_rule():
    s = SweepSpec()
    assert ex.margin_for(s, 16) == 64
    assert ex.margin_for(replace(s, margin_min=0, c_margin=1.0), 1000) == math.ceil(math.log(1002) ** 2)


def test_stream_seed_distinct():
    seeds = {ex.stream_seed(7, t, n) for t in range(7) for n in (16, 32)}
    assert len(seeds) == 14
    assert ex.stream_seed(7, 0, 16) == ex.stream_seed(7, 0, 16)


@pytest.mark.parametrize("kw,key", [
    ({"d": 1}, "d"), ({"p": 0.0}, "p"), ({"x": (1,)}, "x"), ({"x": (0, 0)}, "x"), ({"n_grid": ()}, "n_grid"),
    ({"replicas": 1}, "replicas"), ({"estimands": ("bogus",)}, "estimands"), ({"ci_level": 1.0}, "ci_level"),
])
def test_spec_validation(kw, key):
    with pytest.raises(SpecRangeError) as exc:
        SweepSpec(**kw)
    assert exc.value.key == key


def test_subcritical_warning():
    with pytest.warns(UserWarning, match="supercritical"):
        SweepSpec(p=0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SweepSpec(d=3, p=0.4, x=(1, 0, 0))


def test_sample_slots_matches_configuration():
    from perclab.lattice import sample_configuration
    lat = build_lattice(2, 9)
    assert np.array_equal(ex.sample_slots(lat, 0.6, 11, 3), sample_configuration(lat, 0.6, 11, 3).slot_open)


@pytest.fixture(scope="module")
def p1_report():
    return ex.run_sweep(P1)


def test_p1_variance_zero(p1_report):
    for row in p1_report["variance"].rows:
        n = row[3]
        assert row[6] == n and row[7] == 0 and row[8] == 0 and row[9] == 0 and row[10] == 0
    assert all(h == 1 for h in p1_report["variance_normalized"].column("variance_bound_holds"))


def test_p1_influence_ratio(p1_report):
    # Every geodesic edge has a detour of length 2 around a unit square.
    assert list(p1_report["influence_summary"].column("mean_sum_over_n")) == [4.0, 4.0]


def test_p1_time_constant(p1_report):
    t = p1_report["time_constant"]
    assert list(t.column("mean_ratio")) == [1.0, 1.0] and list(t.column("min_ratio")) == [1.0, 1.0]


def test_p1_diagonal():
    spec = replace(P1, x=(1, 1), n_grid=(16,), replicas=8)
    rep = ex.run_sweep(spec)
    assert rep["variance"].rows[0][6] == 32
    # Any staircase edge can be bypassed by another monotone path.
    assert rep["influence_summary"].column("mean_sum_over_n")[0] == 0
    assert rep["time_constant"].column("mean_ratio")[0] == 2.0


def test_geometric_average_p1():
    lat = ex.sweep_box(P1, 16)
    cfg = full_configuration(lat)
    assert ex.geometric_average_f(cfg, 16, (1, 0)) == 16.0
    assert ex._window_offsets(2, 2).shape == (25, 2)


def test_geometric_average_box_too_small():
    cfg = full_configuration(build_lattice(2, 10))
    with pytest.raises(ParameterError):
        ex.geometric_average_f(cfg, 8, (1, 0), margin=4)


def test_lemma_p1():
    spec = replace(P1, n_grid=(16,), lemma_replicas=3, far_samples=10, lemma_m_grid=(2, 4, 16))
    rep = ex.lemma_estimands(spec)
    k1, k2 = rep["geodesic_moments"].rows
    assert k1[3] == 2.0 and k2[3] == 4.0
    assert rep["off_event_sum"].rows[0][2] == 0 and rep["off_event_sum"].rows[0][5] == 0
    by = {(r[1], r[2]): r[5] for r in rep["box_crossings"].rows}
    for m in (2, 4, 16):
        assert by[(m, "on")] == min(2 * m + 1, 17)
        assert by[(m, "off")] == 0


def _naive_taus(spec, n):
    lat = ex.sweep_box(spec, n)
    seed = ex.stream_seed(spec.seed, 0, n)
    out = []
    for r in range(spec.replicas):
        flags = list(ex.sample_slots(lat, spec.p, seed, r)[lat.slot_of_edge])
        d, _, _ = oracles.tau(tuple(lat.lower), tuple(lat.upper), flags, (0, 0), (n * spec.x[0], n * spec.x[1]))
        out.append(d)
    return out


def test_variance_matches_naive_rerun():
    spec = SweepSpec(p=0.7, n_grid=(6,), replicas=15, margin_min=8, c_margin=0.0, bootstrap=50,
                     estimands=("variance",), max_excluded=1.0)
    rep = ex.run_sweep(spec)
    outs = ex.replica_outcomes(spec, 6, False, False)
    ref = _naive_taus(spec, 6)
    got = [None if math.isnan(o.tau) else int(o.tau) for o in outs]
    assert got == ref
    kept = np.array([o.tau for o in outs if not o.excluded])
    assert rep["variance"].rows[0][7] == pytest.approx(kept.var(ddof=1), rel=1e-12)


def test_influence_sum_matches_oracle_loop():
    spec = SweepSpec(p=0.75, n_grid=(5,), replicas=6, margin_min=6, c_margin=0.0, max_excluded=1.0)
    n = 5
    lat = ex.sweep_box(spec, n)
    seed = ex.stream_seed(spec.seed, 0, n)
    for o in ex.replica_outcomes(spec, n, False, True):
        if o.influence_excluded:
            continue
        flags = list(ex.sample_slots(lat, spec.p, seed, o.replica)[lat.slot_of_edge])
        adj = oracles.adjacency(tuple(lat.lower), tuple(lat.upper), flags)
        _, rx, ry = oracles.tau(tuple(lat.lower), tuple(lat.upper), flags, (0, 0), (n, 0))
        path = oracles.geodesic(adj, rx, ry)
        total = 0
        for a, b in zip(path, path[1:]):
            e = lat.edge_between(a, b)
            re, ell, _ = oracles.influence(tuple(lat.lower), tuple(lat.upper), flags, e, (0, 0), (n, 0))
            if re and ell is not None:
                total += ell * ell
        assert o.influence_sum == total


def test_workers_deterministic():
    spec = SweepSpec(p=0.7, n_grid=(8,), replicas=16, margin_min=8, c_margin=0.0, bootstrap=50,
                     max_excluded=1.0)
    a = ex.run_sweep(spec)
    b = ex.run_sweep(replace(spec, workers=2))
    for name in a.tables:
        assert a[name].rows == b[name].rows or all(
            all((x == y) or (isinstance(x, float) and math.isnan(x) and math.isnan(y)) for x, y in zip(r, s))
            for r, s in zip(a[name].rows, b[name].rows))


def test_abort_on_exclusions():
    spec = SweepSpec(p=0.6, n_grid=(8,), replicas=30, margin_min=0, c_margin=0.0, bootstrap=50)
    with pytest.warns(UserWarning, match="excluded"):
        rep = ex.run_sweep(spec)
    row = rep["variance"].rows[0]
    assert math.isnan(row[7]) and row[12] > 0.01 * 30


def test_tail_sweep_p1():
    spec = SweepSpec(p=1.0, tail_replicas=20, pilot_replicas=5, event_replicas=20, moment_grid=(4,),
                     moment_replicas=5, bootstrap=50, margin_min=8, event_margin=6, reach_grid=(1, 2),
                     hole_grid=(0, 1))
    rep = ex.run_tail_sweep(spec)
    rows = rep["tails"].rows
    dist = [r for r in rows if r[0] == "distance"]
    # beta_hat = 2 so the grid starts at 32 and already sees no hits.
    assert dist[0][1] == 32 and dist[0][2] == 0 and len(dist) == 1
    assert all(r[2] == 0 for r in rows)
    assert rep["moments"].rows[0][4] == 1.0


def test_tail_grid_parity():
    spec = SweepSpec(p=0.7, tail_replicas=200, pilot_replicas=50, event_replicas=10, moment_grid=(4,),
                     moment_replicas=5, bootstrap=50, margin_min=8, tail_margin=8, event_margin=6,
                     reach_grid=(1,), hole_grid=(0,))
    rep = ex.run_tail_sweep(spec, (0, 0), (5, 0))
    ms = [r[1] for r in rep["tails"].rows if r[0] == "distance"]
    assert all(m % 2 == 1 for m in ms) and max(ms) <= 2 * 8 + 5
    counts = [r[2] for r in rep["tails"].rows if r[0] == "distance"]
    assert counts == sorted(counts, reverse=True)
