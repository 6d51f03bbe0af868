"""Monte Carlo drivers: variance and influence sweeps over box scales, tail
decay fits, the geometric average, time-constant ratios and the auxiliary
surgery estimands.

Every replica is a pure function of ``(spec, stream, replica_id)``; seeds for
each stream come from ``numpy.random.SeedSequence`` keyed by the master seed,
so results do not depend on worker count or evaluation order.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from perclab import stats
from perclab.clusters import EmptyGiantError, hole_from_labels, labels_from_slots, reach_event_from_labels, regularize
from perclab.geodesics import INFINITE, box_intersection_count, distance_between, geodesic_from_slots
from perclab.lattice import Configuration, LatticeBox, ParameterError, _philox_uniforms, box_around
from perclab.surgery import INFLUENCE_COLUMNS, influence, influence_rows

log = logging.getLogger(__name__)

ESTIMANDS = ("variance", "geometric", "influence", "time_constant")

# Stream tags for seed derivation.
_MAIN, _TAIL, _PILOT, _EVENTS, _MOMENTS, _LEMMA, _FAR = range(7)


@dataclass(frozen=True)
class SweepSpec:
    """Resolved experiment configuration.  All fields have defaults."""

    d: int = 2
    p: float = 0.7
    x: tuple[int, ...] = (1, 0)
    n_grid: tuple[int, ...] = (16, 32, 64, 128)
    replicas: int = 2000
    seed: int = 7
    margin_min: int = 64
    c_margin: float = 4.0
    estimands: tuple[str, ...] = ESTIMANDS
    bootstrap: int = 1000
    ci_level: float = 0.95
    workers: int = 1
    max_excluded: float = 0.01
    tail_separation: int = 16
    tail_margin: int = 24
    tail_replicas: int = 1_000_000
    pilot_replicas: int = 2000
    event_replicas: int = 1_000_000
    event_margin: int = 16
    reach_grid: tuple[int, ...] = (1, 2, 3, 4)
    hole_grid: tuple[int, ...] = (0, 1, 2)
    moment_grid: tuple[int, ...] = (8, 16, 32, 64)
    moment_replicas: int = 2000
    min_count: int = 5
    lemma_replicas: int = 200
    lemma_m_grid: tuple[int, ...] = (8, 16, 32)
    far_samples: int = 200

    def __post_init__(self):
        for name in ("x", "n_grid", "estimands", "reach_grid", "hole_grid", "moment_grid", "lemma_m_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        _check(self.d >= 2, "d", "must be >= 2")
        _check(0.0 < self.p <= 1.0, "p", "must lie in (0, 1]")
        _check(len(self.x) == self.d, "x", f"must have d={self.d} entries")
        _check(any(self.x), "x", "must be nonzero")
        _check(len(self.n_grid) > 0 and min(self.n_grid) >= 1, "n_grid", "entries must be >= 1")
        for name in ("replicas", "pilot_replicas", "moment_replicas", "lemma_replicas"):
            _check(getattr(self, name) >= 2, name, "must be >= 2")
        for name in ("tail_replicas", "event_replicas", "bootstrap", "workers", "min_count", "tail_separation"):
            _check(getattr(self, name) >= 1, name, "must be >= 1")
        for name in ("margin_min", "tail_margin", "event_margin", "far_samples"):
            _check(getattr(self, name) >= 0, name, "must be >= 0")
        _check(self.c_margin >= 0, "c_margin", "must be >= 0")
        _check(0.0 < self.ci_level < 1.0, "ci_level", "must lie in (0, 1)")
        _check(0.0 <= self.max_excluded <= 1.0, "max_excluded", "must lie in [0, 1]")
        _check(min(self.reach_grid, default=1) >= 1, "reach_grid", "entries must be >= 1")
        _check(min(self.hole_grid, default=0) >= 0, "hole_grid", "entries must be >= 0")
        _check(max(self.reach_grid + self.hole_grid, default=0) < self.event_margin, "event_margin",
               "must exceed every event radius")
        _check(min(self.moment_grid, default=1) >= 1, "moment_grid", "entries must be >= 1")
        _check(min(self.lemma_m_grid, default=1) >= 1, "lemma_m_grid", "entries must be >= 1")
        bad = set(self.estimands) - set(ESTIMANDS)
        _check(not bad, "estimands", f"unknown entries {sorted(bad)}")
        if self.d == 2 and self.p <= 0.5:
            warnings.warn(f"p={self.p} is not supercritical in d=2 (p_c = 1/2)", stacklevel=3)


class SpecRangeError(ParameterError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _check(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise SpecRangeError(key, message)


SPEC_FIELDS = tuple(f.name for f in fields(SweepSpec))


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])


@dataclass
class ExperimentReport:
    """Named CSV tables plus the spec that produced them."""

    spec: SweepSpec
    command: str
    tables: dict[str, Table] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Table:
        return self.tables[name]

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        self.tables.update(other.tables)
        return self


# -- seeds, boxes and sampling -------------------------------------------


def stream_seed(master: int, *tags: int) -> int:
    """64-bit Philox seed for a tagged stream of the master seed."""
    a, b = np.random.SeedSequence(int(master), spawn_key=tuple(int(t) for t in tags)).generate_state(2, np.uint32)
    return int(a) | (int(b) << 32)


def averaging_radius(n: int) -> int:
    """Largest integer ``m`` with ``m**4 <= n``."""
    m = int(round(n ** 0.25))
    while m ** 4 > n:
        m -= 1
    while (m + 1) ** 4 <= n:
        m += 1
    return m


def margin_for(spec: SweepSpec, n: int) -> int:
    return max(spec.margin_min, math.ceil(spec.c_margin * math.log(n + 2) ** 2))


def sweep_box(spec: SweepSpec, n: int) -> LatticeBox:
    """Free box holding ``0``, ``n x`` and their averaging windows with the
    margin on every side."""
    pad = margin_for(spec, n) + averaging_radius(n)
    far = np.asarray(spec.x, dtype=np.int64) * n
    lo = np.minimum(far, 0) - pad
    hi = np.maximum(far, 0) + pad
    return box_around(spec.d, lo, hi)


def sample_slots(lattice: LatticeBox, p: float, seed: int, replica: int) -> np.ndarray:
    """Slot states identical to ``sample_configuration(...).slot_open``."""
    out = np.zeros(lattice.n_vertices * lattice.d, dtype=bool)
    if p >= 1.0:
        out[lattice.slot_of_edge] = True
    else:
        out[lattice.slot_of_edge] = _philox_uniforms(seed, replica, lattice.n_edges) < p
    return out


def _config_from_slots(lattice, slots, p, seed, replica) -> Configuration:
    return Configuration.from_open(lattice, slots[lattice.slot_of_edge], p=p, seed=seed, replica_id=replica)


def _map(fn: Callable, ids: Sequence[int], workers: int) -> list:
    if workers <= 1 or len(ids) < 2:
        return [fn(i) for i in ids]
    chunk = max(1, len(ids) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ids, chunksize=chunk))


# -- geometric average -----------------------------------------------------


def _window_offsets(d: int, m: int) -> np.ndarray:
    axes = [np.arange(-m, m + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def _pair_distance(lat, slots, labels, a, b):
    ra, rb = regularize(labels, a), regularize(labels, b)
    raw = distance_between(lat, slots, lat.index(ra.resolved), lat.index(rb.resolved))
    return (INFINITE if raw < 0 else raw), max(ra.displacement, rb.displacement)


def geometric_average_f(config: Configuration, n: int, x: Sequence[int], labels=None, margin: int = 0):
    """Mean of ``D(z~, (n x + z)~)`` over ``z`` in ``Lambda_m``, ``m`` the
    largest integer with ``m**4 <= n``.

    Raises ``ParameterError`` if the box does not contain both windows
    padded by ``margin``.  Returns ``INFINITE`` if any term is infinite.
    """
    lat = config.lattice
    m = averaging_radius(n)
    far = np.asarray(x, dtype=np.int64) * n
    need_lo = np.minimum(far, 0) - m - margin
    need_hi = np.maximum(far, 0) + m + margin
    if lat.periodic or np.any(lat.lower > need_lo) or np.any(lat.upper < need_hi):
        raise ParameterError(f"box does not contain the averaging windows with margin {margin}")
    value, _ = _geometric(lat, config.slot_open, labels or labels_from_slots(lat, config.slot_open), n, far, m)
    return value


def _geometric(lat, slots, labels, n, far, m):
    total = 0
    disp = 0.0
    offs = _window_offsets(lat.d, m)
    for z in offs:
        dist, dz = _pair_distance(lat, slots, labels, z, far + z)
        if dist is INFINITE:
            return INFINITE, max(disp, dz)
        total += dist
        disp = max(disp, dz)
    return total / len(offs), disp


# -- main sweep ----------------------------------------------------------


@dataclass(frozen=True)
class ReplicaOutcome:
    replica: int
    tau: float
    f: float
    influence_sum: float
    geodesic_length: int
    excluded: bool
    influence_excluded: bool
    rows: tuple = ()


def _main_replica(spec: SweepSpec, n: int, want_f: bool, want_infl: bool, replica: int) -> ReplicaOutcome:
    lat = sweep_box(spec, n)
    seed = stream_seed(spec.seed, _MAIN, n)
    slots = sample_slots(lat, spec.p, seed, replica)
    labels = labels_from_slots(lat, slots)
    nan = float("nan")
    if labels.giant_size < 2:
        return ReplicaOutcome(replica, nan, nan, nan, 0, True, True)
    limit = margin_for(spec, n) / 2
    x = (0,) * spec.d
    y = tuple(int(c) * n for c in spec.x)
    rx, ry = regularize(labels, x), regularize(labels, y)
    raw = distance_between(lat, slots, lat.index(rx.resolved), lat.index(ry.resolved))
    disp = max(rx.displacement, ry.displacement)
    excluded = raw < 0 or disp > limit
    tau = nan if raw < 0 else float(raw)
    f = nan
    if want_f and not excluded:
        fv, fd = _geometric(lat, slots, labels, n, np.asarray(y), averaging_radius(n))
        if fv is INFINITE or fd > limit:
            excluded = True
        else:
            f = float(fv)
    s_infl, glen, infl_ex, rows = nan, 0, True, ()
    if want_infl and not excluded:
        config = _config_from_slots(lat, slots, spec.p, seed, replica)
        geo = geodesic_from_slots(lat, slots, rx.resolved, ry.resolved)
        edges = geo.edges(lat)
        eset = frozenset(edges)
        recs = [influence(config, labels, (x, y), geo, e, limit, eset) for e in edges]
        infl_ex = any(r.flagged for r in recs)
        s_infl = float(sum(r.ell ** 2 for r in recs if r.re_holds and not r.flagged))
        glen = len(edges)
        rows = tuple(influence_rows(n, replica, recs))
    return ReplicaOutcome(replica, tau, f, s_infl, glen, bool(excluded), bool(excluded or infl_ex), rows)


def replica_outcomes(spec: SweepSpec, n: int, want_f: bool = True, want_infl: bool = True) -> list[ReplicaOutcome]:
    fn = partial(_main_replica, spec, n, want_f, want_infl)
    return _map(fn, list(range(spec.replicas)), spec.workers)


VARIANCE_COLUMNS = ("d", "p", "x", "n", "R", "seed", "mean_D", "var_D", "var_lo", "var_hi", "var_f",
                    "norm_nlogn", "excluded")
NORMALIZED_COLUMNS = ("n", "R_used", "norm_nlogn", "norm_lo", "norm_hi", "var_over_n", "var_over_n_lo",
                      "var_over_n_hi", "var_f_lo", "var_f_hi", "variance_bound_rhs", "variance_bound_holds")
FIT_COLUMNS = ("model", "coefficient", "weighted_sse", "n_points")
INFLUENCE_SUMMARY_COLUMNS = ("n", "R", "R_used", "mean_sum_over_n", "lo", "hi", "mean_geodesic_length",
                             "excluded")
TIME_CONSTANT_COLUMNS = ("n", "R_used", "mean_ratio", "se", "ci_lo", "ci_hi", "width_ratio_quarter",
                         "min_ratio", "flag")


def _fmt_vec(v) -> str:
    return ";".join(str(int(c)) for c in v)


def _abort(spec: SweepSpec, n: int, n_excluded: int, total: int) -> bool:
    if n_excluded > spec.max_excluded * total:
        warnings.warn(f"n={n}: {n_excluded}/{total} replicas excluded; estimates for this n are not reported",
                      stacklevel=3)
        return True
    return False


def run_sweep(spec: SweepSpec) -> ExperimentReport:
    """Single pass over the scale grid computing every requested estimand."""
    want_f = "geometric" in spec.estimands
    want_infl = "influence" in spec.estimands
    rep = ExperimentReport(spec, "sweep")
    var_t = rep.tables["variance"] = Table(VARIANCE_COLUMNS)
    norm_t = rep.tables["variance_normalized"] = Table(NORMALIZED_COLUMNS)
    if want_infl:
        infl_t = rep.tables["influence"] = Table(INFLUENCE_COLUMNS)
        summ_t = rep.tables["influence_summary"] = Table(INFLUENCE_SUMMARY_COLUMNS)
    if "time_constant" in spec.estimands:
        tc_t = rep.tables["time_constant"] = Table(TIME_CONSTANT_COLUMNS)
    nan = float("nan")
    fit_n, fit_v, fit_w = [], [], []
    for n in spec.n_grid:
        log.info("sweep n=%d: %d replicas", n, spec.replicas)
        outs = replica_outcomes(spec, n, want_f, want_infl)
        kept = [o for o in outs if not o.excluded]
        n_ex = len(outs) - len(kept)
        taus = np.array([o.tau for o in kept])
        cut = _abort(spec, n, n_ex, len(outs))
        bseed = stream_seed(spec.seed, _MAIN, n, 1)
        if cut or len(kept) < 2:
            var_t.rows.append((spec.d, spec.p, _fmt_vec(spec.x), n, spec.replicas, spec.seed, nan, nan, nan, nan,
                               nan, nan, n_ex))
            norm_t.rows.append((n, len(kept)) + (nan,) * 9 + (0,))
        else:
            v = stats.bootstrap_ci(taus, "var", spec.bootstrap, spec.ci_level, bseed)
            vf = stats.Interval(nan, nan, nan, 0)
            if want_f:
                vf = stats.bootstrap_ci([o.f for o in kept], "var", spec.bootstrap, spec.ci_level, bseed + 1)
            g = math.log(n) / n
            rhs = 2 * vf.midpoint + n ** 0.75
            var_t.rows.append((spec.d, spec.p, _fmt_vec(spec.x), n, spec.replicas, spec.seed, float(taus.mean()),
                               v.estimate, v.lo, v.hi, vf.estimate, v.estimate * g, n_ex))
            norm_t.rows.append((n, len(kept), v.estimate * g, v.lo * g, v.hi * g, v.estimate / n, v.lo / n,
                                v.hi / n, vf.lo, vf.hi, rhs, int(want_f and v.midpoint <= rhs)))
            width = max(v.hi - v.lo, 1e-12)
            fit_n.append(n)
            fit_v.append(v.estimate)
            fit_w.append(1.0 / width ** 2)
        if want_infl:
            used = [o for o in outs if not o.influence_excluded]
            n_iex = len(outs) - len(used)
            for o in outs:
                infl_t.rows.extend(o.rows)
            if _abort(spec, n, n_iex, len(outs)) or len(used) < 2:
                summ_t.rows.append((n, spec.replicas, len(used), nan, nan, nan, nan, n_iex))
            else:
                vals = np.array([o.influence_sum for o in used]) / n
                ci = stats.bootstrap_ci(vals, "mean", spec.bootstrap, spec.ci_level, bseed + 2)
                summ_t.rows.append((n, spec.replicas, len(used), ci.estimate, ci.lo, ci.hi,
                                    float(np.mean([o.geodesic_length for o in used])), n_iex))
        if "time_constant" in spec.estimands:
            tc_t.rows.append(_time_constant_row(spec, n, taus, cut))
    fits = rep.tables["variance_fits"] = Table(FIT_COLUMNS)
    if fit_n:
        fn_ = np.array(fit_n, dtype=float)
        fv = np.array(fit_v)
        fw = np.array(fit_w)
        for model, basis in (("a*n", fn_), ("b*n/log(n)", fn_ / np.log(fn_))):
            c = stats.fit_through_origin(basis, fv, fw)
            fits.rows.append((model, c, float(np.sum(fw * (fv - c * basis) ** 2)), len(fn_)))
    return rep


def _time_constant_row(spec, n, taus, cut):
    nan = float("nan")
    if cut or taus.size < 8:
        return (n, int(taus.size), nan, nan, nan, nan, nan, nan, 1)
    ratios = taus / n
    ci = stats.mean_ci(ratios, spec.ci_level)
    quarter = stats.mean_ci(ratios[: max(2, ratios.size // 4)], spec.ci_level)
    wr = (quarter.hi - quarter.lo) / (ci.hi - ci.lo) if ci.hi > ci.lo else nan
    # Widths should shrink like R^{-1/2}: a quarter of the replicas gives twice the width.
    flag = int(not (np.isnan(wr) or 1.5 <= wr <= 2.7))
    return (n, int(taus.size), ci.estimate, stats.standard_error(ratios), ci.lo, ci.hi, wr,
            float(ratios.min()), flag)


def run_variance_sweep(spec: SweepSpec) -> ExperimentReport:
    """Variance of the regularized distance across the scale grid, with the
    geometric-average comparison when ``geometric`` is requested."""
    est = tuple(e for e in spec.estimands if e in ("variance", "geometric")) or ("variance",)
    rep = run_sweep(replace(spec, estimands=est))
    rep.command = "variance-sweep"
    return rep


def run_influence_sweep(spec: SweepSpec) -> ExperimentReport:
    """Mean geodesic influence sum over ``n`` across the scale grid."""
    rep = run_sweep(replace(spec, estimands=("variance", "influence")))
    rep.command = "influence-sweep"
    return rep


def estimate_time_constant(spec: SweepSpec) -> ExperimentReport:
    """Ratios ``D(0~, (n x)~) / n`` with normal intervals per ``n``."""
    rep = run_sweep(replace(spec, estimands=("variance", "time_constant")))
    rep.command = "time-constant"
    rep.tables = {"time_constant": rep.tables["time_constant"]}
    return rep


# -- tails ---------------------------------------------------------------

TAIL_COLUMNS = ("event", "m_or_n", "count", "R", "prob", "logprob")
TAIL_FIT_COLUMNS = ("event", "slope", "intercept", "weighted_r2", "n_points", "range_lo", "range_hi",
                    "censored_from", "beta_hat")
MOMENT_COLUMNS = ("separation", "R_used", "mean_D", "mean_D2", "ratio", "ratio_lo", "ratio_hi")


def _tail_distances(spec: SweepSpec, x, y, tag: int, replicas: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    lat = box_around(spec.d, np.minimum(x, y) - spec.tail_margin, np.maximum(x, y) + spec.tail_margin)
    seed = stream_seed(spec.seed, tag)
    u, v = lat.index(x), lat.index(y)
    fn = partial(_one_distance, lat, spec.p, seed, u, v)
    return np.array(_map(fn, list(range(replicas)), spec.workers), dtype=np.int64)


def _one_distance(lat, p, seed, u, v, replica):
    return distance_between(lat, sample_slots(lat, p, seed, replica), u, v)


def _event_hits(spec: SweepSpec, replica: int) -> tuple[tuple[bool, ...], tuple[bool, ...]]:
    m = spec.event_margin
    lat = box_around(spec.d, (-m,) * spec.d, (m,) * spec.d)
    slots = sample_slots(lat, spec.p, stream_seed(spec.seed, _EVENTS), replica)
    labels = labels_from_slots(lat, slots)
    reach = tuple(reach_event_from_labels(labels, n) for n in spec.reach_grid)
    hole = tuple(hole_from_labels(labels, n) for n in spec.hole_grid)
    return reach, hole


def _fit_rows(event, grid, counts, total, min_count, beta=float("nan")):
    grid = np.asarray(grid)
    counts = np.asarray(counts)
    # Fit the leading run of uncensored points; nothing past the first
    # censored one is used.
    run = 0
    while run < len(counts) and counts[run] >= min_count:
        run += 1
    fit, _ = stats.log_probability_fit(grid[:run], counts[:run], total, 1)
    censored_from = int(grid[run]) if run < len(grid) else -1
    lo = int(grid[0]) if run else -1
    hi = int(grid[run - 1]) if run else -1
    return (event, fit.slope, fit.intercept, fit.r2, fit.n_points, lo, hi, censored_from, beta)


def _tail_row(event, k, count, total):
    prob = float(count) / float(total)
    return (event, int(k), int(count), int(total), prob, math.log(prob) if count else float("-inf"))


def run_tail_sweep(spec: SweepSpec, x: Sequence[int] | None = None, y: Sequence[int] | None = None) -> ExperimentReport:
    """Decay of ``P(m <= D(x, y) < inf)`` beyond ``beta_hat * |x - y|`` and
    of the two cluster tail events, with weighted log-linear fits.

    ``beta_hat`` is twice the pilot mean distance over ``|x - y|``.  Only
    ``m`` of the parity of ``|x - y|_1`` are tabulated since ``D`` has that
    parity.  Points with fewer than ``min_count`` hits are reported but
    censored from the fits.
    """
    x = tuple(x) if x is not None else (0,) * spec.d
    y = tuple(y) if y is not None else (spec.tail_separation,) + (0,) * (spec.d - 1)
    rep = ExperimentReport(spec, "tail-sweep")
    tails = rep.tables["tails"] = Table(TAIL_COLUMNS)
    fits = rep.tables["tail_fits"] = Table(TAIL_FIT_COLUMNS)
    sep2 = float(np.linalg.norm(np.subtract(x, y)))
    sep1 = int(np.abs(np.subtract(x, y)).sum())

    pilot = _tail_distances(spec, x, y, _PILOT, spec.pilot_replicas)
    finite = pilot[pilot >= 0]
    beta = 2.0 * float(finite.mean()) / sep2 if finite.size else float("nan")
    d = _tail_distances(spec, x, y, _TAIL, spec.tail_replicas)
    d = d[d >= 0]
    # Lengths beyond 2*margin + |x-y|_1 can leave the box; stop there.
    m_max = 2 * spec.tail_margin + sep1
    m0 = math.ceil(beta * sep2) if np.isfinite(beta) else sep1
    m0 += (m0 - sep1) % 2
    grid = list(range(m0, m_max + 1, 2))
    counts = [int((d >= m).sum()) for m in grid]
    stop = next((i for i, c in enumerate(counts) if c == 0), len(grid))
    grid, counts = grid[: stop + 1], counts[: stop + 1]
    for m, c in zip(grid, counts):
        tails.rows.append(_tail_row("distance", m, c, spec.tail_replicas))
    fits.rows.append(_fit_rows("distance", grid, counts, spec.tail_replicas, spec.min_count, beta))

    hits = _map(partial(_event_hits, spec), list(range(spec.event_replicas)), spec.workers)
    reach = np.array([h[0] for h in hits], dtype=bool).reshape(len(hits), len(spec.reach_grid))
    hole = np.array([h[1] for h in hits], dtype=bool).reshape(len(hits), len(spec.hole_grid))
    for name, grid_e, mat in (("reach", spec.reach_grid, reach), ("hole", spec.hole_grid, hole)):
        cnt = mat.sum(axis=0).astype(int)
        for k, c in zip(grid_e, cnt):
            tails.rows.append(_tail_row(name, k, c, spec.event_replicas))
        fits.rows.append(_fit_rows(name, grid_e, cnt, spec.event_replicas, spec.min_count))

    mom = rep.tables["moments"] = Table(MOMENT_COLUMNS)
    for sep in spec.moment_grid:
        mom.rows.append(_moment_row(spec, sep))
    return rep


def _moment_row(spec: SweepSpec, sep: int):
    xs = np.zeros(spec.d, dtype=np.int64)
    ys = xs.copy()
    ys[0] = sep
    m = max(spec.margin_min, math.ceil(spec.c_margin * math.log(sep + 2) ** 2))
    lat = box_around(spec.d, xs - m, ys + m)
    seed = stream_seed(spec.seed, _MOMENTS, sep)
    vals = np.array(_map(partial(_moment_replica, lat, spec.p, seed, tuple(xs), tuple(ys)),
                         list(range(spec.moment_replicas)), spec.workers), dtype=float)
    vals = vals[np.isfinite(vals)]
    ratio = vals ** 2 / float(sep) ** 2
    ci = stats.bootstrap_ci(ratio, "mean", spec.bootstrap, spec.ci_level, seed & 0xFFFFFFFF)
    return (sep, int(vals.size), float(vals.mean()), float((vals ** 2).mean()), ci.estimate, ci.lo, ci.hi)


def _moment_replica(lat, p, seed, x, y, replica):
    slots = sample_slots(lat, p, seed, replica)
    labels = labels_from_slots(lat, slots)
    try:
        dist, _ = _pair_distance(lat, slots, labels, x, y)
    except EmptyGiantError:
        return float("nan")
    return float("nan") if dist is INFINITE else float(dist)


# -- surgery estimands -----------------------------------------------------

GEODESIC_MOMENT_COLUMNS = ("n", "k", "R_used", "estimate", "lo", "hi", "normalized", "truncation_radius")
OFF_EVENT_COLUMNS = ("n", "R_used", "near_sum", "near_lo", "near_hi", "far_estimate", "far_se",
                   "truncation_radius", "far_samples", "flagged", "normalized")
SMOOTHED_BOUND_COLUMNS = ("n", "m", "R_used", "sum_bound_sq", "ratio_to_n15_16", "truncation_radius")
BOX_CROSSING_COLUMNS = ("n", "m", "position", "z", "R_used", "mean_count", "lo", "hi", "normalized")


def truncation_radius(n: int) -> int:
    return math.ceil(math.log(n) ** 2)


def _near_edges(lat: LatticeBox, anchors, r: int) -> np.ndarray:
    """Edges with both endpoints within sup-distance ``r`` of an anchor."""
    coords = lat.all_coords
    near_v = np.zeros(lat.n_vertices, dtype=bool)
    for a in anchors:
        near_v |= np.abs(coords - np.asarray(a)).max(axis=1) <= r
    tails = lat.edge_of_slot >= 0
    slots = np.flatnonzero(tails)
    v = slots // lat.d
    w = lat.nbr[v, 2 * (slots % lat.d)]
    keep = near_v[v] & near_v[w]
    return np.sort(lat.edge_of_slot[slots[keep]])


@dataclass(frozen=True)
class _LemmaReplica:
    ok: bool
    flagged: int
    geo_len: int
    s1: float
    s2: float
    near: float
    far: float
    a_map: np.ndarray | None
    counts: tuple


def _lemma_replica(spec: SweepSpec, n: int, replica: int) -> _LemmaReplica:
    lat = sweep_box(spec, n)
    seed = stream_seed(spec.seed, _LEMMA, n)
    slots = sample_slots(lat, spec.p, seed, replica)
    labels = labels_from_slots(lat, slots)
    x = (0,) * spec.d
    y = tuple(int(c) * n for c in spec.x)
    limit = margin_for(spec, n) / 2
    rx, ry = regularize(labels, x), regularize(labels, y)
    geo = geodesic_from_slots(lat, slots, rx.resolved, ry.resolved)
    if not geo.finite or max(rx.displacement, ry.displacement) > limit:
        return _LemmaReplica(False, 0, 0, 0.0, 0.0, 0.0, 0.0, None, ())
    config = _config_from_slots(lat, slots, spec.p, seed, replica)
    g_edges = geo.edges(lat)
    eset = frozenset(g_edges)

    def rec(e):
        return influence(config, labels, (x, y), geo, int(e), limit, eset, with_delta=False)

    a_map = np.zeros(lat.n_edges)
    flagged = 0
    s1 = s2 = 0.0
    for e in g_edges:
        r = rec(e)
        if r.flagged:
            flagged += 1
            continue
        if r.re_holds:
            s1 += r.ell
            s2 += r.ell ** 2
            a_map[e] += r.ell
        else:
            a_map[e] += abs(r.ell)
    near = 0.0
    rad = truncation_radius(n)
    near_set = _near_edges(lat, (rx.resolved, ry.resolved), rad)
    for e in near_set:
        if int(e) in eset:
            continue
        r = rec(e)
        if r.flagged:
            flagged += 1
        elif not r.re_holds:
            near += r.ell ** 2
            a_map[e] += abs(r.ell)
    far = 0.0
    rest = np.setdiff1d(np.arange(lat.n_edges), np.union1d(near_set, np.array(g_edges, dtype=np.int64)))
    if spec.far_samples and rest.size:
        pick_seed = stream_seed(spec.seed, _FAR, n, replica)
        rng = np.random.Generator(np.random.Philox(key=pick_seed))
        pick = rng.choice(rest, size=min(spec.far_samples, rest.size), replace=False)
        acc = 0.0
        for e in np.sort(pick):
            r = rec(e)
            if not r.flagged and not r.re_holds:
                acc += r.ell ** 2
        far = acc * rest.size / pick.size
    counts = []
    big = max(spec.n_grid)
    if n == big:
        mid = np.asarray(y) // 2
        for m in spec.lemma_m_grid:
            off = mid.copy()
            off[1 if spec.d > 1 else 0] += 2 * m
            counts.append(box_intersection_count(geo, mid, m))
            counts.append(box_intersection_count(geo, off, m))
    return _LemmaReplica(True, flagged, len(g_edges), s1, s2, near, far, a_map, tuple(counts))


def _bound_sum(lat: LatticeBox, a_mean: np.ndarray, m: int, p: float) -> float:
    """Sum over edges of ``(2 / (p |Lambda_m|) * sum_{z in Lambda_m} a(e - z))**2``
    with ``a`` extended by zero outside the box."""
    total = 0.0
    size = (2 * m + 1) ** lat.d
    for k in range(lat.d):
        grid = np.zeros(lat.n_vertices)
        slot_k = np.arange(lat.n_vertices) * lat.d + k
        have = lat.edge_of_slot[slot_k] >= 0
        grid[have] = a_mean[lat.edge_of_slot[slot_k[have]]]
        grid = grid.reshape(lat.shape)
        conv = ndimage.uniform_filter(grid, size=2 * m + 1, mode="constant") * size
        total += float(np.sum((2.0 / (p * size) * conv) ** 2))
    return total


def lemma_estimands(spec: SweepSpec) -> ExperimentReport:
    """Per-scale estimates of the surgery moments used in the variance bound.

    Geodesic edges are evaluated exactly; the ``R^c`` sum is exact on edges
    within the truncation radius of either regularized anchor and estimated
    from ``far_samples`` uniformly chosen edges elsewhere.
    """
    rep = ExperimentReport(spec, "lemma-estimands")
    t_geo = rep.tables["geodesic_moments"] = Table(GEODESIC_MOMENT_COLUMNS)
    t_off = rep.tables["off_event_sum"] = Table(OFF_EVENT_COLUMNS)
    t_bound = rep.tables["smoothed_bound"] = Table(SMOOTHED_BOUND_COLUMNS)
    t_box = rep.tables["box_crossings"] = Table(BOX_CROSSING_COLUMNS)
    nan = float("nan")
    for n in spec.n_grid:
        log.info("lemma estimands n=%d: %d replicas", n, spec.lemma_replicas)
        outs = _map(partial(_lemma_replica, spec, n), list(range(spec.lemma_replicas)), spec.workers)
        ok = [o for o in outs if o.ok]
        rad = truncation_radius(n)
        ln = math.log(n) if n > 1 else 1.0
        if not ok:
            for k in (1, 2):
                t_geo.rows.append((n, k, 0, nan, nan, nan, nan, rad))
            t_off.rows.append((n, 0, nan, nan, nan, nan, nan, rad, spec.far_samples, 0, nan))
            continue
        glen = np.array([max(o.geo_len, 1) for o in ok], dtype=float)
        for k, vals in ((1, [o.s1 for o in ok]), (2, [o.s2 for o in ok])):
            ci = stats.mean_ci(np.array(vals) / glen, spec.ci_level)
            t_geo.rows.append((n, k, len(ok), ci.estimate, ci.lo, ci.hi, ci.estimate / ln ** (2 * k), rad))
        near = stats.mean_ci([o.near for o in ok], spec.ci_level)
        far = np.array([o.far for o in ok])
        flagged = int(sum(o.flagged for o in ok))
        t_off.rows.append((n, len(ok), near.estimate, near.lo, near.hi, float(far.mean()),
                         stats.standard_error(far), rad, spec.far_samples, flagged,
                         (near.estimate + float(far.mean())) / ln ** (6 * spec.d)))
        lat = sweep_box(spec, n)
        a_mean = np.mean([o.a_map for o in ok], axis=0)
        m = averaging_radius(n)
        bs = _bound_sum(lat, a_mean, m, spec.p)
        t_bound.rows.append((n, m, len(ok), bs, bs / n ** (15 / 16), rad))
        if n == max(spec.n_grid) and ok[0].counts:
            cmat = np.array([o.counts for o in ok], dtype=float)
            mid = np.asarray(spec.x) * n // 2
            for i, mm in enumerate(spec.lemma_m_grid):
                for j, pos in enumerate(("on", "off")):
                    z = mid.copy()
                    if pos == "off":
                        z[1 if spec.d > 1 else 0] += 2 * mm
                    ci = stats.mean_ci(cmat[:, 2 * i + j], spec.ci_level)
                    t_box.rows.append((n, mm, pos, _fmt_vec(z), len(ok), ci.estimate, ci.lo, ci.hi,
                                     ci.estimate / mm))
    return rep


COMMANDS = {
    "variance-sweep": run_variance_sweep,
    "influence-sweep": run_influence_sweep,
    "tail-sweep": run_tail_sweep,
    "lemma-estimands": lemma_estimands,
    "time-constant": estimate_time_constant,
}
