"""Exact concentration checks for functions on small hypercubes.

Functions live on ``{0,1}^K`` under the product Bernoulli(p) measure, with
``P(t_k = 1) = p``.  Coordinate ``k`` (1-based) is bit ``k - 1`` of the
point index.  The array helpers accept tables of shape ``(..., 2**K)`` so
whole batches of functions are checked at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

MAX_K = 24
TOLERANCE = 1e-12


class CubeError(ValueError):
    pass


# -- array core ----------------------------------------------------------


@lru_cache(maxsize=64)
def point_weights(K: int, p: float) -> np.ndarray:
    """Product Bernoulli(p) weight of every point, indexed by bit pattern."""
    idx = np.arange(2 ** K)
    ones = np.zeros(idx.shape, dtype=np.int64)
    for k in range(K):
        ones += (idx >> k) & 1
    w = p ** ones * (1.0 - p) ** (K - ones)
    w.setflags(write=False)
    return w


def _cube(a: np.ndarray, K: int) -> np.ndarray:
    return a.reshape(a.shape[:-1] + (2,) * K)


def _axis(a_cube: np.ndarray, K: int, k: int) -> int:
    # C order puts bit 0 on the last axis.
    return a_cube.ndim - k


def average_out(a: np.ndarray, K: int, p: float, k: int) -> np.ndarray:
    """Integrate coordinate ``k`` out of ``a``, keeping the table shape."""
    c = _cube(a, K)
    ax = _axis(c, K, k)
    lo = np.take(c, [0], axis=ax)
    hi = np.take(c, [1], axis=ax)
    m = (1.0 - p) * lo + p * hi
    return np.broadcast_to(m, c.shape).reshape(a.shape)


def gradient(a: np.ndarray, K: int, k: int) -> np.ndarray:
    """``f(t with t_k=0) - f(t with t_k=1)`` at every point."""
    c = _cube(a, K)
    ax = _axis(c, K, k)
    g = np.take(c, [0], axis=ax) - np.take(c, [1], axis=ax)
    return np.broadcast_to(g, c.shape).reshape(a.shape)


def mean(a: np.ndarray, K: int, p: float) -> np.ndarray:
    return a @ point_weights(K, p)


def var(a: np.ndarray, K: int, p: float) -> np.ndarray:
    c = a - mean(a, K, p)[..., None]
    return (c * c) @ point_weights(K, p)


def _phi(u: np.ndarray) -> np.ndarray:
    """``(1 + u) log(1 + u) - u`` for ``u >= -1``, accurate near 0."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-4
    us = u[small]
    out[small] = us * us * (0.5 - us / 6.0 + us * us / 12.0)
    big = ~small
    ub = u[big]
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (1.0 + ub) * np.log1p(ub) - ub
    out[big] = np.where(ub <= -1.0, 1.0, val)
    return out


def ent(a: np.ndarray, K: int, p: float) -> np.ndarray:
    """``E[g log(g / E g)]`` for nonnegative tables, ``0 log 0 = 0``.

    Written as ``E g * E[phi(g / E g - 1)]`` so near-constant inputs keep
    full relative precision.
    """
    w = point_weights(K, p)
    m = a @ w
    safe = np.where(m > 0, m, 1.0)
    u = a / safe[..., None] - 1.0
    out = m * (_phi(u) @ w)
    # Constants get an exact zero rather than rounding residue.
    const = np.all(a == a[..., :1], axis=-1)
    return np.where((m > 0) & ~const, out, 0.0)


def coordinate_ent(a: np.ndarray, K: int, p: float, k: int) -> np.ndarray:
    """``E_pi[Ent_{pi_k}(g)]``: entropy in coordinate ``k`` with the others
    frozen, averaged over the others."""
    c = _cube(a, K)
    ax = _axis(c, K, k)
    lo = np.take(c, 0, axis=ax)
    hi = np.take(c, 1, axis=ax)
    pair = np.stack([lo, hi], axis=-1).reshape(-1, 2)
    e = ent(pair, 1, p).reshape(lo.shape)
    # ``e`` lives on the remaining K-1 coordinates; weight and sum.
    rest = e.reshape(a.shape[:-1] + (-1,))
    return rest @ point_weights(K - 1, p) if K > 1 else rest[..., 0]


def increments(a: np.ndarray, K: int, p: float, ordering: Sequence[int]) -> list[np.ndarray]:
    """Martingale increments ``V_1..V_K`` along ``ordering``."""
    levels = [a]
    g = a
    for k in reversed(ordering):
        g = average_out(g, K, p, k)
        levels.append(g)
    levels.reverse()
    # levels[j] = E[f | first j coordinates of the ordering]
    return [levels[j + 1] - levels[j] for j in range(K)]


# -- functions on the cube -----------------------------------------------


@dataclass(frozen=True, eq=False)
class CubeFunction:
    """Real function on ``{0,1}^K`` given by its value table.

    Parameters
    ----------
    K : int
        Number of coordinates, at most 24.
    table : ndarray
        Value at every point; entry ``i`` is the point whose coordinate
        ``k`` equals bit ``k - 1`` of ``i``.
    p : float
        Probability that a coordinate equals 1, in ``(0, 1)``.
    """

    K: int
    table: np.ndarray
    p: float = 0.5

    def __post_init__(self):
        if not 0 <= self.K <= MAX_K:
            raise CubeError(f"K must lie in [0, {MAX_K}], got {self.K}")
        t = np.array(self.table, dtype=float)
        if t.shape != (2 ** self.K,):
            raise CubeError(f"table length must be 2**K = {2 ** self.K}, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise CubeError("table entries must be finite")
        if not 0.0 < self.p < 1.0:
            raise CubeError(f"p must lie in (0, 1), got {self.p}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def from_callable(cls, K: int, fn, p: float = 0.5) -> "CubeFunction":
        """Tabulate ``fn(bits)`` where ``bits[k-1]`` is coordinate ``k``."""
        vals = [fn(tuple((i >> k) & 1 for k in range(K))) for i in range(2 ** K)]
        return cls(K, np.array(vals, dtype=float), p)

    def __call__(self, t) -> float:
        if isinstance(t, (int, np.integer)):
            return float(self.table[int(t)])
        return float(self.table[sum(int(b) << k for k, b in enumerate(t))])

    def with_table(self, table) -> "CubeFunction":
        return CubeFunction(self.K, table, self.p)


@dataclass(frozen=True)
class MartingaleDecomposition:
    """``increments[j]`` is ``V_{j+1} = E[f | F_{j+1}] - E[f | F_j]`` where
    ``F_j`` is generated by the first ``j`` coordinates of ``ordering``."""

    ordering: tuple[int, ...]
    increments: tuple[CubeFunction, ...]


def expectation(f: CubeFunction) -> float:
    return float(mean(f.table, f.K, f.p))


def variance(f: CubeFunction) -> float:
    return float(var(f.table, f.K, f.p))


def _ordering(K: int, ordering) -> tuple[int, ...]:
    o = tuple(range(1, K + 1)) if ordering is None else tuple(int(k) for k in ordering)
    if sorted(o) != list(range(1, K + 1)):
        raise CubeError(f"ordering must be a permutation of 1..{K}")
    return o


def decompose(f: CubeFunction, ordering: Sequence[int] | None = None) -> MartingaleDecomposition:
    """Martingale decomposition of ``f`` along ``ordering`` (default
    ``1..K``)."""
    o = _ordering(f.K, ordering)
    inc = increments(f.table, f.K, f.p, o)
    return MartingaleDecomposition(o, tuple(f.with_table(v) for v in inc))


def entropy(g: CubeFunction) -> float:
    """Entropy ``E[g log(g / E g)]`` of a nonnegative function."""
    if np.any(g.table < 0):
        raise CubeError("entropy needs a nonnegative function")
    return float(ent(g.table, g.K, g.p))


def discrete_gradient(f: CubeFunction, k: int) -> CubeFunction:
    """``f`` with coordinate ``k`` set to 0 minus ``f`` with it set to 1."""
    if not 1 <= k <= f.K:
        raise CubeError(f"coordinate must lie in 1..{f.K}")
    return f.with_table(gradient(f.table, f.K, k))


@dataclass(frozen=True)
class SlackReport:
    """``slack = rhs - lhs``; ``vacuous`` marks a degenerate input for
    which the inequality says nothing."""

    check: str
    K: int
    p: float
    lhs: float
    rhs: float
    slack: float
    vacuous: bool = False

    @property
    def holds(self) -> bool:
        return self.vacuous or self.slack >= -TOLERANCE


def _report(check, K, p, lhs, rhs, vacuous=False) -> SlackReport:
    return SlackReport(check, K, float(p), float(lhs), float(rhs), float(rhs - lhs), bool(vacuous))


# batch versions return (lhs, rhs, vacuous) arrays


def fs_terms(a: np.ndarray, K: int, p: float, ordering=None):
    """Falik-Samorodnitsky sides: ``Var log(Var / sum (E|V_k|)^2)`` and
    ``sum Ent(V_k^2)``."""
    o = _ordering(K, ordering)
    w = point_weights(K, p)
    v = var(a, K, p)
    inc = increments(a, K, p, o)
    l1 = sum((np.abs(x) @ w) ** 2 for x in inc) if inc else np.zeros(a.shape[:-1])
    rhs = sum(ent(x * x, K, p) for x in inc) if inc else np.zeros(a.shape[:-1])
    vac = (v <= 0) | (l1 <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(vac, 0.0, v * np.log(np.where(vac, 1.0, v) / np.where(vac, 1.0, l1)))
    return lhs, rhs, vac


def gradient_energy(a: np.ndarray, K: int, p: float) -> np.ndarray:
    """``sum_k E[(Delta_k f)^2]``."""
    w = point_weights(K, p)
    return sum((gradient(a, K, k) ** 2) @ w for k in range(1, K + 1)) if K else np.zeros(a.shape[:-1])


def entropy_gradient_terms(a: np.ndarray, K: int, p: float, ordering=None, c: float | None = None):
    o = _ordering(K, ordering)
    c = bernoulli_lsi_constant(p) if c is None else c
    inc = increments(a, K, p, o)
    lhs = sum(ent(x * x, K, p) for x in inc) if inc else np.zeros(a.shape[:-1])
    return lhs, c * gradient_energy(a, K, p), np.zeros(lhs.shape, dtype=bool)


def tensorization_terms(a: np.ndarray, K: int, p: float):
    if np.any(a < 0):
        raise CubeError("tensorization needs a nonnegative function")
    lhs = ent(a, K, p)
    rhs = sum(coordinate_ent(a, K, p, k) for k in range(1, K + 1)) if K else np.zeros(a.shape[:-1])
    return lhs, rhs, np.zeros(np.shape(lhs), dtype=bool)


def efron_stein_terms(a: np.ndarray, K: int, p: float):
    return var(a, K, p), p * (1.0 - p) * gradient_energy(a, K, p), np.zeros(a.shape[:-1], dtype=bool)


def two_point_lsi_terms(g0, g1, p: float, c: float | None = None):
    """``Ent(g^2)`` against ``C(p) (g(0) - g(1))^2`` for ``g >= 0`` on one
    coordinate."""
    c = bernoulli_lsi_constant(p) if c is None else c
    g0 = np.asarray(g0, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    if np.any(g0 < 0) or np.any(g1 < 0):
        raise CubeError("two-point inequality needs g >= 0")
    lhs = ent(np.stack([g0 * g0, g1 * g1], axis=-1), 1, p)
    return lhs, c * (g0 - g1) ** 2, np.zeros(lhs.shape, dtype=bool)


def check_falik_samorodnitsky(f: CubeFunction, ordering=None) -> SlackReport:
    """Variance against the entropies of the squared martingale increments.

    Returns a vacuous report when ``Var f = 0``.
    """
    lhs, rhs, vac = fs_terms(f.table, f.K, f.p, ordering)
    return _report("falik_samorodnitsky", f.K, f.p, lhs, rhs, vac)


def check_entropy_gradient_bound(f: CubeFunction, ordering=None) -> SlackReport:
    """``sum Ent(V_k^2) <= C(p) sum E[(Delta_k f)^2]`` with the optimal
    two-point constant."""
    lhs, rhs, _ = entropy_gradient_terms(f.table, f.K, f.p, ordering)
    return _report("entropy_gradient", f.K, f.p, lhs, rhs)


def check_tensorization(f: CubeFunction) -> SlackReport:
    """``Ent(f) <= sum_k E[Ent_k(f)]`` for ``f >= 0``."""
    lhs, rhs, _ = tensorization_terms(f.table, f.K, f.p)
    return _report("tensorization", f.K, f.p, lhs, rhs)


def efron_stein(f: CubeFunction) -> SlackReport:
    """``Var f <= p(1-p) sum_k E[(Delta_k f)^2]``."""
    lhs, rhs, _ = efron_stein_terms(f.table, f.K, f.p)
    return _report("efron_stein", f.K, f.p, lhs, rhs)


def check_two_point_lsi(g0: float, g1: float, p: float) -> SlackReport:
    lhs, rhs, _ = two_point_lsi_terms(g0, g1, p)
    return _report("two_point_lsi", 1, p, lhs, rhs)


def check_product_lsi(f: CubeFunction) -> SlackReport:
    """``Ent(f^2) <= C(p) sum_k E[(Delta_k f)^2]``, the two-point bound
    tensorized to the whole cube."""
    a = f.table
    lhs = ent(a * a, f.K, f.p)
    rhs = bernoulli_lsi_constant(f.p) * gradient_energy(a, f.K, f.p)
    return _report("product_lsi", f.K, f.p, lhs, rhs)


def telescoped_gradient_energy(f: CubeFunction, ordering=None) -> float:
    """``sum_j E[E[Delta_j f | F_K]^2]`` evaluated through the conditional
    expectation machinery (``F_K`` is the full sigma-field)."""
    o = _ordering(f.K, ordering)
    w = point_weights(f.K, f.p)
    total = 0.0
    for j in range(1, f.K + 1):
        g = gradient(f.table, f.K, j)
        # Conditioning on every coordinate of the ordering is the identity;
        # no coordinate is averaged out past level K.
        for k in o[f.K:]:
            g = average_out(g, f.K, f.p, k)
        total += float((g * g) @ w)
    return total


def all_reports(f: CubeFunction, ordering=None) -> list[SlackReport]:
    """Every applicable report for ``f``; tensorization only when ``f >= 0``."""
    out = [check_falik_samorodnitsky(f, ordering), check_entropy_gradient_bound(f, ordering),
           check_product_lsi(f), efron_stein(f)]
    if np.all(f.table >= 0):
        out.append(check_tensorization(f))
    return out


# -- optimal two-point constant ------------------------------------------


def _lsi_ratio(theta: float, p: float) -> float:
    """``Ent(g^2) / (g0 - g1)^2`` for ``g = (cos theta, sin theta)``."""
    q = 1.0 - p
    c, s = np.cos(theta), np.sin(theta)
    den = 2.0 * np.sin(np.pi / 4 - theta) ** 2
    if den < 1e-24:
        return 2.0 * p * q
    num = float(ent(np.array([c * c, s * s]), 1, p))
    return num / den


@lru_cache(maxsize=256)
def _lsi_search(p: float) -> tuple[float, float]:
    thetas = np.linspace(0.0, np.pi / 2, 4097)
    vals = np.array([_lsi_ratio(t, p) for t in thetas])
    i = int(np.argmax(vals))
    best_t, best_v = float(thetas[i]), float(vals[i])
    if 0 < i < thetas.size - 1:
        res = optimize.minimize_scalar(lambda t: -_lsi_ratio(t, p), bracket=tuple(thetas[i - 1:i + 2]),
                                       method="golden", tol=1e-10)
        if -res.fun >= best_v:
            best_t, best_v = float(res.x), float(-res.fun)
    return best_v, best_t


def bernoulli_lsi_constant(p: float) -> float:
    """Largest ratio ``Ent(g^2) / (g(0) - g(1))^2`` over ``g >= 0`` on one
    Bernoulli(p) coordinate.

    The ratio is scale invariant, so ``g = (cos theta, sin theta)`` with
    ``theta`` in ``[0, pi/2]`` covers every case; a dense grid locates the
    maximum and golden-section search refines it.  At ``theta = pi/4`` the
    ratio is continued by its limit ``2 p (1 - p)``.
    """
    if not 0.0 < p < 1.0:
        raise CubeError(f"p must lie in (0, 1), got {p}")
    return _lsi_search(float(p))[0]


def lsi_extremal(p: float) -> tuple[float, float]:
    """The maximizing ``g = (g(0), g(1))`` found by the search."""
    t = _lsi_search(float(p))[1]
    return float(np.cos(t)), float(np.sin(t))


# -- named examples ------------------------------------------------------


def dictator(K: int, k: int = 1, p: float = 0.5) -> CubeFunction:
    return CubeFunction.from_callable(K, lambda t: t[k - 1], p)


def and_function(K: int = 2, p: float = 0.5) -> CubeFunction:
    return CubeFunction.from_callable(K, lambda t: float(all(t)), p)


def lifted(g: Sequence[float], K: int, p: float) -> CubeFunction:
    """``f(t) = g(t_1)`` on ``K`` coordinates."""
    return CubeFunction.from_callable(K, lambda t: g[t[0]], p)


ENTROPY_COLUMNS = ("check", "K", "p", "lhs", "rhs", "slack")


def report_rows(reports: Sequence[SlackReport]) -> list[tuple]:
    return [(r.check, r.K, r.p, r.lhs, r.rhs, r.slack) for r in reports]
