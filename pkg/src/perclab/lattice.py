"""Finite boxes of the cubic bond lattice and Bernoulli edge configurations.

Vertices are stored in C order over the box shape, so comparing flat indices
is the same as comparing coordinates lexicographically.  Edge slot
``v * d + k`` is the edge from ``v`` to ``v + e_k``; the dense edge index is
the rank of a slot among the slots present in the box, which makes the edge
enumeration lexicographic in ``(v, k)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np


class ParameterError(ValueError):
    """Invalid lattice, probability or edge argument."""


class Boundary(str, enum.Enum):
    FREE = "free"
    PERIODIC = "periodic"


OPEN = True
CLOSED = False


@dataclass(frozen=True)
class LatticeBox:
    """Box ``origin + prod_k [0, L_k)`` of Z^d.

    With periodic boundary the edge from the last layer to the first along an
    axis is stored with its tail ``v`` on the last layer.
    """

    d: int
    shape: tuple[int, ...]
    boundary: Boundary = Boundary.FREE
    origin_offset: tuple[int, ...] = ()

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError(f"dimension d must be >= 2, got {self.d}")
        if len(self.shape) != self.d:
            raise ParameterError("shape must have one side length per axis")
        if min(self.shape) < 1:
            raise ParameterError(f"side lengths must be >= 1, got {self.shape}")
        if self.boundary is Boundary.PERIODIC and min(self.shape) < 3:
            raise ParameterError("periodic boxes need side length >= 3")
        if not self.origin_offset:
            object.__setattr__(self, "origin_offset", (0,) * self.d)
        if len(self.origin_offset) != self.d:
            raise ParameterError("origin_offset must have d entries")

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_edges(self) -> int:
        return int(self.slot_of_edge.size)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin_offset, dtype=np.int64)

    @property
    def upper(self) -> np.ndarray:
        """Inclusive upper corner."""
        return self.lower + np.asarray(self.shape) - 1

    @cached_property
    def strides(self) -> np.ndarray:
        st = np.ones(self.d, dtype=np.int64)
        for k in range(self.d - 2, -1, -1):
            st[k] = st[k + 1] * self.shape[k + 1]
        return st

    # -- vertices --------------------------------------------------------

    def contains(self, x: Sequence[int]) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def index(self, x: Sequence[int]) -> int:
        """Flat index of vertex with coordinates ``x``."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (self.d,):
            raise ParameterError(f"vertex must have {self.d} coordinates")
        rel = x - self.lower
        if np.any(rel < 0) or np.any(rel >= np.asarray(self.shape)):
            raise ParameterError(f"vertex {tuple(x)} outside the box")
        return int(rel @ self.strides)

    def coords(self, v: int) -> tuple[int, ...]:
        rel = np.unravel_index(int(v), self.shape)
        return tuple(int(r + o) for r, o in zip(rel, self.origin_offset))

    @cached_property
    def all_coords(self) -> np.ndarray:
        """``(V, d)`` coordinates of every vertex, in flat-index order."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids + self.lower

    # -- edges -----------------------------------------------------------

    @cached_property
    def _tables(self):
        d, shape = self.d, self.shape
        V = self.n_vertices
        rel = np.indices(shape).reshape(d, -1).T
        nbr = np.full((V, 2 * d), -1, dtype=np.int64)
        slot = np.full((V, 2 * d), -1, dtype=np.int64)
        present = np.zeros(V * d, dtype=bool)
        v = np.arange(V)
        for k in range(d):
            L = shape[k]
            st = int(self.strides[k])
            c = rel[:, k]
            if self.periodic:
                up = v + np.where(c == L - 1, -(L - 1) * st, st)
                down = v + np.where(c == 0, (L - 1) * st, -st)
                has_up = np.ones(V, dtype=bool)
                has_down = np.ones(V, dtype=bool)
            else:
                up = v + st
                down = v - st
                has_up = c < L - 1
                has_down = c > 0
            nbr[has_up, 2 * k] = up[has_up]
            slot[has_up, 2 * k] = v[has_up] * d + k
            nbr[has_down, 2 * k + 1] = down[has_down]
            slot[has_down, 2 * k + 1] = down[has_down] * d + k
            present[v[has_up] * d + k] = True
        slot_of_edge = np.flatnonzero(present)
        edge_of_slot = np.full(V * d, -1, dtype=np.int64)
        edge_of_slot[slot_of_edge] = np.arange(slot_of_edge.size)
        for arr in (nbr, slot, slot_of_edge, edge_of_slot):
            arr.setflags(write=False)
        return nbr, slot, slot_of_edge, edge_of_slot

    @property
    def nbr(self) -> np.ndarray:
        """``(V, 2d)`` neighbour table, direction order +e1, -e1, ..., -ed."""
        return self._tables[0]

    @property
    def slot(self) -> np.ndarray:
        return self._tables[1]

    @property
    def slot_of_edge(self) -> np.ndarray:
        return self._tables[2]

    @property
    def edge_of_slot(self) -> np.ndarray:
        return self._tables[3]

    def edge_index(self, v: Sequence[int], axis: int) -> int:
        """Dense index of the edge from vertex ``v`` to ``v + e_axis``."""
        if not 0 <= axis < self.d:
            raise ParameterError(f"axis {axis} out of range")
        s = self.index(v) * self.d + axis
        e = int(self.edge_of_slot[s])
        if e < 0:
            raise ParameterError(f"edge ({tuple(v)}, axis {axis}) leaves the box")
        return e

    def edge_between(self, a: Sequence[int], b: Sequence[int]) -> int:
        """Dense index of the edge joining neighbouring vertices ``a``, ``b``."""
        ia, ib = self.index(a), self.index(b)
        row = self.nbr[ia]
        hits = np.flatnonzero(row == ib)
        if hits.size == 0:
            raise ParameterError(f"{tuple(a)} and {tuple(b)} are not neighbours")
        return int(self.edge_of_slot[self.slot[ia, hits[0]]])

    def edge_endpoints(self, e: int) -> tuple[int, int]:
        """Flat indices ``(v, v + e_k)`` of edge ``e``."""
        self.check_edge(e)
        s = int(self.slot_of_edge[e])
        v, k = divmod(s, self.d)
        return v, int(self.nbr[v, 2 * k])

    def edge_axis(self, e: int) -> int:
        return int(self.slot_of_edge[e]) % self.d

    def check_edge(self, e: int) -> None:
        if not 0 <= int(e) < self.n_edges:
            raise ParameterError(f"edge index {e} outside the box (E={self.n_edges})")


def build_lattice(
    d: int,
    L: int | Sequence[int],
    boundary: Boundary | str = Boundary.FREE,
    origin_offset: Sequence[int] | None = None,
) -> LatticeBox:
    """Build a box with side ``L`` (an int, or one length per axis)."""
    if d < 2:
        raise ParameterError(f"dimension d must be >= 2, got {d}")
    shape = (int(L),) * d if np.isscalar(L) else tuple(int(s) for s in L)
    if min(shape) < 1:
        raise ParameterError(f"side length must be >= 1, got {L}")
    offset = tuple(int(o) for o in origin_offset) if origin_offset is not None else ()
    return LatticeBox(d, shape, Boundary(boundary), offset)


def box_around(d: int, lower: Sequence[int], upper: Sequence[int]) -> LatticeBox:
    """Free box spanning the inclusive corners ``lower``..``upper``."""
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    return build_lattice(d, tuple(upper - lower + 1), Boundary.FREE, tuple(lower))


# -- configurations ------------------------------------------------------


def _philox_uniforms(seed: int, replica_id: int, n: int) -> np.ndarray:
    # Philox is counter based: entry i depends only on (key, i).
    key = (int(seed) & (2**64 - 1)) | ((int(replica_id) & (2**64 - 1)) << 64)
    return np.random.Generator(np.random.Philox(key=key)).random(n)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Open/closed state of every edge of a box, bit packed.

    ``bits`` already includes the ``forced`` overrides.  Equality compares the
    box and the edge states only; provenance fields are metadata.
    """

    lattice: LatticeBox
    bits: np.ndarray
    p: float = 1.0
    seed: int = 0
    replica_id: int = 0
    forced: Mapping[int, bool] = field(default_factory=dict)

    def __post_init__(self):
        self.bits.setflags(write=False)
        object.__setattr__(self, "forced", MappingProxyType(dict(self.forced)))

    @classmethod
    def from_open(cls, lattice: LatticeBox, open_edges, **meta) -> "Configuration":
        """Configuration from a boolean vector indexed by edge."""
        mask = np.asarray(open_edges, dtype=bool)
        if mask.shape != (lattice.n_edges,):
            raise ParameterError(f"expected {lattice.n_edges} edge states, got {mask.shape}")
        return cls(lattice, np.packbits(mask, bitorder="little"), **meta)

    @cached_property
    def open_edges(self) -> np.ndarray:
        mask = np.unpackbits(self.bits, count=self.lattice.n_edges, bitorder="little")
        mask = mask.astype(bool)
        mask.setflags(write=False)
        return mask

    @cached_property
    def slot_open(self) -> np.ndarray:
        lat = self.lattice
        out = np.zeros(lat.n_vertices * lat.d, dtype=bool)
        out[lat.slot_of_edge] = self.open_edges
        out.setflags(write=False)
        return out

    def is_open(self, e: int) -> bool:
        self.lattice.check_edge(e)
        return bool(self.open_edges[e])

    @property
    def n_open(self) -> int:
        return int(self.open_edges.sum())

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.lattice == other.lattice and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.lattice, self.bits.tobytes()))


def sample_configuration(
    lattice: LatticeBox, p: float, seed: int, replica_id: int = 0
) -> Configuration:
    """Independent Bernoulli(p) edges from a counter-based generator.

    Edge ``e`` is open iff the ``e``-th Philox uniform for key
    ``(seed, replica_id)`` is below ``p``.
    """
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    u = _philox_uniforms(seed, replica_id, lattice.n_edges)
    return Configuration.from_open(lattice, u < p, p=float(p), seed=int(seed), replica_id=int(replica_id))


def force_edge(config: Configuration, e: int, state: bool) -> Configuration:
    """Copy of ``config`` with edge ``e`` forced open (True) or closed (False)."""
    config.lattice.check_edge(e)
    state = bool(state)
    mask = config.open_edges.copy()
    mask[e] = state
    forced = dict(config.forced)
    forced[int(e)] = state
    return Configuration.from_open(
        config.lattice, mask, p=config.p, seed=config.seed,
        replica_id=config.replica_id, forced=forced,
    )


def full_configuration(lattice: LatticeBox, state: bool = True) -> Configuration:
    return Configuration.from_open(lattice, np.full(lattice.n_edges, bool(state)))


# -- dump format ---------------------------------------------------------


def dump_configuration(config: Configuration) -> str:
    """Header ``d L boundary p seed replica [origin=...]`` then the hex bitset."""
    lat = config.lattice
    side = str(lat.shape[0]) if len(set(lat.shape)) == 1 else ",".join(map(str, lat.shape))
    header = [str(lat.d), side, lat.boundary.value, repr(float(config.p)),
              str(config.seed), str(config.replica_id)]
    if any(lat.origin_offset):
        header.append("origin=" + ",".join(map(str, lat.origin_offset)))
    return " ".join(header) + "\n" + config.bits.tobytes().hex() + "\n"


def load_configuration(text: str) -> Configuration:
    lines = text.strip().splitlines()
    if len(lines) != 2:
        raise ParameterError("configuration dump must have a header and a bitset line")
    fields = lines[0].split()
    if len(fields) not in (6, 7):
        raise ParameterError(f"malformed header: {lines[0]!r}")
    d = int(fields[0])
    side = [int(s) for s in fields[1].split(",")]
    shape = side * d if len(side) == 1 else side
    offset = None
    if len(fields) == 7:
        if not fields[6].startswith("origin="):
            raise ParameterError(f"unknown header field {fields[6]!r}")
        offset = [int(s) for s in fields[6][len("origin="):].split(",")]
    lat = build_lattice(d, shape, fields[2], offset)
    bits = np.frombuffer(bytes.fromhex(lines[1]), dtype=np.uint8).copy()
    if bits.size != (lat.n_edges + 7) // 8:
        raise ParameterError("bitset length does not match the box")
    return Configuration(lat, bits, p=float(fields[3]), seed=int(fields[4]), replica_id=int(fields[5]))
