"""Boxes, trimming patterns and boundaries on the integer lattice Z^d.

Sites are integer tuples. Boxes enumerate their sites in lexicographic
order (first coordinate slowest), which fixes the row layout of every
operator assembled on them.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np


def k_star(K: int) -> int:
    """Side length (in sites) of the closed box of side ``K``.

    Returns ``K`` for odd ``K`` and ``K + 1`` for even ``K``.
    """
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    K = int(K)
    return K if K % 2 else K + 1


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box ``{y : |y - center|_inf <= side/2}`` (``< side/2`` if open)."""

    center: tuple
    side: Fraction
    open: bool = False

    def __post_init__(self):
        center = tuple(int(c) for c in np.atleast_1d(self.center))
        side = _as_fraction(self.side)
        if len(center) == 0:
            raise ValueError("center must have at least one coordinate")
        if side <= 0:
            raise ValueError(f"side must be positive, got {self.side!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", side)

    @classmethod
    def cube(cls, d: int, side, center=None, open: bool = False) -> "BoxRegion":
        if center is None:
            center = (0,) * d
        return cls(tuple(center), side, open)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> int:
        """Largest integer offset ``r`` with ``center + r e_i`` inside the box."""
        half = self.side / 2
        if self.open:
            r = math.ceil(half) - 1
        else:
            r = math.floor(half)
        return int(r)

    @property
    def width(self) -> int:
        """Number of sites along each axis."""
        return 2 * self.radius + 1 if self.radius >= 0 else 0

    @property
    def shape(self) -> tuple:
        return (self.width,) * self.dim

    def __len__(self) -> int:
        return self.width**self.dim

    def lower(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.int64) - self.radius

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        dev = np.abs(pts - np.asarray(self.center, dtype=np.int64)).max(axis=1)
        return dev <= self.radius

    def index_of(self, points) -> np.ndarray:
        """Lexicographic position of each site; -1 for sites outside the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        rel = pts - self.lower()
        w = self.width
        inside = np.all((rel >= 0) & (rel < w), axis=1)
        flat = np.zeros(len(pts), dtype=np.int64)
        for k in range(self.dim):
            flat = flat * w + rel[:, k]
        return np.where(inside, flat, -1)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "side": str(self.side), "open": self.open}


def enumerate_box(b: BoxRegion) -> np.ndarray:
    """All sites of ``b`` as an ``(n, d)`` integer array in lexicographic order."""
    if b.width == 0:
        return np.zeros((0, b.dim), dtype=np.int64)
    axes = [np.arange(c - b.radius, c + b.radius + 1, dtype=np.int64) for c in b.center]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def _site_tuple(x) -> tuple:
    return tuple(int(c) for c in np.atleast_1d(x))


@dataclass(frozen=True)
class TrimPattern:
    """A set Gamma of lattice sites.

    With ``period = K > 0`` the set is ``{x : x mod K in sites}`` and
    ``sites`` holds residues in ``{0..K-1}^d``. With ``period = 0`` the
    set is exactly ``sites`` (an explicit, finite sample of Gamma).
    """

    dim: int
    period: int
    sites: frozenset
    claimed_Q: int = 1
    _table: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sites = frozenset(_site_tuple(s) for s in self.sites)
        for s in sites:
            if len(s) != self.dim:
                raise ValueError(f"site {s} does not have dimension {self.dim}")
        if self.period < 0:
            raise ValueError("period must be >= 0")
        if self.period > 0:
            bad = [s for s in sites if any(c < 0 or c >= self.period for c in s)]
            if bad:
                raise ValueError(f"periodic sites must lie in the fundamental window, got {sorted(bad)[:3]}")
            table = np.zeros((self.period,) * self.dim, dtype=bool)
            for s in sites:
                table[s] = True
            object.__setattr__(self, "_table", table)
        object.__setattr__(self, "sites", sites)

    @classmethod
    def sublattice(cls, K: int, d: int) -> "TrimPattern":
        """``K Z^d``, which is (K, 1)-relatively dense."""
        return cls(d, K, frozenset({(0,) * d}), 1)

    @classmethod
    def everything(cls, d: int) -> "TrimPattern":
        return cls(d, 1, frozenset({(0,) * d}), 1)

    @classmethod
    def explicit(cls, sites: Iterable, d: int, Q: int = 1) -> "TrimPattern":
        return cls(d, 0, frozenset(_site_tuple(s) for s in sites), Q)

    @property
    def periodic(self) -> bool:
        return self.period > 0

    @property
    def is_everything(self) -> bool:
        return self.periodic and bool(self._table.all())

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, pattern has {self.dim}")
        if self.periodic:
            res = np.mod(pts, self.period)
            return self._table[tuple(res.T)]
        return np.fromiter((tuple(p) in self.sites for p in pts.tolist()), dtype=bool, count=len(pts))

    def __contains__(self, x) -> bool:
        return bool(self.contains([_site_tuple(x)])[0])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "period": self.period,
            "sites": [list(s) for s in sorted(self.sites)],
            "Q": self.claimed_Q,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "TrimPattern":
        try:
            return cls(int(rec["dim"]), int(rec["period"]), frozenset(map(tuple, rec["sites"])), int(rec.get("Q", 1)))
        except KeyError as exc:
            raise ValueError(f"trim pattern record is missing field {exc.args[0]!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "TrimPattern":
        return cls.from_dict(json.loads(text))


class DensityCheck(NamedTuple):
    ok: bool
    violation: tuple | None
    exact: bool
    """True when the verdict covers all of Z^d, False when window-local."""


def _open_cell_offsets(K: int, d: int) -> np.ndarray:
    r = math.ceil(K / 2) - 1
    return enumerate_box(BoxRegion((0,) * d, K, open=True)) if r >= 0 else np.zeros((0, d), dtype=np.int64)


def check_relatively_dense(p: TrimPattern, K: int, Q: int, window: BoxRegion | None = None) -> DensityCheck:
    """Check ``|Gamma ∩ Λ⁰_K(ζ)| >= Q`` for cell centres ``ζ ∈ K Z^d``.

    Periodic patterns are decided exactly over all of Z^d by scanning one
    common period of cell centres; ``window`` is then ignored. Explicit
    patterns are only checked on cells whose open cell lies in ``window``.
    """
    if K < 1 or Q < 1:
        raise ValueError("K and Q must be positive integers")
    d = p.dim
    offsets = _open_cell_offsets(K, d)
    if p.periodic:
        m = math.lcm(p.period, K) // K
        for j in itertools.product(range(m), repeat=d):
            zeta = np.asarray(j, dtype=np.int64) * K
            if p.contains(zeta + offsets).sum() < Q:
                return DensityCheck(False, tuple(int(z) for z in zeta), True)
        return DensityCheck(True, None, True)

    if window is None or len(window) == 0:
        raise ValueError("an explicit pattern needs a non-empty window")
    sites = enumerate_box(window)
    centres = sites[np.all(np.mod(sites, K) == 0, axis=1)]
    tested = 0
    for zeta in centres:
        cell = zeta + offsets
        if not window.contains(cell).all():
            continue
        tested += 1
        if p.contains(cell).sum() < Q:
            return DensityCheck(False, tuple(int(z) for z in zeta), False)
    if tested == 0:
        raise ValueError(f"window {window.to_dict()} contains no full open cell of side {K}")
    return DensityCheck(True, None, False)


@dataclass(frozen=True)
class BoundaryData:
    edge_list: frozenset
    eta: dict
    inner: frozenset
    outer: frozenset

    @property
    def size(self) -> int:
        return len(self.edge_list)


def _unit_steps(d: int):
    for k in range(d):
        for s in (1, -1):
            e = [0] * d
            e[k] = s
            yield tuple(e)


def boundary(A: Iterable, d: int) -> BoundaryData:
    """Edge boundary of a finite set ``A`` in Z^d, counted against all of Z^d."""
    A = {_site_tuple(x) for x in A}
    steps = list(_unit_steps(d))
    edges = set()
    eta = {}
    for x in A:
        if len(x) != d:
            raise ValueError(f"site {x} does not have dimension {d}")
        n = 0
        for e in steps:
            y = tuple(a + b for a, b in zip(x, e))
            if y not in A:
                edges.add((x, y))
                n += 1
        eta[x] = n
    inner = frozenset(x for x, n in eta.items() if n >= 1)
    outer = frozenset(y for _, y in edges)
    return BoundaryData(frozenset(edges), eta, inner, outer)


def _bfs(B: set, source: tuple, d: int) -> dict:
    dist = {source: 0}
    queue = deque([source])
    steps = list(_unit_steps(d))
    while queue:
        x = queue.popleft()
        for e in steps:
            y = tuple(a + b for a, b in zip(x, e))
            if y in B and y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def _as_site_set(B) -> set:
    if isinstance(B, BoxRegion):
        return set(map(tuple, enumerate_box(B).tolist()))
    return {_site_tuple(x) for x in B}


def graph_distance(B, x, y) -> int:
    """Length of a shortest nearest-neighbour path from ``x`` to ``y`` inside ``B``."""
    B = _as_site_set(B)
    x, y = _site_tuple(x), _site_tuple(y)
    if x not in B or y not in B:
        raise ValueError("both endpoints must belong to B")
    dist = _bfs(B, x, len(x))
    if len(dist) != len(B):
        raise ValueError("B is not connected")
    return dist[y]


def diameter(B) -> int:
    """Graph diameter of the connected site set ``B``."""
    B = _as_site_set(B)
    if not B:
        raise ValueError("B is empty")
    d = len(next(iter(B)))
    best = 0
    for x in B:
        dist = _bfs(B, x, d)
        if len(dist) != len(B):
            raise ValueError("B is not connected")
        best = max(best, max(dist.values()))
    return best
