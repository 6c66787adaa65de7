"""Sparse finite-volume Schrödinger operators ``-Δ + V`` on boxes of Z^d.

Three assembly modes share one layout:

``full``
    ``H`` restricted to the box (simple restriction, no boundary term).
``trimmed``
    ``H`` restricted to the box sites outside Gamma. The diagonal keeps the
    full ``2d + V(x)``, also next to removed sites.
``penalized``
    ``H + t χ_Γ`` on the whole box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .lattice import BoxRegion, TrimPattern, enumerate_box

MODES = ("full", "trimmed", "penalized")
DENSE_LIMIT = 4096


class EmptyDomainError(ValueError):
    """Raised when trimming removes every site of the box."""


class Potential:
    """A bounded real potential on Z^d.

    Use the constructors :meth:`zero`, :meth:`periodic`, :meth:`explicit`
    and :meth:`callback` rather than ``__init__``.
    """

    def __init__(self, kind: str, dim: int, data=None, default: float = 0.0):
        self.kind = kind
        self.dim = dim
        self._data = data
        self.default = float(default)

    @classmethod
    def zero(cls, dim: int) -> "Potential":
        return cls("zero", dim)

    @classmethod
    def periodic(cls, values, dim: int | None = None) -> "Potential":
        """``V(x) = values[x mod p]`` where ``values`` has shape ``(p,) * d``."""
        values = np.asarray(values, dtype=float)
        if dim is None:
            dim = values.ndim
        if values.ndim == 1 and dim > 1:
            raise ValueError("periodic values must have shape (p,)*d")
        if len(set(values.shape)) != 1 or values.ndim != dim:
            raise ValueError(f"periodic values must have shape (p,)*{dim}, got {values.shape}")
        return cls("periodic", dim, values)

    @classmethod
    def explicit(cls, mapping: Mapping, dim: int, default: float = 0.0) -> "Potential":
        data = {tuple(int(c) for c in np.atleast_1d(k)): float(v) for k, v in mapping.items()}
        return cls("explicit", dim, data, default)

    @classmethod
    def callback(cls, fn: Callable[[np.ndarray], np.ndarray], dim: int) -> "Potential":
        """``fn`` maps an ``(n, d)`` site array to ``n`` values."""
        return cls("callback", dim, fn)

    @property
    def period(self) -> int | None:
        return self._data.shape[0] if self.kind == "periodic" else None

    def values(self, sites) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        if self.kind == "zero":
            return np.zeros(len(pts))
        if self.kind == "periodic":
            return self._data[tuple(np.mod(pts, self.period).T)]
        if self.kind == "explicit":
            return np.array([self._data.get(tuple(p), self.default) for p in pts.tolist()], dtype=float)
        out = np.asarray(self._data(pts), dtype=float).reshape(len(pts))
        if not np.all(np.isfinite(out)):
            raise ValueError("potential callback returned non-finite values on the window")
        return out

    def range(self, window: BoxRegion | None = None) -> tuple[float, float]:
        """``(inf V, sup V)`` over ``window``, or over all of Z^d if it can be known."""
        if window is not None:
            v = self.values(enumerate_box(window))
            return float(v.min()), float(v.max())
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "periodic":
            return float(self._data.min()), float(self._data.max())
        if self.kind == "explicit":
            vals = list(self._data.values()) + [self.default]
            return float(min(vals)), float(max(vals))
        raise ValueError("a callback potential needs an explicit window")

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero", "dim": self.dim}
        if self.kind == "periodic":
            return {"kind": "periodic", "dim": self.dim, "values": self._data.tolist()}
        if self.kind == "explicit":
            return {
                "kind": "explicit",
                "dim": self.dim,
                "sites": [list(k) for k in self._data],
                "values": list(self._data.values()),
                "default": self.default,
            }
        raise ValueError("callback potentials are not serializable")

    @classmethod
    def from_dict(cls, rec: dict) -> "Potential":
        kind = rec.get("kind", "zero")
        dim = int(rec["dim"])
        if kind == "zero":
            return cls.zero(dim)
        if kind == "periodic":
            return cls.periodic(rec["values"], dim)
        if kind == "explicit":
            return cls.explicit(dict(zip(map(tuple, rec["sites"]), rec["values"])), dim, rec.get("default", 0.0))
        raise ValueError(f"unknown potential kind {kind!r}")

    def __repr__(self):
        return f"Potential({self.kind!r}, dim={self.dim})"


def spread(V: Potential, window: BoxRegion | None = None) -> float:
    lo, hi = V.range(window)
    return hi - lo


def y_const(d: int, V: Potential | float, window: BoxRegion | None = None) -> float:
    """``2d + 1 + spread(V)``; a bare number is taken as the spread itself."""
    spr = float(V) if isinstance(V, (int, float)) else spread(V, window)
    return 2 * d + 1 + spr


@dataclass(frozen=True)
class LatticeOperator:
    """Real symmetric sparse matrix on an ordered list of lattice sites."""

    sites: np.ndarray
    matrix: sp.csr_matrix
    dim: int
    mode: str
    box: BoxRegion
    gamma: TrimPattern | None = None
    potential: Potential | None = None
    t: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def full_domain(self) -> bool:
        return self.mode in ("full", "penalized")

    def dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ValueError(f"dense conversion limited to n <= {DENSE_LIMIT}, got n = {self.n}")
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def indicator(self, A) -> np.ndarray:
        """``χ_A`` as a vector over the operator's sites (sites outside the domain are dropped)."""
        pts = np.atleast_2d(np.asarray(list(A), dtype=np.int64))
        lookup = {tuple(s): i for i, s in enumerate(self.sites.tolist())}
        v = np.zeros(self.n)
        for p in pts.tolist():
            i = lookup.get(tuple(p))
            if i is not None:
                v[i] = 1.0
        return v

    def write_coordinate(self, path) -> None:
        """Write ``row col value`` triples, 0-based, one per line."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in order:
                fh.write(f"{coo.row[i]} {coo.col[i]} {float(coo.data[i])!r}\n")


def _neighbour_pairs(box: BoxRegion) -> tuple[np.ndarray, np.ndarray]:
    grid = np.arange(len(box)).reshape(box.shape)
    left, right = [], []
    for axis in range(box.dim):
        a = np.take(grid, np.arange(box.width - 1), axis=axis)
        b = np.take(grid, np.arange(1, box.width), axis=axis)
        left.append(a.ravel())
        right.append(b.ravel())
    return np.concatenate(left), np.concatenate(right)


def assemble(
    box: BoxRegion,
    V: Potential | None = None,
    gamma: TrimPattern | None = None,
    mode: str = "full",
    t: float | None = None,
) -> LatticeOperator:
    """Assemble ``H^Λ``, its Γ-trimming, or ``H^Λ + t χ_Γ`` on ``box``."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    d = box.dim
    if V is None:
        V = Potential.zero(d)
    if V.dim != d:
        raise ValueError(f"potential has dimension {V.dim}, box has {d}")
    if mode in ("trimmed", "penalized") and gamma is None:
        raise ValueError(f"mode {mode!r} requires a trim pattern")
    if gamma is not None and gamma.dim != d:
        raise ValueError(f"trim pattern has dimension {gamma.dim}, box has {d}")
    if mode == "penalized":
        if t is None or not np.isfinite(t) or t < 0:
            raise ValueError(f"penalized mode requires a finite t >= 0, got {t!r}")
        t = float(t)

    sites = enumerate_box(box)
    diag = 2.0 * d + V.values(sites)
    in_gamma = gamma.contains(sites) if gamma is not None else np.zeros(len(sites), dtype=bool)
    if mode == "penalized":
        diag = diag + t * in_gamma

    keep = ~in_gamma if mode == "trimmed" else np.ones(len(sites), dtype=bool)
    if not keep.any():
        raise EmptyDomainError("trimming removes every site of the box")
    new_index = np.cumsum(keep) - 1

    i, j = _neighbour_pairs(box)
    both = keep[i] & keep[j]
    i, j = new_index[i[both]], new_index[j[both]]
    n = int(keep.sum())
    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    data = np.concatenate([diag[keep], -np.ones(2 * len(i))])
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return LatticeOperator(
        sites=sites[keep],
        matrix=mat,
        dim=d,
        mode=mode,
        box=box,
        gamma=gamma,
        potential=V,
        t=t if mode == "penalized" else None,
    )


def pf_companion(op: LatticeOperator) -> LatticeOperator:
    """Entrywise nonnegative ``T = 2d + 1 + V_∞ - H`` after shifting ``inf V`` to 0.

    The on-site energies are read off the assembled diagonal, so a
    penalized operator is treated as ``-Δ + (V + t χ_Γ)``. The applied
    shift is stored in ``meta['shift']``; ``T``'s largest eigenvalue is
    ``2d + 1 + V_∞ - (E + shift)`` with ``E`` the ground energy of ``op``.
    """
    if not op.full_domain:
        raise ValueError("the Perron-Frobenius companion needs a full-box operator")
    d = op.dim
    onsite = op.diagonal() - 2 * d
    shift = float(onsite.min())
    v_inf = float(onsite.max()) - shift
    top = 2 * d + 1 + v_inf
    T = (top + shift) * sp.identity(op.n, format="csr") - op.matrix
    T = sp.csr_matrix(T)
    T.eliminate_zeros()
    T.sort_indices()
    return LatticeOperator(
        sites=op.sites,
        matrix=T,
        dim=d,
        mode=op.mode,
        box=op.box,
        gamma=op.gamma,
        potential=op.potential,
        t=op.t,
        meta={"shift": shift, "top": top, "v_inf": v_inf},
    )
