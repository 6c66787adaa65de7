"""Cheeger ratios ``⟨χ_A, M χ_A⟩ / |A|`` and their minima over finite windows.

For the trimmed Laplacian the ratio of a set ``A`` outside Gamma is
``|∂A| / |A|``; for the penalized operator ``-Δ + t χ_Γ`` it is
``(|∂A| + t |A ∩ Γ|) / |A|``. Boundaries are always counted in all of Z^d.

Only connected sets are enumerated. If ``A`` splits into components
``A_1, ..., A_r`` with no edges between them, numerator and denominator are
both additive, so the ratio of ``A`` is a weighted mean of the component
ratios and never beats the best component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import BoxRegion, TrimPattern, _site_tuple, _unit_steps, boundary, enumerate_box, k_star

EXHAUSTIVE_LIMIT = 24


class WindowTooLargeError(ValueError):
    pass


@dataclass
class CheegerResult:
    """Minimum Cheeger ratio over the connected subsets of a window.

    ``value`` is an upper bound on the infimum over all finite subsets of
    Z^d; it is the exact window minimum when ``exhaustive`` is true.
    """

    value: float
    minimizer: tuple
    window: BoxRegion
    mode: str
    t: float | None
    exhaustive: bool
    n_subsets: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "kind": "upper bound on beta",
            "minimizer": [list(s) for s in self.minimizer],
            "window": self.window.to_dict(),
            "mode": self.mode,
            "t": self.t,
            "exhaustive": self.exhaustive,
            "n_subsets": self.n_subsets,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def beta_of_set(A, gamma: TrimPattern, mode: str = "trimmed", t: float | None = None) -> float:
    """Cheeger ratio of the finite set ``A``."""
    A = {_site_tuple(x) for x in A}
    if not A:
        raise ValueError("A must be nonempty")
    hits = int(gamma.contains(sorted(A)).sum())
    b = boundary(A, gamma.dim).size
    if mode == "trimmed":
        if hits:
            raise ValueError("A must avoid Gamma in trimmed mode")
        return b / len(A)
    if mode == "penalized":
        if t is None or t < 0:
            raise ValueError("penalized mode needs t >= 0")
        return (b + t * hits) / len(A)
    raise ValueError(f"unknown mode {mode!r}")


class Isoperimetry(NamedTuple):
    holds: bool
    slack: float


def isoperimetric_check(A, gamma: TrimPattern, K: int) -> Isoperimetry:
    """Check ``|∂A| >= K_*^{-d} |A|`` for a finite ``A`` outside Gamma."""
    A = {_site_tuple(x) for x in A}
    if A and gamma.contains(sorted(A)).any():
        raise ValueError("A must avoid Gamma")
    slack = boundary(A, gamma.dim).size - len(A) / k_star(K) ** gamma.dim
    return Isoperimetry(slack >= 0, float(slack))


def beta_bruteforce(
    window: BoxRegion,
    gamma: TrimPattern,
    mode: str = "trimmed",
    t: float | None = None,
    max_cardinality: int | None = None,
) -> CheegerResult:
    """Minimize the Cheeger ratio over connected subsets of ``window``.

    Admissible sites are the window sites outside Gamma (trimmed mode) or all
    window sites (penalized mode). Without ``max_cardinality`` at most 24
    admissible sites are allowed.
    """
    if mode not in ("trimmed", "penalized"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "penalized" and (t is None or t < 0):
        raise ValueError("penalized mode needs t >= 0")
    d = window.dim
    sites = enumerate_box(window)
    in_gamma = gamma.contains(sites)
    admissible = ~in_gamma if mode == "trimmed" else np.ones(len(sites), dtype=bool)
    nodes = [tuple(s) for s in sites[admissible].tolist()]
    g = [bool(x) for x in in_gamma[admissible]]
    n = len(nodes)
    if n == 0:
        raise ValueError("window has no admissible sites")
    if max_cardinality is None and n > EXHAUSTIVE_LIMIT:
        raise WindowTooLargeError(
            f"{n} admissible sites exceed the exhaustive limit {EXHAUSTIVE_LIMIT}; pass max_cardinality"
        )
    cap = n if max_cardinality is None else min(max_cardinality, n)
    exhaustive = cap >= n

    index = {s: i for i, s in enumerate(nodes)}
    steps = list(_unit_steps(d))
    nbrs = [
        [index[y] for y in (tuple(a + b for a, b in zip(x, e)) for e in steps) if y in index] for x in nodes
    ]
    weight = 0.0 if mode == "trimmed" else float(t)
    two_d = 2 * d

    best = [np.inf, ()]
    count = [0]

    def visit(sub, sub_set, closed, ext, root, bnd, hits):
        count[0] += 1
        val = (bnd + weight * hits) / len(sub)
        if val < best[0]:
            best[0], best[1] = val, tuple(sub)
        if len(sub) == cap:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new_ext = ext + [u for u in nbrs[w] if u > root and u not in closed]
            inside = sum(1 for u in nbrs[w] if u in sub_set)
            sub.append(w)
            sub_set.add(w)
            added = [u for u in nbrs[w] + [w] if u not in closed]
            closed.update(added)
            visit(sub, sub_set, closed, new_ext, root, bnd + two_d - 2 * inside, hits + g[w])
            closed.difference_update(added)
            sub_set.discard(w)
            sub.pop()

    for v in range(n):
        visit([v], {v}, set(nbrs[v]) | {v}, [u for u in nbrs[v] if u > v], v, two_d, int(g[v]))

    minimizer = tuple(sorted(nodes[i] for i in best[1]))
    return CheegerResult(float(best[0]), minimizer, window, mode, t if mode == "penalized" else None, exhaustive, count[0])
