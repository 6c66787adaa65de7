"""Ground energies, positive ground states, eigenvalue counts and E(t) curves."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hamiltonian import LatticeOperator, Potential, assemble, pf_companion, spread
from .lattice import BoxRegion, TrimPattern, enumerate_box, _unit_steps

DENSE_CROSSOVER = 512


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PerronFrobeniusError(RuntimeError):
    """A computed ground state of a full-box operator has a nonpositive entry."""


def _orthonormal_ones(n: int) -> np.ndarray:
    return np.full(n, 1.0 / math.sqrt(n))


def krylov_extreme(A, v0, *, largest=False, tol=1e-10, basis=None, max_restarts=500, deflate=None):
    """Restarted Lanczos for the smallest (or largest) eigenpair of symmetric ``A``.

    Each cycle builds an orthonormal Krylov basis with full
    reorthogonalization and restarts from the extreme Ritz vector.
    ``deflate`` is an optional orthonormal block whose span is projected out.

    Returns ``(value, vector, info)`` with ``info`` holding ``iterations``,
    ``restarts`` and the explicit ``residual`` ``‖Ax - θx‖``.
    """
    n = A.shape[0]
    if basis is None:
        basis = min(n, 160)
    basis = max(1, min(basis, n))
    Dfl = None if deflate is None else np.atleast_2d(np.asarray(deflate, dtype=float).T).T
    if Dfl is not None and Dfl.shape[0] != n:
        Dfl = Dfl.T

    def project(w):
        if Dfl is not None:
            w = w - Dfl @ (Dfl.T @ w)
        return w

    x = project(np.asarray(v0, dtype=float).copy())
    nx = np.linalg.norm(x)
    if nx == 0:
        raise SolverError("start vector vanishes after deflation")
    x /= nx
    iterations = 0
    residual = math.inf
    theta = math.nan
    for restart in range(max_restarts):
        Q = np.zeros((basis, n))
        alpha = np.zeros(basis)
        beta = np.zeros(basis)
        q = x
        k = 0
        for j in range(basis):
            Q[j] = q
            w = A @ q
            iterations += 1
            alpha[j] = q @ w
            w = project(w)
            # two passes of classical Gram-Schmidt keep the basis orthonormal to working precision
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
            k = j + 1
            beta[j] = np.linalg.norm(w)
            if beta[j] <= 1e-14 * max(1.0, abs(alpha[j])):
                break
            q = w / beta[j]
        # Rayleigh-Ritz on the full projected matrix rather than the recurrence tridiagonal
        Qk = Q[:k]
        AQ = np.asarray(A @ Qk.T)
        if Dfl is not None:
            AQ = AQ - Dfl @ (Dfl.T @ AQ)
        Tk = Qk @ AQ
        Tk = 0.5 * (Tk + Tk.T)
        vals, vecs = np.linalg.eigh(Tk)
        idx = -1 if largest else 0
        theta = float(vals[idx])
        s = vecs[:, idx]
        x = Qk.T @ s
        x /= np.linalg.norm(x)
        r = project(A @ x) - theta * x
        residual = float(np.linalg.norm(r))
        if residual <= tol:
            return theta, x, {"iterations": iterations, "restarts": restart, "residual": residual}
    raise SolverError(
        f"Krylov iteration did not converge: residual {residual:.3e} > tol {tol:.1e}",
        residual=residual,
        iterations=iterations,
    )


def _dense_lowest(op: LatticeOperator, k: int = 1, vectors: bool = False):
    H = op.dense()
    hi = min(k, op.n) - 1
    if vectors:
        return sla.eigh(H, subset_by_index=[0, hi])
    return sla.eigh(H, subset_by_index=[0, hi], eigvals_only=True)


def ground_energy(op: LatticeOperator, tol: float = 1e-10, method: str = "auto") -> float:
    """Smallest eigenvalue of ``op``.

    ``method`` is ``"dense"``, ``"krylov"`` or ``"auto"`` (dense for
    ``n <= 512``). The Krylov start vector is the normalized all-ones vector.
    """
    if op.n == 0:
        raise ValueError("operator has an empty domain")
    if method == "auto":
        method = "dense" if op.n <= DENSE_CROSSOVER else "krylov"
    if method == "dense":
        return float(_dense_lowest(op)[0])
    if method == "krylov":
        val, _, _ = krylov_extreme(op.matrix, _orthonormal_ones(op.n), tol=tol)
        return val
    raise ValueError(f"unknown method {method!r}")


def lowest_two(op: LatticeOperator, tol: float = 1e-10) -> tuple[float, float]:
    """The two smallest eigenvalues (the second is ``inf`` for a 1x1 operator)."""
    if op.n == 1:
        return float(op.matrix[0, 0]), math.inf
    if op.n <= DENSE_CROSSOVER:
        v = _dense_lowest(op, 2)
        return float(v[0]), float(v[1])
    e0, x0, _ = krylov_extreme(op.matrix, _orthonormal_ones(op.n), tol=tol)
    start = np.linspace(1.0, 2.0, op.n)
    e1, _, _ = krylov_extreme(op.matrix, start, tol=max(tol, 1e-8), deflate=x0[:, None])
    return e0, e1


@dataclass
class UCPCheck:
    """Pointwise lower bounds for a positive ground state.

    ``ball_margin[m]`` is ``min_x ψ(x) / (Y^-m Σ_{|x-y|_1 <= m} ψ(y))``;
    the inequality holds iff the margin is >= 1.
    """

    Y: float
    min_component: float
    log_uniform_bound: float
    ball_margin: dict
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


@dataclass
class GroundState:
    energy: float
    vector: np.ndarray
    gap: float
    solver_meta: dict
    ucp: UCPCheck | None = None


def ucp_check(op: LatticeOperator, psi: np.ndarray, ms=(1, 2)) -> UCPCheck:
    """Check ``ψ(x) >= Y^-m Σ_{|x-y|_1<=m} ψ(y)`` and ``min ψ >= Y^{-dL}``.

    ``Y = 2d + 1 + spread`` of the on-site energies of ``op`` on its box.
    """
    d = op.dim
    onsite = op.diagonal() - 2 * d
    Y = 2 * d + 1 + float(onsite.max() - onsite.min())
    box = op.box
    idx = box.index_of(op.sites)
    full = np.zeros(len(box))
    full[idx] = psi
    grid = full.reshape(box.shape)
    violations = 0
    margins = {}
    for m in ms:
        ball = np.zeros_like(grid)
        for off in enumerate_box(BoxRegion((0,) * d, 2 * m)).tolist():
            if sum(abs(c) for c in off) > m:
                continue
            ball += _shifted(grid, off)
        ratio = grid / (Y ** (-m) * ball)
        margins[m] = float(ratio.min())
        violations += int(np.count_nonzero(~(grid >= Y ** (-m) * ball)))
    log_bound = -d * float(box.side) * math.log(Y)
    pmin = float(psi.min())
    if not (pmin > 0 and math.log(pmin) >= log_bound):
        violations += 1
    return UCPCheck(Y, pmin, log_bound, margins, violations)


def _shifted(grid: np.ndarray, off) -> np.ndarray:
    """``out[x] = grid[x + off]`` with zeros outside."""
    out = np.zeros_like(grid)
    src, dst = [], []
    w = grid.shape[0]
    for o in off:
        if o >= 0:
            src.append(slice(o, w))
            dst.append(slice(0, w - o))
        else:
            src.append(slice(0, w + o))
            dst.append(slice(-o, w))
    out[tuple(dst)] = grid[tuple(src)]
    return out


def ground_state_pf(op: LatticeOperator, tol: float = 1e-11, max_polish: int = 200000) -> GroundState:
    """Strictly positive normalized ground state of a full-box operator.

    Works on the nonnegative companion ``T`` (see
    :func:`~trimspec.hamiltonian.pf_companion`) starting from the constant
    vector: Krylov-accelerated power iteration gets the dominant eigenvector
    of ``T``, then plain power steps (which never leave the positive cone)
    polish it until every component is stable to ~1e-13 relative.
    """
    if not op.full_domain:
        raise ValueError("ground_state_pf needs a full-box operator")
    T = pf_companion(op)
    Tm = T.matrix
    n = op.n
    x = _orthonormal_ones(n)
    meta = {"method": "pf-power", "iterations": 0}
    if n > 1:
        _, x, info = krylov_extreme(Tm, x, largest=True, tol=max(tol, 1e-13 * T.meta["top"]))
        meta["iterations"] += info["iterations"]
        x = np.abs(x)
        x /= np.linalg.norm(x)
    floor = np.finfo(float).tiny
    x = np.maximum(x, floor)
    steps = 0
    rel = math.inf
    for steps in range(1, max_polish + 1):
        y = Tm @ x
        y /= np.linalg.norm(y)
        rel = float(np.max(np.abs(y - x) / y))
        x = y
        if rel <= 1e-13:
            break
    meta["polish_steps"] = steps
    meta["polish_rel_change"] = rel
    Hx = op.matrix @ x
    energy = float(x @ Hx)
    residual = float(np.linalg.norm(Hx - energy * x))
    meta["iterations"] += steps
    meta["residual"] = residual
    if not np.all(x > 0):
        raise PerronFrobeniusError(f"ground state has {int(np.sum(x <= 0))} nonpositive entries")
    if residual > max(tol, 1e-12 * T.meta["top"]) * 10:
        raise SolverError(f"ground state residual {residual:.3e} above tolerance", residual, meta["iterations"])
    if n == 1:
        gap = math.inf
    elif n <= DENSE_CROSSOVER:
        gap = float(_dense_lowest(op, 2)[1]) - energy
    else:
        e1, _, _ = krylov_extreme(op.matrix, np.linspace(1.0, 2.0, n), tol=1e-8, deflate=x[:, None])
        gap = e1 - energy
    return GroundState(energy, x, gap, meta, ucp_check(op, x))


@dataclass(frozen=True)
class Inertia:
    negative: int
    zero: int
    positive: int
    shift: float
    perturbed: bool


def inertia(op_or_matrix, shift: float, scale: float | None = None, max_retries: int = 8) -> Inertia:
    """Sylvester inertia of ``H - shift`` from a Bunch-Kaufman LDLᵀ factorization.

    A (numerically) singular pivot means the shift hits an eigenvalue; the
    shift is then moved by ``1e-12 * scale`` and the factorization retried.
    """
    H = op_or_matrix.dense() if isinstance(op_or_matrix, LatticeOperator) else np.asarray(
        op_or_matrix.toarray() if sp.issparse(op_or_matrix) else op_or_matrix, dtype=float
    )
    n = H.shape[0]
    if scale is None:
        scale = max(1.0, float(np.abs(H).sum(axis=1).max()) if n else 1.0)
    s = float(shift)
    perturbed = False
    for _ in range(max_retries + 1):
        _, D, _ = sla.ldl(H - s * np.eye(n), lower=True)
        eig = _block_diag_eigs(D)
        zero = int(np.sum(np.abs(eig) <= 4 * np.finfo(float).eps * scale * max(n, 1)))
        if zero == 0:
            neg = int(np.sum(eig < 0))
            return Inertia(neg, 0, n - neg, s, perturbed)
        s += 1e-12 * scale
        perturbed = True
    neg = int(np.sum(eig < 0))
    return Inertia(neg, zero, n - neg - zero, s, perturbed)


def _block_diag_eigs(D: np.ndarray) -> np.ndarray:
    n = D.shape[0]
    out = []
    i = 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            out.extend(np.linalg.eigvalsh(D[i : i + 2, i : i + 2]))
            i += 2
        else:
            out.append(D[i, i])
            i += 1
    return np.asarray(out)


def count_eigs(op: LatticeOperator, a: float, b: float, info: bool = False):
    """Number of eigenvalues in the closed interval ``[a, b]``.

    Endpoints are widened by ``ε = 1e-12 ‖H‖``, so eigenvalues within ε
    of an endpoint count as inside.
    """
    if a > b:
        raise ValueError(f"empty interval [{a}, {b}]")
    H = op.dense()
    scale = max(1.0, float(np.abs(H).sum(axis=1).max()))
    eps = 1e-12 * scale
    n = op.n
    upper = n if math.isinf(b) and b > 0 else inertia(H, b + eps, scale).negative
    lower = 0 if math.isinf(a) and a < 0 else inertia(H, a - eps, scale).negative
    count = upper - lower
    if info:
        return count, {"eps": eps}
    return count


def periodic_ground_energy(
    V: Potential, d: int, gamma: TrimPattern | None = None, t: float = 0.0
) -> float:
    """Infimum of the spectrum of ``-Δ + V + t χ_Γ`` on all of Z^d for periodic data.

    Uses the periodic (zero quasi-momentum) cell problem on the torus of
    the common period, where the bottom of the spectrum is attained.
    """
    periods = [1]
    if V.kind == "periodic":
        periods.append(V.period)
    elif V.kind != "zero":
        raise ValueError("periodic_ground_energy needs a zero or periodic potential")
    if gamma is not None and t != 0:
        if not gamma.periodic:
            raise ValueError("periodic_ground_energy needs a periodic trim pattern")
        periods.append(gamma.period)
    p = math.lcm(*periods)
    cell = np.array(list(itertools.product(range(p), repeat=d)), dtype=np.int64)
    index = {tuple(c): i for i, c in enumerate(cell.tolist())}
    m = len(cell)
    H = np.zeros((m, m))
    diag = 2.0 * d + V.values(cell)
    if gamma is not None and t != 0:
        diag = diag + t * gamma.contains(cell)
    H[np.arange(m), np.arange(m)] = diag
    for i, c in enumerate(cell.tolist()):
        for e in _unit_steps(d):
            j = index[tuple((a + b) % p for a, b in zip(c, e))]
            H[i, j] -= 1.0
    return float(np.linalg.eigvalsh(H)[0])


@dataclass
class EnergyCurve:
    t_grid: np.ndarray
    energies: np.ndarray
    gaps: np.ndarray
    box: BoxRegion
    gamma: TrimPattern
    potential: Potential
    spr: float
    trimmed_energy: float | None
    tol: float = 1e-10

    @property
    def slopes(self) -> np.ndarray:
        """Forward differences ``(E(t_{i+1}) - E(t_i)) / (t_{i+1} - t_i)``."""
        return np.diff(self.energies) / np.diff(self.t_grid)

    @property
    def Y(self) -> float:
        return 2 * self.box.dim + 1 + self.spr

    def bound(self, Q: int, K: int) -> np.ndarray:
        d = self.box.dim
        return Q * (self.Y + self.t_grid) ** (-2.0 * d * K)

    def rows(self, Q: int | None = None, K: int | None = None):
        slopes = self.slopes
        bound = self.bound(Q, K) if Q is not None and K is not None else None
        for i, t in enumerate(self.t_grid):
            yield {
                "t": float(t),
                "energy": float(self.energies[i]),
                "fd_slope": float(slopes[i]) if i < len(slopes) else None,
                "bound": float(bound[i]) if bound is not None else None,
            }

    def write_csv(self, path, Q: int | None = None, K: int | None = None, header_line: str | None = None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_line:
                fh.write(header_line + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "energy", "fd_slope", "bound"])
            for r in self.rows(Q, K):
                w.writerow([_fmt(r[k]) for k in ("t", "energy", "fd_slope", "bound")])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def energy_curve(
    box: BoxRegion,
    gamma: TrimPattern,
    V: Potential | None,
    t_grid,
    tol: float = 1e-10,
    with_trimmed: bool = True,
) -> EnergyCurve:
    """Ground energy of ``H^Λ + t χ_Γ`` along an ascending grid of ``t >= 0``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be nonnegative and strictly ascending")
    if V is None:
        V = Potential.zero(box.dim)
    energies = np.empty(len(t_grid))
    gaps = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        op = assemble(box, V, gamma, "penalized", float(t))
        e0, e1 = lowest_two(op, tol)
        energies[i] = e0
        gaps[i] = e1 - e0
    trimmed = None
    if with_trimmed and gamma is not None:
        trimmed = ground_energy(assemble(box, V, gamma, "trimmed"), tol)
    return EnergyCurve(t_grid, energies, gaps, box, gamma, V, spread(V, box), trimmed, tol)


@dataclass
class DerivativePoint:
    t: float
    slope: float
    bound: float
    slack: float
    ok: bool


@dataclass
class DerivativeReport:
    Q: int
    K: int
    Y: float
    points: list
    proof_geometry: bool
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def derivative_check(curve: EnergyCurve, Q: int, K: int, tol: float | None = None) -> DerivativeReport:
    """Compare forward-difference slopes of ``E(t)`` with ``Q (Y + t)^{-2dK}``.

    With ``tol=None`` each point gets its own slack: solver error
    ``2 tol_solver / h`` plus the curvature allowance ``h / gap`` that
    follows from ``|E''| <= 2 / gap``.
    """
    d = curve.box.dim
    slopes = curve.slopes
    bound = curve.bound(Q, K)
    h = np.diff(curve.t_grid)
    side = curve.box.side
    J = side / K
    geometry = J.denominator == 1 and J.numerator % 2 == 1 and not curve.box.open
    points = []
    bad = []
    for i in range(len(slopes)):
        if tol is None:
            gap = min(curve.gaps[i], curve.gaps[i + 1])
            slack = 2 * curve.tol / h[i] + (h[i] / gap if gap > 0 else math.inf)
        else:
            slack = tol
        ok = bool(slopes[i] >= bound[i] - slack)
        p = DerivativePoint(float(curve.t_grid[i]), float(slopes[i]), float(bound[i]), float(slack), ok)
        points.append(p)
        if not ok:
            bad.append(
                {
                    "box": curve.box.to_dict(),
                    "gamma": curve.gamma.to_dict(),
                    "t": p.t,
                    "slope": p.slope,
                    "bound": p.bound,
                }
            )
    return DerivativeReport(Q, K, curve.Y, points, geometry, bad)
