"""Acceptance battery: each check returns a :class:`CheckResult`.

``run_suite("fast")`` runs the exact-value checks in a few seconds;
``run_suite("full")`` adds the randomized and Monte Carlo checks.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import anderson as an
from .bounds import ModelParams, cheeger_free_lower, delta_t_lower, kappa_lower, sandwich_t
from .cheeger import beta_bruteforce
from .hamiltonian import Potential, assemble
from .lattice import BoxRegion, TrimPattern, check_relatively_dense, enumerate_box, k_star
from .spectra import count_eigs, energy_curve, ground_energy, ground_state_pf, derivative_check

LEVELS = ("fast", "full")


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    runtime: float
    limit: float | None
    detail: dict = field(default_factory=dict)
    counterexamples: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.id:2d} {self.name} ({self.runtime:.2f}s)"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "passed": self.passed,
            "runtime": self.runtime,
            "limit": self.limit,
            "detail": self.detail,
            "counterexamples": self.counterexamples[:10],
        }


def _timed(cid: int, name: str, limit: float | None):
    def wrap(fn):
        def run(*args, **kwargs) -> CheckResult:
            t0 = time.perf_counter()
            ok, detail, bad = fn(*args, **kwargs)
            dt = time.perf_counter() - t0
            within = limit is None or dt < limit
            if not within:
                detail = {**detail, "over_time_limit": True}
            return CheckResult(cid, name, bool(ok and within), dt, limit, detail, bad)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def random_pattern(rng: np.random.Generator, d: int, K: int) -> tuple[TrimPattern, int]:
    """A K-periodic proper subset of Z^d together with its best Q."""
    residues = list(itertools.product(range(K), repeat=d))
    while True:
        k = int(rng.integers(1, len(residues)))
        chosen = [residues[i] for i in rng.choice(len(residues), size=k, replace=False)]
        g = TrimPattern(d, K, frozenset(chosen), 1)
        # every cell sees the same residues, so the cell at the origin fixes Q
        Q = int(g.contains(enumerate_box(BoxRegion((0,) * d, K, open=True))).sum())
        if Q >= 1 and check_relatively_dense(g, K, Q).ok:
            return TrimPattern(d, K, frozenset(chosen), Q), Q


def random_potential(rng: np.random.Generator, box: BoxRegion, spr_max: float = 4.0) -> Potential:
    sites = enumerate_box(box)
    spr = rng.uniform(0, spr_max)
    vals = rng.uniform(0, spr, size=len(sites))
    return Potential.explicit({tuple(s): v for s, v in zip(sites.tolist(), vals)}, box.dim, 0.0)


def _proof_box(rng: np.random.Generator, d: int, K: int) -> BoxRegion:
    J = int(rng.choice([1, 3]) if d == 2 else rng.choice([3, 5, 7]))
    center = tuple(int(c) for c in rng.integers(-3, 4, size=d))
    return BoxRegion(center, K * J)


@_timed(1, "exact trimmed energies of 2Z and 3Z", 1.0)
def check_exact_trimmed(tol: float = 1e-10):
    detail, bad = {}, []
    for K, expected in ((2, 2.0), (3, 1.0)):
        g = TrimPattern.sublattice(K, 1)
        for L, c in ((31, 0), (12, 5), (7, -3)):
            e = ground_energy(assemble(BoxRegion((c,), L), None, g, "trimmed"))
            detail[f"K={K},L={L},c={c}"] = e
            if abs(e - expected) > tol:
                bad.append({"K": K, "L": L, "center": c, "energy": e, "expected": expected})
    return not bad, detail, bad


@_timed(2, "lifting bounds, sandwich and monotonicity on random instances", 60.0)
def check_bound_hierarchy(seed: int = 0, n_instances: int = 200, tol: float = 1e-8):
    rng = np.random.default_rng(seed)
    t_grid = np.concatenate([[0.0], np.logspace(-1, 2, 9)])
    bad = []
    worst = {"delta_t": math.inf, "sandwich_lower": math.inf, "upper": math.inf, "monotone": math.inf}
    for n in range(n_instances):
        d = int(rng.integers(1, 3))
        K = int(rng.integers(2, 5))
        g, Q = random_pattern(rng, d, K)
        box = _proof_box(rng, d, K)
        V = random_potential(rng, box)
        curve = energy_curve(box, g, V, t_grid)
        E, Eg = curve.energies, curve.trimmed_energy
        p = ModelParams(d, K, Q, curve.spr)
        delta = Eg - E[0]
        for i, t in enumerate(t_grid):
            dt = E[i] - E[0]
            lo = delta_t_lower(p, t)
            sw = sandwich_t(p, t, delta)
            margins = {
                "delta_t": dt - lo,
                "sandwich_lower": dt - max(sw.lower_15, sw.lower_210, sw.lower_root),
                "upper": min(sw.upper, delta) - dt,
            }
            for k, v in margins.items():
                worst[k] = min(worst[k], v)
                if v < -tol:
                    bad.append({"instance": n, "check": k, "t": float(t), "margin": v, "d": d, "K": K, "Q": Q,
                                "box": box.to_dict(), "gamma": g.to_dict()})
        mono = float(np.min(np.diff(E)))
        worst["monotone"] = min(worst["monotone"], mono, Eg - E[-1])
        if mono < -tol or E[-1] > Eg + tol:
            bad.append({"instance": n, "check": "monotone", "min_step": mono, "gap_to_trimmed": Eg - E[-1]})
    return not bad, {"instances": n_instances, "worst_margins": worst}, bad


@_timed(3, "derivative lower bound on boxes R = KJ, J odd", 60.0)
def check_derivative_bound(seed: int = 1, n_instances: int = 50, tol: float = 1e-6):
    rng = np.random.default_rng(seed)
    t_grid = np.linspace(0.0, 10.0, 41)
    bad = []
    worst = math.inf
    for n in range(n_instances):
        d = int(rng.integers(1, 3))
        K = int(rng.integers(2, 5))
        g, Q = random_pattern(rng, d, K)
        box = _proof_box(rng, d, K)
        V = random_potential(rng, box)
        curve = energy_curve(box, g, V, t_grid, with_trimmed=False)
        rep = derivative_check(curve, Q, K, tol=tol)
        worst = min(worst, min(p.slope - p.bound for p in rep.points))
        if not rep.proof_geometry:
            bad.append({"instance": n, "error": "box does not have the R = KJ geometry"})
        bad.extend({"instance": n, **c} for c in rep.counterexamples)
    return not bad, {"instances": n_instances, "worst_margin": worst}, bad


@_timed(4, "positive ground states and quantitative unique continuation", 30.0)
def check_ucp(seed: int = 2, n_instances: int = 100):
    bad = []
    op = assemble(BoxRegion.cube(1, 3))
    gs = ground_state_pf(op)
    psi_ref = np.array([0.5, math.sqrt(2) / 2, 0.5])
    e_err = abs(gs.energy - (2 - math.sqrt(2)))
    v_err = float(np.max(np.abs(gs.vector - psi_ref)))
    if e_err > 1e-12 or v_err > 1e-12:
        bad.append({"spot": "d=1 L=3", "energy_error": e_err, "vector_error": v_err})
    rng = np.random.default_rng(seed)
    worst = math.inf
    for n in range(n_instances):
        d = int(rng.integers(1, 3))
        L = int(rng.integers(1, 12))
        box = BoxRegion.cube(d, L, tuple(int(c) for c in rng.integers(-5, 6, size=d)))
        V = random_potential(rng, box, spr_max=6.0)
        gs = ground_state_pf(assemble(box, V))
        u = gs.ucp
        if u.ball_margin:
            worst = min(worst, min(u.ball_margin.values()))
        if not (u.ok and np.all(gs.vector > 0)):
            bad.append({"instance": n, "d": d, "L": L, "violations": u.violations[:3]})
    return not bad, {"spot_energy_error": e_err, "spot_vector_error": v_err, "worst_ball_margin": worst}, bad


def _cheeger_cases(rng: np.random.Generator):
    cases = [
        (TrimPattern.sublattice(2, 1), 2, BoxRegion.cube(1, 12), BoxRegion.cube(1, 6)),
        (TrimPattern.sublattice(3, 1), 3, BoxRegion.cube(1, 12), BoxRegion.cube(1, 6)),
        (TrimPattern.sublattice(2, 2), 2, BoxRegion.cube(2, 4), BoxRegion.cube(2, 2)),
    ]
    for _ in range(4):
        K = int(rng.integers(2, 5))
        g, _ = random_pattern(rng, 1, K)
        cases.append((g, K, BoxRegion.cube(1, 14), BoxRegion.cube(1, 6)))
    for _ in range(2):
        g, _ = random_pattern(rng, 2, 2)
        cases.append((g, 2, BoxRegion.cube(2, 4), BoxRegion.cube(2, 2)))
    return cases


@_timed(5, "Cheeger constants and the isoperimetric energy bound", 120.0)
def check_cheeger(seed: int = 3, tol: float = 1e-12):
    """``beta(t) >= min(beta, 1)`` is tested from ``t = 2d - 1`` as stated.

    ``detail['from_2d_plus_1_ok']`` records whether it holds from ``t = 2d + 1``.
    """
    rng = np.random.default_rng(seed)
    bad, detail = [], []
    late_ok = True
    for g, K, window, small in _cheeger_cases(rng):
        d = g.dim
        beta = beta_bruteforce(window, g).value
        floor = 1.0 / k_star(K) ** d
        E = ground_energy(assemble(BoxRegion.cube(d, 4 * k_star(K) if d == 1 else 2 * k_star(K)), None, g, "trimmed"))
        e_floor = cheeger_free_lower(d, K)
        beta_small = beta_bruteforce(small, g).value
        t_grid = sorted({0.0, 0.5, 1.0, 2 * d - 1, 2 * d, 2 * d + 1, 4 * d, 10.0, 100.0})
        bt = [beta_bruteforce(small, g, "penalized", t).value for t in t_grid]
        rec = {"gamma": g.to_dict(), "beta": beta, "floor": floor, "E_trimmed": E, "E_floor": e_floor,
               "beta_t": dict(zip(map(float, t_grid), bt)), "beta_small": beta_small}
        detail.append(rec)
        if beta < floor - tol:
            bad.append({**rec, "check": "beta >= K_*^-d"})
        if E < e_floor - tol:
            bad.append({**rec, "check": "E_trimmed >= 1/(4d K_*^2d)"})
        if any(b2 < b1 - tol for b1, b2 in zip(bt, bt[1:])):
            bad.append({**rec, "check": "beta(t) nondecreasing"})
        for t, b in zip(t_grid, bt):
            low = b < min(beta_small, 1.0) - tol
            if t >= 2 * d - 1 and low:
                bad.append({**rec, "check": "beta(t) >= min(beta, 1)", "t": t})
            if t >= 2 * d + 1 and low:
                late_ok = False
    return not bad, {"cases": detail, "from_2d_plus_1_ok": late_ok}, bad


def wegner_model(L: int = 50, lam: float = 2.0) -> an.AndersonModel:
    return an.AndersonModel(Potential.zero(1), TrimPattern.sublattice(2, 1), an.SiteDistribution.uniform(0, 1),
                            lam, BoxRegion.cube(1, L))


@_timed(6, "Wegner estimate, Monte Carlo", 300.0)
def check_wegner(seed: int = 4, n_samples: int = 2000):
    rep = an.wegner_experiment(wegner_model(), (0.0, 0.1), 0.5, n_samples, seed, "numeric")
    detail = rep.to_dict()
    return rep.passed, detail, [] if rep.passed else [detail]


PVP_LAMBDA = 0.002
PVP_E1 = 0.0122


@_timed(7, "projection inequality P chi P >= kappa P", 120.0)
def check_pvp(seed: int = 5, n_samples: int = 100):
    model = wegner_model(L=30, lam=PVP_LAMBDA)
    rep = an.pvp_check(model, PVP_E1, seed, n_samples)
    detail = {"kappa_lb": rep.kappa_lb, "n_vacuous": rep.n_vacuous, "min_eig": rep.min_value,
              "n_samples": n_samples, "lambda": PVP_LAMBDA, "E1": PVP_E1}
    ok = rep.passed and rep.n_vacuous < n_samples
    return ok, detail, rep.violations


@_timed(8, "single-site spectral averaging", 60.0)
def check_spectral_averaging(seed: int = 6, n_intervals: int = 50):
    rng = np.random.default_rng(seed)
    model = wegner_model(L=20, lam=1.0)
    gsites = model.gamma_sites()
    bad, worst = [], math.inf
    for k in range(n_intervals):
        a = float(rng.uniform(-0.5, 4.5))
        b = a + float(rng.uniform(0.0, 0.5))
        zeta = tuple(gsites[rng.integers(len(gsites))].tolist())
        rep = an.spectral_averaging_check(model, zeta, (a, b), 512, seed, k)
        worst = min(worst, rep.bound + rep.error_bound - rep.integral)
        if not rep.passed:
            bad.append({"interval": (a, b), "site": zeta, "integral": rep.integral, "bound": rep.bound,
                        "error_bound": rep.error_bound})
    return not bad, {"intervals": n_intervals, "worst_margin": worst}, bad


@_timed(9, "lifting-rate arithmetic", None)
def check_kappa_arithmetic(tol: float = 1e-12):
    p = ModelParams(1, 2, 1, 0.0, 0.0)
    E1 = 1 / 162
    kb = kappa_lower(p, E1)
    Z_ref = 1.25 * (2 ** (1 / 3) - 1)
    k_ref = 0.2 * ((1 + Z_ref) * 3) ** -4
    kn, s = an.kappa_numeric(wegner_model(L=20, lam=1.0), E1)
    detail = {"Z": kb.Z, "Z_ref": Z_ref, "kappa_lb": kb.kappa_lb, "kappa_ref": k_ref, "kappa_numeric": kn, "s": s}
    bad = []
    if abs(kb.Z - Z_ref) > tol or abs(kb.kappa_lb - k_ref) > tol:
        bad.append({"check": "closed form", **detail})
    if not kb.kappa_lb <= kn:
        bad.append({"check": "analytic <= numeric", **detail})
    return not bad, detail, bad


def _random_operator(rng: np.random.Generator):
    d = int(rng.integers(1, 3))
    L = int(rng.integers(1, 200)) if d == 1 else int(rng.integers(1, 14))
    box = BoxRegion.cube(d, L, tuple(int(c) for c in rng.integers(-4, 5, size=d)))
    V = random_potential(rng, box, spr_max=8.0)
    mode = str(rng.choice(["full", "trimmed", "penalized"]))
    K = int(rng.integers(2, 5))
    g, _ = random_pattern(rng, d, K)
    try:
        return assemble(box, V, g, mode, float(rng.uniform(0, 10)))
    except ValueError:
        return assemble(box, V)


@_timed(10, "eigenvalue counting against dense eigendecomposition", None)
def check_counting(seed: int = 7, n_instances: int = 100, n_intervals: int = 50):
    rng = np.random.default_rng(seed)
    bad = []
    total = 0
    for n in range(n_instances):
        op = _random_operator(rng)
        H = op.dense()
        w = np.linalg.eigvalsh(H)
        eps = 1e-12 * max(1.0, float(np.abs(H).sum(axis=1).max()))
        lo, hi = w[0] - 1, w[-1] + 1
        for k in range(n_intervals):
            if k % 5 == 0:
                i, j = sorted(rng.integers(0, len(w), size=2))
                a, b = float(w[i]), float(w[j])
            else:
                a, b = sorted(rng.uniform(lo, hi, size=2).tolist())
            expected = int(np.sum((w >= a - eps) & (w <= b + eps)))
            got = count_eigs(op, a, b)
            total += 1
            if got != expected:
                bad.append({"instance": n, "n": op.n, "a": a, "b": b, "count": got, "expected": expected})
    return not bad, {"comparisons": total}, bad


CHECKS = {
    1: check_exact_trimmed,
    2: check_bound_hierarchy,
    3: check_derivative_bound,
    4: check_ucp,
    5: check_cheeger,
    6: check_wegner,
    7: check_pvp,
    8: check_spectral_averaging,
    9: check_kappa_arithmetic,
    10: check_counting,
}
FAST = (1, 4, 9, 10)


def run_suite(level: str = "fast", seed: int | None = None) -> list[CheckResult]:
    """Run the battery; ``seed`` offsets every check's default seed."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    ids = FAST if level == "fast" else tuple(CHECKS)
    out = []
    for i in ids:
        fn = CHECKS[i]
        if seed is None or i in (1, 9):
            out.append(fn())
        else:
            out.append(fn(seed=seed + i))
    return out
