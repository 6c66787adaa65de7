import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trimspec.hamiltonian import Potential, assemble
from trimspec.lattice import BoxRegion, TrimPattern, enumerate_box
from trimspec.spectra import (
    SolverError,
    count_eigs,
    derivative_check,
    energy_curve,
    ground_energy,
    ground_state_pf,
    inertia,
    krylov_extreme,
    periodic_ground_energy,
    ucp_check,
)


def random_V(rng, box, spr):
    sites = enumerate_box(box)
    return Potential.explicit({tuple(s): v for s, v in zip(sites.tolist(), rng.uniform(0, spr, len(sites)))}, box.dim)


def test_ground_energy_examples():
    assert ground_energy(assemble(BoxRegion.cube(1, 31), gamma=TrimPattern.sublattice(3, 1), mode="trimmed")) == pytest.approx(1, abs=1e-12)
    assert ground_energy(assemble(BoxRegion.cube(1, 31), gamma=TrimPattern.sublattice(2, 1), mode="trimmed")) == 2
    for d in (1, 2, 3):
        assert ground_energy(assemble(BoxRegion.cube(d, 1))) == 2 * d


@pytest.mark.parametrize("method", ["dense", "krylov"])
def test_ground_energy_methods_on_small_box(method):
    op = assemble(BoxRegion.cube(1, 20))
    exact = 2 - 2 * math.cos(math.pi / 22)
    assert ground_energy(op, method=method) == pytest.approx(exact, abs=1e-10)


def test_dense_and_krylov_agree():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = int(rng.integers(1, 3))
        n_target = int(rng.integers(256, 1025))
        L = n_target - 1 if d == 1 else int(math.isqrt(n_target)) - 1
        box = BoxRegion.cube(d, L)
        op = assemble(box, random_V(rng, box, rng.uniform(0, 8)))
        assert 256 <= op.n <= 1024
        assert ground_energy(op, method="krylov") == pytest.approx(ground_energy(op, method="dense"), abs=1e-8)


def test_krylov_reports_nonconvergence():
    op = assemble(BoxRegion.cube(1, 400))
    with pytest.raises(SolverError) as err:
        krylov_extreme(op.matrix, np.ones(op.n), basis=3, max_restarts=2, tol=1e-14)
    assert err.value.residual is not None


def test_pf_three_sites():
    gs = ground_state_pf(assemble(BoxRegion.cube(1, 3)))
    assert gs.energy == pytest.approx(2 - math.sqrt(2), abs=1e-12)
    assert np.allclose(gs.vector, [0.5, math.sqrt(2) / 2, 0.5], atol=1e-12)
    assert gs.gap == pytest.approx(math.sqrt(2), abs=1e-10)
    assert gs.ucp.ok and gs.ucp.min_component == pytest.approx(0.5)
    assert gs.ucp.min_component >= 3.0**-3


def test_pf_single_site():
    V = Potential.explicit({(0, 0): 1.5}, 2)
    gs = ground_state_pf(assemble(BoxRegion.cube(2, 1), V))
    assert gs.energy == pytest.approx(5.5) and np.array_equal(gs.vector, [1.0])


def test_pf_rejects_trimmed():
    with pytest.raises(ValueError):
        ground_state_pf(assemble(BoxRegion.cube(1, 5), gamma=TrimPattern.sublattice(2, 1), mode="trimmed"))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.integers(1, 11), st.floats(0, 8), st.integers(0, 2**32 - 1))
def test_pf_matches_dense_and_ucp(d, L, spr, seed):
    rng = np.random.default_rng(seed)
    box = BoxRegion.cube(d, L)
    op = assemble(box, random_V(rng, box, spr))
    gs = ground_state_pf(op)
    assert abs(np.linalg.norm(gs.vector) - 1) < 1e-12
    assert np.all(gs.vector > 0)
    assert gs.energy == pytest.approx(ground_energy(op), abs=1e-9)
    assert np.linalg.norm(op.matrix @ gs.vector - gs.energy * gs.vector) <= 1e-9
    assert op.n == 1 or gs.gap > 0
    assert gs.ucp.ok, gs.ucp.violations[:3]


def test_ucp_check_detects_bad_vector():
    op = assemble(BoxRegion.cube(1, 5))
    psi = np.array([1e-9, 1, 1, 1, 1.0])
    psi /= np.linalg.norm(psi)
    assert not ucp_check(op, psi).ok


def test_count_examples():
    op = assemble(BoxRegion.cube(1, 3))
    assert count_eigs(op, 0, 2) == 2
    assert count_eigs(op, -math.inf, -1) == 0
    assert count_eigs(op, -100, 100) == 3
    assert count_eigs(op, -math.inf, math.inf) == 3
    with pytest.raises(ValueError):
        count_eigs(op, 1, 0)


def test_count_endpoint_perturbation_is_reported():
    op = assemble(BoxRegion.cube(1, 3))
    inert = inertia(op, 2.0)
    assert inert.perturbed and inert.negative == 2
    assert not inertia(op, 1.0).perturbed


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_count_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    box = BoxRegion.cube(1, n - 1) if n > 1 else BoxRegion.cube(1, 1)
    op = assemble(box, random_V(rng, box, 6.0))
    H = op.dense()
    w = np.linalg.eigvalsh(H)
    eps = 1e-12 * max(1.0, np.abs(H).sum(axis=1).max())
    for _ in range(10):
        a, b = sorted(rng.uniform(-1, 11, 2))
        assert count_eigs(op, a, b) == np.sum((w >= a - eps) & (w <= b + eps))


def test_bloch_oracle_and_large_box():
    g = TrimPattern.sublattice(2, 1)
    exact = 5 - math.sqrt(13)
    assert periodic_ground_energy(Potential.zero(1), 1, g, 6.0) == pytest.approx(exact, abs=1e-12)
    op = assemble(BoxRegion.cube(1, 2000), gamma=g, mode="penalized", t=6.0)
    e = ground_energy(op)
    assert exact <= e <= exact + 1e-4


def test_curve_free_box_decreases_with_L():
    g = TrimPattern.sublattice(2, 1)
    vals = [energy_curve(BoxRegion.cube(1, L), g, None, [0.0]).energies[0] for L in (4, 8, 16, 32, 64)]
    assert all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_curve_invariants(d, K, seed):
    rng = np.random.default_rng(seed)
    box = BoxRegion.cube(d, K * (3 if d == 1 else 1))
    g = TrimPattern(d, K, frozenset({tuple(rng.integers(0, K, d).tolist())}))
    curve = energy_curve(box, g, random_V(rng, box, 4.0), np.linspace(0, 20, 15))
    assert np.all(np.diff(curve.energies) >= -1e-10)
    assert np.all(curve.energies <= curve.trimmed_energy + 1e-10)


def test_energy_nonincreasing_in_box_size():
    g = TrimPattern.sublattice(3, 2)
    V = Potential.periodic([[0, 1, 2], [1, 0, 3], [2, 2, 0]])
    for t in (0.5, 3.0):
        es = [ground_energy(assemble(BoxRegion.cube(2, R), V, g, "penalized", t)) for R in (3, 6, 9, 12)]
        assert all(b <= a + 1e-12 for a, b in zip(es, es[1:]))


def test_curve_rejects_bad_grid():
    box, g = BoxRegion.cube(1, 4), TrimPattern.sublattice(2, 1)
    for grid in ([], [1.0, 0.5], [-1.0, 1.0]):
        with pytest.raises(ValueError):
            energy_curve(box, g, None, grid)


def test_derivative_examples():
    g = TrimPattern.sublattice(2, 1)
    curve = energy_curve(BoxRegion.cube(1, 2 * 9), g, None, np.arange(0, 2.01, 0.05))
    rep = derivative_check(curve, 1, 2)
    assert rep.proof_geometry and rep.passed
    assert rep.points[0].bound == pytest.approx(1 / 81)
    assert rep.points[0].slope > 1 / 81
    late = energy_curve(BoxRegion.cube(1, 18), g, None, [1e3, 1e3 + 0.05])
    assert derivative_check(late, 1, 2).passed


def test_derivative_everything_pattern():
    for d in (1, 2):
        curve = energy_curve(BoxRegion.cube(d, 3), TrimPattern.everything(d), None, [0.0, 0.5, 1.0], with_trimmed=False)
        assert np.allclose(curve.slopes, 1.0)
        assert derivative_check(curve, 1, 1).passed


def test_derivative_counterexample_record():
    g = TrimPattern.sublattice(2, 1)
    curve = energy_curve(BoxRegion.cube(1, 6), g, None, [0.0, 1.0])
    rep = derivative_check(curve, 1, 2, tol=-10.0)
    assert not rep.passed
    assert set(rep.counterexamples[0]) == {"box", "gamma", "t", "slope", "bound"}


def test_curve_csv(tmp_path):
    curve = energy_curve(BoxRegion.cube(1, 6), TrimPattern.sublattice(2, 1), None, [0.0, 1.0])
    path = tmp_path / "c.csv"
    curve.write_csv(path, 1, 2)
    lines = path.read_bytes().decode().split("\n")
    assert lines[0] == "t,energy,fd_slope,bound"
    assert lines[2].split(",")[2] == ""
    assert float(lines[1].split(",")[3]) == pytest.approx(1 / 81)
