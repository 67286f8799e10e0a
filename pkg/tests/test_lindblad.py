import numpy as np
import pytest
import sympy as sp

from oracles import dephasing_metric, rabi_propagator, symbolic_dissipator
from tdmetric.errors import DimensionMismatch, PositivityLost, SingularEvolution
from tdmetric.hamiltonian import SIGMA_Z, HamiltonianSpec, TimeGrid
from tdmetric.linalg import adjoint, fro
from tdmetric.lindblad import (
    LindbladSet,
    dissipator,
    effective_hamiltonian,
    evolve_metric_lindblad,
    generalized_evolution,
    lindblad_rows,
    nonunitarity_wrt_eta,
)
from tdmetric.metric import evolve_metric_hermitian
from tdmetric.propagator import evolve
from tdmetric.verify import random_hermitian, random_metric

LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
ETA_DEPH = np.array([[1.0, 0.5], [0.5, 1.0]], dtype=complex)
ZERO2 = HamiltonianSpec.constant(np.zeros((2, 2)))
H_DEPH = HamiltonianSpec.constant(0.5 * SIGMA_Z)


def dephasing(kappa):
    return LindbladSet((np.sqrt(kappa) * SIGMA_Z,))


def test_dissipator_simple_cases(rng):
    eta = random_metric(rng, 2)
    np.testing.assert_array_equal(dissipator(eta, LindbladSet(())), np.zeros((2, 2)))
    np.testing.assert_allclose(dissipator(np.eye(2), LindbladSet((SIGMA_Z,))), 0.0, atol=0)


def test_dissipator_lowering_matches_symbolic():
    a, b = sp.symbols("a b", real=True)
    sym = symbolic_dissipator(sp.Matrix([[0, 1], [0, 0]]), sp.diag(a, b))
    assert sym == sp.diag(-b, b)
    for av, bv in [(1.0, 2.0), (0.3, 0.7)]:
        num = dissipator(np.diag([av, bv]), LindbladSet((LOWER,)))
        ref = np.array(sym.subs({a: av, b: bv}).evalf(), dtype=complex)
        np.testing.assert_allclose(num, ref, atol=1e-15)


def test_dissipator_general_matches_symbolic(rng):
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    eta = random_metric(rng, 2)
    sym = symbolic_dissipator(sp.Matrix(g), sp.Matrix(eta))
    np.testing.assert_allclose(dissipator(eta, LindbladSet((g,))), np.array(sym.evalf(), dtype=complex), atol=1e-12)


def test_dissipator_hermitian_and_traceless(rng):
    ops = tuple(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(2))
    D = dissipator(random_metric(rng, 3), LindbladSet(ops))
    assert fro(D - adjoint(D)) < 1e-12
    assert abs(np.trace(D)) < 1e-12


def test_dissipator_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dissipator(np.eye(3), LindbladSet((SIGMA_Z,)))
    with pytest.raises(DimensionMismatch):
        LindbladSet((SIGMA_Z, np.eye(3)))


def test_empty_set_reduces_to_conjugation(rabi_params):
    H = HamiltonianSpec.pauli_rotating(**rabi_params)
    eta0 = np.diag([1.0, 2.0])
    grid = TimeGrid(0.0, 2 * np.pi / rabi_params["omega"], 10_000)
    ode = evolve_metric_lindblad(H, eta0, LindbladSet(()), grid)
    assert ode.provenance == "ode_lindblad"
    assert np.max(ode.symmetrization_defect) < 1e-12
    U = np.array([rabi_propagator(t, *rabi_params.values()) for t in grid.times])
    assert np.max(fro(ode.eta - U @ eta0 @ adjoint(U))) < 1e-8
    # the midpoint propagator carries a second-order error into the conjugation route
    conj = evolve_metric_hermitian(H, eta0, grid)
    assert np.max(fro(ode.eta - conj.eta)) < 1e-7


def test_empty_set_matches_conjugation_for_constant_hamiltonian(rng):
    H = HamiltonianSpec.constant(random_hermitian(rng, 3))
    eta0 = random_metric(rng, 3)
    grid = TimeGrid(0.0, 2.0, 10_000)
    ode = evolve_metric_lindblad(H, eta0, LindbladSet(()), grid)
    conj = evolve_metric_hermitian(H, eta0, grid)
    assert np.max(fro(ode.eta - conj.eta)) < 1e-8


def test_zero_hamiltonian_empty_set_is_constant():
    traj = evolve_metric_lindblad(ZERO2, ETA_DEPH, LindbladSet(()), TimeGrid(0, 3, 30))
    assert np.array_equal(traj.eta, np.broadcast_to(ETA_DEPH, traj.eta.shape))


@pytest.mark.parametrize("split", [0.0, 1.0])
def test_dephasing_closed_form(split):
    kappa, grid = 0.2, TimeGrid(0.0, 5.0, 2000)
    H = HamiltonianSpec.constant(0.5 * split * SIGMA_Z)
    traj = evolve_metric_lindblad(H, ETA_DEPH, dephasing(kappa), grid)
    for k in (0, 700, 2000):
        ref = dephasing_metric(ETA_DEPH, kappa, grid.times[k], split)
        assert fro(traj.eta[k] - ref) < 1e-10
    assert abs(traj.eta[-1, 0, 1]) == pytest.approx(0.5 * np.exp(-2 * kappa * 5.0), rel=1e-9)


def test_trace_preserved_under_dephasing(rng):
    ops = tuple(0.3 * (g + adjoint(g)) for g in rng.standard_normal((2, 3, 3)) + 0j)
    grid = TimeGrid(0.0, 2.0, 400)
    traj = evolve_metric_lindblad(HamiltonianSpec.constant(np.zeros((3, 3))), random_metric(rng, 3), LindbladSet(ops), grid)
    tr = np.trace(traj.eta, axis1=1, axis2=2).real
    assert np.max(np.abs(tr - tr[0])) / 2.0 < 1e-8


def test_rk4_fourth_order():
    kappa = 0.2
    errs = []
    for steps in (40, 80, 160):
        grid = TimeGrid(0.0, 5.0, steps)
        traj = evolve_metric_lindblad(H_DEPH, ETA_DEPH, dephasing(kappa), grid)
        errs.append(fro(traj.eta[-1] - dephasing_metric(ETA_DEPH, kappa, 5.0)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4.0) <= 0.4)


def test_positivity_lost_is_a_warning():
    # RK4 amplifies the off-diagonal decay mode once 2*kappa*dt exceeds its stability limit
    grid = TimeGrid(0.0, 2.0, 4)
    with pytest.warns(PositivityLost):
        traj = evolve_metric_lindblad(ZERO2, ETA_DEPH, dephasing(5.0), grid)
    assert traj.positivity_lost
    assert np.min(traj.min_eigenvalues) < 0


def test_generalized_evolution_reduces_to_propagator(rabi_params):
    H = HamiltonianSpec.pauli_rotating(**rabi_params)
    grid = TimeGrid(0.0, 2 * np.pi / rabi_params["omega"], 10_000)
    traj = evolve_metric_lindblad(H, np.diag([1.0, 2.0]), LindbladSet(()), grid)
    U, branches = generalized_evolution(H, traj)
    assert np.max(fro(U - evolve(H, grid).U)) < 1e-5
    assert np.max(nonunitarity_wrt_eta(U, traj)) < 1e-6
    assert max(np.max(np.abs(b.eigenvalue_drift)) for b in branches) < 1e-8


def test_generalized_evolution_trivial():
    traj = evolve_metric_lindblad(ZERO2, np.diag([1.0, 2.0]), LindbladSet(()), TimeGrid(0, 1, 20))
    U, _ = generalized_evolution(ZERO2, traj)
    np.testing.assert_allclose(U, np.broadcast_to(np.eye(2), U.shape), atol=1e-15)


def _dephasing_run(steps, kappa=0.2):
    grid = TimeGrid(0.0, 1.0 / kappa, steps)
    traj = evolve_metric_lindblad(H_DEPH, ETA_DEPH, dephasing(kappa), grid)
    U, branches = generalized_evolution(H_DEPH, traj)
    return grid, traj, U, branches


def test_dephasing_nonunitarity():
    grid, traj, U, branches = _dephasing_run(2000)
    nonu = nonunitarity_wrt_eta(U, traj)
    assert nonu[-1] > 1e-3
    assert np.all(np.diff(nonu) >= -1e-12)
    assert max(np.max(np.abs(b.eigenvalue_drift)) for b in branches) > 1e-2
    _, traj2, U2, _ = _dephasing_run(1000)
    assert abs(nonunitarity_wrt_eta(U2, traj2)[-1] - nonu[-1]) / nonu[-1] < 0.1


def test_zero_rate_limit_is_unitary():
    grid = TimeGrid(0.0, 5.0, 1000)
    traj = evolve_metric_lindblad(H_DEPH, ETA_DEPH, dephasing(1.0).scaled(0.0), grid)
    U, _ = generalized_evolution(H_DEPH, traj)
    assert np.max(nonunitarity_wrt_eta(U, traj)) < 1e-6


def test_effective_hamiltonian_constant():
    H = HamiltonianSpec.constant(np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, -0.4]]))
    grid = TimeGrid(0.0, 2.0, 1000)
    eff = effective_hamiltonian(evolve(H, grid).U, grid)
    assert np.max(fro(eff.H - H(0.0))) < 1e-5
    assert eff.defect_eta is None


def test_effective_hamiltonian_identity():
    grid = TimeGrid(0.0, 1.0, 10)
    eff = effective_hamiltonian(np.broadcast_to(np.eye(2), (11, 2, 2)), grid)
    assert np.array_equal(eff.H, np.zeros((11, 2, 2)))


def test_effective_hamiltonian_singular():
    grid = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(SingularEvolution):
        effective_hamiltonian(np.array([np.eye(2), np.diag([1.0, 0.0]), np.eye(2)]), grid)


@pytest.mark.parametrize("steps", [1000, 2000])
def test_dephasing_effective_hamiltonian_adjoints(steps):
    grid, traj, U, _ = _dephasing_run(steps)
    eff = effective_hamiltonian(U, grid, traj)
    assert np.max(eff.defect_fixed) < 1e-6
    assert np.max(eff.defect_eta) > 1e-3


def test_lindblad_rows_schema():
    grid, traj, U, _ = _dephasing_run(50)
    rows = list(lindblad_rows(traj, U, effective_hamiltonian(U, grid, traj)))
    assert len(rows) == 51
    assert list(rows[0]) == ["t", "min_eig_eta", "trace_eta", "nonunitarity", "hprime_defect_fixed", "hprime_defect_eta"]
    assert rows[0]["nonunitarity"] == pytest.approx(0.0, abs=1e-15)
