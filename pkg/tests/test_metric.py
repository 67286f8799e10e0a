import warnings

import numpy as np
import pytest

from tdmetric.errors import NotHermitian, NotPositiveDefinite, PositivityWarning, SingularPropagator
from tdmetric.hamiltonian import SIGMA_X, SIGMA_Z, HamiltonianSpec, TimeGrid
from tdmetric.linalg import fro
from tdmetric.metric import (
    MetricTrajectory,
    conserved_inner_product_check,
    evolve_metric_general,
    evolve_metric_hermitian,
    evolve_metric_lvn,
    lvn_residual,
    make_positive_invariant,
    monitor_positivity,
)
from tdmetric.propagator import evolve
from tdmetric.verify import random_fourier_hamiltonian, random_metric

ETA12 = np.diag([1.0, 2.0])


@pytest.fixture
def rabi(rabi_params):
    w = rabi_params["omega"]
    return HamiltonianSpec.pauli_rotating(**rabi_params), TimeGrid(0.0, 2 * np.pi / w, 10_000)


def _states(rng, d):
    z = rng.standard_normal((2, d)) + 1j * rng.standard_normal((2, d))
    return z[0], z[1]


def test_identity_metric_stays_identity(rng):
    H = random_fourier_hamiltonian(rng, 3)
    traj = evolve_metric_hermitian(H, np.eye(3), TimeGrid(0.0, 1.0, 100))
    assert np.max(fro(traj.eta - np.eye(3))) < 1e-13
    assert traj.provenance == "conjugation_hermitian"
    assert np.array_equal(traj.eta[0], np.eye(3))


def test_commuting_metric_is_constant():
    H = HamiltonianSpec.constant(np.diag([1.0, -2.0]))
    traj = evolve_metric_hermitian(H, ETA12, TimeGrid(0.0, 3.0, 50))
    assert np.max(fro(traj.eta - ETA12)) < 1e-13
    assert lvn_residual(H, traj) < 1e-10


def test_zero_hamiltonian_general():
    eta0 = random_metric(np.random.default_rng(1), 2)
    traj = evolve_metric_general(HamiltonianSpec.constant(np.zeros((2, 2))), eta0, TimeGrid(0, 1, 10))
    assert np.array_equal(traj.eta, np.broadcast_to(eta0, traj.eta.shape))


def test_rabi_conjugation_matches_rk4(rabi):
    H, grid = rabi
    conj = evolve_metric_hermitian(H, ETA12, grid)
    ode = evolve_metric_lvn(H, ETA12, grid)
    assert ode.provenance == "ode_lvn"
    assert np.max(fro(conj.eta - ode.eta)) < 1e-6


def test_general_equals_hermitian_for_hermitian_h(rng):
    H = random_fourier_hamiltonian(rng, 4)
    eta0 = random_metric(rng, 4)
    grid = TimeGrid(0.0, 1.0, 500)
    a = evolve_metric_hermitian(H, eta0, grid)
    b = evolve_metric_general(H, eta0, grid)
    assert np.max(fro(a.eta - b.eta)) < 1e-9
    assert b.provenance == "conjugation_general"


def test_scalar_non_hermitian_metric_grows():
    # U = exp(-kappa t) so eta = U^{-1 dagger} U^{-1} = exp(+2 kappa t)
    kappa, grid = 0.1, TimeGrid(0.0, 4.0, 40)
    H = HamiltonianSpec.constant(-1j * kappa * np.eye(2))
    traj = evolve_metric_general(H, np.eye(2), grid)
    np.testing.assert_allclose(traj.eta[:, 0, 0].real, np.exp(2 * kappa * grid.times), rtol=1e-13)
    np.testing.assert_allclose(traj.eta[:, 0, 1], 0, atol=1e-15)


def test_scalar_non_hermitian_metric_hbar():
    kappa, grid = 0.1, TimeGrid(0.0, 4.0, 40, hbar=2.0)
    traj = evolve_metric_general(HamiltonianSpec.constant(-1j * kappa * np.eye(2)), np.eye(2), grid)
    np.testing.assert_allclose(traj.eta[-1, 0, 0].real, np.exp(2 * kappa * 4.0 / 2.0), rtol=1e-12)


def test_eta0_must_be_positive_definite():
    H = HamiltonianSpec.constant(SIGMA_Z)
    with pytest.raises(NotPositiveDefinite):
        evolve_metric_hermitian(H, np.diag([1.0, -1.0]), TimeGrid(0, 1, 4))
    with pytest.raises(NotPositiveDefinite):
        evolve_metric_general(H, np.zeros((2, 2)), TimeGrid(0, 1, 4))


def test_hermitian_construction_rejects_non_hermitian_h():
    H = HamiltonianSpec.constant(SIGMA_Z - 0.1j * np.eye(2))
    with pytest.raises(NotHermitian):
        evolve_metric_hermitian(H, np.eye(2), TimeGrid(0, 1, 4))


def test_singular_propagator():
    H = HamiltonianSpec.constant(-1j * np.diag([20.0, 0.0]))
    with pytest.raises(SingularPropagator):
        evolve_metric_general(H, np.eye(2), TimeGrid(0.0, 2.0, 20))


def test_lvn_residual_second_order(rabi_params):
    H = HamiltonianSpec.pauli_rotating(**rabi_params)
    r1 = lvn_residual(H, evolve_metric_hermitian(H, ETA12, TimeGrid(0.0, 5.0, 1000)))
    r2 = lvn_residual(H, evolve_metric_hermitian(H, ETA12, TimeGrid(0.0, 5.0, 2000)))
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)


def test_lvn_residual_needs_three_points():
    H = HamiltonianSpec.constant(SIGMA_Z)
    traj = evolve_metric_hermitian(H, ETA12, TimeGrid(0, 1, 1))
    with pytest.raises(ValueError):
        lvn_residual(H, traj)


def test_lvn_residual_flags_corruption(rabi_params):
    H = HamiltonianSpec.pauli_rotating(**rabi_params)
    grid = TimeGrid(0.0, 5.0, 1000)
    traj = evolve_metric_hermitian(H, ETA12, grid)
    eta = traj.eta.copy()
    eta[500] += 1e-3 * SIGMA_X
    bad = MetricTrajectory(grid, eta, traj.eta0, traj.provenance, traj.min_eigenvalues)
    assert lvn_residual(H, bad) > 0.5e-3 / grid.dt
    assert lvn_residual(H, traj) < 1e-5


@pytest.mark.parametrize(
    "I, expected",
    [(np.zeros((2, 2)), np.eye(2)), (SIGMA_Z, 2 * np.eye(2)), (np.diag([1.0, -2.0]), np.diag([2.0, 5.0]))],
)
def test_make_positive_invariant_examples(I, expected):
    np.testing.assert_allclose(make_positive_invariant(I), expected)


def test_make_positive_invariant_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        make_positive_invariant(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_positive_invariant_from_invariant(rng):
    # I = U I0 U^dagger is an invariant; so is I^2 + 1
    H = random_fourier_hamiltonian(rng, 3)
    grid = TimeGrid(0.0, 1.0, 2000)
    U = evolve(H, grid).U
    g = rng.standard_normal((3, 3))
    I0 = g + g.T
    I = U @ I0 @ np.conj(np.swapaxes(U, 1, 2))
    P = np.array([make_positive_invariant(x) for x in I])
    assert np.all(np.linalg.eigvalsh(P)[:, 0] >= 1 - 1e-12)
    traj = MetricTrajectory(grid, P, P[0], "conjugation_hermitian", np.linalg.eigvalsh(P)[:, 0])
    assert lvn_residual(H, traj) < 1e-4


def test_inner_product_identity_metric(rng):
    H = random_fourier_hamiltonian(rng, 3)
    grid = TimeGrid(0.0, 1.0, 400)
    traj = evolve_metric_hermitian(H, np.eye(3), grid)
    assert conserved_inner_product_check(H, traj, *_states(rng, 3)) < 1e-8


def test_inner_product_rabi(rabi, rng):
    H, grid = rabi
    traj = evolve_metric_hermitian(H, ETA12, grid)
    assert conserved_inner_product_check(H, traj, *_states(rng, 2)) < 1e-6


def test_inner_product_non_hermitian(rng):
    H = random_fourier_hamiltonian(rng, 3, hermitian=False)
    eta0 = random_metric(rng, 3)
    grid = TimeGrid(0.0, 1.0, 10_000)
    traj = evolve_metric_general(H, eta0, grid)
    assert conserved_inner_product_check(H, traj, *_states(rng, 3)) < 1e-6
    # the fixed metric is not conserved for this H
    fixed = MetricTrajectory(grid, np.broadcast_to(eta0, traj.eta.shape), eta0, "x", traj.min_eigenvalues)
    assert conserved_inner_product_check(H, fixed, *_states(rng, 3)) > 1e-3


def test_positivity_monitor_warns():
    eta = np.array([np.eye(2), np.diag([1.0, 1e-14])])
    with pytest.warns(PositivityWarning):
        mins, lost = monitor_positivity(eta, np.eye(2))
    assert lost and mins[1] == pytest.approx(1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, lost = monitor_positivity(np.array([np.eye(2)]), np.eye(2))
    assert not lost


def test_eigenvalues_constant(rng):
    H = random_fourier_hamiltonian(rng, 5)
    eta0 = random_metric(rng, 5)
    traj = evolve_metric_hermitian(H, eta0, TimeGrid(0.0, 1.0, 1000))
    assert traj.eigenvalue_drift < 1e-8
    assert np.min(traj.min_eigenvalues) >= np.linalg.eigvalsh(eta0)[0] * (1 - 1e-6)
