"""Metric-changing symmetry transformations.

An invertible map ``V`` from a space with metric ``eta_s`` to one with metric
``eta_t`` is an isometry iff ``V^dagger eta_t V = eta_s``. It carries the
Hamiltonian to ``V H V^{-1} - i hbar V d(V^{-1})/dt`` and observables to
``V O V^{-1}``. With ``V = rho^{-1} = U eta0^{-1/2} U^dagger`` the transformed
Hamiltonian equals the original one; that identity is checked here as a
convergent numerical statement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularMap
from .hamiltonian import HamiltonianSpec, TimeGrid
from .linalg import (
    adjoint,
    as_operator,
    as_state,
    commutator,
    eta_inner_batch,
    fro,
    pd_inv_sqrt,
    pd_sqrt,
)
from .metric import MetricTrajectory, _check_eta0, lvn_residual
from .propagator import PropagatorTrace, evolve, sample_hamiltonian

MAX_MAP_COND = 1e12
EQUIVALENCE_TOL = 1e-8
EQUIVALENCE_RESIDUAL_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class UnitaryMapTrajectory:
    """Map ``V_k`` between the ``source`` and ``target`` metrics at each grid point."""

    grid: TimeGrid
    V: np.ndarray
    source_metric: np.ndarray
    target_metric: np.ndarray
    label: str = ""

    def isometry_defects(self) -> np.ndarray:
        lhs = adjoint(self.V) @ self.target_metric @ self.V
        return fro(lhs - self.source_metric) / fro(self.source_metric)

    def isometry_defect(self) -> float:
        """``max_k ||V^dagger eta_t V - eta_s||_F / ||eta_s||_F``."""
        return float(np.max(self.isometry_defects()))

    def hermiticity_defect(self) -> float:
        """``max_k ||V - V^dagger||_F`` (absolute)."""
        return float(np.max(fro(self.V - adjoint(self.V))))

    def inverse(self) -> np.ndarray:
        cond = np.linalg.cond(self.V)
        if np.any(~np.isfinite(cond)) or np.any(cond > MAX_MAP_COND):
            raise SingularMap(f"map condition number reaches {float(np.max(cond)):.3e}")
        return np.linalg.inv(self.V)


@dataclass(frozen=True, eq=False)
class Observable:
    matrix: np.ndarray
    label: str = ""
    metric: np.ndarray | None = None

    def hermiticity_defect(self) -> float:
        """``||eta^{-1} A^dagger eta - A||_F`` for the declared metric (identity if unset)."""
        A = np.asarray(self.matrix, dtype=complex)
        if self.metric is None:
            return float(fro(adjoint(A) - A))
        eta = np.asarray(self.metric, dtype=complex)
        return float(fro(np.linalg.solve(eta, adjoint(A) @ eta) - A))


def energy_observable(H: HamiltonianSpec, grid: TimeGrid) -> Observable:
    """The energy observable, seeded as ``H(t0)``."""
    return Observable(H(grid.t0), "energy")


def identity_map(grid: TimeGrid, dim: int) -> UnitaryMapTrajectory:
    eye = np.broadcast_to(np.eye(dim, dtype=complex), (grid.steps + 1, dim, dim)).copy()
    return UnitaryMapTrajectory(grid, eye, eye, eye, "identity")


def constant_map(grid: TimeGrid, V, source, target, label="constant") -> UnitaryMapTrajectory:
    shape = (grid.steps + 1,) + np.shape(V)
    stack = lambda a: np.broadcast_to(np.asarray(a, dtype=complex), shape).copy()  # noqa: E731
    return UnitaryMapTrajectory(grid, stack(V), stack(source), stack(target), label)


def rho_inverse_trajectory(
    H: HamiltonianSpec, eta0, grid: TimeGrid, trace: PropagatorTrace | None = None
) -> UnitaryMapTrajectory:
    """``V_k = U_k eta0^{-1/2} U_k^dagger``, mapping the fixed metric onto ``eta(t)``."""
    eta0 = _check_eta0(eta0, H.dim)
    U = (trace or evolve(H, grid)).U
    Ud = adjoint(U)
    V = U @ pd_inv_sqrt(eta0) @ Ud
    target = U @ eta0 @ Ud
    target[0] = eta0
    eye = np.broadcast_to(np.eye(H.dim, dtype=complex), V.shape).copy()
    return UnitaryMapTrajectory(grid, V, eye, target, "rho_inverse")


def transform_hamiltonian(H1: HamiltonianSpec, umap: UnitaryMapTrajectory) -> np.ndarray:
    """``H2_k = V_k H1(t_k) V_k^{-1} - i hbar V_k (dV^{-1}/dt)_k``.

    The derivative is a central difference in the interior and a one-sided
    second-order difference at both ends.
    """
    grid = umap.grid
    Vinv = umap.inverse()
    dVinv = np.gradient(Vinv, grid.dt, axis=0, edge_order=2)
    H1k = sample_hamiltonian(H1, grid.times, herm_tol=np.inf)
    V = umap.V
    return V @ H1k @ Vinv - 1j * grid.hbar * (V @ dVinv)


def hamiltonian_invariance_defects(H: HamiltonianSpec, eta0, grid: TimeGrid, trace=None) -> np.ndarray:
    Hk = sample_hamiltonian(H, grid.times)
    H2 = transform_hamiltonian(H, rho_inverse_trajectory(H, eta0, grid, trace))
    return fro(H2 - Hk) / np.maximum(1.0, fro(Hk))


def verify_hamiltonian_invariance(H: HamiltonianSpec, eta0, grid: TimeGrid, trace=None) -> float:
    """Largest interior relative defect ``||H2 - H||_F / max(1, ||H||_F)`` for the rho^{-1} map."""
    return float(np.max(hamiltonian_invariance_defects(H, eta0, grid, trace)[1:-1]))


def hamiltonian_invariance_order(H: HamiltonianSpec, eta0, grid: TimeGrid):
    """Defects at ``steps`` and ``steps/2`` and the observed order ``log2(ratio)``."""
    if grid.steps % 2:
        raise ValueError("steps must be even")
    fine = verify_hamiltonian_invariance(H, eta0, grid)
    coarse = verify_hamiltonian_invariance(H, eta0, grid.with_steps(grid.steps // 2))
    order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else math.nan
    return fine, coarse, order


def transform_observable(O: Observable, umap: UnitaryMapTrajectory, k: int) -> Observable:
    V = umap.V[k]
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > MAX_MAP_COND:
        raise SingularMap(f"map condition number {cond:.3e} at step {k}")
    A = as_operator(O.matrix, dim=V.shape[0])
    return Observable(V @ A @ np.linalg.inv(V), O.label, umap.target_metric[k])


def expectation_defects(O: Observable, H: HamiltonianSpec, eta0, psi0, grid: TimeGrid, trace=None) -> np.ndarray:
    """Fixed-metric versus transported expectation values, per grid point.

    ``psi2 = rho^{-1} psi1`` and ``O2 = rho^{-1} O rho`` are compared in the
    ``eta(t)`` inner product against ``psi1`` and ``O`` in the fixed one.
    """
    psi0 = as_state(psi0, dim=H.dim)
    trace = trace or evolve(H, grid)
    umap = rho_inverse_trajectory(H, eta0, grid, trace)
    A = as_operator(O.matrix, dim=H.dim)
    psi1 = trace.U @ psi0
    e1 = np.einsum("ki,ij,kj->k", np.conj(psi1), A, psi1) / np.einsum("ki,ki->k", np.conj(psi1), psi1)
    V = umap.V
    Vinv = umap.inverse()
    O2 = V @ A @ Vinv
    psi2 = np.einsum("kij,kj->ki", V, psi1)
    eta = umap.target_metric
    num = eta_inner_batch(psi2, np.einsum("kij,kj->ki", O2, psi2), eta)
    den = eta_inner_batch(psi2, psi2, eta)
    return np.abs(e1 - num / den)


def expectation_invariance_check(O, H, eta0, psi0, grid, trace=None) -> float:
    return float(np.max(expectation_defects(O, H, eta0, psi0, grid, trace)))


def schrodinger_transport_residual(H: HamiltonianSpec, eta0, psi0, grid: TimeGrid, trace=None) -> float:
    """Residual of ``i hbar d(psi2)/dt = H psi2`` for ``psi2 = rho^{-1} psi1`` (interior points)."""
    trace = trace or evolve(H, grid)
    umap = rho_inverse_trajectory(H, eta0, grid, trace)
    psi2 = np.einsum("kij,kj->ki", umap.V, trace.U @ as_state(psi0, dim=H.dim))
    Hk = sample_hamiltonian(H, grid.times[1:-1])
    lhs = 1j * grid.hbar * (psi2[2:] - psi2[:-2]) / (2.0 * grid.dt)
    rhs = np.einsum("kij,kj->ki", Hk, psi2[1:-1])
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def metric_permutation(eta1_0, eta2_0) -> np.ndarray:
    """``eta2^{-1/2} eta1^{1/2}``: isometry from the ``eta1`` space onto the ``eta2`` space."""
    return pd_inv_sqrt(as_operator(eta2_0)) @ pd_sqrt(as_operator(eta1_0))


def metric_permutation_trajectory(
    H: HamiltonianSpec, eta1_0, eta2_0, grid: TimeGrid, trace: PropagatorTrace | None = None
) -> UnitaryMapTrajectory:
    """``U_k P U_k^dagger`` between ``eta1(t) = U eta1_0 U^dagger`` and ``eta2(t)``."""
    eta1_0 = _check_eta0(eta1_0, H.dim)
    eta2_0 = _check_eta0(eta2_0, H.dim)
    P = metric_permutation(eta1_0, eta2_0)
    U = (trace or evolve(H, grid)).U
    Ud = adjoint(U)
    return UnitaryMapTrajectory(grid, U @ P @ Ud, U @ eta1_0 @ Ud, U @ eta2_0 @ Ud, "metric_permutation")


def composition_closure_defect(eta1, eta2, eta3) -> float:
    """Isometry defect of ``P(2->3) P(1->2)`` as a map ``eta1 -> eta3``."""
    W = metric_permutation(eta2, eta3) @ metric_permutation(eta1, eta2)
    eta1 = as_operator(eta1)
    return float(fro(adjoint(W) @ as_operator(eta3) @ W - eta1) / fro(eta1))


@dataclass(frozen=True)
class EquivalenceResult:
    verdict: bool
    defect: float
    residual_h1: float
    residual_h2: float

    def as_dict(self):
        return {"verdict": self.verdict, "defect": self.defect}


def geometric_equivalence_check(
    H1: HamiltonianSpec,
    H2: HamiltonianSpec,
    eta_traj: MetricTrajectory,
    equivalence_tol=EQUIVALENCE_TOL,
    residual_tol=EQUIVALENCE_RESIDUAL_TOL,
) -> EquivalenceResult:
    """Do ``H1`` and ``H2`` share ``eta_traj`` as a dynamical invariant?

    The defect is ``max_k ||[H1 - H2, eta_k]||_F / (||H1 - H2||_F ||eta_k||_F)``
    (zero where the Hamiltonians coincide). The verdict also requires both
    invariant-equation residuals to stay below ``residual_tol``.
    """
    times = eta_traj.grid.times
    dH = sample_hamiltonian(H1, times, herm_tol=np.inf) - sample_hamiltonian(H2, times, herm_tol=np.inf)
    eta = eta_traj.eta
    scale = fro(dH) * fro(eta)
    num = fro(commutator(dH, eta))
    ratio = np.where(scale > 0, num / np.where(scale > 0, scale, 1.0), 0.0)
    defect = float(np.max(ratio))
    r1 = lvn_residual(H1, eta_traj)
    r2 = lvn_residual(H2, eta_traj)
    verdict = defect < equivalence_tol and r1 < residual_tol and r2 < residual_tol
    return EquivalenceResult(bool(verdict), defect, r1, r2)


def equivalent_partner(H1: HamiltonianSpec, eta_traj: MetricTrajectory, c: float) -> HamiltonianSpec:
    """Sampled Hamiltonian ``H1(t) + c eta(t)`` on the trajectory's grid."""
    return H1.shifted(c * eta_traj.eta, eta_traj.grid.times)
