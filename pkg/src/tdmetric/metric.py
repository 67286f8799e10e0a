"""Metric operators evolved as dynamical invariants.

A metric trajectory ``eta(t)`` keeps ``<psi(t), eta(t) phi(t)>`` constant for
all Schroedinger solutions iff

    i hbar d(eta)/dt = H^dagger eta - eta H,

solved by ``eta = U^{-1 dagger} eta0 U^{-1}`` (``= U eta0 U^dagger`` for
Hermitian ``H``). Both closed forms and a direct RK4 integration live here.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NotHermitian, NotPositiveDefinite, PositivityWarning, SingularPropagator
from .hamiltonian import HamiltonianSpec, TimeGrid
from .linalg import (
    HERM_TOL,
    PD_TOL,
    adjoint,
    as_operator,
    as_state,
    eta_inner_batch,
    fro,
    hermitize,
    is_hermitian,
    is_positive_definite,
)
from .propagator import PropagatorTrace, evolve, sample_hamiltonian

logger = logging.getLogger(__name__)

PROVENANCES = ("conjugation_hermitian", "conjugation_general", "ode_lvn", "ode_lindblad")
MAX_PROPAGATOR_COND = 1e12
POSITIVITY_REL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MetricTrajectory:
    grid: TimeGrid
    eta: np.ndarray
    eta0: np.ndarray
    provenance: str
    min_eigenvalues: np.ndarray
    positivity_lost: bool = False
    symmetrization_defect: np.ndarray | None = None

    def __len__(self):
        return self.eta.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(hermitize(self.eta))

    @property
    def eigenvalue_drift(self) -> float:
        """``max_k max_n |lambda_n(t_k) - lambda_n(t0)|``."""
        lam = self.eigenvalues
        return float(np.max(np.abs(lam - lam[0])))


def _check_eta0(eta0, dim, pd_tol=PD_TOL):
    eta0 = as_operator(eta0, dim=dim, name="eta0")
    if not is_positive_definite(eta0, pd_tol):
        raise NotPositiveDefinite("eta0 must be positive-definite")
    return eta0


def monitor_positivity(eta: np.ndarray, eta0: np.ndarray, rel_tol=POSITIVITY_REL_TOL):
    """Per-point minimum eigenvalue and whether it fell to ``rel_tol * ||eta0||``."""
    mins = np.linalg.eigvalsh(hermitize(eta))[:, 0]
    threshold = rel_tol * float(np.linalg.norm(eta0, 2))
    lost = bool(np.any(mins <= threshold))
    if lost:
        k = int(np.argmax(mins <= threshold))
        warnings.warn(
            f"metric lost positivity at step {k}: min eigenvalue {mins[k]:.3e} <= {threshold:.3e}",
            PositivityWarning,
            stacklevel=3,
        )
    return mins, lost


def _trajectory(grid, eta, eta0, provenance, symmetrization_defect=None):
    eta[0] = eta0
    mins, lost = monitor_positivity(eta, eta0)
    return MetricTrajectory(grid, eta, eta0, provenance, mins, lost, symmetrization_defect)


def evolve_metric_hermitian(
    H: HamiltonianSpec, eta0, grid: TimeGrid, trace: PropagatorTrace | None = None
) -> MetricTrajectory:
    """``eta_k = U_k eta0 U_k^dagger`` for a Hermitian Hamiltonian."""
    if not H.hermitian:
        raise NotHermitian("evolve_metric_hermitian needs a Hermitian Hamiltonian")
    eta0 = _check_eta0(eta0, H.dim)
    U = (trace or evolve(H, grid)).U
    eta = U @ eta0 @ adjoint(U)
    return _trajectory(grid, eta, eta0, "conjugation_hermitian")


def evolve_metric_general(
    H: HamiltonianSpec, eta0, grid: TimeGrid, trace: PropagatorTrace | None = None
) -> MetricTrajectory:
    """``eta_k = (U_k^{-1})^dagger eta0 U_k^{-1}``; valid for non-Hermitian ``H``.

    Raises
    ------
    SingularPropagator
        If some ``U_k`` has condition number above 1e12.
    """
    eta0 = _check_eta0(eta0, H.dim)
    U = (trace or evolve(H, grid)).U
    cond = np.linalg.cond(U)
    if np.any(~np.isfinite(cond)) or np.any(cond > MAX_PROPAGATOR_COND):
        k = int(np.argmax(~np.isfinite(cond) | (cond > MAX_PROPAGATOR_COND)))
        raise SingularPropagator(f"propagator condition number {cond[k]:.3e} at step {k}")
    Uinv = np.linalg.inv(U)
    eta = adjoint(Uinv) @ eta0 @ Uinv
    return _trajectory(grid, eta, eta0, "conjugation_general")


def integrate_metric_ode(
    H: HamiltonianSpec,
    eta0,
    grid: TimeGrid,
    dissipator: Callable[[np.ndarray], np.ndarray] | None = None,
    provenance: str = "ode_lvn",
) -> MetricTrajectory:
    """Classical RK4 for ``d(eta)/dt = (H^dagger eta - eta H)/(i hbar) - D(eta)``.

    The iterate is re-symmetrised after every step; the removed anti-Hermitian
    part is recorded per step in ``symmetrization_defect``.
    """
    eta0 = _check_eta0(eta0, H.dim)
    dt, hbar = grid.dt, grid.hbar
    times = grid.times
    H_nodes = sample_hamiltonian(H, times)
    H_mids = sample_hamiltonian(H, grid.midpoints)
    Hd_nodes = adjoint(H_nodes)
    Hd_mids = adjoint(H_mids)
    coef = 1.0 / (1j * hbar)

    def rhs(h, hd, x):
        out = coef * (hd @ x - x @ h)
        if dissipator is not None:
            out = out - dissipator(x)
        return out

    eta = np.empty((grid.steps + 1, H.dim, H.dim), dtype=complex)
    sym = np.zeros(grid.steps + 1)
    x = eta0.copy()
    eta[0] = x
    for k in range(grid.steps):
        k1 = rhs(H_nodes[k], Hd_nodes[k], x)
        k2 = rhs(H_mids[k], Hd_mids[k], x + 0.5 * dt * k1)
        k3 = rhs(H_mids[k], Hd_mids[k], x + 0.5 * dt * k2)
        k4 = rhs(H_nodes[k + 1], Hd_nodes[k + 1], x + dt * k3)
        y = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x = hermitize(y)
        sym[k + 1] = float(fro(y - x))
        eta[k + 1] = x
    logger.debug("RK4 metric integration: max symmetrization defect %.3e", sym.max())
    return _trajectory(grid, eta, eta0, provenance, sym)


def evolve_metric_lvn(H: HamiltonianSpec, eta0, grid: TimeGrid) -> MetricTrajectory:
    """The invariant equation integrated directly with RK4 (no dissipation)."""
    return integrate_metric_ode(H, eta0, grid, None, "ode_lvn")


def lvn_residuals(H: HamiltonianSpec, traj: MetricTrajectory) -> np.ndarray:
    """Central-difference residual of the invariant equation at interior points."""
    if len(traj) < 3:
        raise ValueError("need at least three trajectory points")
    grid = traj.grid
    Hk = sample_hamiltonian(H, grid.times[1:-1], herm_tol=np.inf)
    eta = traj.eta
    lhs = 1j * grid.hbar * (eta[2:] - eta[:-2]) / (2.0 * grid.dt)
    rhs = adjoint(Hk) @ eta[1:-1] - eta[1:-1] @ Hk
    return fro(lhs - rhs)


def lvn_residual(H: HamiltonianSpec, traj: MetricTrajectory) -> float:
    """``max_k ||i hbar (eta_{k+1} - eta_{k-1}) / 2dt - (H^dagger eta_k - eta_k H)||_F``."""
    return float(np.max(lvn_residuals(H, traj)))


def make_positive_invariant(I, herm_tol=HERM_TOL) -> np.ndarray:
    """``I^2 + 1``: positive-definite, and an invariant whenever ``I`` is."""
    I = as_operator(I, name="invariant")
    if not is_hermitian(I, herm_tol):
        raise NotHermitian("make_positive_invariant needs a Hermitian invariant")
    return I @ I + np.eye(I.shape[-1])


def inner_product_drift(
    H: HamiltonianSpec,
    traj: MetricTrajectory,
    psi0,
    phi0,
    trace: PropagatorTrace | None = None,
) -> np.ndarray:
    """``|<psi_k, eta_k phi_k> - <psi0, eta0 phi0>|`` at every grid point."""
    psi0 = as_state(psi0)
    phi0 = as_state(phi0)
    if psi0.shape[0] != H.dim or phi0.shape[0] != H.dim:
        raise DimensionMismatch("states must match the Hamiltonian dimension")
    U = (trace or evolve(H, traj.grid)).U
    psi = U @ psi0
    phi = U @ phi0
    values = eta_inner_batch(psi, phi, traj.eta)
    ref = np.vdot(psi0, traj.eta0 @ phi0)
    return np.abs(values - ref)


def conserved_inner_product_check(H, traj, psi0, phi0, trace=None) -> float:
    return float(np.max(inner_product_drift(H, traj, psi0, phi0, trace)))
