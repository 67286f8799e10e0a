"""Time-ordered evolution operators on uniform grids.

The time-ordered exponential is realised by the exponential midpoint rule

    U_{k+1} = exp(-(i/hbar) dt H(t_k + dt/2)) U_k,   U_0 = 1,

which is second order, exact for constant ``H`` and unitary step by step
whenever ``H`` is Hermitian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EvaluationFailure, NotHermitian
from .hamiltonian import HamiltonianSpec, TimeGrid
from .linalg import HERM_TOL, adjoint, as_state, exp_hermitian, fro, hermiticity_defect, matrix_exp

EXACT = math.inf
"""Sentinel returned by :func:`convergence_order` when the scheme is exact."""


@dataclass(frozen=True, eq=False)
class PropagatorTrace:
    grid: TimeGrid
    U: np.ndarray
    unitarity_defect: np.ndarray
    hermitian: bool

    @property
    def defect_constant(self) -> float:
        """Fitted ``C`` in ``max_k ||U_k^dagger U_k - 1||_F <= C dt^2``."""
        return float(np.max(self.unitarity_defect)) / self.grid.dt**2

    @property
    def det_modulus_defect(self) -> np.ndarray:
        return np.abs(np.abs(np.linalg.det(self.U)) - 1.0)


def sample_hamiltonian(H: HamiltonianSpec, times, herm_tol=HERM_TOL) -> np.ndarray:
    try:
        mats = H.sample(times)
    except EvaluationFailure:
        raise
    except Exception as exc:  # noqa: BLE001 - surface any evaluation problem uniformly
        raise EvaluationFailure(f"could not evaluate {H.kind} Hamiltonian: {exc}") from exc
    if mats.shape[1:] != (H.dim, H.dim):
        raise EvaluationFailure(f"Hamiltonian returned shape {mats.shape[1:]}, expected {(H.dim, H.dim)}")
    if not np.all(np.isfinite(mats)):
        raise EvaluationFailure("Hamiltonian produced non-finite entries")
    if H.hermitian:
        worst = float(np.max(hermiticity_defect(mats)))
        if worst > herm_tol:
            raise NotHermitian(f"Hamiltonian flagged Hermitian has relative defect {worst:.3e}")
    return mats


def step_operators(H: HamiltonianSpec, grid: TimeGrid) -> np.ndarray:
    """Per-step exponentials ``exp(-(i/hbar) dt H(t_k + dt/2))``, shape ``(steps, d, d)``."""
    mids = sample_hamiltonian(H, grid.midpoints)
    scale = -1j * grid.dt / grid.hbar
    if H.hermitian:
        return exp_hermitian(mids, scale)
    return matrix_exp(scale * mids)


def evolve(H: HamiltonianSpec, grid: TimeGrid) -> PropagatorTrace:
    """Propagator ``U(t_k, t0)`` at every grid point."""
    steps = step_operators(H, grid)
    d = H.dim
    U = np.empty((grid.steps + 1, d, d), dtype=complex)
    U[0] = np.eye(d)
    for k in range(grid.steps):
        U[k + 1] = steps[k] @ U[k]
    defect = fro(adjoint(U) @ U - np.eye(d))
    return PropagatorTrace(grid, U, defect, H.hermitian)


def solve_schrodinger(H: HamiltonianSpec, psi0, grid: TimeGrid, trace: PropagatorTrace | None = None):
    """States ``psi(t_k) = U_k psi0`` as an array of shape ``(steps + 1, d)``."""
    psi0 = as_state(psi0)
    if psi0.shape[0] != H.dim:
        raise DimensionMismatch(f"state has {psi0.shape[0]} components, Hamiltonian dimension is {H.dim}")
    trace = trace or evolve(H, grid)
    return trace.U @ psi0


def _noise_floor(U: np.ndarray, steps: int) -> float:
    return 1e3 * np.finfo(float).eps * max(1.0, float(np.max(fro(U)))) * math.sqrt(steps)


def convergence_order(H: HamiltonianSpec, grid: TimeGrid) -> float:
    """Observed order from runs at ``steps``, ``steps/2`` and ``steps/4``.

    Differences are taken on the coarsest grid's points. Returns
    :data:`EXACT` when successive refinements agree to rounding, which is the
    case for constant Hamiltonians.
    """
    if grid.steps % 4:
        raise ValueError(f"steps must be divisible by 4, got {grid.steps}")
    fine = evolve(H, grid).U[::4]
    mid = evolve(H, grid.with_steps(grid.steps // 2)).U[::2]
    coarse = evolve(H, grid.with_steps(grid.steps // 4)).U
    e_fine = float(np.max(fro(fine - mid)))
    e_coarse = float(np.max(fro(mid - coarse)))
    if e_fine <= _noise_floor(fine, grid.steps):
        return EXACT
    return math.log2(e_coarse / e_fine)
