"""Metric evolution under a Lindblad-type generalisation of the invariant equation.

The metric obeys

    i hbar [d(eta)/dt + D(eta)] = H^dagger eta - eta H,
    D(eta) = 1/2 sum_j ([A_j^dagger, A_j eta] + [eta A_j^dagger, A_j]).

Jump operators ``A_j`` carry square-root rates: ``D`` has units of inverse
time with no ``hbar`` attached (``rate_convention = "sqrt_rate_embedded"``).
The resulting propagator is rebuilt from the spectral formula with the
ordinary dynamical-phase prescription and is in general not unitary with
respect to ``eta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SingularEvolution
from .hamiltonian import HamiltonianSpec, TimeGrid
from .linalg import adjoint, as_operator, commutator, fro
from .metric import MetricTrajectory, integrate_metric_ode
from .phases import GAP_TOL, OVERLAP_FLOOR, decompose_phases, reconstruct_all, track_eigenbranches

RATE_CONVENTION = "sqrt_rate_embedded"


@dataclass(frozen=True, eq=False)
class LindbladSet:
    ops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ops = tuple(as_operator(a, name="Lindblad operator") for a in self.ops)
        dims = {a.shape[0] for a in ops}
        if len(dims) > 1:
            raise DimensionMismatch(f"Lindblad operators have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "ops", ops)

    def __len__(self):
        return len(self.ops)

    def scaled(self, factor: float) -> "LindbladSet":
        return LindbladSet(tuple(factor * a for a in self.ops))


def dissipator(eta, L: LindbladSet) -> np.ndarray:
    eta = np.asarray(eta, dtype=complex)
    out = np.zeros_like(eta)
    for A in L.ops:
        if A.shape[-1] != eta.shape[-1]:
            raise DimensionMismatch(f"Lindblad operator dimension {A.shape[-1]} vs metric {eta.shape[-1]}")
        Ad = adjoint(A)
        out = out + 0.5 * (commutator(Ad, A @ eta) + commutator(eta @ Ad, A))
    return out


def evolve_metric_lindblad(H: HamiltonianSpec, eta0, L: LindbladSet, grid: TimeGrid) -> MetricTrajectory:
    """RK4 integration of the dissipative metric equation.

    Positivity is monitored (``traj.min_eigenvalues``); losing it emits
    :class:`~tdmetric.errors.PositivityLost` and sets ``traj.positivity_lost``
    but still returns the trajectory.
    """
    for A in L.ops:
        if A.shape[-1] != H.dim:
            raise DimensionMismatch("Lindblad operators must match the Hamiltonian dimension")
    diss = (lambda x: dissipator(x, L)) if len(L) else None
    return integrate_metric_ode(H, eta0, grid, diss, "ode_lindblad")


def generalized_evolution(
    H: HamiltonianSpec,
    traj: MetricTrajectory,
    grid: TimeGrid | None = None,
    gap_tol=GAP_TOL,
    overlap_floor=OVERLAP_FLOOR,
):
    """Spectral-formula propagator built on the (possibly dissipative) metric.

    Returns ``(U, branches)`` with ``U`` of shape ``(K+1, d, d)``; eigenvalue
    drift of each branch is available as ``branch.eigenvalue_drift``.
    """
    grid = grid or traj.grid
    branches = track_eigenbranches(traj, gap_tol, overlap_floor)
    decomposition = decompose_phases(branches, H, grid)
    return reconstruct_all(branches, decomposition), branches


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    H: np.ndarray
    defect_fixed: np.ndarray
    defect_eta: np.ndarray | None


def effective_hamiltonian(U_seq, grid: TimeGrid, traj: MetricTrajectory | None = None) -> EffectiveHamiltonian:
    """``H'_k = i hbar (dU/dt)_k U_k^{-1}`` with central differences inside.

    Hermiticity defects are reported for the fixed metric,
    ``||H' - H'^dagger||_F``, and, when ``traj`` is given, for the
    ``eta``-weighted adjoint, ``||eta^{-1} H'^dagger eta - H'||_F``.
    """
    U = np.asarray(U_seq, dtype=complex)
    cond = np.linalg.cond(U)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
        raise SingularEvolution(f"evolution operator condition number reaches {float(np.max(cond)):.3e}")
    dU = np.gradient(U, grid.dt, axis=0, edge_order=2)
    Hp = 1j * grid.hbar * dU @ np.linalg.inv(U)
    defect_fixed = fro(Hp - adjoint(Hp))
    defect_eta = None
    if traj is not None:
        eta = traj.eta
        defect_eta = fro(np.linalg.solve(eta, adjoint(Hp) @ eta) - Hp)
    return EffectiveHamiltonian(Hp, defect_fixed, defect_eta)


def nonunitarity_wrt_eta(U_seq, traj: MetricTrajectory) -> np.ndarray:
    """``||U^# U - 1||_F`` with ``U^# = eta(t0)^{-1} U^dagger eta(t_k)``."""
    U = np.asarray(U_seq, dtype=complex)
    d = U.shape[-1]
    sharp = np.linalg.solve(traj.eta0, adjoint(U) @ traj.eta)
    return fro(sharp @ U - np.eye(d))


def lindblad_rows(traj: MetricTrajectory, U_seq, eff: EffectiveHamiltonian):
    """Rows for the Lindblad CSV: t, min_eig_eta, trace_eta, nonunitarity, hprime defects."""
    nonu = nonunitarity_wrt_eta(U_seq, traj)
    trace = np.real(np.trace(traj.eta, axis1=1, axis2=2))
    d_eta = eff.defect_eta if eff.defect_eta is not None else np.full_like(nonu, np.nan)
    for k, t in enumerate(traj.grid.times):
        yield {
            "t": float(t),
            "min_eig_eta": float(traj.min_eigenvalues[k]),
            "trace_eta": float(trace[k]),
            "nonunitarity": float(nonu[k]),
            "hprime_defect_fixed": float(eff.defect_fixed[k]),
            "hprime_defect_eta": float(d_eta[k]),
        }
