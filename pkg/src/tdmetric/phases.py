"""Eigenbranches of a metric trajectory and their phase decomposition.

For a nondegenerate invariant ``eta(t)`` with orthonormal eigenvectors
``v_n(t)`` the propagator is

    U(t, t0) = sum_n exp(i alpha_n) |v_n(t)><v_n(t0)|,   alpha_n = delta_n + gamma_n,

with dynamical phase ``delta_n = -(1/hbar) int <v_n|H|v_n> dt`` and geometric
phase ``gamma_n = i int <v_n|dv_n/dt> dt``. Geometric phases are accumulated as
discrete Pancharatnam sums ``-sum_j arg <v_j, v_{j+1}>``, which are exact
gauge covariants: rephasing ``v_k -> exp(i theta_k) v_k`` shifts ``gamma(t_k)``
by ``-(theta_k - theta_0)`` and nothing else.

Two gauges are carried for every branch:

``continuity``
    successive overlaps real-positive (parallel transport); its open-path
    Pancharatnam sum vanishes identically.
``canonical``
    each eigenvector's largest-modulus component real-positive. This depends
    on ``eta(t_k)`` alone, so on a closed loop it returns to its start and the
    accumulated phase is the cyclic geometric phase. Reported phases use it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    BranchCrossing,
    DegenerateSpectrum,
    IncompleteBranchSet,
    NonRealExpectation,
    NotCyclic,
)
from .hamiltonian import HamiltonianSpec, TimeGrid
from .linalg import HERM_TOL, canonical_phase, hermitize, hermiticity_defect
from .metric import MetricTrajectory
from .propagator import sample_hamiltonian

GAP_TOL = 1e-6
OVERLAP_FLOOR = 0.9
CYC_TOL = 1e-6
IMAG_TOL = 1e-8
GAUGES = ("canonical", "continuity")


@dataclass(frozen=True, eq=False)
class EigenBranch:
    index: int
    lam: float
    eigenvalues: np.ndarray
    vectors: np.ndarray
    raw_vectors: np.ndarray
    min_gap: float
    residual: np.ndarray

    def gauge_vectors(self, gauge: str) -> np.ndarray:
        if gauge == "continuity":
            return self.vectors
        if gauge == "canonical":
            return self.raw_vectors
        raise ValueError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")

    @property
    def eigenvalue_drift(self) -> np.ndarray:
        return self.eigenvalues - self.lam


@dataclass(frozen=True, eq=False)
class PhaseDecomposition:
    """Per-branch ``delta``, ``gamma`` and ``alpha`` arrays of shape ``(n, K+1)``."""

    grid: TimeGrid
    lambdas: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    gauge: str = "canonical"

    @property
    def alpha(self) -> np.ndarray:
        return self.delta + self.gamma

    def rows(self, branches=None):
        """One dict per grid point per branch, in the phases CSV column order."""
        times = self.grid.times
        alpha = self.alpha
        for n in range(self.delta.shape[0]):
            resid = branches[n].residual if branches is not None else np.zeros_like(times)
            for k, t in enumerate(times):
                yield {
                    "t": float(t),
                    "branch": n,
                    "lambda": float(self.lambdas[n]),
                    "delta": float(self.delta[n, k]),
                    "gamma": float(self.gamma[n, k]),
                    "alpha": float(alpha[n, k]),
                    "eigresidual": float(resid[k]),
                }


def _match(prev, cur):
    """Permutation ``perm`` with ``cur[:, perm[n]]`` continuing ``prev[:, n]``."""
    overlap = np.abs(np.conj(prev).T @ cur)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm, overlap[np.arange(len(perm)), perm]


def track_eigenbranches(
    traj: MetricTrajectory,
    gap_tol=GAP_TOL,
    overlap_floor=OVERLAP_FLOOR,
    herm_tol=HERM_TOL,
) -> list[EigenBranch]:
    """Follow each eigenvector of ``eta(t)`` along the trajectory.

    Branches are matched step to step by maximal overlap (so they survive
    drifting eigenvalues) and rephased into the continuity gauge.

    Raises
    ------
    DegenerateSpectrum
        If two eigenvalues of ``eta0`` are within ``gap_tol``.
    BranchCrossing
        If along the way a gap closes to ``gap_tol`` or a successive overlap
        drops to ``overlap_floor``.
    """
    eta = traj.eta
    worst = float(np.max(hermiticity_defect(eta)))
    if worst > herm_tol:
        raise ValueError(f"metric trajectory is not Hermitian (relative defect {worst:.3e})")
    w, v = np.linalg.eigh(hermitize(eta))
    v = canonical_phase(v)
    K, d = w.shape
    gaps0 = np.diff(w[0])
    if d > 1 and np.min(gaps0) <= gap_tol:
        raise DegenerateSpectrum(f"initial metric spectrum has gap {np.min(gaps0):.3e} <= {gap_tol:.1e}")

    # Fast path: eigh ordering already continues every branch.
    ov = np.einsum("kin,kin->kn", np.conj(v[:-1]), v[1:])
    order = np.tile(np.arange(d), (K, 1))
    if np.any(np.abs(ov) <= overlap_floor):
        for k in range(1, K):
            perm, _ = _match(v[k - 1][:, order[k - 1]], v[k])
            order[k] = perm
        w = np.take_along_axis(w, order, axis=1)
        v = np.take_along_axis(v, order[:, None, :], axis=2)
        ov = np.einsum("kin,kin->kn", np.conj(v[:-1]), v[1:])
    mod = np.abs(ov)
    if np.any(mod <= overlap_floor):
        k, n = np.argwhere(mod <= overlap_floor)[0]
        raise BranchCrossing(f"branch {n} overlap {mod[k, n]:.3f} between steps {k} and {k + 1}")

    # Gap of each branch to every other branch, per point.
    if d > 1:
        diff = np.abs(w[:, :, None] - w[:, None, :])
        diff[:, np.arange(d), np.arange(d)] = np.inf
        gaps = diff.min(axis=2)
        if np.min(gaps) <= gap_tol:
            k, n = np.unravel_index(np.argmin(gaps), gaps.shape)
            raise BranchCrossing(f"branch {n} gap {gaps[k, n]:.3e} <= {gap_tol:.1e} at step {k}")
    else:
        gaps = np.full((K, 1), np.inf)

    # Continuity gauge: c_k = raw_k * exp(i phi_k), phi_k = -sum_{j<k} arg <raw_j, raw_{j+1}>.
    phi = np.vstack([np.zeros((1, d)), -np.cumsum(np.angle(ov), axis=0)])
    cont = v * np.exp(1j * phi)[:, None, :]

    scale = np.linalg.norm(eta, 2, axis=(1, 2))
    resid = np.linalg.norm(eta @ v - v * w[:, None, :], axis=1) / scale[:, None]
    branches = []
    for n in range(d):
        branches.append(
            EigenBranch(
                index=n,
                lam=float(w[0, n]),
                eigenvalues=w[:, n].copy(),
                vectors=cont[:, :, n].copy(),
                raw_vectors=v[:, :, n].copy(),
                min_gap=float(gaps[:, n].min()),
                residual=resid[:, n].copy(),
            )
        )
    return branches


def _expectations(vectors, H_nodes):
    return np.einsum("ki,kij,kj->k", np.conj(vectors), H_nodes, vectors)


def dynamical_phase(branch: EigenBranch, H: HamiltonianSpec, grid: TimeGrid, H_nodes=None) -> np.ndarray:
    """Trapezoidal ``delta_n(t_k) = -(1/hbar) int <v|H|v> dt``.

    Raises
    ------
    NonRealExpectation
        If ``H`` is flagged Hermitian but an expectation value has an
        imaginary part above 1e-8 (relative to its size, floor 1).
    """
    if H_nodes is None:
        H_nodes = sample_hamiltonian(H, grid.times)
    e = _expectations(branch.vectors, H_nodes)
    if H.hermitian:
        bad = np.abs(e.imag) > IMAG_TOL * np.maximum(1.0, np.abs(e.real))
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NonRealExpectation(f"<v|H|v> has imaginary part {e.imag[k]:.3e} at step {k}")
    f = e.real
    integral = np.concatenate([[0.0], np.cumsum(0.5 * grid.dt * (f[1:] + f[:-1]))])
    return -integral / grid.hbar


def pancharatnam_phase(vectors) -> np.ndarray:
    """Open-path accumulation ``-sum_{j<k} arg <v_j, v_{j+1}>`` (unwrapped)."""
    ov = np.einsum("ki,ki->k", np.conj(vectors[:-1]), vectors[1:])
    return np.concatenate([[0.0], -np.cumsum(np.angle(ov))])


def geometric_phase(branch: EigenBranch, gauge: str = "canonical") -> np.ndarray:
    """Geometric phase ``gamma_n(t_k)`` accumulated in the requested gauge.

    In the continuity gauge this is zero to rounding by construction; the
    canonical gauge gives a value that depends only on the metric path. The
    two are related by the gauge covariance
    ``exp(i gamma) v`` (same in both gauges).
    """
    return pancharatnam_phase(branch.gauge_vectors(gauge))


def decompose_phases(
    branches: list[EigenBranch], H: HamiltonianSpec, grid: TimeGrid, gauge: str = "canonical"
) -> PhaseDecomposition:
    H_nodes = sample_hamiltonian(H, grid.times, herm_tol=np.inf)
    delta = np.array([dynamical_phase(b, H, grid, H_nodes) for b in branches])
    gamma = np.array([geometric_phase(b, gauge) for b in branches])
    lambdas = np.array([b.lam for b in branches])
    return PhaseDecomposition(grid, lambdas, delta, gamma, gauge)


def _check_complete(branches):
    d = branches[0].vectors.shape[1] if branches else 0
    if not branches or len(branches) != d:
        raise IncompleteBranchSet(f"need {d} branches for a {d}-dimensional space, got {len(branches)}")
    return d


def reconstruct_evolution(branches, decomposition: PhaseDecomposition, k: int) -> np.ndarray:
    """``sum_n exp(i alpha_n(t_k)) |v_n(t_k)><v_n(t0)|`` at grid point ``k``."""
    _check_complete(branches)
    V = np.stack([b.gauge_vectors(decomposition.gauge) for b in branches], axis=-1)
    phase = np.exp(1j * decomposition.alpha[:, k])
    return (V[k] * phase) @ np.conj(V[0]).T


def reconstruct_all(branches, decomposition: PhaseDecomposition) -> np.ndarray:
    """:func:`reconstruct_evolution` at every grid point, shape ``(K+1, d, d)``."""
    _check_complete(branches)
    V = np.stack([b.gauge_vectors(decomposition.gauge) for b in branches], axis=-1)
    phase = np.exp(1j * decomposition.alpha.T)
    return (V * phase[:, None, :]) @ np.conj(V[0]).T


def rephase_branch(branch: EigenBranch, theta: np.ndarray) -> EigenBranch:
    """Copy of ``branch`` with canonical-gauge vectors multiplied by ``exp(i theta_k)``."""
    return replace(branch, raw_vectors=branch.raw_vectors * np.exp(1j * np.asarray(theta))[:, None])


def completeness_defect(branches) -> float:
    """``max_k ||sum_n |v_n><v_n| - 1||_F``."""
    d = _check_complete(branches)
    V = np.stack([b.vectors for b in branches], axis=-1)
    P = V @ np.conj(np.swapaxes(V, -1, -2))
    return float(np.max(np.linalg.norm(P - np.eye(d), axis=(1, 2))))


@dataclass(frozen=True)
class CyclicPhase:
    delta: float
    gamma: float
    period_steps: int

    @property
    def total(self) -> float:
        return self.delta + self.gamma


def wrap_angle(x):
    """Map angles to ``(-pi, pi]``."""
    y = np.mod(np.asarray(x) + np.pi, 2.0 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def cyclic_phase(
    branch: EigenBranch,
    H: HamiltonianSpec,
    grid: TimeGrid,
    period_steps: int | None = None,
    cyc_tol=CYC_TOL,
) -> CyclicPhase:
    """Dynamical and closed-loop geometric phase over ``period_steps`` steps.

    The geometric phase is the gauge-invariant Pancharatnam loop
    ``-arg(<v_0,v_1> ... <v_{P-1},v_P> <v_P,v_0>)`` in ``(-pi, pi]``.

    Raises
    ------
    NotCyclic
        If ``|<v_0, v_P>| <= 1 - cyc_tol``.
    """
    P = grid.steps if period_steps is None else int(period_steps)
    if not 1 <= P <= grid.steps:
        raise ValueError(f"period_steps must lie in [1, {grid.steps}], got {P}")
    v = branch.vectors
    ret = complex(np.vdot(v[P], v[0]))
    if abs(ret) <= 1.0 - cyc_tol:
        raise NotCyclic(f"branch {branch.index} returns with overlap {abs(ret):.6f}")
    open_part = pancharatnam_phase(v[: P + 1])[-1]
    gamma = wrap_angle(open_part - math.atan2(ret.imag, ret.real))
    delta = float(dynamical_phase(branch, H, grid)[P])
    return CyclicPhase(delta, gamma, P)
