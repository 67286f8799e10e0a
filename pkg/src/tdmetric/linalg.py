"""Dense complex linear algebra used throughout the package.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``; most
functions here also accept stacks of shape ``(..., d, d)`` so that whole
trajectories can be processed without Python loops.

Inner products are conjugate-linear in the first argument,
``<psi, phi> = sum(conj(psi) * phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotHermitian, NotPositiveDefinite

HERM_TOL = 1e-9
PD_TOL = 1e-9
# Threshold for choosing the spectral branch of matrix_exp.
EXP_HERM_TOL = 1e-12

_TAYLOR_ORDER = 18


def as_operator(a, dim=None, name="operator") -> np.ndarray:
    """Coerce ``a`` to a finite complex square matrix (or stack of them)."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[-1] != dim:
        raise DimensionMismatch(f"{name} has dimension {arr.shape[-1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_state(v, dim=None, name="state") -> np.ndarray:
    arr = np.asarray(v, dtype=complex)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name} has {arr.shape[0]} components, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def adjoint(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"cannot commute shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def fro(a):
    """Frobenius norm over the last two axes."""
    return np.linalg.norm(a, ord="fro", axis=(-2, -1))


def hermiticity_defect(a):
    """Relative defect ``||A - A^dagger||_F / ||A||_F`` (0 for the zero matrix)."""
    num = fro(a - adjoint(a))
    den = fro(a)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def is_hermitian(a, herm_tol=HERM_TOL) -> bool:
    return bool(np.all(hermiticity_defect(a) <= herm_tol))


def hermitize(a):
    return 0.5 * (a + adjoint(a))


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (ascending) and orthonormal eigenvectors stored as columns."""

    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self):
        yield self.values
        yield self.vectors


def canonical_phase(vectors):
    """Rotate each column so its largest-modulus component is real-positive.

    Ties in modulus go to the lowest index, as ``np.argmax`` does.
    """
    idx = np.argmax(np.abs(vectors), axis=-2)
    lead = np.take_along_axis(vectors, idx[..., None, :], axis=-2)[..., 0, :]
    mod = np.abs(lead)
    phase = np.where(mod > 0, lead / np.where(mod > 0, mod, 1.0), 1.0)
    out = vectors * np.conj(phase)[..., None, :]
    # Pin the leading component to exactly real so the gauge is bit-stable.
    np.put_along_axis(out, idx[..., None, :], mod[..., None, :].astype(out.dtype), axis=-2)
    return out


def _eigh_checked(a, herm_tol):
    a = as_operator(a)
    if not is_hermitian(a, herm_tol):
        defect = float(np.max(hermiticity_defect(a)))
        raise NotHermitian(f"relative hermiticity defect {defect:.3e} exceeds {herm_tol:.1e}")
    return np.linalg.eigh(hermitize(a))


def herm_eig(a, herm_tol=HERM_TOL) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix (or stack).

    Eigenvalues come out ascending. Each eigenvector is rephased so that its
    largest-modulus component is real and positive, which makes the output
    reproducible across runs.

    Raises
    ------
    NotHermitian
        If ``||A - A^dagger||_F > herm_tol * ||A||_F``.
    """
    w, v = _eigh_checked(a, herm_tol)
    return EigenSystem(w, canonical_phase(v))


def _expm_taylor(a):
    norm = float(np.max(np.abs(a).sum(axis=-2))) if a.size else 0.0
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    x = a / (2.0**s)
    eye = np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape)
    result = eye.copy()
    term = eye.copy()
    for n in range(1, _TAYLOR_ORDER + 1):
        term = term @ x / n
        result = result + term
    for _ in range(s):
        result = result @ result
    return result


def _spectral_exp(w, v, scale):
    return (v * np.exp(scale * w)[..., None, :]) @ adjoint(v)


def matrix_exp(a):
    """Matrix exponential of an operator or a stack of operators.

    Hermitian and anti-Hermitian inputs (relative defect below 1e-12) go
    through ``eigh``; anything else uses scaling and squaring of a truncated
    Taylor series.
    """
    a = as_operator(a)
    if not np.any(a):
        return np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape).copy()
    if np.all(hermiticity_defect(a) <= EXP_HERM_TOL):
        w, v = np.linalg.eigh(hermitize(a))
        return _spectral_exp(w, v, 1.0)
    k = -1j * a
    if np.all(hermiticity_defect(k) <= EXP_HERM_TOL):
        w, v = np.linalg.eigh(hermitize(k))
        return _spectral_exp(w, v, 1j)
    return _expm_taylor(a)


def exp_hermitian(h, scale):
    """``exp(scale * H)`` for Hermitian ``H`` (any complex ``scale``), via ``eigh``."""
    w, v = np.linalg.eigh(hermitize(np.asarray(h, dtype=complex)))
    return _spectral_exp(w, v, scale)


def _pd_eigh(eta, pd_tol, herm_tol):
    w, v = _eigh_checked(eta, herm_tol)
    top = np.max(np.abs(w), axis=-1)
    bad = np.min(w, axis=-1) <= pd_tol * top
    if np.any(bad):
        raise NotPositiveDefinite(
            f"minimum eigenvalue {float(np.min(w)):.3e} is not above {pd_tol:.1e} relative to the spectrum"
        )
    return w, v


def pd_sqrt(eta, pd_tol=PD_TOL, herm_tol=HERM_TOL):
    """Unique positive-definite square root.

    Raises
    ------
    NotPositiveDefinite
        If the smallest eigenvalue is not above ``pd_tol`` times the largest.
    NotHermitian
    """
    w, v = _pd_eigh(eta, pd_tol, herm_tol)
    return (v * np.sqrt(w)[..., None, :]) @ adjoint(v)


def pd_inv_sqrt(eta, pd_tol=PD_TOL, herm_tol=HERM_TOL):
    """Inverse of :func:`pd_sqrt`, built from reciprocal eigenvalue roots."""
    w, v = _pd_eigh(eta, pd_tol, herm_tol)
    return (v * (1.0 / np.sqrt(w))[..., None, :]) @ adjoint(v)


def is_positive_definite(a, pd_tol=PD_TOL, herm_tol=HERM_TOL) -> bool:
    try:
        _pd_eigh(a, pd_tol, herm_tol)
    except (NotHermitian, NotPositiveDefinite):
        return False
    return True


def eta_inner(psi, phi, eta=None) -> complex:
    """Metric-weighted inner product ``<psi, eta phi>``; ``eta=None`` means identity."""
    psi = as_state(psi)
    phi = as_state(phi, dim=psi.shape[0])
    if eta is None:
        return complex(np.vdot(psi, phi))
    eta = np.asarray(eta, dtype=complex)
    if eta.shape != (psi.shape[0], psi.shape[0]):
        raise DimensionMismatch(f"metric shape {eta.shape} does not match state dimension {psi.shape[0]}")
    return complex(np.vdot(psi, eta @ phi))


def eta_inner_batch(psi, phi, eta):
    """Row-wise ``<psi_k, eta_k phi_k>`` for stacks ``(K, d)``, ``(K, d)``, ``(K, d, d)``."""
    return np.einsum("ki,kij,kj->k", np.conj(psi), eta, phi)

