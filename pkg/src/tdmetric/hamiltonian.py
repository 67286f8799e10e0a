"""Time grids and time-dependent Hamiltonian families."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import DimensionMismatch, EvaluationFailure
from .linalg import as_operator, hermiticity_defect

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

KINDS = ("constant", "pauli_rotating", "piecewise_constant", "sampled", "fourier")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 < t0 + dt < ... < t1`` with ``steps`` intervals, plus hbar."""

    t0: float
    t1: float
    steps: int
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)):
            raise ValueError(f"grid endpoints must be finite, got [{self.t0}, {self.t1}]")
        if not self.t1 > self.t0:
            raise ValueError(f"t1 must exceed t0, got [{self.t0}, {self.t1}]")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.steps) + 0.5)

    def with_steps(self, steps: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.t1, steps, self.hbar)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """A Hamiltonian family ``H(t)`` of one of the supported kinds.

    Parameters by kind:

    * ``constant``: ``matrix``
    * ``pauli_rotating`` (dim 2): ``omega0, omega1, omega, hbar`` with
      ``H(t) = (hbar/2) [omega1 cos(omega t) sx + omega1 sin(omega t) sy + omega0 sz]``
    * ``piecewise_constant``: ``times`` (breakpoints, ascending) and ``matrices``;
      ``matrices[i]`` holds on ``[times[i], times[i+1])``, the last one onwards.
    * ``sampled``: ``times`` and ``matrices``, linearly interpolated, defined
      only on ``[times[0], times[-1]]``.
    * ``fourier``: ``static, cos, sin, nu`` with
      ``H(t) = static + cos * cos(nu t) + sin * sin(nu t)``.
    """

    dim: int
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    hermitian: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "pauli_rotating" and self.dim != 2:
            raise DimensionMismatch("pauli_rotating Hamiltonians are two-dimensional")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, matrix, hermitian=None):
        m = as_operator(matrix)
        if hermitian is None:
            hermitian = bool(hermiticity_defect(m) <= 1e-12)
        return cls(m.shape[0], "constant", {"matrix": m}, hermitian)

    @classmethod
    def pauli_rotating(cls, omega0, omega1, omega, hbar=1.0):
        p = {"omega0": float(omega0), "omega1": float(omega1), "omega": float(omega), "hbar": float(hbar)}
        return cls(2, "pauli_rotating", p, True)

    @classmethod
    def piecewise_constant(cls, times, matrices, hermitian=None):
        return cls._tabulated("piecewise_constant", times, matrices, hermitian)

    @classmethod
    def sampled(cls, times, matrices, hermitian=None):
        spec = cls._tabulated("sampled", times, matrices, hermitian)
        if len(spec.params["times"]) < 2:
            raise ValueError("sampled Hamiltonians need at least two samples")
        return spec

    @classmethod
    def fourier(cls, static, cos, sin, nu, hermitian=None):
        mats = [as_operator(m) for m in (static, cos, sin)]
        dim = mats[0].shape[0]
        for m in mats:
            if m.shape != (dim, dim):
                raise DimensionMismatch("fourier terms must share one dimension")
        if hermitian is None:
            hermitian = all(hermiticity_defect(m) <= 1e-12 for m in mats)
        p = {"static": mats[0], "cos": mats[1], "sin": mats[2], "nu": float(nu)}
        return cls(dim, "fourier", p, bool(hermitian))

    @classmethod
    def _tabulated(cls, kind, times, matrices, hermitian):
        t = np.asarray(times, dtype=float)
        m = as_operator(np.asarray(matrices, dtype=complex), name="matrices")
        if m.ndim != 3 or m.shape[0] != t.shape[0]:
            raise DimensionMismatch("need exactly one matrix per time")
        if t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be non-empty and strictly increasing")
        if hermitian is None:
            hermitian = bool(np.all(hermiticity_defect(m) <= 1e-12))
        return cls(m.shape[1], kind, {"times": t, "matrices": m}, bool(hermitian))

    # -- evaluation -------------------------------------------------------
    def __call__(self, t) -> np.ndarray:
        return self.sample(np.array([t], dtype=float))[0]

    def sample(self, times) -> np.ndarray:
        """Evaluate at every time in ``times``; returns shape ``(n, dim, dim)``."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        p = self.params
        if self.kind == "constant":
            return np.broadcast_to(p["matrix"], (t.size, self.dim, self.dim)).copy()
        if self.kind == "pauli_rotating":
            wt = p["omega"] * t
            c = 0.5 * p["hbar"] * p["omega1"] * np.cos(wt)
            s = 0.5 * p["hbar"] * p["omega1"] * np.sin(wt)
            z = 0.5 * p["hbar"] * p["omega0"]
            return c[:, None, None] * SIGMA_X + s[:, None, None] * SIGMA_Y + z * SIGMA_Z
        if self.kind == "fourier":
            nt = p["nu"] * t
            return (
                p["static"][None]
                + np.cos(nt)[:, None, None] * p["cos"]
                + np.sin(nt)[:, None, None] * p["sin"]
            )
        knots = p["times"]
        mats = p["matrices"]
        if self.kind == "piecewise_constant":
            idx = np.searchsorted(knots, t, side="right") - 1
            if np.any(idx < 0):
                raise EvaluationFailure(f"piecewise Hamiltonian undefined before t={knots[0]}")
            return mats[idx]
        # sampled, linear interpolation
        span = knots[-1] - knots[0]
        slack = 1e-12 * max(1.0, abs(span))
        if np.any(t < knots[0] - slack) or np.any(t > knots[-1] + slack):
            raise EvaluationFailure(
                f"sampled Hamiltonian defined on [{knots[0]}, {knots[-1]}], requested "
                f"[{t.min()}, {t.max()}]"
            )
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
        w = (t - knots[idx]) / (knots[idx + 1] - knots[idx])
        w = np.clip(w, 0.0, 1.0)[:, None, None]
        return (1.0 - w) * mats[idx] + w * mats[idx + 1]

    def shifted(self, extra: np.ndarray, times) -> "HamiltonianSpec":
        """Sampled Hamiltonian ``H(t_k) + extra[k]`` on the given knots."""
        return HamiltonianSpec.sampled(times, self.sample(times) + extra)
