"""Randomized verification suite over seeded random scenarios.

Each trial owns a generator ``default_rng([seed, trial])``, so trials are
independent of each other and of the worker count. Results are aggregated
by sorting on check name; wall times go to a separate file so the report
itself is reproducible bit for bit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import covariance as cov
from . import metric as met
from . import phases as ph
from .config import MetricSpec, ScenarioConfig, save_config
from .hamiltonian import SIGMA_X, HamiltonianSpec
from .linalg import adjoint, fro
from .propagator import evolve
from .report import RunReport, measure
from .runner import (
    DRIFT_TOL,
    EIG_DRIFT_TOL,
    GAUGE_TOL,
    H2_ORDER_TOL,
    H2_TOL,
    ISOMETRY_TOL,
    RECONSTRUCTION_TOL,
    random_states,
)
from .serialization import write_json

logger = logging.getLogger(__name__)

DEFAULT_DIMS = (2, 4, 8)
DEFAULT_TRIALS = 50
DEFAULT_STEPS = 10_000
NON_HERMITIAN_EVERY = 5
CLOSURE_TOL = 1e-8
CORRUPTION = 1e-3


def random_hermitian(rng, d, scale=1.0) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (g + adjoint(g))


def random_metric(rng, d, eps=0.1) -> np.ndarray:
    """``G^dagger G + eps*1`` with standard-normal complex ``G``."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return adjoint(g) @ g + eps * np.eye(d)


def random_fourier_hamiltonian(rng, d, hermitian=True) -> HamiltonianSpec:
    """``Ha + Hb cos(nu t) + Hc sin(nu t)`` with terms scaled by ``1/sqrt(d)``."""
    s = 1.0 / np.sqrt(d)
    a, b, c = (random_hermitian(rng, d, s) for _ in range(3))
    nu = rng.uniform(0.5, 2.0)
    if not hermitian:
        a = a + 0.3 * s * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return HamiltonianSpec.fourier(a, b, c, nu, hermitian=hermitian)


def trial_config(seed: int, index: int, dims=DEFAULT_DIMS, steps=DEFAULT_STEPS, hermitian=None) -> ScenarioConfig:
    """The scenario for one trial; a pure function of its arguments.

    By default every fifth trial gets a non-Hermitian Hamiltonian.
    """
    rng = np.random.default_rng([seed, index])
    d = int(dims[index % len(dims)])
    if hermitian is None:
        hermitian = index % NON_HERMITIAN_EVERY != NON_HERMITIAN_EVERY - 1
    H = random_fourier_hamiltonian(rng, d, hermitian)
    eta0 = random_metric(rng, d)
    eta1 = random_metric(rng, d)
    return ScenarioConfig(
        dimension=d,
        t0=0.0,
        t1=1.0,
        steps=int(steps),
        hamiltonian=H,
        name=f"trial{index:03d}",
        eta0=MetricSpec("matrix", eta0),
        eta1=MetricSpec("matrix", eta1),
        seed=int(rng.integers(2**31)),
    )


def _corrupt(traj: met.MetricTrajectory) -> met.MetricTrajectory:
    eta = traj.eta.copy()
    k = eta.shape[0] // 2
    X = np.zeros(eta.shape[1:], dtype=complex)
    X[:2, :2] = SIGMA_X
    eta[k] = eta[k] + CORRUPTION * X
    return replace(traj, eta=eta)


def run_trial(cfg: ScenarioConfig, corrupt_eta=False) -> list:
    """All invariant checks for one random scenario, as ``CheckResult`` rows."""
    H, grid = cfg.hamiltonian, cfg.grid
    eta0, eta1 = cfg.eta0_matrix(), cfg.eta1_matrix()
    psi0, phi0 = random_states(cfg.seed, cfg.dimension)
    p = cfg.name + "."
    out = []
    trace = evolve(H, grid)

    def fix(traj):
        return _corrupt(traj) if corrupt_eta else traj

    general = fix(met.evolve_metric_general(H, eta0, grid, trace))
    out.append(measure(
        p + "drift_general",
        lambda: met.conserved_inner_product_check(H, general, psi0, phi0, trace),
        DRIFT_TOL,
    ))
    if not H.hermitian:
        out.append(measure(
            p + "drift_nonhermitian",
            lambda: met.conserved_inner_product_check(H, general, psi0, phi0, trace),
            DRIFT_TOL,
        ))
        return out

    h2 = {}

    def h2_defect():
        h2["fine"] = cov.verify_hamiltonian_invariance(H, eta0, grid, trace)
        return h2["fine"]

    out.append(measure(p + "h2_defect", h2_defect, H2_TOL))

    def h2_order():
        coarse = cov.verify_hamiltonian_invariance(H, eta0, grid.with_steps(grid.steps // 2))
        order = np.log2(coarse / h2["fine"])
        return abs(order - 2.0), f"order={order:.4f}"

    if "fine" in h2:
        out.append(measure(p + "h2_order", h2_order, H2_ORDER_TOL))
    traj = fix(met.evolve_metric_hermitian(H, eta0, grid, trace))
    out.append(measure(
        p + "drift_hermitian",
        lambda: met.conserved_inner_product_check(H, traj, psi0, phi0, trace),
        DRIFT_TOL,
    ))
    out.append(measure(p + "eigenvalue_drift", lambda: traj.eigenvalue_drift, EIG_DRIFT_TOL))

    state = {}

    def reconstruction():
        branches = ph.track_eigenbranches(traj, cfg.tolerances.gap_tol)
        state["branches"] = branches
        state["U"] = ph.reconstruct_all(branches, ph.decompose_phases(branches, H, grid))
        return float(np.max(fro(state["U"] - trace.U)))

    out.append(measure(p + "reconstruction", reconstruction, RECONSTRUCTION_TOL))

    def gauge():
        rng = np.random.default_rng(cfg.seed)
        moved = [ph.rephase_branch(b, rng.uniform(0, 2 * np.pi, grid.steps + 1)) for b in state["branches"]]
        U2 = ph.reconstruct_all(moved, ph.decompose_phases(moved, H, grid))
        return float(np.max(fro(U2 - state["U"])))

    if "U" in state:
        out.append(measure(p + "gauge_invariance", gauge, GAUGE_TOL))

    pmap = {}

    def permutation():
        pmap["m"] = cov.metric_permutation_trajectory(H, eta0, eta1, grid, trace)
        return pmap["m"].isometry_defect()

    out.append(measure(p + "permutation_isometry", permutation, ISOMETRY_TOL))
    if "m" in pmap:
        out.append(measure(p + "permutation_hermiticity", lambda: pmap["m"].hermiticity_defect(), mode="info"))
    eta2 = random_metric(np.random.default_rng(cfg.seed), cfg.dimension)
    out.append(measure(
        p + "permutation_closure", lambda: cov.composition_closure_defect(eta0, eta1, eta2), CLOSURE_TOL
    ))
    return out


def _trial_job(args):
    seed, index, dims, steps, corrupt = args
    cfg = trial_config(seed, index, dims, steps)
    return index, run_trial(cfg, corrupt)


def verify(
    seed=42,
    dims=DEFAULT_DIMS,
    trials=DEFAULT_TRIALS,
    steps=DEFAULT_STEPS,
    jobs=1,
    corrupt_eta=False,
    out_dir=None,
) -> RunReport:
    """Run ``trials`` random scenarios and collect their checks.

    With ``out_dir`` the sorted report goes to ``report.json`` (no wall
    times), timings to ``timings.json`` and the config of every failing
    trial to ``failures/trialNNN.json``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if steps % 2:
        raise ValueError("steps must be even for the order check")
    dims = tuple(int(d) for d in dims)
    jobs_args = [(seed, i, dims, steps, corrupt_eta) for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_job, jobs_args))
    else:
        results = [_trial_job(a) for a in jobs_args]
    report = RunReport(f"verify(seed={seed})")
    failing = []
    for index, checks in sorted(results, key=lambda r: r[0]):
        report.extend(checks)
        if any(c.status == "fail" for c in checks):
            failing.append(index)
    for c in report.failures:
        logger.warning(c.line())
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "report.json", report.to_dict(timing=False, sort=True))
        write_json(out / "timings.json", report.timings())
        for index in failing:
            save_config(trial_config(seed, index, dims, steps), out / "failures" / f"trial{index:03d}.json")
    return report

