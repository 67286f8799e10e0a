"""Scenario pipeline: propagate, evolve the metric, decompose phases,
check the covariance identities and (optionally) the Lindblad extension.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covariance as cov
from . import lindblad as lind
from . import metric as met
from . import phases as ph
from .config import ScenarioConfig
from .errors import TDMetricError
from .hamiltonian import SIGMA_X
from .linalg import fro, pd_inv_sqrt
from .propagator import EXACT, PropagatorTrace, convergence_order, evolve
from .report import CheckResult, RunReport, measure
from .serialization import matrix_to_json, write_csv, write_json

logger = logging.getLogger(__name__)

OUT_ENV = "TDMETRIC_OUT"
DEFAULT_OUT = "tdmetric_out"
STAGES = ("evolve", "metric", "phases", "covariance", "lindblad")

# Pass thresholds for the per-scenario checks.
UNITARITY_TOL = 1e-8
EVOLVE_ORDER_TOL = 0.2
EIG_DRIFT_TOL = 1e-8
GENERAL_AGREEMENT_TOL = 1e-9
LVN_REL_TOL = 1e-5
DRIFT_TOL = 1e-6
COMPLETENESS_TOL = 1e-9
EIG_RESIDUAL_TOL = 1e-8
RECONSTRUCTION_TOL = 1e-5
GAUGE_TOL = 1e-8
CYCLIC_TOL = 1e-4
H2_TOL = 1e-6
H2_ORDER_TOL = 0.3
ISOMETRY_TOL = 1e-8
EXPECTATION_TOL = 1e-7
TRANSPORT_TOL = 1e-5
INEQUIVALENCE_TOL = 1e-2
REDUCTION_TOL = 1e-8
TRACE_DRIFT_TOL = 1e-8
HALVING_TOL = 0.1
HPRIME_FIXED_TOL = 1e-6


def default_output_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def random_states(seed: int, dim: int):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, dim)) + 1j * rng.standard_normal((2, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z[0], z[1]


def coupling_perturbation(dim: int) -> np.ndarray:
    """``sigma_x`` embedded on the first two basis states."""
    X = np.zeros((dim, dim), dtype=complex)
    X[:2, :2] = SIGMA_X
    return X


@dataclass
class _Context:
    cfg: ScenarioConfig
    out_dir: Path | None
    report: RunReport
    trace: PropagatorTrace | None = None
    traj: met.MetricTrajectory | None = None
    branches: list | None = None
    extras: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.cfg.grid

    @property
    def H(self):
        return self.cfg.hamiltonian

    def add(self, result: CheckResult):
        self.report.add(result)
        logger.info(result.line())
        return result

    def wants(self, fmt):
        return self.out_dir is not None and fmt in self.cfg.formats


def _stage_evolve(ctx: _Context):
    H, grid = ctx.H, ctx.grid

    def run():
        ctx.trace = evolve(H, grid)
        return 0.0, f"{grid.steps} steps"

    if ctx.add(measure("evolve.propagate", run, mode="info")).status == "fail":
        return
    trace = ctx.trace
    if H.hermitian:
        ctx.add(measure("evolve.unitarity", lambda: float(np.max(trace.unitarity_defect)), UNITARITY_TOL))
        ctx.add(measure("evolve.det_modulus", lambda: float(np.max(trace.det_modulus_defect)), UNITARITY_TOL))
    if grid.steps % 4 == 0:
        def order():
            p = convergence_order(H, grid)
            if p == EXACT:
                return 0.0, "exact"
            return abs(p - 2.0), f"order={p:.4f}"

        ctx.add(measure("evolve.convergence_order", order, EVOLVE_ORDER_TOL))
    if ctx.wants("csv"):
        rows = (
            {"t": float(t), "unitarity_defect": float(u), "det_modulus_defect": float(d)}
            for t, u, d in zip(grid.times, trace.unitarity_defect, trace.det_modulus_defect)
        )
        write_csv(ctx.out_dir / "propagator.csv", rows, ["t", "unitarity_defect", "det_modulus_defect"])
    if ctx.wants("json"):
        write_json(ctx.out_dir / "propagator.json", {"t1": grid.t1, "U_final": matrix_to_json(trace.U[-1])})


def _require_trace(ctx):
    if ctx.trace is None:
        _stage_evolve(ctx)
    return ctx.trace is not None


def _stage_metric(ctx: _Context):
    if not _require_trace(ctx):
        return
    cfg, H, grid, trace = ctx.cfg, ctx.H, ctx.grid, ctx.trace
    eta0 = cfg.eta0_matrix()

    def build():
        if H.hermitian:
            ctx.traj = met.evolve_metric_hermitian(H, eta0, grid, trace)
        else:
            ctx.traj = met.evolve_metric_general(H, eta0, grid, trace)
        return 0.0, ctx.traj.provenance

    if ctx.add(measure("metric.evolve", build, mode="info")).status == "fail":
        return
    traj = ctx.traj
    if H.hermitian:
        ctx.add(measure("metric.eigenvalue_drift", lambda: traj.eigenvalue_drift, EIG_DRIFT_TOL))

        def agreement():
            general = met.evolve_metric_general(H, eta0, grid, trace)
            return float(np.max(fro(general.eta - traj.eta)))

        ctx.add(measure("metric.general_agreement", agreement, GENERAL_AGREEMENT_TOL))

        def positivity():
            scale = float(np.linalg.norm(eta0, 2))
            return float(np.min(traj.min_eigenvalues)) / scale, "min eigenvalue / ||eta0||"

        ctx.add(measure("metric.positivity", positivity, cfg.tolerances.pd_tol, mode="above"))

    def lvn():
        resid = met.lvn_residuals(H, traj)
        Hk = H.sample(grid.times[1:-1])
        scale = np.maximum(1.0, fro(Hk) * fro(traj.eta[1:-1]))
        return float(np.max(resid / scale))

    ctx.add(measure("metric.lvn_residual", lvn, LVN_REL_TOL))
    psi0, phi0 = random_states(cfg.seed, cfg.dimension)
    drift = met.inner_product_drift(H, traj, psi0, phi0, trace)
    ctx.add(measure("metric.inner_product_drift", lambda: float(np.max(drift)), DRIFT_TOL))
    if ctx.wants("csv"):
        lam = traj.eigenvalues
        eig_drift = np.max(np.abs(lam - lam[0]), axis=1)
        rows = (
            {"t": float(t), "min_eig_eta": float(m), "eigenvalue_drift": float(e), "inner_product_drift": float(d)}
            for t, m, e, d in zip(grid.times, traj.min_eigenvalues, eig_drift, drift)
        )
        write_csv(ctx.out_dir / "metric.csv", rows, ["t", "min_eig_eta", "eigenvalue_drift", "inner_product_drift"])


def _stage_phases(ctx: _Context):
    if ctx.traj is None:
        _stage_metric(ctx)
    if ctx.traj is None or not ctx.H.hermitian:
        return
    cfg, H, grid, trace, traj = ctx.cfg, ctx.H, ctx.grid, ctx.trace, ctx.traj
    tol = cfg.tolerances
    lam0 = np.linalg.eigvalsh(traj.eta0)
    if lam0[-1] - lam0[0] <= tol.gap_tol * lam0[-1]:
        # A scalar metric never moves and any basis diagonalises it, so there
        # is no branch structure to decompose.
        ctx.add(CheckResult("phases.skipped", "pass", None, None, 0.0, "metric proportional to identity"))
        return

    def track():
        ctx.branches = ph.track_eigenbranches(traj, tol.gap_tol)
        return min(b.min_gap for b in ctx.branches), "min gap"

    if ctx.add(measure("phases.branches", track, mode="info")).status == "fail":
        return
    branches = ctx.branches
    dec = ph.decompose_phases(branches, H, grid)
    ctx.add(measure("phases.completeness", lambda: ph.completeness_defect(branches), COMPLETENESS_TOL))
    ctx.add(measure(
        "phases.eigen_residual", lambda: float(max(np.max(b.residual) for b in branches)), EIG_RESIDUAL_TOL
    ))
    U_rec = ph.reconstruct_all(branches, dec)
    ctx.add(measure("phases.identity_at_t0", lambda: float(fro(U_rec[0] - np.eye(cfg.dimension))), 1e-12))
    ctx.add(measure(
        "phases.reconstruction", lambda: float(np.max(fro(U_rec - trace.U))), RECONSTRUCTION_TOL
    ))

    def gauge():
        rng = np.random.default_rng(cfg.seed + 1)
        moved = [ph.rephase_branch(b, rng.uniform(0, 2 * np.pi, grid.steps + 1)) for b in branches]
        U2 = ph.reconstruct_all(moved, ph.decompose_phases(moved, H, grid))
        return float(np.max(fro(U2 - U_rec)))

    ctx.add(measure("phases.gauge_invariance", gauge, GAUGE_TOL))
    cyclic = []
    if cfg.period_steps is not None:
        P = cfg.period_steps
        for b in branches:
            def one(b=b):
                c = ph.cyclic_phase(b, H, grid, P, tol.cyc_tol)
                cyclic.append({"branch": b.index, "lambda": b.lam, "delta": c.delta, "gamma": c.gamma})
                v0 = b.vectors[0]
                direct = np.angle(np.vdot(v0, trace.U[P] @ v0))
                return abs(ph.wrap_angle(c.total - direct)), f"delta={c.delta:.6f} gamma={c.gamma:.6f}"

            ctx.add(measure(f"phases.cyclic[{b.index}]", one, CYCLIC_TOL))
    if ctx.wants("csv"):
        cols = ["t", "branch", "lambda", "delta", "gamma", "alpha", "eigresidual"]
        write_csv(ctx.out_dir / "phases.csv", dec.rows(branches), cols)
    if ctx.wants("json") and cyclic:
        write_json(ctx.out_dir / "cyclic_phases.json", {"period_steps": cfg.period_steps, "branches": cyclic})


def _stage_covariance(ctx: _Context):
    if ctx.traj is None:
        _stage_metric(ctx)
    if ctx.traj is None or not ctx.H.hermitian:
        return
    cfg, H, grid, trace, traj = ctx.cfg, ctx.H, ctx.grid, ctx.trace, ctx.traj
    eta0 = cfg.eta0_matrix()
    summary: dict = {}

    def h2():
        d = cov.verify_hamiltonian_invariance(H, eta0, grid, trace)
        summary["h2_defect"] = d
        return d

    ctx.add(measure("covariance.h2_defect", h2, H2_TOL))
    if grid.steps % 2 == 0:
        def h2_order():
            fine = summary.get("h2_defect")
            if fine is None:
                fine = cov.verify_hamiltonian_invariance(H, eta0, grid, trace)
            coarse = cov.verify_hamiltonian_invariance(H, eta0, grid.with_steps(grid.steps // 2))
            if max(fine, coarse) < 1e-11:
                summary["h2_convergence_order"] = "exact"
                return 0.0, "exact"
            p = math.log2(coarse / fine)
            summary["h2_convergence_order"] = p
            return abs(p - 2.0), f"order={p:.4f}"

        ctx.add(measure("covariance.h2_order", h2_order, H2_ORDER_TOL))

    umap = cov.rho_inverse_trajectory(H, eta0, grid, trace)

    def iso():
        d = umap.isometry_defect()
        summary["isometry_defect"] = d
        return d

    ctx.add(measure("covariance.rho_inverse_isometry", iso, ISOMETRY_TOL))
    ctx.add(measure(
        "covariance.rho_inverse_vs_metric",
        lambda: float(np.max(fro(umap.V - pd_inv_sqrt(traj.eta)))),
        ISOMETRY_TOL,
    ))
    obs = cov.Observable(cfg.observable, "observable") if cfg.observable is not None else cov.energy_observable(H, grid)
    psi0, _ = random_states(cfg.seed, cfg.dimension)

    def expectation():
        d = cov.expectation_invariance_check(obs, H, eta0, psi0, grid, trace)
        summary["expectation_defect_max"] = d
        return d, obs.label

    ctx.add(measure("covariance.expectation", expectation, EXPECTATION_TOL))
    ctx.add(measure(
        "covariance.transport_residual",
        lambda: cov.schrodinger_transport_residual(H, eta0, psi0, grid, trace),
        TRANSPORT_TOL,
    ))
    eta1 = cfg.eta1_matrix()
    if eta1 is not None:
        def perm():
            pmap = cov.metric_permutation_trajectory(H, eta0, eta1, grid, trace)
            summary["permutation_hermiticity_defect"] = pmap.hermiticity_defect()
            ctx.extras["permutation"] = pmap
            return pmap.isometry_defect()

        if ctx.add(measure("covariance.permutation_isometry", perm, ISOMETRY_TOL)).status == "pass":
            ctx.add(measure(
                "covariance.permutation_hermiticity",
                lambda: summary["permutation_hermiticity_defect"],
                mode="info",
            ))
    if cfg.equivalence_c is not None:
        def equivalent():
            partner = cov.equivalent_partner(H, traj, cfg.equivalence_c)
            res = cov.geometric_equivalence_check(H, partner, traj, cfg.tolerances.equivalence_tol)
            summary["equivalence"] = res.as_dict()
            if res.defect < cfg.tolerances.equivalence_tol and not res.verdict:
                raise ValueError(f"invariant residuals {res.residual_h1:.3e}, {res.residual_h2:.3e} too large")
            return res.defect, f"verdict={res.verdict}"

        ctx.add(measure("covariance.equivalence", equivalent, cfg.tolerances.equivalence_tol))

        def inequivalent():
            other = H.shifted(np.broadcast_to(coupling_perturbation(cfg.dimension), traj.eta.shape), grid.times)
            res = cov.geometric_equivalence_check(H, other, traj, cfg.tolerances.equivalence_tol)
            return res.defect, f"verdict={res.verdict}"

        ctx.add(measure("covariance.inequivalence", inequivalent, INEQUIVALENCE_TOL, mode="above"))
    if ctx.wants("json"):
        write_json(ctx.out_dir / "covariance.json", summary)


def _stage_lindblad(ctx: _Context):
    cfg = ctx.cfg
    if cfg.lindblad is None:
        return
    H, grid = ctx.H, ctx.grid
    eta0 = cfg.eta0_matrix()
    if H.hermitian:
        def reduction():
            ode = lind.evolve_metric_lindblad(H, eta0, lind.LindbladSet(()), grid)
            conj = met.evolve_metric_hermitian(H, eta0, grid, ctx.trace)
            return float(np.max(fro(ode.eta - conj.eta)))

        ctx.add(measure("lindblad.reduction", reduction, REDUCTION_TOL))
    for label, L in cfg.lindblad.sets():
        prefix = f"lindblad[{label}]" if label else "lindblad"
        state: dict = {}

        def integrate(L=L, state=state):
            state["traj"] = lind.evolve_metric_lindblad(H, eta0, L, grid)
            return 0.0, f"{len(L)} operators"

        if ctx.add(measure(f"{prefix}.evolve", integrate, mode="info")).status == "fail":
            continue
        traj = state["traj"]
        ctx.add(CheckResult(
            f"{prefix}.positivity",
            "warn" if traj.positivity_lost else "pass",
            float(np.min(traj.min_eigenvalues)),
            None,
            0.0,
            "PositivityLost" if traj.positivity_lost else "",
        ))
        if H.hermitian:
            def trace_drift(traj=traj):
                tr = np.real(np.trace(traj.eta, axis1=1, axis2=2))
                return float(np.max(np.abs(tr - tr[0]))) / (grid.t1 - grid.t0)

            ctx.add(measure(f"{prefix}.trace_drift", trace_drift, TRACE_DRIFT_TOL))

        def generalized(traj=traj, state=state):
            U, _ = lind.generalized_evolution(H, traj, grid, cfg.tolerances.gap_tol)
            state["U"] = U
            state["nonu"] = lind.nonunitarity_wrt_eta(U, traj)
            return float(state["nonu"][-1]), "final-time nonunitarity"

        if ctx.add(measure(f"{prefix}.nonunitarity", generalized, mode="info")).status == "fail":
            continue
        nonu = state["nonu"]
        if grid.steps % 2 == 0 and nonu[-1] > 1e-6:
            def halving(L=L, nonu=nonu):
                coarse_grid = grid.with_steps(grid.steps // 2)
                t2 = lind.evolve_metric_lindblad(H, eta0, L, coarse_grid)
                U2, _ = lind.generalized_evolution(H, t2, coarse_grid, cfg.tolerances.gap_tol)
                n2 = lind.nonunitarity_wrt_eta(U2, t2)[-1]
                return abs(n2 - nonu[-1]) / nonu[-1], "relative change"

            ctx.add(measure(f"{prefix}.nonunitarity_step_halving", halving, HALVING_TOL))
        eff = lind.effective_hamiltonian(state["U"], grid, traj)
        if H.hermitian:
            ctx.add(measure(
                f"{prefix}.hprime_hermitian_fixed", lambda eff=eff: float(np.max(eff.defect_fixed)), HPRIME_FIXED_TOL
            ))
        ctx.add(measure(f"{prefix}.hprime_defect_eta", lambda eff=eff: float(np.max(eff.defect_eta)), mode="info"))
        if ctx.wants("csv"):
            name = f"lindblad_{label}.csv" if label else "lindblad.csv"
            cols = ["t", "min_eig_eta", "trace_eta", "nonunitarity", "hprime_defect_fixed", "hprime_defect_eta"]
            write_csv(ctx.out_dir / name, lind.lindblad_rows(traj, state["U"], eff), cols)


_STAGE_FUNCS = {
    "evolve": _stage_evolve,
    "metric": _stage_metric,
    "phases": _stage_phases,
    "covariance": _stage_covariance,
    "lindblad": _stage_lindblad,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None, stages=STAGES) -> RunReport:
    """Run the requested stages in pipeline order and collect every check.

    Module errors become failed checks; later stages that do not depend on
    the failed result still run. With ``out_dir`` set, CSV/JSON outputs are
    written according to ``cfg.formats``.
    """
    out = Path(out_dir) if out_dir is not None else None
    ctx = _Context(cfg, out, RunReport(cfg.name))
    for stage in STAGES:
        if stage in stages:
            try:
                _STAGE_FUNCS[stage](ctx)
            except TDMetricError as exc:
                ctx.add(CheckResult(f"{stage}.error", "fail", None, None, 0.0, f"{type(exc).__name__}: {exc}"))
    if out is not None and "json" in cfg.formats:
        write_json(out / "report.json", ctx.report.to_dict())
    return ctx.report
