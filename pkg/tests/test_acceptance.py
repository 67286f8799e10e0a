"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import (
    dephasing_metric,
    rabi_cyclic_phases,
    rabi_dynamical_phase_quad,
    rabi_open_geometric_phase,
    rabi_propagator,
)
from tdmetric import covariance as cov
from tdmetric import lindblad as lind
from tdmetric import metric as met
from tdmetric import phases as ph
from tdmetric.hamiltonian import TimeGrid
from tdmetric.library import load_builtin
from tdmetric.linalg import adjoint, fro
from tdmetric.propagator import evolve
from tdmetric.runner import coupling_perturbation, random_states
from tdmetric.verify import random_fourier_hamiltonian, random_metric, trial_config

pytestmark = pytest.mark.slow

SEED = 42
N_SCENARIOS = 50
N_NON_HERMITIAN = 10


def announce(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")


@pytest.fixture(scope="module")
def random_suite():
    """Hamiltonian invariance, inner-product drift and eigenvalue drift for the seeded scenarios."""
    rows = []
    start = time.perf_counter()
    for i in range(N_SCENARIOS):
        cfg = trial_config(SEED, i, hermitian=True)
        H, grid, eta0 = cfg.hamiltonian, cfg.grid, cfg.eta0_matrix()
        trace = evolve(H, grid)
        fine = cov.verify_hamiltonian_invariance(H, eta0, grid, trace)
        coarse = cov.verify_hamiltonian_invariance(H, eta0, grid.with_steps(grid.steps // 2))
        rows.append({"dim": cfg.dimension, "h2": fine, "order": float(np.log2(coarse / fine)), "cfg": cfg, "trace": trace})
    h2_seconds = time.perf_counter() - start
    for row in rows:
        cfg, trace = row["cfg"], row["trace"]
        H, grid, eta0 = cfg.hamiltonian, cfg.grid, cfg.eta0_matrix()
        psi0, phi0 = random_states(cfg.seed, cfg.dimension)
        herm = met.evolve_metric_hermitian(H, eta0, grid, trace)
        gen = met.evolve_metric_general(H, eta0, grid, trace)
        row["drift_hermitian"] = met.conserved_inner_product_check(H, herm, psi0, phi0, trace)
        row["drift_general"] = met.conserved_inner_product_check(H, gen, psi0, phi0, trace)
        row["eig_drift"] = herm.eigenvalue_drift
        del row["trace"]
    non_hermitian = []
    for i in range(N_NON_HERMITIAN):
        cfg = trial_config(SEED, i, hermitian=False)
        H, grid = cfg.hamiltonian, cfg.grid
        trace = evolve(H, grid)
        gen = met.evolve_metric_general(H, cfg.eta0_matrix(), grid, trace)
        psi0, phi0 = random_states(cfg.seed, cfg.dimension)
        non_hermitian.append(met.conserved_inner_product_check(H, gen, psi0, phi0, trace))
    return rows, h2_seconds, non_hermitian


def test_criterion_1_hamiltonian_invariance(random_suite, capsys):
    rows, seconds, _ = random_suite
    worst = max(r["h2"] for r in rows)
    orders = np.array([r["order"] for r in rows])
    dims = sorted({r["dim"] for r in rows})
    ok = worst < 1e-6 and np.all(np.abs(orders - 2.0) <= 0.3) and seconds < 120
    announce(capsys, 1, "H2 = H on random scenarios", ok,
             f"{len(rows)} scenarios dims {dims}, max defect {worst:.2e} (< 1e-6), "
             f"order in [{orders.min():.3f}, {orders.max():.3f}] (2 +- 0.3), {seconds:.1f} s (< 120 s)")
    assert ok


def test_criterion_2_inner_product_drift(random_suite, capsys):
    rows, _, non_hermitian = random_suite
    dh = max(r["drift_hermitian"] for r in rows)
    dg = max(r["drift_general"] for r in rows)
    dn = max(non_hermitian)
    ok = dh < 1e-6 and dg < 1e-6 and dn < 1e-6 and len(non_hermitian) >= 5
    announce(capsys, 2, "time-dependent inner product conserved", ok,
             f"hermitian construction {dh:.2e}, general construction {dg:.2e}, "
             f"{len(non_hermitian)} non-Hermitian H {dn:.2e} (all < 1e-6)")
    assert ok


def test_criterion_3_eigenvalue_constancy(random_suite, capsys):
    rows, _, _ = random_suite
    worst = max(r["eig_drift"] for r in rows)
    rabi = load_builtin("rabi")
    rabi_drift = met.evolve_metric_hermitian(rabi.hamiltonian, rabi.eta0_matrix(), rabi.grid).eigenvalue_drift
    worst = max(worst, rabi_drift)
    ok = worst < 1e-8
    announce(capsys, 3, "metric eigenvalues constant", ok,
             f"max drift {worst:.2e} over {len(rows) + 1} Hermitian scenarios (< 1e-8)")
    assert ok


def _reconstruction(cfg):
    H, grid = cfg.hamiltonian, cfg.grid
    trace = evolve(H, grid)
    traj = met.evolve_metric_hermitian(H, cfg.eta0_matrix(), grid, trace)
    branches = ph.track_eigenbranches(traj, cfg.tolerances.gap_tol)
    U = ph.reconstruct_all(branches, ph.decompose_phases(branches, H, grid))
    rng = np.random.default_rng(cfg.seed)
    moved = [ph.rephase_branch(b, rng.uniform(0, 2 * np.pi, grid.steps + 1)) for b in branches]
    U2 = ph.reconstruct_all(moved, ph.decompose_phases(moved, H, grid))
    return float(np.max(fro(U - trace.U))), float(np.max(fro(U2 - U)))


def test_criterion_4_spectral_reconstruction(capsys):
    results = {name: _reconstruction(load_builtin(name)) for name in ("rabi", "random")}
    ok = all(r < 1e-5 and g < 1e-8 for r, g in results.values())
    detail = ", ".join(f"{n}: reconstruction {r:.2e} (< 1e-5), rephasing {g:.2e} (< 1e-8)" for n, (r, g) in results.items())
    announce(capsys, 4, "spectral reconstruction of U", ok, detail)
    assert ok


def test_criterion_5_rabi_oracle(capsys):
    cfg = load_builtin("rabi")
    H, grid = cfg.hamiltonian, cfg.grid
    w0, w1, w = H.params["omega0"], H.params["omega1"], H.params["omega"]
    assert grid.steps == 10_000 and grid.t1 == pytest.approx(2 * np.pi / w)
    trace = evolve(H, grid)
    U_ref = np.array([rabi_propagator(t, w0, w1, w) for t in grid.times])
    prop = float(np.max(fro(trace.U - U_ref)))
    traj = met.evolve_metric_hermitian(H, cfg.eta0_matrix(), grid, trace)
    branches = ph.track_eigenbranches(traj, cfg.tolerances.gap_tol)
    dec = ph.decompose_phases(branches, H, grid)
    oracle = rabi_cyclic_phases(w0, w1, w)
    ks = np.arange(0, grid.steps + 1, 500)
    d_err = g_err = c_err = 0.0
    for b, sign in zip(branches, (-1, +1)):  # eigenvalue 1 on -n, eigenvalue 2 on +n
        d_ref = np.array([rabi_dynamical_phase_quad(grid.times[k], w0, w1, w, sign) for k in ks])
        d_err = max(d_err, float(np.max(np.abs(dec.delta[b.index, ks] - d_ref))))
        g_ref = rabi_open_geometric_phase(grid.times, w0, w1, w, sign)
        g_err = max(g_err, float(np.max(np.abs(dec.gamma[b.index] - g_ref))))
        c = ph.cyclic_phase(b, H, grid, cfg.period_steps, cfg.tolerances.cyc_tol)
        c_err = max(c_err, abs(c.delta - oracle[sign][0]), abs(ph.wrap_angle(c.gamma - oracle[sign][1])))
    ok = prop < 1e-6 and max(d_err, g_err, c_err) < 1e-4
    announce(capsys, 5, "Rabi closed-form oracle", ok,
             f"propagator {prop:.2e} (< 1e-6), dynamical {d_err:.2e}, geometric {g_err:.2e}, "
             f"cyclic pair {c_err:.2e} (phases < 1e-4)")
    assert ok


def test_criterion_6_lindblad(capsys):
    deph = load_builtin("dephasing")
    H, eta0, grid = deph.hamiltonian, deph.eta0_matrix(), deph.grid
    empty = lind.LindbladSet(())
    red_const = float(np.max(fro(
        lind.evolve_metric_lindblad(H, eta0, empty, grid).eta - met.evolve_metric_hermitian(H, eta0, grid).eta
    )))
    rabi = load_builtin("rabi")
    rg, r_eta0 = rabi.grid, rabi.eta0_matrix()
    p = rabi.hamiltonian.params
    U = np.array([rabi_propagator(t, p["omega0"], p["omega1"], p["omega"]) for t in rg.times])
    red_rabi = float(np.max(fro(
        lind.evolve_metric_lindblad(rabi.hamiltonian, r_eta0, empty, rg).eta - U @ r_eta0 @ adjoint(U)
    )))

    kappa = 0.2
    L = dict(deph.lindblad.sets())[f"kappa={kappa:g}"]
    assert grid.t1 == pytest.approx(1 / kappa)
    nonu = []
    for steps in (grid.steps, grid.steps // 2):
        g = grid.with_steps(steps)
        traj = lind.evolve_metric_lindblad(H, eta0, L, g)
        Ug, _ = lind.generalized_evolution(H, traj)
        nonu.append(float(lind.nonunitarity_wrt_eta(Ug, traj)[-1]))
    change = abs(nonu[0] - nonu[1]) / nonu[0]

    errs = []
    for steps in (40, 80, 160):
        traj = lind.evolve_metric_lindblad(H, eta0, L, grid.with_steps(steps))
        errs.append(fro(traj.eta[-1] - dephasing_metric(eta0, kappa, grid.t1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))

    ok = max(red_const, red_rabi) < 1e-8 and nonu[0] > 1e-3 and change < 0.1 and np.all(np.abs(orders - 4) <= 0.4)
    announce(capsys, 6, "Lindblad reduction and departure", ok,
             f"reduction {red_const:.2e} (dephasing H) / {red_rabi:.2e} (Rabi, exact conjugation) (< 1e-8), "
             f"nonunitarity at 1/kappa {nonu[0]:.3e} (> 1e-3), step-halving change {change:.2%} (< 10%), "
             f"RK4 order {', '.join(f'{o:.3f}' for o in orders)} (4 +- 0.4)")
    assert ok


def test_criterion_7_metric_permutation(capsys):
    rng = np.random.default_rng(SEED)
    iso = closure = 0.0
    herm = []
    grid = TimeGrid(0.0, 1.0, 1000)
    for i in range(20):
        d = (2, 4, 8)[i % 3]
        H = random_fourier_hamiltonian(rng, d)
        eta1, eta2, eta3 = (random_metric(rng, d) for _ in range(3))
        pmap = cov.metric_permutation_trajectory(H, eta1, eta2, grid)
        iso = max(iso, pmap.isometry_defect())
        closure = max(closure, cov.composition_closure_defect(eta1, eta2, eta3))
        herm.append(pmap.hermiticity_defect())
    ok = iso < 1e-8 and closure < 1e-8 and max(herm) > 0.1
    announce(capsys, 7, "metric permutation", ok,
             f"20 pairs, isometry {iso:.2e} (< 1e-8), closure {closure:.2e} (< 1e-8), "
             f"max hermiticity defect {max(herm):.3f} (> 0.1 somewhere)")
    assert ok


def test_criterion_8_geometric_equivalence(capsys):
    accepted, rejected, verdicts = [], [], []
    for name, c in (("equivalence", 0.5), ("rabi", -1.3), ("random", 0.7)):
        cfg = load_builtin(name)
        H, grid = cfg.hamiltonian, cfg.grid
        traj = met.evolve_metric_hermitian(H, cfg.eta0_matrix(), grid)
        res = cov.geometric_equivalence_check(H, cov.equivalent_partner(H, traj, c), traj)
        accepted.append(res.defect)
        verdicts.append(res.verdict)
        other = H.shifted(np.broadcast_to(coupling_perturbation(cfg.dimension), traj.eta.shape), grid.times)
        bad = cov.geometric_equivalence_check(H, other, traj)
        rejected.append(bad.defect)
        verdicts.append(not bad.verdict)
    ok = max(accepted) < 1e-8 and min(rejected) > 1e-2 and all(verdicts)
    announce(capsys, 8, "geometric equivalence", ok,
             f"H + c eta accepted with max defect {max(accepted):.2e} (< 1e-8), "
             f"H + sigma_x rejected with min defect {min(rejected):.3f} (> 1e-2)")
    assert ok


def test_criterion_9_verify_determinism(tmp_path, capsys):
    seconds, reports = [], []
    for run in ("a", "b"):
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "tdmetric", "verify", "--seed", "42", "--out", str(tmp_path / run), "-q"],
            capture_output=True, text=True,
        )
        seconds.append(time.perf_counter() - start)
        assert proc.returncode in (0, 1), proc.stderr
        reports.append((tmp_path / run / "verify" / "report.json").read_bytes())
    n_checks = len(json.loads(reports[0])["checks"])
    identical = reports[0] == reports[1]
    ok = identical and max(seconds) < 300 and proc.returncode == 0
    announce(capsys, 9, "verify --seed 42 determinism", ok,
             f"{n_checks} checks, reports identical: {identical}, exit {proc.returncode}, "
             f"runtimes {seconds[0]:.1f} s / {seconds[1]:.1f} s (< 300 s)")
    assert ok
