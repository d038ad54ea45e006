"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the pytest terminal summary.  The file can
be executed directly as a script as well.
"""

import time

import numpy as np
import pytest
from scipy.linalg import block_diag

from conftest import random_stable_ss
from ldisc.closed_loop import estimate_gamma, matching_objective, verify_closed_loop_stability
from ldisc.controller import controller_difference_norm, controller_state_space
from ldisc.examples import (
    dc_motor_dataset,
    dc_motor_plant,
    dc_motor_reference,
    dc_motor_structure,
    f16_reference,
    f16_structure,
    mismatch_dataset,
)
from ldisc.freq_data import logspace_frequencies
from ldisc.linsys import feedback_state_matrix, hinf_norm
from ldisc.loewner import DescriptorRealization, frequency_response, realize
from ldisc.solver import DesignConfig, design, initialize_controller

RESULTS = []

pytestmark = pytest.mark.acceptance


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


# ---- shared runs ------------------------------------------------------------

_RUNS = {}


def dc_run():
    if "dc" not in _RUNS:
        ds, Md, st = dc_motor_dataset(50), dc_motor_reference(), dc_motor_structure()
        config = DesignConfig(epsilon=1.0)
        t0 = time.perf_counter()
        rep = design(ds, Md, st, config)
        _RUNS["dc"] = (ds, Md, st, config, rep, time.perf_counter() - t0)
    return _RUNS["dc"]


def mismatch_run():
    if "mm" not in _RUNS:
        ds, Md, st = mismatch_dataset(200), f16_reference(), f16_structure()
        config = DesignConfig(max_iter=200)
        t0 = time.perf_counter()
        rep = design(ds, Md, st, config)
        _RUNS["mm"] = (ds, Md, st, config, rep, time.perf_counter() - t0)
    return _RUNS["mm"]


def ss_response(A, B, C, omega):
    n = A.shape[0]
    return np.array([C @ np.linalg.solve(1j * w * np.eye(n) - A, B) for w in omega])


# ---- criteria ---------------------------------------------------------------

def test_criterion_1_dc_motor_end_to_end():
    ds, Md, st, config, rep, wall = dc_run()
    d_check = matching_objective(ds, Md, st, rep.theta).d
    stable_all = all(
        verify_closed_loop_stability(ds, st, r.theta, config.svd_rel_tol)[0] for r in rep.records
    )
    ok = d_check <= 1e-4 and rep.objective == d_check and stable_all and wall < 300
    report(1, ok, f"final d={d_check:.4e} (<= 1e-4), every iterate stable={stable_all}, "
                  f"{rep.n_iter} iterations, wall {wall:.1f}s (< 300s)")


def test_criterion_2_loewner_exact_recovery():
    t0 = time.perf_counter()
    w = logspace_frequencies(1e-2, 1e2, 60)
    dense = logspace_frequencies(1e-2, 1e2, 600)
    worst_sample, worst_dense, orders_ok, cases = 0.0, 0.0, True, 0
    for seed in range(5):
        for order, p, m in ((8, 1, 1), (4, 2, 2)):
            rng = np.random.default_rng(1000 * order + seed)
            A, B, C = random_stable_ss(rng, order, p, m)
            H = ss_response(A, B, C, w)
            real = realize((w, H))
            orders_ok &= real.order == order
            worst_sample = max(worst_sample, np.abs(frequency_response(real, w) - H).max() / np.abs(H).max())
            Hd = ss_response(A, B, C, dense)
            worst_dense = max(worst_dense, np.abs(frequency_response(real, dense) - Hd).max() / np.abs(Hd).max())
            cases += 1
    wall = time.perf_counter() - t0
    ok = orders_ok and worst_sample <= 1e-8 and worst_dense <= 1e-6 and wall < 30
    report(2, ok, f"{cases} systems, orders exact={orders_ok}, residual at samples {worst_sample:.2e} "
                  f"(<= 1e-8), dense grid {worst_dense:.2e} (<= 1e-6), {wall:.2f}s")


def _tf(num, den):
    from ldisc.freq_data import RationalTransferMatrix

    return DescriptorRealization.from_state_space(*RationalTransferMatrix.siso(num, den).to_state_space())


def test_criterion_3_hinf_oracles():
    t0 = time.perf_counter()
    errors = []
    errors.append(abs(hinf_norm(_tf([1.0], [1.0, 1.0])) - 1.0))
    for xi in (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.6, 0.7, 0.8, 1.0, 1.5, 2.0):
        for wn in (0.1, 1.0, 10.0):
            true = 1 / (2 * xi * np.sqrt(1 - xi**2)) if xi < 1 / np.sqrt(2) else 1.0
            est = hinf_norm(_tf([wn**2], [1.0, 2 * xi * wn, wn**2]))
            errors.append(abs(est - true) / true)
    rng = np.random.default_rng(3)
    for _ in range(10):
        D = rng.standard_normal((3, 2))
        real = DescriptorRealization.from_state_space(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((3, 0)), D)
        true = np.linalg.svd(D, compute_uv=False)[0]
        errors.append(abs(hinf_norm(real) - true) / true)
    wall = time.perf_counter() - t0
    worst = max(errors)
    report(3, worst <= 1e-5 and wall < 30, f"{len(errors)} oracle cases, worst relative error {worst:.2e} "
                                           f"(<= 1e-5), {wall:.2f}s")


def test_criterion_4_monotonicity():
    details, ok = [], True
    for name, run in (("dc-motor", dc_run), ("mismatch", mismatch_run)):
        rep = run()[4]
        d = rep.objectives
        bad = int(np.sum(d[1:] > d[:-1]))
        ok &= bad == 0
        details.append(f"{name}: {bad} increases in {len(d) - 1} steps")
    report(4, ok, "; ".join(details))


def _random_stable_delta(rng, radius, n_in, n_out):
    order = int(rng.integers(1, 5))
    A, B, C = random_stable_ss(rng, order, n_out, n_in, w_lo=0.05, w_hi=200.0)
    D = rng.standard_normal((n_out, n_in)) if rng.random() < 0.5 else np.zeros((n_out, n_in))
    g = hinf_norm(DescriptorRealization.from_state_space(A, B, C, D))
    s = radius / g
    return A, B, s * C, s * D


def test_criterion_5_small_gain_soundness():
    t0 = time.perf_counter()
    ds, _, st, config, rep, _ = dc_run()
    plant = dc_motor_plant().to_state_space()
    rng = np.random.default_rng(2024)
    picks = sorted({0, 1, rep.n_iter // 2, rep.n_iter})
    total, stable_count, worst = 0, 0, -np.inf
    per_iterate = 100 // len(picks) + 1
    for idx in picks:
        theta = rep.records[idx].theta
        gamma = estimate_gamma(ds, st, theta, config.svd_rel_tol)
        radius = 0.99 * config.epsilon / gamma
        Ak, Bk, Ck, Dk = controller_state_space(st, theta)
        for _ in range(per_iterate):
            if total == 100:
                break
            Ad, Bd, Cd, Dd = _random_stable_delta(rng, radius, 1, 1)
            ctrl = (block_diag(Ak, Ad), np.vstack([Bk, Bd]), np.hstack([Ck, Cd]), Dk + Dd)
            eig = np.linalg.eigvals(feedback_state_matrix(plant, ctrl))
            worst = max(worst, eig.real.max())
            stable_count += bool(eig.real.max() < 0)
            total += 1
    wall = time.perf_counter() - t0
    ok = total == 100 and stable_count == 100 and wall < 60
    report(5, ok, f"{stable_count}/{total} perturbed loops stable at ||Delta|| = 0.99 eps/gamma_i over "
                  f"iterates {picks}, worst pole real part {worst:.3g}, {wall:.1f}s")


def test_criterion_6_mismatch_case():
    ds, Md, st, config, rep, wall = mismatch_run()
    d = rep.objectives
    stable_all = all(verify_closed_loop_stability(ds, st, r.theta, config.svd_rel_tol)[0] for r in rep.records)
    decrease = 1 - d[-1] / d[0]
    nonincreasing = bool(np.all(np.diff(d) <= 0))
    ok = decrease >= 0.5 and rep.n_iter <= 200 and stable_all and nonincreasing and wall < 900
    report(6, ok, f"d0={d[0]:.4e} -> d={d[-1]:.4e} ({100 * decrease:.1f}% decrease, >= 50%) in "
                  f"{rep.n_iter} iterations, every iterate stable={stable_all}, log nonincreasing="
                  f"{nonincreasing}, wall {wall:.1f}s (< 900s)")


def test_criterion_7_initialization():
    ds, st = dc_motor_dataset(50), dc_motor_structure()
    config = DesignConfig(seed=0, init_restarts=50)
    t1 = initialize_controller(ds, st, config)
    t2 = initialize_controller(ds, st, config)
    stable, abscissa = verify_closed_loop_stability(ds, st, t1)
    ok = stable and np.array_equal(t1, t2) and np.all(t1[: st.n_p] > 0)
    report(7, ok, f"stabilizing theta0 within 50 restarts (abscissa {abscissa:.3g}), "
                  f"identical on rerun={np.array_equal(t1, t2)}")


def test_criterion_8_constraint_verification():
    details, ok = [], True
    for name, run in (("dc-motor", dc_run), ("mismatch", mismatch_run)):
        _, _, st, config, rep, _ = run()
        checked, worst_ratio = 0, 0.0
        for prev, cur in zip(rep.records[:-1], rep.records[1:]):
            if not cur.accepted:
                continue
            radius = config.epsilon / prev.gamma
            norm = controller_difference_norm(st, cur.theta, prev.theta)
            ok &= bool(norm < radius) and np.isclose(radius, cur.step_radius, rtol=1e-12)
            worst_ratio = max(worst_ratio, norm / radius)
            checked += 1
        details.append(f"{name}: {checked} accepted steps, max ||dK||/(eps/gamma) = {worst_ratio:.4f}")
    report(8, ok, "; ".join(details))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-s", "-q"]))
