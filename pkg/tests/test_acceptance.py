"""Acceptance gate: the ten headline checks, one per test.

Each test prints a single "criterion N: PASS (...)" line once its
assertions hold, so a verbose run reads as a checklist.  Tolerances are
pinned; none of them are derived from the run under test except the
empirical envelope constants the checks explicitly allow.
"""

import math
import time

import numpy as np
import pytest

from flatopt import (
    BarrierSchedule,
    IntegratorConfig,
    OutputJet,
    PolynomialTrajectory,
    RunConfig,
    Scenario,
    TargetSystemSpec,
    TvEqualityConstraints,
    TvInequalityConstraints,
    TvObjective,
    affine_halfspace_constraint,
    decay_rate,
    eval_polynomial_target,
    finite_difference,
    fit_cubic,
    fit_decay_rate,
    gradient_flow_split,
    input_from_jet,
    integrate_ode,
    integrator_model,
    kkt_matrix,
    multiplier_diagnostics,
    output_from_state,
    plant_rhs,
    run_closed_loop,
    slack_initial,
    solve_optimum_oracle,
    state_from_jet,
    tracking_objective,
    wmr_model,
)
from conftest import make_smooth_path, make_trig_objective


def _window_mask(log):
    t_start = log.t[-1] - 0.5 * (log.t[-1] - log.t[0])
    return (log.t >= t_start) & (log.err > 1e-13)


def _subopt_margin(log, obj, rate, intercept):
    # objective gap against the squared fitted envelope on the window
    mask = _window_mask(log)
    c_fit = math.exp(intercept)
    worst = -np.inf
    for j in np.flatnonzero(mask):
        gap = obj.value(log.y[j], log.t[j]) - obj.value(log.ystar[j], log.t[j])
        bound = obj.m_f * c_fit**2 * math.exp(-2.0 * rate * log.t[j]) + 1e-6
        worst = max(worst, gap - bound)
    return worst


def test_criterion_1_unconstrained_decay(tracking_run):
    # wheeled robot, gains (2, 3)
    log = tracking_run.log
    fit = fit_decay_rate(log)
    assert fit.rate >= log.alpha - 0.05
    worst = _subopt_margin(log, tracking_run.scenario.objective, fit.rate, fit.log_intercept)
    assert worst <= 0.0
    assert tracking_run.runtime < 2.0

    # integrator, gain (1,)
    traj = fit_cubic([-2.0, 1.0], [0.5, -0.3], [2.0, -1.0], [0.2, 0.4], 10.0)
    obj = tracking_objective(traj)
    scenario = Scenario(
        name="tracking-integrator",
        mode="unconstrained",
        objective=obj,
        defaults=RunConfig(
            target=TargetSystemSpec(order=1, dim=2, coeffs=(1.0,)), t_final=10.0
        ),
        initial_jet=OutputJet((np.array([1.0, 3.0]),)),
        models=(integrator_model(2),),
    )
    started = time.perf_counter()
    log1 = run_closed_loop(scenario)
    runtime1 = time.perf_counter() - started
    fit1 = fit_decay_rate(log1)
    assert fit1.rate >= log1.alpha - 0.05
    assert _subopt_margin(log1, obj, fit1.rate, fit1.log_intercept) <= 0.0
    assert runtime1 < 2.0
    print(
        f"criterion 1: PASS (wmr rate {fit.rate:.4f} >= {log.alpha - 0.05:.4f} "
        f"in {tracking_run.runtime:.2f}s; integrator rate {fit1.rate:.4f} "
        f"in {runtime1:.2f}s)"
    )


def test_criterion_2_equality_decay():
    traj = PolynomialTrajectory(
        np.array([[1.0, 0.5, 0.02, -0.004], [-1.0, 0.3, 0.05, -0.006]])
    )
    obj = tracking_objective(traj)
    eq = TvEqualityConstraints(
        a=lambda t: np.array([[1.0, 1.0]]),
        b=lambda t: np.array([math.sin(t)]),
        a_dot=lambda t: np.zeros((1, 2)),
        b_dot=lambda t: np.array([math.cos(t)]),
        tau_min=math.sqrt(2.0),
        tau_max=math.sqrt(2.0),
    )
    spec = TargetSystemSpec(order=1, dim=2, coeffs=(2.0,))
    scenario = Scenario(
        name="equality-line",
        mode="equality",
        objective=obj,
        defaults=RunConfig(
            target=spec,
            t_final=10.0,
            sample_dt=0.01,
            integrator=IntegratorConfig(abs_tol=1e-10, rel_tol=1e-9),
            verify_plant=False,
        ),
        initial_jet=OutputJet((np.array([-1.0, 2.0]),)),
        equality=eq,
    )
    started = time.perf_counter()
    log = run_closed_loop(scenario)
    runtime = time.perf_counter() - started
    assert log.t.size >= 1000
    zerr = np.sqrt(log.err**2 + np.sum((log.nu - log.nustar) ** 2, axis=1))
    fit = fit_decay_rate(log, errors=zerr)
    alpha = decay_rate(spec)
    assert fit.rate >= alpha - 0.05
    assert zerr[-1] <= 1e-6
    assert runtime < 2.0
    print(
        f"criterion 2: PASS (z rate {fit.rate:.4f} >= {alpha - 0.05:.4f}, "
        f"final z error {zerr[-1]:.2e}, {runtime:.2f}s)"
    )


def _scalar_problem():
    traj = fit_cubic([-0.5], [0.5], [1.3], [0.1], 10.0)
    obj = tracking_objective(traj)
    con = affine_halfspace_constraint([1.0], 0.5)
    ineq = TvInequalityConstraints((con,), d=1.0, eps=1.0)
    y0 = np.array([1.2])
    s0 = slack_initial(ineq, y0)
    sched = BarrierSchedule(c0=1.0, alpha_c=0.5, s0=s0, alpha_s=0.5)
    spec = TargetSystemSpec(order=1, dim=1, coeffs=(1.0,))
    scenario = Scenario(
        name="scalar-halfspace",
        mode="inequality",
        objective=obj,
        defaults=RunConfig(
            target=spec, t_final=10.0, sample_dt=0.01, barrier=sched,
            verify_plant=False,
        ),
        initial_jet=OutputJet((y0,)),
        inequality=ineq,
    )

    def ystar_closed(t):
        return np.minimum(eval_polynomial_target(traj, t, 0)[0], 0.5)

    return scenario, obj, ineq, sched, ystar_closed


def test_criterion_3_inequality_decay_and_bound():
    scenario, obj, ineq, sched, ystar_closed = _scalar_problem()
    log = run_closed_loop(scenario)
    fit = fit_decay_rate(log)
    assert fit.rate >= log.alpha - 0.05

    # the surrogate-optimum trace the loop is graded against must agree
    # with the closed-form true optimum in the tail; spot check the oracle
    for j in (0, len(log.t) // 2, len(log.t) - 1):
        assert abs(log.ystar_true[j, 0] - ystar_closed(log.t[j])[0]) <= 1e-7

    # three-term suboptimality bound with the empirical envelope constant
    alpha = log.alpha
    c_emp = float(np.max(log.err * np.exp(alpha * log.t)))
    p = len(ineq)
    worst = -np.inf
    for j in range(log.t.size):
        t = log.t[j]
        gap = abs(obj.value(log.y[j], t) - obj.value(ystar_closed(t), t))
        bound = (
            obj.L * c_emp * math.exp(-alpha * t)
            + p / sched.c0 * math.exp(-sched.alpha_c * t)
            + (obj.L * ineq.d / ineq.eps) * sched.s0 * math.exp(-sched.alpha_s * t)
            + 1e-6
        )
        worst = max(worst, gap - bound)
    assert worst <= 0.0
    print(
        f"criterion 3: PASS (rate {fit.rate:.4f} >= {log.alpha - 0.05:.4f}, "
        f"bound margin {-worst:.2e})"
    )


def test_criterion_4_gradient_flow_reconstruction():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in (1, 2):
        for _ in range(50):
            dim = int(rng.integers(1, 4))
            obj, _ = make_trig_objective(rng, dim)
            path = make_smooth_path(rng, dim)
            t = float(rng.uniform(0.2, 3.0))
            split = gradient_flow_split(obj, tuple(path(t, k - 1)), t, k)
            recon = split.hessian @ path(t, k)[k] + split.remainder
            h = 1e-5 if k == 1 else 1e-4
            fd = finite_difference(
                lambda s: obj.grad(path(s, 0)[0], s), t, order=k, h=h
            )
            rel = np.max(np.abs(recon - fd)) / (1.0 + np.max(np.abs(fd)))
            worst = max(worst, rel)
            assert rel < 1e-5
    print(f"criterion 4: PASS (100 reconstructions, worst rel err {worst:.2e})")


def test_criterion_5_kkt_spectrum_intervals():
    rng = np.random.default_rng(505)
    worst_gap = np.inf
    for _ in range(100):
        m = int(rng.integers(2, 7))
        q = int(rng.integers(1, m))
        m_f = float(rng.uniform(0.5, 2.0))
        big_l = m_f + float(rng.uniform(0.0, 3.0))
        eigs = rng.uniform(m_f, big_l, size=m)
        eigs[0], eigs[-1] = m_f, big_l
        basis = np.linalg.qr(rng.standard_normal((m, m)))[0]
        hess = basis @ np.diag(eigs) @ basis.T
        hess = 0.5 * (hess + hess.T)

        tau_min = float(rng.uniform(1.0, 2.0))
        tau_max = tau_min + float(rng.uniform(0.0, 2.0))
        sigmas = rng.uniform(tau_min, tau_max, size=q)
        sigmas[0] = tau_min
        if q >= 2:
            sigmas[-1] = tau_max
        u = np.linalg.qr(rng.standard_normal((q, q)))[0]
        v = np.linalg.qr(rng.standard_normal((m, m)))[0]
        a = u @ np.hstack([np.diag(sigmas), np.zeros((q, m - q))]) @ v.T

        obj = TvObjective(
            dim=m,
            value=lambda y, t, h=hess: 0.5 * float(y @ h @ y),
            grad=lambda y, t, h=hess: h @ y,
            hess=lambda y, t, h=hess: h,
            grad_t=lambda y, t: np.zeros(m),
            m_f=m_f,
            L=big_l,
        )
        eqc = TvEqualityConstraints(
            a=lambda t: a,
            b=lambda t: np.zeros(q),
            a_dot=lambda t: np.zeros((q, m)),
            b_dot=lambda t: np.zeros(q),
            tau_min=tau_min,
            tau_max=tau_max,
        )
        kkt = kkt_matrix(obj, eqc, np.zeros(m), 0.0)
        spectrum = np.linalg.eigvalsh(kkt)

        mu = np.sort(np.linalg.eigvalsh(hess))
        mu_m, mu_1 = mu[0], mu[-1]
        sv = np.linalg.svd(a, compute_uv=False)
        sig_1, sig_q = sv.max(), sv.min()
        lo_neg = 0.5 * (mu_m - math.sqrt(mu_m**2 + 4.0 * sig_1**2))
        hi_neg = 0.5 * (mu_1 - math.sqrt(mu_1**2 + 4.0 * sig_q**2))
        lo_pos = mu_m
        hi_pos = 0.5 * (mu_1 + math.sqrt(mu_1**2 + 4.0 * sig_1**2))
        for lam in spectrum:
            in_neg = lo_neg - 1e-9 <= lam <= hi_neg + 1e-9
            in_pos = lo_pos - 1e-9 <= lam <= hi_pos + 1e-9
            assert in_neg or in_pos

        floor = min(m_f, 0.5 * (math.sqrt(big_l**2 + 4.0 * tau_min) - big_l))
        gap = np.min(np.abs(spectrum)) - (floor - 1e-9)
        worst_gap = min(worst_gap, gap)
        assert gap >= 0.0
    print(f"criterion 5: PASS (100 spectra in intervals, floor margin {worst_gap:.2e})")


def test_criterion_6_surrogate_gap_bound():
    _, obj, ineq, sched, ystar_closed = _scalar_problem()
    times = np.linspace(0.0, 10.0, 200)
    guess = None
    worst = -np.inf
    for t in times:
        res = solve_optimum_oracle(
            obj, float(t), "barrier", inequality=ineq, sched=sched, guess=guess
        )
        guess = res.y
        gap = abs(obj.value(res.y, float(t)) - obj.value(ystar_closed(float(t)), float(t)))
        diag = multiplier_diagnostics(
            ineq, sched, res.y, float(t), L=obj.L, d=ineq.d, eps=ineq.eps
        )
        worst = max(worst, gap - (diag.gap_bound + 1e-8))
        assert gap <= diag.gap_bound + 1e-8
    print(f"criterion 6: PASS (200 times, worst gap margin {-worst:.2e})")


def test_criterion_7_multiplier_bound(formation_run):
    log = formation_run.log
    sc = formation_run.scenario
    bound = sc.objective.L * sc.inequality.d / sc.inequality.eps
    norms = np.sum(np.abs(log.lam), axis=1)
    assert float(np.max(norms)) <= bound
    print(
        f"criterion 7: PASS (max |lambda|_1 {float(np.max(norms)):.4f} "
        f"<= {bound:.4f})"
    )


def test_criterion_8_formation_reproduction(formation_run):
    log = formation_run.log
    sc = formation_run.scenario
    sep = np.linalg.norm(log.y[:, :2] - log.y[:, 2:], axis=1)
    assert float(np.max(sep)) <= 3.0 + 1e-2
    target_end = sc.target_fn(log.t[-1])
    err1 = float(np.linalg.norm(log.y[-1, :2] - target_end[:2]))
    err2 = float(np.linalg.norm(log.y[-1, 2:] - target_end[2:]))
    assert err1 < 0.05
    assert err2 < 0.05
    assert formation_run.runtime < 5.0
    print(
        f"criterion 8: PASS (max separation {float(np.max(sep)):.4f}, "
        f"end errors {err1:.3f}/{err2:.3f}, {formation_run.runtime:.2f}s)"
    )


def test_criterion_9_obstacle_reproduction(obstacle_run):
    log = obstacle_run.log
    sc = obstacle_run.scenario
    # precondition: the target path itself stays in free space
    for t in log.t[:: max(1, log.t.size // 100)]:
        goal = sc.target_fn(float(t))
        for disk in sc.obstacles:
            assert (
                np.linalg.norm(goal - np.asarray(disk.center))
                >= sc.robot_radius + disk.radius
            )
    clearance = np.inf
    for disk in sc.obstacles:
        dist = np.linalg.norm(log.y - np.asarray(disk.center)[None, :], axis=1)
        clearance = min(
            clearance, float(np.min(dist)) - (sc.robot_radius + disk.radius)
        )
        assert np.min(dist) >= sc.robot_radius + disk.radius - 1e-3
    end_err = float(np.linalg.norm(log.y[-1] - sc.target_fn(log.t[-1])))
    assert end_err < 0.05
    assert obstacle_run.runtime < 5.0
    print(
        f"criterion 9: PASS (worst clearance margin {clearance:+.4f}, "
        f"end error {end_err:.4f}, {obstacle_run.runtime:.2f}s)"
    )


def test_criterion_10_flatness_and_barrier_consistency():
    # round trips: drive each plant with inputs from an analytic jet
    cfg = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-9)

    def round_trip(model, jet_of_t, t_final, scale):
        x = state_from_jet(model, jet_of_t(0.0)[: model.order])
        grid = np.linspace(0.0, t_final, 61)
        worst = 0.0
        for a, b in zip(grid, grid[1:]):
            x = integrate_ode(
                lambda t, s: plant_rhs(model, s, input_from_jet(model, jet_of_t(t), t)),
                x, (a, b), cfg,
            )
            dev = np.linalg.norm(output_from_state(model, x) - jet_of_t(b)[0])
            worst = max(worst, float(dev))
        assert worst <= 10.0 * (cfg.abs_tol + cfg.rel_tol * scale)
        return worst

    w_int = round_trip(
        integrator_model(2),
        lambda t: (np.array([0.1 + 0.4 * t, -0.3 + 0.2 * t]), np.array([0.4, 0.2])),
        3.0,
        2.0,
    )
    radius, omega = 1.5, 0.8
    w_wmr = round_trip(
        wmr_model(),
        lambda t: (
            radius * np.array([math.cos(omega * t), math.sin(omega * t)]),
            radius * omega * np.array([-math.sin(omega * t), math.cos(omega * t)]),
            -radius * omega**2 * np.array([math.cos(omega * t), math.sin(omega * t)]),
        ),
        3.0,
        2.5,
    )

    # an empty constraint set must leave the closed loop bit-identical
    traj = fit_cubic([0.0, 0.5], [0.3, 0.0], [2.0, -0.5], [0.1, 0.1], 3.0)
    obj = tracking_objective(traj)
    spec = TargetSystemSpec(order=1, dim=2, coeffs=(1.0,))
    jet0 = OutputJet((np.array([-1.0, 1.5]),))
    run_cfg = RunConfig(target=spec, t_final=3.0, sample_dt=0.05, verify_plant=False)
    base = Scenario(
        name="p0-base", mode="unconstrained", objective=obj,
        defaults=run_cfg, initial_jet=jet0,
    )
    barrier = Scenario(
        name="p0-barrier", mode="inequality", objective=obj,
        defaults=run_cfg, initial_jet=jet0,
        inequality=TvInequalityConstraints(()),
    )
    log_a = run_closed_loop(base)
    log_b = run_closed_loop(barrier)
    assert np.array_equal(log_a.y, log_b.y)
    assert np.array_equal(log_a.err, log_b.err)
    print(
        f"criterion 10: PASS (round-trip dev {w_int:.2e}/{w_wmr:.2e}, "
        "empty-constraint run bit-identical)"
    )
