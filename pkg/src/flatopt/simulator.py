"""Closed-loop simulation, independent per-time optimum oracles, and
exponential decay-rate fitting.

run_closed_loop integrates the jet ODE whose highest derivative comes
from the controller (g_unc, g_eq, or g_ineq) and samples everything a
verification needs on a uniform grid: output, optimum, tracking error,
inputs, constraint values, multiplier estimates, and (optionally) a
co-integrated physical plant whose output must agree with the planned
one.  The optimum trace comes from solve_optimum_oracle, a Newton-type
solver that shares no code path with the closed loop, so agreement
between the two is evidence rather than tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import (
    BarrierDomain,
    FlatnessSingularity,
    InCollision,
    InsufficientSamples,
    NoConvergence,
    RhsDomainError,
    SingularMatrix,
    ValidationFailed,
)
from .flat_systems import (
    FlatModel,
    input_from_jet,
    output_from_state,
    plant_rhs,
    state_from_jet,
)
from .numerics import IntegratorConfig, integrate_ode, solve_linear
from .opt_dynamics import (
    BarrierSchedule,
    OutputJet,
    PrimalDualJet,
    barrier_objective,
    g_eq,
    g_unc,
    kkt_matrix,
)
from .problem import TvEqualityConstraints, TvInequalityConstraints, TvObjective
from .target_dynamics import TargetSystemSpec, decay_rate

__all__ = [
    "RunConfig",
    "Scenario",
    "TrajectoryLog",
    "OptimumResult",
    "DecayFit",
    "run_closed_loop",
    "solve_optimum_oracle",
    "fit_decay_rate",
]


@dataclass(frozen=True)
class RunConfig:
    """How to run a closed loop: horizon, sampling, gains, barrier, plant."""

    target: TargetSystemSpec
    t_final: float = 10.0
    sample_dt: float = 0.01
    integrator: IntegratorConfig = IntegratorConfig()
    barrier: Optional[BarrierSchedule] = None
    verify_plant: bool = True

    def __post_init__(self):
        if not self.t_final > 0.0:
            raise ValueError("t_final must be positive")
        if not self.sample_dt > 0.0:
            raise ValueError("sample_dt must be positive")


@dataclass(frozen=True)
class Scenario:
    """A runnable problem: objective, constraints, plants, initial data.

    mode selects the controller: "unconstrained" (g_unc), "equality"
    (g_eq on the primal-dual jet), or "inequality" (g_unc on the
    barrier surrogate).  inequality_fn, when set, rebuilds the
    constraint set from the current output at every right-hand-side
    evaluation (position-dependent halfspaces); it overrides the static
    inequality field.  models own consecutive slices of the stacked
    output, in order.  target_fn is the reference the objective tracks
    (used for plots and summaries only).
    """

    name: str
    mode: str
    objective: TvObjective
    defaults: RunConfig
    initial_jet: OutputJet
    equality: Optional[TvEqualityConstraints] = None
    inequality: Optional[TvInequalityConstraints] = None
    inequality_fn: Optional[Callable] = None
    models: Tuple[FlatModel, ...] = ()
    initial_states: Optional[Tuple[np.ndarray, ...]] = None
    target_fn: Optional[Callable] = None
    obstacles: Tuple = ()
    robot_radius: float = 0.0

    def __post_init__(self):
        if self.mode not in ("unconstrained", "equality", "inequality"):
            raise ValueError(f"unknown mode '{self.mode}'")
        if self.mode == "equality" and self.equality is None:
            raise ValueError("equality mode needs equality constraints")


@dataclass
class TrajectoryLog:
    """Uniformly sampled record of one closed-loop run.

    err is the distance to the optimum the loop is designed to reach:
    the true optimum for unconstrained/equality runs, the barrier
    surrogate optimum for inequality runs (whose true-optimum trace and
    distance live in ystar_true / err_true).  nu / nustar only appear
    on equality runs, constraint columns only when constraints exist,
    x only when the plant was co-integrated.
    """

    t: np.ndarray
    y: np.ndarray
    ystar: np.ndarray
    err: np.ndarray
    u: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None
    nustar: Optional[np.ndarray] = None
    f_vals: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    ystar_true: Optional[np.ndarray] = None
    err_true: Optional[np.ndarray] = None
    mode: str = "unconstrained"
    alpha: float = 0.0
    plant_max_dev: Optional[float] = None


@dataclass(frozen=True)
class OptimumResult:
    """Solution of one per-time optimization: primal point, dual data,
    final gradient (or KKT residual) norm, Newton iterations used."""

    y: np.ndarray
    nu: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    grad_norm: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(error) = log_intercept - rate * t."""

    rate: float
    log_intercept: float
    residual: float


def _newton_minimize(value, grad, hess, y0, tol, max_iter, step_cap=None):
    """Damped Newton descent; the value callback may raise BarrierDomain
    to veto a trial point, and step_cap(y, d) may shrink the initial
    step (fraction-to-boundary rule for barrier solves, without which a
    weakly weighted log term lets a full step land so close to the
    boundary that the next Hessian overflows).  Returns (y, grad_norm,
    iterations); the caller decides whether the final gradient norm is
    acceptable."""
    y = np.asarray(y0, dtype=float).copy()
    fy = value(y)
    it = 0
    stalled = 0
    blind_steps = 0
    for it in range(1, max_iter + 1):
        g = grad(y)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return y, gn, it
        step_dir = solve_linear(hess(y), -g)
        g_dot_d = float(g @ step_dir)
        step = 1.0 if step_cap is None else min(1.0, step_cap(y, step_dir))
        # near a stationary point the predicted decrease falls below the
        # double-precision resolution of the value itself; the
        # sufficient-decrease test is then meaningless, so take the
        # (by now microscopic) Newton step unguarded and let the
        # gradient test terminate the loop
        blind = 0.5 * abs(g_dot_d) * step <= 4e-16 * max(1.0, abs(fy))
        moved = False
        fy_prev = fy
        for _ in range(60):
            cand = y + step * step_dir
            try:
                fc = value(cand)
            except BarrierDomain:
                step *= 0.5
                continue
            if blind or fc <= fy + 1e-4 * step * g_dot_d:
                y, fy, moved = cand, fc, True
                break
            step *= 0.5
        if not moved:
            break
        if blind:
            blind_steps += 1
            if blind_steps >= 8:
                break
        elif fy >= fy_prev - 1e-14 * max(1.0, abs(fy_prev)):
            # accepted steps stopped lowering the value measurably while
            # the decrease prediction is still above noise: evaluation
            # noise floor, the gradient norm will not shrink further
            stalled += 1
            if stalled >= 5:
                break
        else:
            stalled = 0
    return y, float(np.linalg.norm(grad(y))), it


def _find_strictly_feasible(functions, t, y0, shift, max_iter=200):
    """Phase-one solve: a point with f_i(y, t) < shift for every i.

    Minimizes w + (mu/2)(||y - y0||^2 + w^2) under the barrier of
    f_i(y,t) - shift <= w, starting from w large enough to be feasible,
    and exits as soon as w goes negative (then every f_i < shift).
    """
    y0 = np.asarray(y0, dtype=float)
    vals0 = [float(f.value(y0, t)) - shift for f in functions]
    if max(vals0) < 0.0:
        return y0.copy()
    m = y0.size
    mu = 1e-2

    def split(z):
        return z[:m], float(z[m])

    def gaps(z):
        y, w = split(z)
        gs = [w - (float(f.value(y, t)) - shift) for f in functions]
        if min(gs) <= 0.0:
            raise BarrierDomain("phase-one iterate left the relaxed feasible set")
        return gs

    def value(z):
        y, w = split(z)
        gs = gaps(z)
        return w + 0.5 * mu * (float((y - y0) @ (y - y0)) + w * w) - sum(
            math.log(g) for g in gs
        )

    def grad(z):
        y, w = split(z)
        gs = gaps(z)
        gy = mu * (y - y0)
        gw = 1.0 + mu * w
        for f, g in zip(functions, gs):
            gy += np.asarray(f.grad(y, t), dtype=float) / g
            gw -= 1.0 / g
        return np.concatenate([gy, [gw]])

    def hess(z):
        y, w = split(z)
        gs = gaps(z)
        h = np.zeros((m + 1, m + 1))
        h[:m, :m] = mu * np.eye(m)
        h[m, m] = mu
        for f, g in zip(functions, gs):
            gv = np.asarray(f.grad(y, t), dtype=float)
            h[:m, :m] += np.outer(gv, gv) / (g * g) + np.asarray(f.hess(y, t), dtype=float) / g
            h[:m, m] -= gv / (g * g)
            h[m, :m] -= gv / (g * g)
            h[m, m] += 1.0 / (g * g)
        return h

    z = np.concatenate([y0, [max(vals0) + 1.0]])
    fz = value(z)
    for _ in range(max_iter):
        g = grad(z)
        d = solve_linear(hess(z), -g)
        g_dot_d = float(g @ d)
        step, moved = 1.0, False
        for _ in range(60):
            cand = z + step * d
            try:
                fc = value(cand)
            except BarrierDomain:
                step *= 0.5
                continue
            if fc <= fz + 1e-4 * step * g_dot_d:
                z, fz, moved = cand, fc, True
                break
            step *= 0.5
        y, w = split(z)
        if w < 0.0:
            return y.copy()
        if not moved:
            break
    raise NoConvergence("phase-one solve found no strictly feasible point")


def _kkt_newton(obj, fns, active, t, y, lam_a, max_iter):
    """Newton on the KKT system that pins the listed constraints at
    equality: grad f0 + sum lam_i grad f_i = 0, f_i = 0 for i active.
    Returns (y, lam_active, residual_norm, iterations); quadratically
    convergent near a solution and free of the gap cancellation that
    caps barrier-gradient accuracy."""
    m = y.size
    z = np.concatenate([y, lam_a])
    rn = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        yz, lamz = z[:m], z[m:]
        grads = [np.asarray(fns[i].grad(yz, t), dtype=float) for i in active]
        res_top = np.asarray(obj.grad(yz, t), dtype=float).copy()
        for lam_i, g_i in zip(lamz, grads):
            res_top += lam_i * g_i
        res = np.concatenate([res_top, [float(fns[i].value(yz, t)) for i in active]])
        rn = float(np.linalg.norm(res))
        if rn <= 1e-10:
            break
        h = np.asarray(obj.hess(yz, t), dtype=float).copy()
        for lam_i, i in zip(lamz, active):
            h += lam_i * np.asarray(fns[i].hess(yz, t), dtype=float)
        jac = np.zeros((m + len(active), m + len(active)))
        jac[:m, :m] = h
        ga = np.column_stack(grads)
        jac[:m, m:] = ga
        jac[m:, :m] = ga.T
        z = z + solve_linear(jac, -res)
    return z[:m], z[m:], rn, it


def _active_set_solve(obj, fns, t, y_init, max_iter, seed_active=None, seed_lam=None):
    """Primal active-set solve: pivot the working set (add the worst
    violated constraint, drop the most negative multiplier, retire the
    weakest multiplier when the working set goes degenerate) until the
    KKT conditions certify the optimum.  Seeded by the constraints
    violated at y_init unless an explicit working set is given.
    Returns None when it fails to settle (caller falls back to an
    interior-point stage, or reports failure if this was the polish of
    one)."""
    p = len(fns)
    if seed_active is None:
        active = [i for i in range(p) if float(fns[i].value(y_init, t)) > -1e-9]
        lam_by_i = {i: 0.1 for i in active}
    else:
        active = sorted(seed_active)
        lam_by_i = {
            i: (max(float(seed_lam[i]), 0.0) if seed_lam is not None else 0.1)
            for i in active
        }
    if not active:
        return None
    y = np.asarray(y_init, dtype=float).copy()
    total_its = 0
    for _ in range(3 * p + 3):
        try:
            y_a, lam_a, rn, it = _kkt_newton(
                obj, fns, active, t, y, [lam_by_i[i] for i in active], 50
            )
        except (SingularMatrix, BarrierDomain):
            # degenerate working set (more constraints than the geometry
            # supports at this point); retire the weakest multiplier
            drop = min(active, key=lam_by_i.get)
            active = [i for i in active if i != drop]
            lam_by_i.pop(drop)
            if not active:
                return None
            continue
        total_its += it
        if rn > 1e-10 or not np.all(np.isfinite(y_a)):
            return None
        y = y_a
        lam_by_i = dict(zip(active, lam_a))
        negative = [i for i in active if lam_by_i[i] < -1e-9]
        if negative:
            drop = min(negative, key=lam_by_i.get)
            active = [i for i in active if i != drop]
            lam_by_i.pop(drop)
            if not active:
                return None
            continue
        worst_i, worst_v = None, 1e-9
        for i in range(p):
            if i not in active:
                v = float(fns[i].value(y, t))
                if v > worst_v:
                    worst_i, worst_v = i, v
        if worst_i is not None:
            active = sorted(active + [worst_i])
            lam_by_i[worst_i] = 0.1
            continue
        lam = np.zeros(p)
        for i in active:
            lam[i] = max(lam_by_i[i], 0.0)
        return OptimumResult(y, lam=lam, grad_norm=rn, iterations=total_its)
    return None


def _refine_active_set(obj, fns, t, y, lam_est, max_iter):
    """Polish an interior-point solution by active-set pivoting seeded
    from its multiplier estimates (at most dim(y) of them, largest
    first, so the seed working set cannot start rank deficient)."""
    order = sorted(range(len(lam_est)), key=lambda i: -lam_est[i])
    seed = [i for i in order if lam_est[i] > 1e-5][: y.size]
    if not seed:
        # nothing meaningfully active; the barrier point is within
        # O(max lam) of the optimum and the objective is flat there
        lam = np.asarray(lam_est, dtype=float)
        return OptimumResult(y, lam=lam, grad_norm=float("nan"), iterations=0)
    res = _active_set_solve(
        obj, fns, t, y, max_iter, seed_active=seed, seed_lam=lam_est
    )
    if res is None:
        raise NoConvergence("active-set polish of the interior-point stage stalled")
    return res


def solve_optimum_oracle(
    obj: TvObjective,
    t: float,
    mode: str = "unconstrained",
    *,
    equality: Optional[TvEqualityConstraints] = None,
    inequality: Optional[TvInequalityConstraints] = None,
    sched: Optional[BarrierSchedule] = None,
    guess=None,
    barrier_weight: float = 1e6,
    max_iter: int = 200,
) -> OptimumResult:
    """Independent per-time solve of the instantaneous problem.

    modes:
      unconstrained  damped Newton on grad = 0, to ||grad|| <= 1e-12.
      equality       Newton on the KKT residual (grad + A^T nu, Ay - b),
                     to residual norm 1e-12; returns nu as well.
      inequality     the true constrained optimum: when the
                     unconstrained minimizer is strictly feasible it is
                     returned exactly; otherwise a primal active-set
                     method certifies the KKT conditions to residual
                     1e-10, falling back to a fixed-weight barrier
                     stage plus KKT polish when the pivoting stalls.
      barrier        the optimum of the time-scheduled surrogate (needs
                     sched), to gradient norm 1e-8; the barrier
                     gradient near an active constraint cannot be
                     evaluated much below that cancellation floor.

    Never warm-started from closed-loop state by design; guess defaults
    to zeros.  Raises NoConvergence when Newton stalls above tolerance
    or exceeds max_iter.
    """
    m = obj.dim
    y0 = np.zeros(m) if guess is None else np.asarray(guess, dtype=float).copy()

    if mode == "unconstrained":
        y, gn, it = _newton_minimize(
            lambda y: float(obj.value(y, t)),
            lambda y: np.asarray(obj.grad(y, t), dtype=float),
            lambda y: np.asarray(obj.hess(y, t), dtype=float),
            y0,
            1e-12,
            max_iter,
        )
        if gn > 1e-12:
            raise NoConvergence(f"gradient norm {gn:g} after {it} Newton iterations")
        return OptimumResult(y, grad_norm=gn, iterations=it)

    if mode == "equality":
        if equality is None:
            raise ValueError("equality mode needs the constraints")
        a = np.atleast_2d(np.asarray(equality.a(t), dtype=float))
        b = np.asarray(equality.b(t), dtype=float)
        q = a.shape[0]
        y = y0
        nu = np.zeros(q)
        it = 0
        for it in range(1, max_iter + 1):
            res = np.concatenate([obj.grad(y, t) + a.T @ nu, a @ y - b])
            rn = float(np.linalg.norm(res))
            if rn <= 1e-12:
                return OptimumResult(y, nu=nu, grad_norm=rn, iterations=it)
            delta = solve_linear(kkt_matrix(obj, equality, y, t), -res)
            y = y + delta[:m]
            nu = nu + delta[m:]
        raise NoConvergence(f"KKT residual {rn:g} after {max_iter} Newton iterations")

    if mode in ("inequality", "barrier"):
        if inequality is None or len(inequality) == 0:
            return solve_optimum_oracle(obj, t, "unconstrained", guess=guess, max_iter=max_iter)
        fns = inequality.functions
        if mode == "barrier":
            if sched is None:
                raise ValueError("barrier mode needs the schedule")
            weight, shift = sched.c(t), sched.s(t)
            y_start = _find_strictly_feasible(fns, t, y0, shift)
        else:
            weight, shift = barrier_weight, 0.0
            free = solve_optimum_oracle(obj, t, "unconstrained", guess=guess, max_iter=max_iter)
            if max(float(f.value(free.y, t)) for f in fns) < 0.0:
                # no constraint active, so the unconstrained point is the
                # exact constrained optimum
                return OptimumResult(
                    free.y,
                    lam=np.zeros(len(fns)),
                    grad_norm=free.grad_norm,
                    iterations=free.iterations,
                )
            direct = _active_set_solve(obj, fns, t, free.y, max_iter)
            if direct is not None:
                return direct
            # pivoting stalled; fall back to an interior-point stage for
            # activity detection.  The phase-one target is shifted a bit
            # inward because a warm start from a refined optimum can sit
            # on the boundary to machine precision, where barrier gaps
            # are pure rounding noise.
            y_start = _find_strictly_feasible(fns, t, y0, -1e-6)

        def gaps(y):
            gs = [shift - float(f.value(y, t)) for f in fns]
            if min(gs) <= 0.0:
                raise BarrierDomain("iterate left the relaxed feasible set")
            return gs

        def value(y):
            return float(obj.value(y, t)) - sum(math.log(g) for g in gaps(y)) / weight

        def grad(y):
            gs = gaps(y)
            g_total = np.asarray(obj.grad(y, t), dtype=float).copy()
            for f, g in zip(fns, gs):
                g_total += np.asarray(f.grad(y, t), dtype=float) / (weight * g)
            return g_total

        def hess(y):
            gs = gaps(y)
            h_total = np.asarray(obj.hess(y, t), dtype=float).copy()
            for f, g in zip(fns, gs):
                gv = np.asarray(f.grad(y, t), dtype=float)
                h_total += (np.outer(gv, gv) / (g * g) + np.asarray(f.hess(y, t), dtype=float) / g) / weight
            return h_total

        def step_cap(y, d):
            cap = 1.0
            for f, g in zip(fns, gaps(y)):
                slope = float(np.asarray(f.grad(y, t), dtype=float) @ d)
                if slope > 0.0:
                    cap = min(cap, 0.99 * g / slope)
            return cap

        y, gn, it = _newton_minimize(value, grad, hess, y_start, 1e-12, max_iter, step_cap)
        lam = np.array([1.0 / (weight * g) for g in gaps(y)])
        if mode == "barrier":
            if gn > 1e-8:
                raise NoConvergence(f"gradient norm {gn:g} after {it} Newton iterations")
            return OptimumResult(y, lam=lam, grad_norm=gn, iterations=it)
        return _refine_active_set(obj, fns, t, y, lam, max_iter)

    raise ValueError(f"unknown oracle mode '{mode}'")


def _controller(scenario: Scenario, cfg: RunConfig):
    """Bind the per-rhs map (t, jet) -> highest derivative."""
    obj = scenario.objective
    spec = cfg.target
    if scenario.mode == "equality":
        eq = scenario.equality
        return lambda t, zjet: g_eq(obj, eq, spec, zjet, t)
    if scenario.mode == "inequality":
        sched = cfg.barrier if cfg.barrier is not None else BarrierSchedule()
        if scenario.inequality_fn is not None:
            fn = scenario.inequality_fn

            def highest(t, jet):
                try:
                    ineq = fn(jet.values[0])
                except InCollision as exc:
                    # trial stages may poke into an obstacle even when the
                    # accepted trajectory never does; reject the step
                    raise RhsDomainError(str(exc)) from None
                phi = barrier_objective(obj, ineq, sched)
                return g_unc(phi, spec, jet, t)

            return highest
        phi = barrier_objective(obj, scenario.inequality, sched)
        return lambda t, jet: g_unc(phi, spec, jet, t)
    return lambda t, jet: g_unc(obj, spec, jet, t)


def run_closed_loop(scenario: Scenario, cfg: Optional[RunConfig] = None) -> TrajectoryLog:
    """Simulate the closed loop and sample it on the uniform grid.

    The ODE state is the stacked jet y^[k-1] (or z^[k-1] in equality
    mode), extended with every plant state when cfg.verify_plant is on.
    Integration runs segment by segment between sample times so the log
    holds exact states at exact grid times.  Plant consistency
    ||h(x) - y|| is checked at every sample against
    10 (abs_tol + rel_tol (1 + ||y||)) and the worst deviation is kept
    in the log.
    """
    if cfg is None:
        cfg = scenario.defaults
    spec = cfg.target
    obj = scenario.objective
    k = spec.order
    m = obj.dim
    highest = _controller(scenario, cfg)

    equality_mode = scenario.mode == "equality"
    inequality_mode = scenario.mode == "inequality"
    sched = cfg.barrier if cfg.barrier is not None else BarrierSchedule()

    if equality_mode:
        a0 = np.atleast_2d(np.asarray(scenario.equality.a(0.0), dtype=float))
        q = a0.shape[0]
        nz = m + q
        g0 = np.asarray(obj.grad(scenario.initial_jet.values[0], 0.0), dtype=float)
        nu0, *_ = np.linalg.lstsq(a0.T, -g0, rcond=None)
        zvals = [np.concatenate([scenario.initial_jet.values[0], nu0])]
        for i in range(1, k):
            zvals.append(np.concatenate([scenario.initial_jet.values[i], np.zeros(q)]))
        jet0 = PrimalDualJet(tuple(zvals), m, q)

        def unpack(state):
            return PrimalDualJet.unstack(state[: k * nz], k, m, q)

        jet_len = k * nz
    else:
        q = 0
        jet0 = scenario.initial_jet

        def unpack(state):
            return OutputJet.unstack(state[: k * m], k, m)

        jet_len = k * m

    models = scenario.models if cfg.verify_plant else ()
    if models:
        if scenario.initial_states is not None:
            x0s = [np.asarray(x, dtype=float) for x in scenario.initial_states]
        else:
            x0s = []
            off = 0
            for model in models:
                sub = tuple(v[off:off + model.output_dim] for v in scenario.initial_jet.values)
                x0s.append(state_from_jet(model, sub))
                off += model.output_dim
        state0 = np.concatenate([jet0.stack(), *x0s])
    else:
        state0 = jet0.stack()

    def primal_values(jet):
        if equality_mode:
            return tuple(v[:m] for v in jet.values)
        return jet.values

    def rhs(t, state):
        jet = unpack(state)
        try:
            top = highest(t, jet)
        except FlatnessSingularity as exc:
            raise FlatnessSingularity(f"at t = {t:g}: {exc}") from None
        deriv = np.concatenate(list(jet.values[1:]) + [top])
        if not models:
            return deriv
        full = primal_values(jet) + (top[:m] if equality_mode else top,)
        xdots = []
        off_x, off_y = jet_len, 0
        for model in models:
            sub = tuple(v[off_y:off_y + model.output_dim] for v in full)
            try:
                u = input_from_jet(model, sub, t)
            except FlatnessSingularity as exc:
                raise FlatnessSingularity(f"at t = {t:g}: {exc}") from None
            xdots.append(plant_rhs(model, state[off_x:off_x + model.state_dim], u))
            off_x += model.state_dim
            off_y += model.output_dim
        return np.concatenate([deriv, *xdots])

    n_seg = max(1, int(round(cfg.t_final / cfg.sample_dt)))
    times = np.linspace(0.0, cfg.t_final, n_seg + 1)

    states = np.empty((n_seg + 1, state0.size))
    states[0] = state0
    state = state0
    step_memory: dict = {}
    for j in range(n_seg):
        state = integrate_ode(
            rhs, state, (times[j], times[j + 1]), cfg.integrator,
            step_memory=step_memory,
        )
        states[j + 1] = state

    # --- sample-wise bookkeeping -------------------------------------
    p = 0
    static_ineq = scenario.inequality if inequality_mode else None
    if inequality_mode:
        probe = scenario.inequality_fn(primal_values(unpack(states[0]))[0]) if (
            scenario.inequality_fn is not None
        ) else static_ineq
        p = len(probe)

    n_pts = n_seg + 1
    y_log = np.empty((n_pts, m))
    ystar_log = np.empty((n_pts, m))
    err_log = np.empty(n_pts)
    u_dim = sum(model.input_dim for model in models)
    u_log = np.empty((n_pts, u_dim)) if models else None
    x_log = np.empty((n_pts, state0.size - jet_len)) if models else None
    nu_log = np.empty((n_pts, q)) if equality_mode else None
    nustar_log = np.empty((n_pts, q)) if equality_mode else None
    f_log = np.empty((n_pts, p)) if p else None
    lam_log = np.empty((n_pts, p)) if p else None
    c_log = np.empty(n_pts) if inequality_mode else None
    s_log = np.empty(n_pts) if inequality_mode else None
    ytrue_log = np.empty((n_pts, m)) if inequality_mode else None
    etrue_log = np.empty(n_pts) if inequality_mode else None

    plant_dev = 0.0
    guess_star = None
    guess_true = None
    for j, (t, state) in enumerate(zip(times, states)):
        jet = unpack(state)
        y = primal_values(jet)[0]
        y_log[j] = y

        ineq_here = None
        if inequality_mode:
            ineq_here = (
                scenario.inequality_fn(y) if scenario.inequality_fn is not None else static_ineq
            )

        if equality_mode:
            opt = solve_optimum_oracle(
                obj, t, "equality", equality=scenario.equality, guess=guess_star
            )
            ystar_log[j] = opt.y
            nustar_log[j] = opt.nu
            nu_log[j] = jet.dual(0)
            guess_star = opt.y
        elif inequality_mode:
            opt_hat = solve_optimum_oracle(
                obj, t, "barrier", inequality=ineq_here, sched=sched,
                guess=guess_star if guess_star is not None else y,
            )
            ystar_log[j] = opt_hat.y
            guess_star = opt_hat.y
            opt_true = solve_optimum_oracle(
                obj, t, "inequality", inequality=ineq_here,
                guess=guess_true if guess_true is not None else y,
            )
            ytrue_log[j] = opt_true.y
            etrue_log[j] = float(np.linalg.norm(y - opt_true.y))
            guess_true = opt_true.y
            c_log[j] = sched.c(t)
            s_log[j] = sched.s(t)
            for i, f in enumerate(ineq_here.functions):
                f_log[j, i] = float(f.value(y, t))
                gap = s_log[j] - f_log[j, i]
                lam_log[j, i] = math.inf if gap <= 0.0 else 1.0 / (c_log[j] * gap)
        else:
            opt = solve_optimum_oracle(obj, t, "unconstrained", guess=guess_star)
            ystar_log[j] = opt.y
            guess_star = opt.y
        err_log[j] = float(np.linalg.norm(y - ystar_log[j]))

        if models:
            top = highest(t, jet)
            full = primal_values(jet) + (top[:m] if equality_mode else top,)
            off_x, off_y, off_u = jet_len, 0, 0
            for model in models:
                sub = tuple(v[off_y:off_y + model.output_dim] for v in full)
                u = input_from_jet(model, sub, t)
                u_log[j, off_u:off_u + model.input_dim] = u
                x_i = state[off_x:off_x + model.state_dim]
                dev = float(
                    np.linalg.norm(output_from_state(model, x_i) - y[off_y:off_y + model.output_dim])
                )
                plant_dev = max(plant_dev, dev)
                tol_here = 10.0 * (
                    cfg.integrator.abs_tol
                    + cfg.integrator.rel_tol * (1.0 + float(np.linalg.norm(y)))
                )
                if dev > tol_here:
                    raise ValidationFailed(
                        f"plant output deviates from planned output by {dev:g} "
                        f"(> {tol_here:g}) at t = {t:g}"
                    )
                off_x += model.state_dim
                off_y += model.output_dim
                off_u += model.input_dim
            x_log[j] = state[jet_len:]

    return TrajectoryLog(
        t=times,
        y=y_log,
        ystar=ystar_log,
        err=err_log,
        u=u_log,
        x=x_log,
        nu=nu_log,
        nustar=nustar_log,
        f_vals=f_log,
        lam=lam_log,
        c=c_log,
        s=s_log,
        ystar_true=ytrue_log,
        err_true=etrue_log,
        mode=scenario.mode,
        alpha=decay_rate(spec),
        plant_max_dev=plant_dev if models else None,
    )


def fit_decay_rate(log: TrajectoryLog, window: float = 0.5, errors=None) -> DecayFit:
    """Fit log(error) against t over the trailing window of the run.

    Samples below 1e-13 are dropped as numerically converged.  errors
    overrides log.err (e.g. to fit the primal-dual error).  Raises
    InsufficientSamples with fewer than 5 usable points.
    """
    if not 0.0 < window <= 1.0:
        raise ValueError("window must be in (0, 1]")
    t = np.asarray(log.t, dtype=float)
    e = np.asarray(log.err if errors is None else errors, dtype=float)
    t_start = t[-1] - window * (t[-1] - t[0])
    mask = (t >= t_start) & (e > 1e-13)
    if int(mask.sum()) < 5:
        raise InsufficientSamples(f"only {int(mask.sum())} usable samples in the window")
    coeffs = np.polyfit(t[mask], np.log(e[mask]), 1)
    fitted = np.polyval(coeffs, t[mask])
    residual = float(np.sqrt(np.mean((fitted - np.log(e[mask])) ** 2)))
    return DecayFit(rate=-float(coeffs[0]), log_intercept=float(coeffs[1]), residual=residual)
