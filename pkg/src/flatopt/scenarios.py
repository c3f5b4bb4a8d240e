"""Prebuilt runnable scenarios: a single robot tracking a moving
polynomial target, a two-robot formation under a maximum-distance
constraint, and navigation among disk obstacles through halfspace
local workspaces recomputed from the robot's position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InCollision, InfeasibleStart, UnknownScenario
from .flat_systems import initial_jet_from_state, wmr_model
from .opt_dynamics import BarrierSchedule, OutputJet, slack_initial
from .problem import TvInequalityConstraints, TvObjective, quadratic_tracking
from .simulator import RunConfig, Scenario
from .target_dynamics import TargetSystemSpec

__all__ = [
    "PolynomialTrajectory",
    "DiskObstacle",
    "LocalWorkspaceHalfspace",
    "eval_polynomial_target",
    "fit_cubic",
    "local_workspace_halfspaces",
    "affine_halfspace_constraint",
    "separation_constraint",
    "formation_objective",
    "tracking_objective",
    "build_scenario",
]


@dataclass(frozen=True)
class PolynomialTrajectory:
    """Vector polynomial t -> sum_j coefficients[:, j] t^j.

    coefficients[i, j] multiplies t^j in output dimension i (a constant
    column j=0 is included so trajectories can start anywhere).
    """

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", arr)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]


def _derivative_rows(coeffs: np.ndarray, d: int) -> np.ndarray:
    """Power-major rows of the d-th derivative polynomial: row j - d
    holds the degree-j coefficients scaled by the falling factorial
    j!/(j-d)!."""
    n = coeffs.shape[1] - 1
    if d > n:
        return np.zeros((1, coeffs.shape[0]))
    scale = np.array([math.perm(j, d) for j in range(d, n + 1)], dtype=float)
    return coeffs[:, d:].T * scale[:, None]


def _horner(rows: np.ndarray, t: float) -> np.ndarray:
    acc = rows[-1].copy()
    for row in rows[-2::-1]:
        acc = acc * t + row
    return acc


def eval_polynomial_target(
    traj: PolynomialTrajectory, t: float, max_deriv: int = 0
) -> List[np.ndarray]:
    """Value and time derivatives up to max_deriv, by Horner evaluation.

    Derivative d of sum_j A_j t^j is sum_{j>=d} A_j j!/(j-d)! t^{j-d};
    orders beyond the degree are exactly zero.
    """
    if max_deriv < 0:
        raise ValueError("max_deriv must be >= 0")
    coeffs = traj.coefficients
    return [_horner(_derivative_rows(coeffs, d), t) for d in range(max_deriv + 1)]


def _jet_evaluator(traj: PolynomialTrajectory, max_deriv: int = 2):
    """Accessor (t, d) -> d-th derivative with precomputed derivative
    rows and a small per-t cache, for the hot objective callbacks."""
    rows = tuple(_derivative_rows(traj.coefficients, d) for d in range(max_deriv + 1))

    @lru_cache(maxsize=8)
    def jets(t: float):
        return tuple(_horner(r, t) for r in rows)

    return lambda t, d: jets(t)[d]


def fit_cubic(p0, v0, p1, v1, horizon: float) -> PolynomialTrajectory:
    """Cubic through (p0, v0) at t=0 and (p1, v1) at t=horizon."""
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    p0, v0 = np.asarray(p0, dtype=float), np.asarray(v0, dtype=float)
    p1, v1 = np.asarray(p1, dtype=float), np.asarray(v1, dtype=float)
    T = horizon
    a2 = (3.0 * (p1 - p0) - (2.0 * v0 + v1) * T) / T**2
    a3 = (2.0 * (p0 - p1) + (v0 + v1) * T) / T**3
    return PolynomialTrajectory(np.stack([p0, v0, a2, a3], axis=1))


@dataclass(frozen=True)
class DiskObstacle:
    """Closed disk of the given radius around center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (2,):
            raise ValueError("center must be a 2-vector")
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class LocalWorkspaceHalfspace:
    """One face a^T y <= b of the robot's collision-free workspace."""

    a: np.ndarray
    b: float
    obstacle_index: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if not float(a @ a) > 0.0:
            raise ValueError("a must be nonzero")
        object.__setattr__(self, "a", a)


def local_workspace_halfspaces(
    y_c, obstacles: Sequence[DiskObstacle], r: float
) -> List[LocalWorkspaceHalfspace]:
    """Halfspaces around position y_c that separate a robot of radius r
    from every obstacle.

    Per obstacle: a_i = y_i - y_c, theta_i = 1/2 - (r_i^2 - r^2) /
    (2 ||y_i - y_c||^2), and b_i puts the face at the power-diagram
    separator between the two disks, pulled back by r so the whole
    robot body stays clear.  Raises InCollision when y_c is not
    strictly outside some inflated obstacle.
    """
    y_c = np.asarray(y_c, dtype=float)
    faces = []
    for i, ob in enumerate(obstacles):
        diff = ob.center - y_c
        dist = float(np.linalg.norm(diff))
        if dist <= r + ob.radius:
            raise InCollision(
                f"position at distance {dist:g} from obstacle {i} "
                f"(needs > {r + ob.radius:g})"
            )
        theta = 0.5 - (ob.radius**2 - r**2) / (2.0 * dist**2)
        anchor = theta * ob.center + (1.0 - theta) * y_c + r * (y_c - ob.center) / dist
        faces.append(LocalWorkspaceHalfspace(diff, float(diff @ anchor), i))
    return faces


# --- constraint and objective builders --------------------------------


def affine_halfspace_constraint(a, b: float) -> TvObjective:
    """Constraint function f(y) = a^T y - b, frozen in time (all time
    partials are zero even when the face is rebuilt per step)."""
    a = np.asarray(a, dtype=float)
    n = a.size
    zmat = np.zeros((n, n))
    zvec = np.zeros(n)
    return TvObjective(
        dim=n,
        value=lambda y, t: float(a @ y) - b,
        grad=lambda y, t: a,
        hess=lambda y, t: zmat,
        grad_t=lambda y, t: zvec,
        value_t=lambda y, t: 0.0,
        hess_dir=lambda y, t, v: zmat,
        hess_t=lambda y, t: zmat,
        grad_ty=lambda y, t: zmat,
        grad_tt=lambda y, t: zvec,
        value_tt=lambda y, t: 0.0,
        m_f=0.0,
        L=0.0,
    )


def separation_constraint(max_distance: float, dim_each: int = 2) -> TvObjective:
    """Constraint ||y_a - y_b||^2 - max_distance^2 <= 0 on the stacked
    output (y_a, y_b)."""
    if max_distance <= 0.0:
        raise ValueError("max_distance must be positive")
    n = 2 * dim_each
    eye = np.eye(dim_each)
    hess = 2.0 * np.block([[eye, -eye], [-eye, eye]])
    zmat = np.zeros((n, n))
    zvec = np.zeros(n)

    def diff(y):
        return y[:dim_each] - y[dim_each:]

    return TvObjective(
        dim=n,
        value=lambda y, t: float(diff(y) @ diff(y)) - max_distance**2,
        grad=lambda y, t: 2.0 * np.concatenate([diff(y), -diff(y)]),
        hess=lambda y, t: hess,
        grad_t=lambda y, t: zvec,
        value_t=lambda y, t: 0.0,
        hess_dir=lambda y, t, v: zmat,
        hess_t=lambda y, t: zmat,
        grad_ty=lambda y, t: zmat,
        grad_tt=lambda y, t: zvec,
        value_tt=lambda y, t: 0.0,
        m_f=0.0,
        L=4.0,
    )


def formation_objective(
    traj1: PolynomialTrajectory, traj2: PolynomialTrajectory
) -> TvObjective:
    """Objective ||y_1 - d_1(t)||^2 + ||y_2 - d_2(t)||^2 on the stacked
    output of two robots tracking their own polynomial targets."""
    n = traj1.dim + traj2.dim
    zmat = np.zeros((n, n))
    ev1, ev2 = _jet_evaluator(traj1), _jet_evaluator(traj2)

    def target(t, d):
        return np.concatenate([ev1(t, d), ev2(t, d)])

    def value_tt(y, t):
        d1 = target(t, 1)
        return 2.0 * float(d1 @ d1) - 2.0 * float((y - target(t, 0)) @ target(t, 2))

    return TvObjective(
        dim=n,
        value=lambda y, t: float((y - target(t, 0)) @ (y - target(t, 0))),
        grad=lambda y, t: 2.0 * (y - target(t, 0)),
        hess=lambda y, t: 2.0 * np.eye(n),
        grad_t=lambda y, t: -2.0 * target(t, 1),
        value_t=lambda y, t: -2.0 * float((y - target(t, 0)) @ target(t, 1)),
        hess_dir=lambda y, t, v: zmat,
        hess_t=lambda y, t: zmat,
        grad_ty=lambda y, t: zmat,
        grad_tt=lambda y, t: -2.0 * target(t, 2),
        value_tt=value_tt,
        m_f=2.0,
        L=2.0,
    )


def tracking_objective(traj: PolynomialTrajectory) -> TvObjective:
    """Objective 0.5 ||y - y_d(t)||^2 for a polynomial target."""
    ev = _jet_evaluator(traj)
    return quadratic_tracking(
        traj.dim,
        lambda t: ev(t, 0),
        lambda t: ev(t, 1),
        lambda t: ev(t, 2),
    )


# --- scenario builders -------------------------------------------------


def _take(params: dict, key: str, default):
    return params.pop(key) if key in params else default


def _reject_leftovers(params: dict, name: str):
    if params:
        key = sorted(params)[0]
        raise ValueError(f"unknown parameter '{key}' for scenario '{name}'")


def _heading_velocity(speed: float, heading: float) -> np.ndarray:
    return speed * np.array([math.cos(heading), math.sin(heading)])


def _wmr_spec(dim: int, coeffs=(2.0, 3.0)) -> TargetSystemSpec:
    return TargetSystemSpec(order=2, dim=dim, coeffs=tuple(coeffs))


def _build_tracking(params: dict) -> Scenario:
    robot_start = np.asarray(_take(params, "robot_start", (-4.0, -6.0, 0.0)), dtype=float)
    robot_speed = float(_take(params, "robot_speed", 0.5))
    target_start = np.asarray(_take(params, "target_start", (-5.0, -5.0, 0.5)), dtype=float)
    target_speed = float(_take(params, "target_speed", 0.9))
    target_end = np.asarray(_take(params, "target_end", (3.0, 2.0)), dtype=float)
    target_end_velocity = np.asarray(
        _take(params, "target_end_velocity", (0.8, 0.3)), dtype=float
    )
    horizon = float(_take(params, "horizon", 10.0))
    gains = tuple(_take(params, "gains", (2.0, 3.0)))
    _reject_leftovers(params, "tracking")

    traj = fit_cubic(
        target_start[:2],
        _heading_velocity(target_speed, target_start[2]),
        target_end,
        target_end_velocity,
        horizon,
    )
    model = wmr_model()
    return Scenario(
        name="tracking",
        mode="unconstrained",
        objective=tracking_objective(traj),
        defaults=RunConfig(target=_wmr_spec(2, gains), t_final=horizon),
        initial_jet=initial_jet_from_state(model, robot_start, robot_speed),
        models=(model,),
        target_fn=lambda t: eval_polynomial_target(traj, t, 0)[0],
    )


def _build_formation(params: dict) -> Scenario:
    robot1_start = np.asarray(_take(params, "robot1_start", (-4.5, -3.5, 0.5)), dtype=float)
    robot2_start = np.asarray(_take(params, "robot2_start", (-3.0, -3.5, -0.5)), dtype=float)
    robot_speed = float(_take(params, "robot_speed", 0.5))
    target1_start = np.asarray(_take(params, "target1_start", (-5.0, -3.0, 0.5)), dtype=float)
    target2_start = np.asarray(_take(params, "target2_start", (-2.0, -3.0, 0.5)), dtype=float)
    target1_speed = float(_take(params, "target1_speed", 0.45))
    target2_speed = float(_take(params, "target2_speed", 1.1))
    target1_end = np.asarray(_take(params, "target1_end", (1.0, 1.8)), dtype=float)
    target2_end = np.asarray(_take(params, "target2_end", (3.6, 2.2)), dtype=float)
    target1_end_velocity = np.asarray(
        _take(params, "target1_end_velocity", (0.5, 0.2)), dtype=float
    )
    target2_end_velocity = np.asarray(
        _take(params, "target2_end_velocity", (0.5, 0.2)), dtype=float
    )
    max_distance = float(_take(params, "max_distance", 3.0))
    c0 = float(_take(params, "c0", 1.0))
    alpha_c = float(_take(params, "alpha_c", 0.5))
    alpha_s = float(_take(params, "alpha_s", 0.5))
    horizon = float(_take(params, "horizon", 10.0))
    gains = tuple(_take(params, "gains", (2.0, 3.0)))
    _reject_leftovers(params, "formation")

    traj1 = fit_cubic(
        target1_start[:2],
        _heading_velocity(target1_speed, target1_start[2]),
        target1_end,
        target1_end_velocity,
        horizon,
    )
    traj2 = fit_cubic(
        target2_start[:2],
        _heading_velocity(target2_speed, target2_start[2]),
        target2_end,
        target2_end_velocity,
        horizon,
    )
    model = wmr_model()
    jet1 = initial_jet_from_state(model, robot1_start, robot_speed)
    jet2 = initial_jet_from_state(model, robot2_start, robot_speed)
    jet0 = OutputJet(
        tuple(np.concatenate([a, b]) for a, b in zip(jet1.values, jet2.values))
    )
    # MFCQ constants: at any point where the separation constraint is
    # active, ||grad f_1|| = 2 sqrt(2) max_distance, so the inward unit
    # direction gives grad^T d <= -2 sqrt(2) max_distance.
    ineq = TvInequalityConstraints(
        functions=(separation_constraint(max_distance),),
        d=1.0,
        eps=2.0 * math.sqrt(2.0) * max_distance * 0.9,
    )
    sched = BarrierSchedule(
        c0=c0,
        alpha_c=alpha_c,
        s0=slack_initial(ineq, jet0.values[0]),
        alpha_s=alpha_s,
    )

    def target_fn(t):
        return np.concatenate(
            [eval_polynomial_target(traj1, t, 0)[0], eval_polynomial_target(traj2, t, 0)[0]]
        )

    return Scenario(
        name="formation",
        mode="inequality",
        objective=formation_objective(traj1, traj2),
        defaults=RunConfig(target=_wmr_spec(4, gains), t_final=horizon, barrier=sched),
        initial_jet=jet0,
        inequality=ineq,
        models=(model, model),
        target_fn=target_fn,
    )


_DEFAULT_DISKS = (
    ((-4.23, -3.51), 0.5),
    ((-3.02, -2.27), 0.7),
    ((-0.29, -2.46), 0.6),
    ((1.13, -1.14), 0.55),
)


def _build_obstacle(params: dict) -> Scenario:
    robot_start = np.asarray(_take(params, "robot_start", (-6.0, -3.0, 20.0)), dtype=float)
    robot_speed = float(_take(params, "robot_speed", 0.5))
    target_start = np.asarray(_take(params, "target_start", (-5.0, -5.0, 0.5)), dtype=float)
    target_speed = float(_take(params, "target_speed", 0.9))
    target_end = np.asarray(_take(params, "target_end", (4.2, 2.0)), dtype=float)
    target_end_velocity = np.asarray(
        _take(params, "target_end_velocity", (0.8, 0.3)), dtype=float
    )
    robot_radius = float(_take(params, "robot_radius", 0.2))
    raw_disks = _take(params, "obstacles", _DEFAULT_DISKS)
    c0 = float(_take(params, "c0", 1.0))
    alpha_c = float(_take(params, "alpha_c", 0.5))
    horizon = float(_take(params, "horizon", 10.0))
    gains = tuple(_take(params, "gains", (2.0, 3.0)))
    _reject_leftovers(params, "obstacle")

    disks = tuple(
        ob if isinstance(ob, DiskObstacle) else DiskObstacle(np.asarray(ob[0], dtype=float), float(ob[1]))
        for ob in raw_disks
    )
    for i in range(len(disks)):
        for j in range(i + 1, len(disks)):
            gap = float(np.linalg.norm(disks[i].center - disks[j].center))
            if gap <= disks[i].radius + disks[j].radius:
                raise ValueError(f"obstacles {i} and {j} intersect (centers {gap:g} apart)")
    try:
        local_workspace_halfspaces(robot_start[:2], disks, robot_radius)
    except InCollision as exc:
        raise InfeasibleStart(f"robot starts inside an inflated obstacle: {exc}") from None

    def inequality_fn(y_c):
        faces = local_workspace_halfspaces(y_c, disks, robot_radius)
        return TvInequalityConstraints(
            functions=tuple(affine_halfspace_constraint(f.a, f.b) for f in faces),
            d=1.0,
            eps=0.5,
        )

    traj = fit_cubic(
        target_start[:2],
        _heading_velocity(target_speed, target_start[2]),
        target_end,
        target_end_velocity,
        horizon,
    )
    model = wmr_model()
    sched = BarrierSchedule(c0=c0, alpha_c=alpha_c, s0=0.0)
    return Scenario(
        name="obstacle",
        mode="inequality",
        objective=tracking_objective(traj),
        defaults=RunConfig(target=_wmr_spec(2, gains), t_final=horizon, barrier=sched),
        initial_jet=initial_jet_from_state(model, robot_start, robot_speed),
        inequality_fn=inequality_fn,
        models=(model,),
        target_fn=lambda t: eval_polynomial_target(traj, t, 0)[0],
        obstacles=disks,
        robot_radius=robot_radius,
    )


_BUILDERS = {
    "tracking": _build_tracking,
    "formation": _build_formation,
    "obstacle": _build_obstacle,
}


def build_scenario(name: str, params: Optional[dict] = None) -> Scenario:
    """Assemble a named scenario: objective, constraints, flat models,
    initial jet, and run defaults, with built-in reference numbers
    unless overridden through params."""
    if name not in _BUILDERS:
        raise UnknownScenario(f"unknown scenario '{name}'")
    return _BUILDERS[name](dict(params or {}))
