"""Polynomial targets, local-workspace halfspaces, and scenario builders."""

import math

import numpy as np
import pytest

from flatopt import (
    DiskObstacle,
    InCollision,
    InfeasibleStart,
    PolynomialTrajectory,
    TvInequalityConstraints,
    UnknownScenario,
    affine_halfspace_constraint,
    build_scenario,
    eval_polynomial_target,
    finite_difference,
    fit_cubic,
    local_workspace_halfspaces,
    solve_optimum_oracle,
)


# --- polynomial targets -----------------------------------------------------


def test_polynomial_linear():
    traj = PolynomialTrajectory(np.array([[1.0, 2.0], [-0.5, 0.3]]))
    val, d1, d2 = eval_polynomial_target(traj, 1.5, max_deriv=2)
    assert val == pytest.approx([1.0 + 3.0, -0.5 + 0.45])
    assert d1 == pytest.approx([2.0, 0.3])
    assert np.array_equal(d2, np.zeros(2))


def test_polynomial_constant_term_at_zero():
    traj = PolynomialTrajectory(np.array([[4.0, 1.0, -2.0]]))
    assert eval_polynomial_target(traj, 0.0)[0] == pytest.approx([4.0])


def test_polynomial_derivatives_match_finite_difference():
    rng = np.random.default_rng(19)
    for _ in range(20):
        dim = int(rng.integers(1, 4))
        degree = int(rng.integers(1, 6))
        traj = PolynomialTrajectory(rng.standard_normal((dim, degree + 1)))
        t = float(rng.uniform(0.0, 2.0))
        val, d1, d2 = eval_polynomial_target(traj, t, max_deriv=2)
        fd1 = finite_difference(lambda s: eval_polynomial_target(traj, s)[0], t, 1, 1e-5)
        fd2 = finite_difference(lambda s: eval_polynomial_target(traj, s)[0], t, 2, 1e-4)
        assert np.max(np.abs(d1 - fd1)) <= 1e-6 * (1.0 + np.max(np.abs(fd1)))
        assert np.max(np.abs(d2 - fd2)) <= 1e-5 * (1.0 + np.max(np.abs(fd2)))


def test_fit_cubic_endpoint_conditions():
    traj = fit_cubic([1.0, -2.0], [0.5, 0.1], [4.0, 3.0], [-0.2, 0.6], 10.0)
    assert traj.degree == 3
    p0, v0 = eval_polynomial_target(traj, 0.0, 1)
    p1, v1 = eval_polynomial_target(traj, 10.0, 1)
    assert p0 == pytest.approx([1.0, -2.0], abs=1e-12)
    assert v0 == pytest.approx([0.5, 0.1], abs=1e-12)
    assert p1 == pytest.approx([4.0, 3.0], abs=1e-9)
    assert v1 == pytest.approx([-0.2, 0.6], abs=1e-9)


# --- local workspace ---------------------------------------------------------


def test_halfspace_hand_example():
    faces = local_workspace_halfspaces(
        np.zeros(2), (DiskObstacle(np.array([4.0, 0.0]), 1.0),), 0.2
    )
    assert len(faces) == 1
    face = faces[0]
    assert face.a == pytest.approx([4.0, 0.0])
    assert face.b == pytest.approx(6.72)
    assert face.obstacle_index == 0
    # the face plane is y_1 = 1.68
    assert face.b / face.a[0] == pytest.approx(1.68)


def test_halfspaces_satisfied_at_center():
    rng = np.random.default_rng(23)
    for _ in range(20):
        y_c = rng.uniform(-5.0, 5.0, 2)
        disks = []
        while len(disks) < 3:
            center = rng.uniform(-8.0, 8.0, 2)
            radius = float(rng.uniform(0.3, 1.0))
            far_from_yc = np.linalg.norm(center - y_c) > radius + 0.25
            far_from_rest = all(
                np.linalg.norm(center - d.center) > radius + d.radius + 0.05
                for d in disks
            )
            if far_from_yc and far_from_rest:
                disks.append(DiskObstacle(center, radius))
        faces = local_workspace_halfspaces(y_c, tuple(disks), 0.2)
        for face in faces:
            assert float(face.a @ y_c) - face.b < 0.0


def test_halfspace_mirror_symmetry():
    y_c = np.zeros(2)
    disks = (
        DiskObstacle(np.array([3.0, 1.0]), 0.6),
        DiskObstacle(np.array([-3.0, 1.0]), 0.6),
    )
    f1, f2 = local_workspace_halfspaces(y_c, disks, 0.2)
    assert f1.a[0] == pytest.approx(-f2.a[0])
    assert f1.a[1] == pytest.approx(f2.a[1])
    assert f1.b == pytest.approx(f2.b)


def test_halfspace_in_collision():
    with pytest.raises(InCollision):
        local_workspace_halfspaces(
            np.zeros(2), (DiskObstacle(np.array([0.5, 0.0]), 0.4),), 0.2
        )


def test_workspace_erosion_soundness():
    # the face offset is eroded by the robot radius: the physical disk
    # around the sensor point stays inside the un-eroded power cell, and
    # the face plane sits at least radius + r away from the obstacle
    # center, so any center obeying a @ y <= b keeps the robot disk and
    # the obstacle disk disjoint
    rng = np.random.default_rng(29)
    phis = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    for _ in range(25):
        y_c = rng.uniform(-4.0, 4.0, 2)
        r = float(rng.uniform(0.1, 0.4))
        disks = []
        while len(disks) < 4:
            center = rng.uniform(-7.0, 7.0, 2)
            radius = float(rng.uniform(0.2, 1.2))
            if np.linalg.norm(center - y_c) <= radius + r + 1e-6:
                continue
            if any(
                np.linalg.norm(center - d.center) <= radius + d.radius
                for d in disks
            ):
                continue
            disks.append(DiskObstacle(center, radius))
        faces = local_workspace_halfspaces(y_c, tuple(disks), r)
        ball = y_c[None, :] + r * np.stack([np.cos(phis), np.sin(phis)], axis=1)
        for face in faces:
            na = float(np.linalg.norm(face.a))
            assert float(face.a @ y_c) <= face.b + 1e-9
            assert np.max(ball @ face.a) <= face.b + r * na + 1e-9
            disk = disks[face.obstacle_index]
            margin = float(face.a @ disk.center) - face.b
            assert margin >= (disk.radius + r) * na - 1e-9


def test_workspace_ball_inside_faces_with_clearance():
    # with enough clearance the full robot ball obeys the eroded faces
    # directly; the threshold distance is 2 r + sqrt(3 r^2 + radius^2)
    rng = np.random.default_rng(31)
    phis = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    for _ in range(25):
        y_c = rng.uniform(-4.0, 4.0, 2)
        r = float(rng.uniform(0.1, 0.4))
        disks = []
        while len(disks) < 4:
            center = rng.uniform(-9.0, 9.0, 2)
            radius = float(rng.uniform(0.2, 1.2))
            needed = 2.0 * r + math.sqrt(3.0 * r * r + radius * radius)
            if np.linalg.norm(center - y_c) <= needed + 1e-6:
                continue
            if any(
                np.linalg.norm(center - d.center) <= radius + d.radius
                for d in disks
            ):
                continue
            disks.append(DiskObstacle(center, radius))
        faces = local_workspace_halfspaces(y_c, tuple(disks), r)
        ball = y_c[None, :] + r * np.stack([np.cos(phis), np.sin(phis)], axis=1)
        for face in faces:
            assert np.max(ball @ face.a) <= face.b + 1e-9


def test_projected_goal_matches_oracle():
    from flatopt import quadratic_tracking

    y_c = np.zeros(2)
    disks = (DiskObstacle(np.array([4.0, 0.0]), 1.0),)
    faces = local_workspace_halfspaces(y_c, disks, 0.2)
    ineq = TvInequalityConstraints(
        tuple(affine_halfspace_constraint(f.a, f.b) for f in faces)
    )

    def goal_obj(goal):
        return quadratic_tracking(
            2, lambda t: goal, lambda t: np.zeros(2), lambda t: np.zeros(2)
        )

    # interior goal is reproduced exactly
    res = solve_optimum_oracle(
        goal_obj(np.array([0.5, 0.5])), 0.0, "inequality", inequality=ineq
    )
    assert res.y == pytest.approx([0.5, 0.5], abs=1e-12)
    # goal behind the face projects onto the plane y_1 = 1.68
    res = solve_optimum_oracle(
        goal_obj(np.array([3.0, 0.0])), 0.0, "inequality", inequality=ineq
    )
    assert res.y == pytest.approx([1.68, 0.0], abs=1e-8)


# --- builders ----------------------------------------------------------------


def test_build_tracking_structure():
    sc = build_scenario("tracking")
    assert sc.mode == "unconstrained"
    assert len(sc.models) == 1 and sc.models[0].name == "wmr"
    assert sc.defaults.target.coeffs == (2.0, 3.0)
    assert sc.defaults.t_final == 10.0
    assert sc.target_fn(0.0) == pytest.approx([-5.0, -5.0])


def test_build_formation_reference_parameters():
    sc = build_scenario("formation")
    assert sc.mode == "inequality"
    assert len(sc.models) == 2
    assert sc.defaults.barrier.c0 == 1.0
    assert sc.defaults.t_final == 10.0
    assert len(sc.inequality) == 1
    assert sc.initial_jet.values[0] == pytest.approx([-4.5, -3.5, -3.0, -3.5])
    assert sc.target_fn(0.0) == pytest.approx([-5.0, -3.0, -2.0, -3.0])
    # separation limit is 3: constraint value crosses zero at distance 3
    f1 = sc.inequality.functions[0]
    on = np.array([0.0, 0.0, 3.0, 0.0])
    inside = np.array([0.0, 0.0, 2.0, 0.0])
    assert f1.value(on, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert f1.value(inside, 0.0) < 0.0
    # start separation 1.5 is feasible, so no initial slack is needed
    assert sc.defaults.barrier.s0 == 0.0


def test_build_obstacle_reference_parameters():
    sc = build_scenario("obstacle")
    assert sc.mode == "inequality"
    assert sc.robot_radius == 0.2
    assert len(sc.obstacles) == 4
    assert sc.inequality_fn is not None
    assert sc.initial_jet.values[0] == pytest.approx([-6.0, -3.0])
    # heading 20 rad wraps to about 1.15 rad; velocity must point that way
    v = sc.initial_jet.values[1]
    assert math.atan2(v[1], v[0]) == pytest.approx(
        math.atan2(math.sin(20.0), math.cos(20.0)), abs=1e-12
    )
    ineq = sc.inequality_fn(np.array([-6.0, -3.0]))
    assert len(ineq) == 4
    for disk in sc.obstacles:
        gap = np.linalg.norm(np.asarray(disk.center) - [-6.0, -3.0])
        assert gap > sc.robot_radius + disk.radius


def test_build_rejects_unknown_scenario():
    with pytest.raises(UnknownScenario):
        build_scenario("spline")


def test_build_rejects_unknown_parameter():
    with pytest.raises(ValueError) as err:
        build_scenario("tracking", {"warp": 9.0})
    assert "warp" in str(err.value)


def test_build_rejects_intersecting_disks():
    with pytest.raises(ValueError):
        build_scenario(
            "obstacle",
            {"obstacles": (((0.0, 0.0), 1.0), ((1.0, 0.0), 0.5))},
        )


def test_build_rejects_infeasible_start():
    with pytest.raises(InfeasibleStart):
        build_scenario("obstacle", {"robot_start": (-4.23, -3.51, 0.0)})


# --- bundled-run invariants ----------------------------------------------------


def test_formation_distance_invariant(formation_run):
    log = formation_run.log
    sep = np.linalg.norm(log.y[:, :2] - log.y[:, 2:], axis=1)
    assert np.max(sep) <= 3.0 + 1e-2


def test_obstacle_free_space_invariant(obstacle_run):
    log = obstacle_run.log
    sc = obstacle_run.scenario
    for disk in sc.obstacles:
        dist = np.linalg.norm(log.y - np.asarray(disk.center)[None, :], axis=1)
        assert np.min(dist) >= sc.robot_radius + disk.radius - 1e-3
