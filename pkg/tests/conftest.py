"""Shared fixtures.

The three bundled closed-loop scenarios are expensive enough that the
invariant tests and the acceptance gate share one session-scoped run of
each, with the wall time recorded at run time so the runtime criteria
measure the simulation itself rather than fixture caching.

The trig-objective factory builds a strongly convex time-varying
objective with a closed-form derivative surface (quadratic tracking
term plus a sinusoidal coupling between time and output).  Tests use it
wherever a non-quadratic objective with known curvature bounds is
needed.
"""

import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from flatopt import TvObjective, build_scenario, run_closed_loop


def make_trig_objective(rng, dim):
    """Random objective 0.5 (y-r)' Q (y-r) + a sin(b t + c'y).

    Q is symmetric positive definite with spectrum in [1, 3], r(t) a
    cubic, and the sinusoid small enough (|a| ||c||^2 <= 0.3) that the
    declared curvature window [m_f, L] stays positive.  Returns the
    TvObjective plus the raw pieces for test-side cross checks.
    """
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    eigs = rng.uniform(1.0, 3.0, size=dim)
    q = basis @ np.diag(eigs) @ basis.T
    q = 0.5 * (q + q.T)
    amp = rng.uniform(0.1, 0.3)
    c = rng.standard_normal(dim)
    c *= math.sqrt(rng.uniform(0.5, 1.0)) / np.linalg.norm(c)
    freq = rng.uniform(0.5, 2.0)
    rc = rng.standard_normal((dim, 4)) * np.array([1.0, 0.5, 0.1, 0.02])

    def r(t, d=0):
        pows = [rc[:, j] * math.perm(j, d) * t ** (j - d) for j in range(d, 4)]
        return np.sum(pows, axis=0) if pows else np.zeros(dim)

    def theta(y, t):
        return freq * t + float(c @ y)

    cc = np.outer(c, c)
    obj = TvObjective(
        dim=dim,
        value=lambda y, t: 0.5 * float((y - r(t)) @ q @ (y - r(t)))
        + amp * math.sin(theta(y, t)),
        grad=lambda y, t: q @ (y - r(t)) + amp * math.cos(theta(y, t)) * c,
        hess=lambda y, t: q - amp * math.sin(theta(y, t)) * cc,
        grad_t=lambda y, t: -q @ r(t, 1) - amp * freq * math.sin(theta(y, t)) * c,
        hess_dir=lambda y, t, v: -amp * math.cos(theta(y, t)) * float(c @ v) * cc,
        hess_t=lambda y, t: -amp * freq * math.cos(theta(y, t)) * cc,
        grad_ty=lambda y, t: -amp * freq * math.cos(theta(y, t)) * cc,
        grad_tt=lambda y, t: -q @ r(t, 2) - amp * freq**2 * math.cos(theta(y, t)) * c,
        value_t=lambda y, t: -float((y - r(t)) @ q @ r(t, 1))
        + amp * freq * math.cos(theta(y, t)),
        value_tt=lambda y, t: float(r(t, 1) @ q @ r(t, 1))
        - float((y - r(t)) @ q @ r(t, 2))
        - amp * freq**2 * math.sin(theta(y, t)),
        m_f=float(eigs.min()) - amp * float(c @ c),
        L=float(eigs.max()) + amp * float(c @ c),
    )
    return obj, SimpleNamespace(q=q, amp=amp, c=c, freq=freq, r=r)


def make_smooth_path(rng, dim):
    """Random analytic path y(t) = p0 + p1 t + p2 sin t with exact
    derivatives of every order.  Returns jet(t, orders) -> list of
    arrays [y, y', ..., y^(orders)]."""
    p0 = rng.standard_normal(dim)
    p1 = rng.standard_normal(dim) * 0.5
    p2 = rng.standard_normal(dim)

    def jet(t, orders):
        out = [p0 + p1 * t + p2 * math.sin(t)]
        if orders >= 1:
            out.append(p1 + p2 * math.cos(t))
        for d in range(2, orders + 1):
            cycle = [-math.sin(t), -math.cos(t), math.sin(t), math.cos(t)]
            out.append(p2 * cycle[(d - 2) % 4])
        return out

    return jet


@pytest.fixture
def trig_objective_factory():
    return make_trig_objective


@pytest.fixture
def smooth_path_factory():
    return make_smooth_path


def _timed_run(name):
    scenario = build_scenario(name)
    started = time.perf_counter()
    log = run_closed_loop(scenario)
    runtime = time.perf_counter() - started
    return SimpleNamespace(scenario=scenario, log=log, runtime=runtime)


@pytest.fixture(scope="session")
def tracking_run():
    return _timed_run("tracking")


@pytest.fixture(scope="session")
def formation_run():
    return _timed_run("formation")


@pytest.fixture(scope="session")
def obstacle_run():
    return _timed_run("obstacle")
