"""Dense linear solves, adaptive Runge-Kutta integration, and
finite-difference derivatives.

Everything downstream (controller synthesis, closed-loop simulation,
derivative validation) sits on these three operations.  The arithmetic
inner loops live in the kernel backend so the compiled extension and
the pure-Python fallback produce interchangeable trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _backend
from .errors import RhsDomainError, StepUnderflow

__all__ = ["IntegratorConfig", "solve_linear", "integrate_ode", "finite_difference"]


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step bounds for integrate_ode.

    fixed_step disables error control and marches with that step; it is
    only meant for convergence studies and debugging.
    """

    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    min_step: float = 1e-10
    max_step: float = 0.1
    fixed_step: Optional[float] = None

    def __post_init__(self):
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.min_step <= self.max_step):
            raise ValueError("need 0 < min_step <= max_step")


def solve_linear(a, b):
    """Solve the square system a @ x = b.

    LU with partial pivoting; raises SingularMatrix when a pivot
    magnitude falls below 1e-12 during elimination.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape != (a.shape[0],):
        raise ValueError("right-hand side length does not match matrix")
    return _backend.lu_solve(a, b)


# Dormand-Prince 5(4) tableau.  _B5 is the 5th-order weight row, _E the
# difference between it and the embedded 4th-order row.
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    np.array([1.0 / 5.0]),
    np.array([3.0 / 40.0, 9.0 / 40.0]),
    np.array([44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]),
    np.array([19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0]),
    np.array([9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
              -5103.0 / 18656.0]),
    np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
              11.0 / 84.0]),
)
_B5 = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
                11.0 / 84.0, 0.0])
_B4 = np.array([5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0,
                -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0])
_E = _B5 - _B4


def integrate_ode(
    rhs: Callable,
    state0,
    t_span,
    cfg: Optional[IntegratorConfig] = None,
    observer: Optional[Callable] = None,
    *,
    step_memory: Optional[dict] = None,
):
    """Integrate state' = rhs(t, state) over t_span = (t0, t1).

    Embedded Dormand-Prince 5(4) pair with proportional step control.
    The observer, when given, is called with (t, state) after every
    accepted step.  A rhs may raise RhsDomainError to veto a trial
    state; the step is then rejected and retried at half size, so the
    solution path never commits to an out-of-domain point.  Raises
    StepUnderflow when the required step falls below cfg.min_step, and
    propagates RhsDomainError only when it occurs at the initial state.

    step_memory, when given, is a scratch dict that carries the step
    controller's state between back-to-back calls on the same rhs: the
    current step size and the first-stage derivative (valid only when
    this call starts exactly where the previous one stopped).  Pass the
    same dict to consecutive segment integrations to skip the startup
    step-size search per segment.
    """
    if cfg is None:
        cfg = IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must satisfy t1 > t0")
    y = np.atleast_1d(np.asarray(state0, dtype=float)).copy()
    n = y.size

    def f(t, state):
        return np.atleast_1d(np.asarray(rhs(t, state), dtype=float))

    t_edge = t1 - 1e-13 * max(1.0, abs(t1))

    if cfg.fixed_step is not None:
        t = t0
        while t < t_edge:
            h = min(cfg.fixed_step, t1 - t)
            k = np.empty((7, n))
            k[0] = f(t, y)
            for i in range(1, 6):
                yi = _backend.rk_combine(y, h, k[:i], _A[i - 1])
                k[i] = f(t + _C[i] * h, yi)
            y = _backend.rk_combine(y, h, k[:6], _A[5])
            t = t + h
            if observer is not None:
                observer(t, y.copy())
        return y

    t = t0
    resumed = (
        step_memory is not None
        and step_memory.get("t") == t0
        and step_memory.get("y") is not None
        and np.array_equal(step_memory["y"], y)
    )
    if resumed:
        k1 = step_memory["k1"]
        h = float(step_memory["h"])
    else:
        k1 = f(t, y)  # a domain violation here is the caller's bug: propagate
        h = _initial_step(f, t, y, k1, cfg, t1 - t0)
    zero = np.zeros(n)
    while t < t_edge:
        if h < cfg.min_step:
            raise StepUnderflow(f"required step {h:g} below min_step at t = {t:g}")
        h_try = min(h, t1 - t)
        k = np.empty((7, n))
        k[0] = k1
        try:
            for i in range(1, 6):
                yi = _backend.rk_combine(y, h_try, k[:i], _A[i - 1])
                k[i] = f(t + _C[i] * h_try, yi)
            y5 = _backend.rk_combine(y, h_try, k[:6], _A[5])
            k[6] = f(t + h_try, y5)
        except RhsDomainError:
            h = 0.5 * h_try
            continue
        delta = _backend.rk_combine(zero, h_try, k, _E)
        err = _backend.error_norm(y, y5, delta, cfg.abs_tol, cfg.rel_tol)
        if err <= 1.0:
            t = t + h_try
            y = y5
            k1 = k[6]
            if observer is not None:
                observer(t, y.copy())
            grow = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h_try * grow, cfg.max_step)
        else:
            h = h_try * max(0.2, min(1.0, 0.9 * err ** -0.2))
    if step_memory is not None:
        step_memory.update(t=t1, y=y.copy(), k1=k1, h=h)
    return y


def _initial_step(f, t0, y0, f0, cfg, span):
    """Hairer-style starting step guess from the first two rhs samples."""
    sc = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span, cfg.max_step)
    try:
        f1 = f(t0 + h0, y0 + h0 * f0)
    except RhsDomainError:
        return max(cfg.min_step, 1e-3 * h0)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / sc) ** 2))) / h0
    dmax = max(d1, d2)
    h1 = (0.01 / dmax) ** 0.2 if dmax > 1e-15 else max(1e-6, 1e3 * h0)
    return max(min(100.0 * h0, h1, span, cfg.max_step), cfg.min_step)


def finite_difference(f: Callable, t: float, order: int = 1, h: float = 1e-5):
    """Central-difference derivative of a scalar- or vector-valued map.

    order=1 returns (f(t+h) - f(t-h)) / 2h, order=2 returns
    (f(t+h) - 2 f(t) + f(t-h)) / h^2; both are O(h^2) accurate on
    smooth functions.  The caller picks h.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not h > 0.0:
        raise ValueError("h must be positive")
    fp = np.asarray(f(t + h), dtype=float)
    fm = np.asarray(f(t - h), dtype=float)
    if order == 1:
        return (fp - fm) / (2.0 * h)
    f0 = np.asarray(f(t), dtype=float)
    return (fp - 2.0 * f0 + fm) / (h * h)
