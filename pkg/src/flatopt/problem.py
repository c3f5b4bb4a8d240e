"""Time-varying objectives and constraints with analytic derivative
callbacks, plus finite-difference validation of those callbacks.

The central identity (used by every controller) is the Leibniz split of
the k-th total time derivative of the gradient along a path y(t):

    d^k/dt^k grad(y(t), t) = hess(y, t) @ y^(k) + remainder(jet, t)

where the remainder collects every term not involving y^(k).  For k=1
the remainder is grad_t; for k=2 it is

    (hess_dir(y,t,v) + hess_t(y,t)) @ v + grad_ty(y,t) @ v + grad_tt(y,t)

with v = y'.  gradient_flow_split computes exactly this pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import UnsupportedOrder, ValidationFailed
from .numerics import finite_difference

__all__ = [
    "TvObjective",
    "TvEqualityConstraints",
    "TvInequalityConstraints",
    "GradientFlowSplit",
    "gradient_flow_split",
    "eval_objective_jet",
    "validate_problem",
    "quadratic_tracking",
]


@dataclass(frozen=True)
class TvObjective:
    """A smooth time-varying scalar field with its derivative callbacks.

    Used both for objectives (m_f > 0 declared) and for inequality
    constraint functions, which share the same derivative surface but
    are merely convex (m_f = 0).  Callback conventions, with m = dim:

        value(y, t) -> float
        grad(y, t) -> (m,)          gradient in y
        hess(y, t) -> (m, m)        Hessian in y
        grad_t(y, t) -> (m,)        d/dt of grad (partial)
        hess_dir(y, t, v) -> (m, m) third-derivative tensor applied to v
        hess_t(y, t) -> (m, m)      d/dt of hess (partial)
        grad_ty(y, t) -> (m, m)     d/dy of grad_t (Jacobian)
        grad_tt(y, t) -> (m,)       d/dt of grad_t (partial)
        value_t(y, t) -> float      d/dt of value (partial)
        value_tt(y, t) -> float     d/dt of value_t (partial)

    Only the first four are mandatory; the second-order-in-time block is
    needed for flat order k=2, and the scalar time partials only when
    the function appears inside a barrier with a decaying slack.
    m_f and L are declared analysis constants (strong convexity modulus
    and gradient Lipschitz bound), spot-checked by sampling, not proven.
    remainder_hook(jet, t, k) -> (m,) extends gradient_flow_split past
    k=2 for callers that can supply the higher-order terms themselves.
    """

    dim: int
    value: Callable
    grad: Callable
    hess: Callable
    grad_t: Callable
    hess_dir: Optional[Callable] = None
    hess_t: Optional[Callable] = None
    grad_ty: Optional[Callable] = None
    grad_tt: Optional[Callable] = None
    value_t: Optional[Callable] = None
    value_tt: Optional[Callable] = None
    m_f: float = 0.0
    L: float = math.inf
    remainder_hook: Optional[Callable] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.m_f < 0.0:
            raise ValueError("m_f must be >= 0")
        if self.L < self.m_f:
            raise ValueError("need L >= m_f")


@dataclass(frozen=True)
class TvEqualityConstraints:
    """Affine constraints A(t) y = b(t) with q rows, q < dim.

    a(t) -> (q, m), b(t) -> (q,), with a_dot/b_dot their first and
    a_ddot/b_ddot their second time derivatives (the latter pair only
    for flat order k=2).  tau_min/tau_max bound the singular values of
    A(t) uniformly in t (declared, spot-checked).
    """

    a: Callable
    b: Callable
    a_dot: Callable
    b_dot: Callable
    a_ddot: Optional[Callable] = None
    b_ddot: Optional[Callable] = None
    tau_min: float = 0.0
    tau_max: float = math.inf


@dataclass(frozen=True)
class TvInequalityConstraints:
    """Convex constraints f_i(y, t) <= 0 with MFCQ margin constants.

    Each entry of functions carries the TvObjective derivative surface
    (with m_f = 0).  d bounds the norm of a strictly feasible direction
    and eps the constraint decrease along it; only the ratio enters the
    multiplier bound L*d/eps.
    """

    functions: Tuple[TvObjective, ...]
    d: float = 1.0
    eps: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if self.d <= 0.0 or self.eps <= 0.0:
            raise ValueError("MFCQ constants d and eps must be positive")

    def __len__(self):
        return len(self.functions)


@dataclass(frozen=True)
class GradientFlowSplit:
    """Coefficient pair of the Leibniz split: hessian @ y^(k) + remainder."""

    hessian: np.ndarray
    remainder: np.ndarray


def _jet_values(jet) -> Tuple[np.ndarray, ...]:
    vals = getattr(jet, "values", jet)
    return tuple(np.asarray(v, dtype=float) for v in vals)


def gradient_flow_split(obj: TvObjective, jet, t: float, k: int) -> GradientFlowSplit:
    """Split the k-th total derivative of the gradient along a path.

    jet carries y^(0)..y^(k-1).  Returns (H, r) with
    d^k/dt^k grad = H @ y^(k) + r.  Raises UnsupportedOrder when the
    objective does not supply the callbacks the order requires, or for
    k > 2 without a remainder_hook.
    """
    vals = _jet_values(jet)
    if len(vals) != k:
        raise ValueError(f"jet carries {len(vals)} orders, expected {k}")
    y = vals[0]
    hess = np.asarray(obj.hess(y, t), dtype=float)
    if k == 1:
        return GradientFlowSplit(hess, np.asarray(obj.grad_t(y, t), dtype=float))
    if k == 2:
        missing = [
            name
            for name in ("hess_dir", "hess_t", "grad_ty", "grad_tt")
            if getattr(obj, name) is None
        ]
        if missing:
            raise UnsupportedOrder(
                f"order 2 needs callbacks {missing} which the objective does not supply"
            )
        v = vals[1]
        hess_dot = np.asarray(obj.hess_dir(y, t, v), dtype=float) + np.asarray(
            obj.hess_t(y, t), dtype=float
        )
        grad_t_dot = np.asarray(obj.grad_ty(y, t), dtype=float) @ v + np.asarray(
            obj.grad_tt(y, t), dtype=float
        )
        return GradientFlowSplit(hess, hess_dot @ v + grad_t_dot)
    if obj.remainder_hook is not None:
        return GradientFlowSplit(
            hess, np.asarray(obj.remainder_hook(vals, t, k), dtype=float)
        )
    raise UnsupportedOrder(f"order {k} > 2 requires a remainder_hook on the objective")


def eval_objective_jet(obj: TvObjective, y, t: float):
    """Evaluate (value, grad, hess, grad_t) in one call."""
    y = np.asarray(y, dtype=float)
    return (
        float(obj.value(y, t)),
        np.asarray(obj.grad(y, t), dtype=float),
        np.asarray(obj.hess(y, t), dtype=float),
        np.asarray(obj.grad_t(y, t), dtype=float),
    )


def _rel_err(analytic, fd):
    analytic = np.asarray(analytic, dtype=float)
    fd = np.asarray(fd, dtype=float)
    return float(np.max(np.abs(analytic - fd)) / (1.0 + np.max(np.abs(fd))))


def validate_problem(
    obj: TvObjective,
    sample_points: Sequence,
    tol: float = 1e-5,
    h=1e-6,
) -> dict:
    """Cross-check every supplied callback against finite differences.

    sample_points is a list of (y, t) pairs.  h is the difference step,
    either a float or a callable h(y, t) (use the latter near barrier
    domain boundaries, where the step must shrink with the distance to
    the boundary).  Returns {callback_name: max relative error} and
    raises ValidationFailed naming the worst offender when any error
    exceeds tol.
    """
    worst = {}
    worst_at = {}

    def record(name, analytic, fd, point):
        err = _rel_err(analytic, fd)
        if err > worst.get(name, -1.0):
            worst[name] = err
            worst_at[name] = point

    for y, t in sample_points:
        y = np.asarray(y, dtype=float)
        t = float(t)
        step = h(y, t) if callable(h) else h
        m = y.size
        eye = np.eye(m)

        fd_grad = np.array(
            [
                finite_difference(lambda s, j=j: obj.value(y + s * eye[j], t), 0.0, 1, step)
                for j in range(m)
            ]
        )
        record("grad", obj.grad(y, t), fd_grad, (y, t))

        fd_hess = np.column_stack(
            [
                finite_difference(lambda s, j=j: obj.grad(y + s * eye[j], t), 0.0, 1, step)
                for j in range(m)
            ]
        )
        record("hess", obj.hess(y, t), fd_hess, (y, t))

        fd_grad_t = finite_difference(lambda s: obj.grad(y, s), t, 1, step)
        record("grad_t", obj.grad_t(y, t), fd_grad_t, (y, t))

        if obj.hess_t is not None:
            fd_hess_t = finite_difference(lambda s: np.asarray(obj.hess(y, s)).ravel(), t, 1, step)
            record("hess_t", np.asarray(obj.hess_t(y, t)).ravel(), fd_hess_t, (y, t))
        if obj.grad_ty is not None:
            fd_grad_ty = np.column_stack(
                [
                    finite_difference(lambda s, j=j: obj.grad_t(y + s * eye[j], t), 0.0, 1, step)
                    for j in range(m)
                ]
            )
            record("grad_ty", obj.grad_ty(y, t), fd_grad_ty, (y, t))
        if obj.grad_tt is not None:
            fd_grad_tt = finite_difference(lambda s: obj.grad_t(y, s), t, 1, step)
            record("grad_tt", obj.grad_tt(y, t), fd_grad_tt, (y, t))
        if obj.hess_dir is not None:
            # probe the third-derivative tensor along each basis direction
            for j in range(m):
                fd_dir = finite_difference(
                    lambda s, j=j: np.asarray(obj.hess(y + s * eye[j], t)).ravel(), 0.0, 1, step
                )
                record("hess_dir", np.asarray(obj.hess_dir(y, t, eye[j])).ravel(), fd_dir, (y, t))
        if obj.value_t is not None:
            fd_value_t = finite_difference(lambda s: obj.value(y, s), t, 1, step)
            record("value_t", obj.value_t(y, t), fd_value_t, (y, t))
        if obj.value_tt is not None:
            fd_value_tt = finite_difference(lambda s: obj.value_t(y, s), t, 1, step)
            record("value_tt", obj.value_tt(y, t), fd_value_tt, (y, t))

    bad = {name: err for name, err in worst.items() if err > tol}
    if bad:
        name = max(bad, key=bad.get)
        y_bad, t_bad = worst_at[name]
        raise ValidationFailed(
            f"callback '{name}' disagrees with finite differences "
            f"(rel err {bad[name]:.3e} > {tol:g}) at y={np.asarray(y_bad)}, t={t_bad:g}"
        )
    return worst


def quadratic_tracking(
    dim: int,
    target: Callable,
    target_dot: Callable,
    target_ddot: Optional[Callable] = None,
) -> TvObjective:
    """Objective 0.5 * ||y - target(t)||^2 with the full derivative surface.

    target_ddot is needed for flat order k=2 (it feeds grad_tt).
    """
    zero_mat = np.zeros((dim, dim))

    def value(y, t):
        e = y - np.asarray(target(t), dtype=float)
        return 0.5 * float(e @ e)

    def grad(y, t):
        return y - np.asarray(target(t), dtype=float)

    def hess(y, t):
        return np.eye(dim)

    def grad_t(y, t):
        return -np.asarray(target_dot(t), dtype=float)

    def value_t(y, t):
        e = y - np.asarray(target(t), dtype=float)
        return -float(e @ np.asarray(target_dot(t), dtype=float))

    kwargs = {}
    if target_ddot is not None:
        def grad_tt(y, t):
            return -np.asarray(target_ddot(t), dtype=float)

        def value_tt(y, t):
            d1 = np.asarray(target_dot(t), dtype=float)
            e = y - np.asarray(target(t), dtype=float)
            return float(d1 @ d1) - float(e @ np.asarray(target_ddot(t), dtype=float))

        kwargs = dict(
            hess_dir=lambda y, t, v: zero_mat,
            hess_t=lambda y, t: zero_mat,
            grad_ty=lambda y, t: zero_mat,
            grad_tt=grad_tt,
            value_tt=value_tt,
        )

    return TvObjective(
        dim=dim,
        value=value,
        grad=grad,
        hess=hess,
        grad_t=grad_t,
        value_t=value_t,
        m_f=1.0,
        L=1.0,
        **kwargs,
    )
