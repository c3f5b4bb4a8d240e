"""Feedback laws in the highest output derivative.

Each controller returns the y^(k) (or z^(k)) that makes the relevant
gradient stack follow the Hurwitz target recursion

    grad^(k) + a_{k-1} grad^(k-1) + ... + a_0 grad = 0,

where grad is the objective gradient (unconstrained), the Lagrangian
gradient (equality constraints), or the gradient of a log-barrier
surrogate with an increasing weight c(t) and a decaying slack s(t)
(inequality constraints).  Since grad^(k) = hess @ y^(k) + remainder,
the returned value is -hess^{-1} (sum_i a_i grad^(i) + remainder).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import BarrierDomain, RankDeficient, UnsupportedOrder
from .numerics import solve_linear
from .problem import (
    GradientFlowSplit,
    TvEqualityConstraints,
    TvInequalityConstraints,
    TvObjective,
    _jet_values,
    gradient_flow_split,
)
from .target_dynamics import TargetSystemSpec

__all__ = [
    "OutputJet",
    "PrimalDualJet",
    "BarrierSchedule",
    "MultiplierDiagnostics",
    "g_unc",
    "kkt_matrix",
    "g_eq",
    "barrier_objective",
    "slack_initial",
    "g_ineq",
    "multiplier_diagnostics",
]


@dataclass(frozen=True)
class OutputJet:
    """Flat output value and time derivatives y^(0)..y^(k-1)."""

    values: Tuple[np.ndarray, ...]

    def __post_init__(self):
        vals = tuple(np.asarray(v, dtype=float) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("jet needs at least the order-0 value")
        if any(v.shape != vals[0].shape for v in vals):
            raise ValueError("all jet orders must share one dimension")

    @property
    def order(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.values[0].size

    def stack(self) -> np.ndarray:
        """Concatenate orders into one flat ODE state vector."""
        return np.concatenate(self.values)

    @classmethod
    def unstack(cls, vec, order: int, dim: int) -> "OutputJet":
        vec = np.asarray(vec, dtype=float)
        if vec.size != order * dim:
            raise ValueError("state length does not match order * dim")
        return cls(tuple(vec[i * dim:(i + 1) * dim] for i in range(order)))


@dataclass(frozen=True)
class PrimalDualJet:
    """Stacked primal-dual state z = (y, nu) and derivatives z^(0)..z^(k-1)."""

    values: Tuple[np.ndarray, ...]
    dim_primal: int
    dim_dual: int

    def __post_init__(self):
        vals = tuple(np.asarray(v, dtype=float) for v in self.values)
        object.__setattr__(self, "values", vals)
        n = self.dim_primal + self.dim_dual
        if any(v.size != n for v in vals):
            raise ValueError("each jet order must have length dim_primal + dim_dual")

    @property
    def order(self) -> int:
        return len(self.values)

    def primal(self, i: int = 0) -> np.ndarray:
        return self.values[i][: self.dim_primal]

    def dual(self, i: int = 0) -> np.ndarray:
        return self.values[i][self.dim_primal:]

    def stack(self) -> np.ndarray:
        return np.concatenate(self.values)

    @classmethod
    def unstack(cls, vec, order: int, dim_primal: int, dim_dual: int) -> "PrimalDualJet":
        vec = np.asarray(vec, dtype=float)
        n = dim_primal + dim_dual
        if vec.size != order * n:
            raise ValueError("state length does not match order * (m + q)")
        return cls(
            tuple(vec[i * n:(i + 1) * n] for i in range(order)), dim_primal, dim_dual
        )


@dataclass(frozen=True)
class BarrierSchedule:
    """Barrier weight c(t) = c0 e^{alpha_c t} and slack s(t) = s0 e^{-alpha_s t}.

    The weight grows so the surrogate tightens toward the true problem;
    the slack starts at the initial constraint violation (plus eps_s)
    and decays so an initially infeasible output is pulled into the
    feasible set.  eps_s is the pad used by slack_initial.
    """

    c0: float = 1.0
    alpha_c: float = 0.5
    s0: float = 0.0
    alpha_s: float = 0.5
    eps_s: float = 0.1

    def __post_init__(self):
        if self.c0 <= 0.0 or self.alpha_c <= 0.0:
            raise ValueError("need c0 > 0 and alpha_c > 0")
        if self.s0 < 0.0:
            raise ValueError("need s0 >= 0")
        if self.alpha_s <= 0.0 or self.eps_s <= 0.0:
            raise ValueError("need alpha_s > 0 and eps_s > 0")

    def c(self, t: float) -> float:
        return self.c0 * math.exp(self.alpha_c * t)

    def c_dot(self, t: float) -> float:
        return self.alpha_c * self.c(t)

    def c_ddot(self, t: float) -> float:
        return self.alpha_c * self.alpha_c * self.c(t)

    def s(self, t: float) -> float:
        return self.s0 * math.exp(-self.alpha_s * t)

    def s_dot(self, t: float) -> float:
        return -self.alpha_s * self.s(t)

    def s_ddot(self, t: float) -> float:
        return self.alpha_s * self.alpha_s * self.s(t)


def _running_gradients(obj: TvObjective, vals, t: float, k: int):
    """Total derivatives grad^(0)..grad^(k-1) reconstructed from the jet.

    grad^(i) for i >= 1 comes from the order-i Leibniz split applied to
    the lower part of the jet, so the ODE state stays exactly y^[k-1].
    """
    grads = [np.asarray(obj.grad(vals[0], t), dtype=float)]
    for i in range(1, k):
        split = gradient_flow_split(obj, vals[:i], t, i)
        grads.append(split.hessian @ vals[i] + split.remainder)
    return grads


def g_unc(obj: TvObjective, spec: TargetSystemSpec, jet, t: float) -> np.ndarray:
    """Highest derivative for the unconstrained loop.

    Solves hess @ y^(k) + remainder + sum_i a_i grad^(i) = 0 for y^(k).
    Raises SingularMatrix if the Hessian is degenerate at the jet.
    """
    vals = _jet_values(jet)
    k = spec.order
    split = gradient_flow_split(obj, vals, t, k)
    grads = _running_gradients(obj, vals, t, k)
    forcing = split.remainder.copy()
    for a_i, g_i in zip(spec.coeffs, grads):
        forcing += a_i * g_i
    return solve_linear(split.hessian, -forcing)


def kkt_matrix(
    obj: TvObjective, eq: TvEqualityConstraints, y, t: float
) -> np.ndarray:
    """Assemble [[hess, A^T], [A, 0]] at (y, t).

    Raises RankDeficient when the smallest singular value of A(t) drops
    below 1e-10 (the constraint rows are then not independent and the
    saddle matrix may be singular).
    """
    y = np.asarray(y, dtype=float)
    a = np.atleast_2d(np.asarray(eq.a(t), dtype=float))
    q, m = a.shape
    if q >= m:
        raise ValueError("need strictly fewer constraint rows than variables")
    sigma_min = float(np.linalg.svd(a, compute_uv=False)[-1])
    if sigma_min < 1e-10:
        raise RankDeficient(f"smallest singular value of A(t) is {sigma_min:g}")
    hess = np.asarray(obj.hess(y, t), dtype=float)
    kkt = np.zeros((m + q, m + q))
    kkt[:m, :m] = hess
    kkt[:m, m:] = a.T
    kkt[m:, :m] = a
    return kkt


def g_eq(
    obj: TvObjective,
    eq: TvEqualityConstraints,
    spec: TargetSystemSpec,
    zjet,
    t: float,
) -> np.ndarray:
    """Highest derivative of the primal-dual state for the equality loop.

    Works on the Lagrangian l(z, t) = f0(y, t) + nu . (A y - b) whose
    gradient is (grad_f0 + A^T nu, A y - b) and whose Hessian is the
    saddle matrix from kkt_matrix; the recursion is the same as in
    g_unc with grad replaced by the Lagrangian gradient.
    """
    vals = _jet_values(zjet)
    k = spec.order
    m = obj.dim
    y = vals[0][:m]
    nu = vals[0][m:]

    a = np.atleast_2d(np.asarray(eq.a(t), dtype=float))
    b = np.asarray(eq.b(t), dtype=float)
    a_dot = np.atleast_2d(np.asarray(eq.a_dot(t), dtype=float))
    b_dot = np.asarray(eq.b_dot(t), dtype=float)

    kkt = kkt_matrix(obj, eq, y, t)
    grad_l = np.concatenate([obj.grad(y, t) + a.T @ nu, a @ y - b])
    grad_lt = np.concatenate([obj.grad_t(y, t) + a_dot.T @ nu, a_dot @ y - b_dot])

    forcing = spec.coeffs[0] * grad_l
    if k == 1:
        forcing = forcing + grad_lt
    elif k == 2:
        if eq.a_ddot is None or eq.b_ddot is None:
            raise UnsupportedOrder("order 2 needs a_ddot and b_ddot on the constraints")
        missing = [
            name
            for name in ("hess_dir", "hess_t", "grad_ty", "grad_tt")
            if getattr(obj, name) is None
        ]
        if missing:
            raise UnsupportedOrder(
                f"order 2 needs callbacks {missing} which the objective does not supply"
            )
        ydot = vals[1][:m]
        nudot = vals[1][m:]
        a_ddot = np.atleast_2d(np.asarray(eq.a_ddot(t), dtype=float))
        b_ddot = np.asarray(eq.b_ddot(t), dtype=float)

        grad_l_dot = kkt @ vals[1] + grad_lt
        forcing = forcing + spec.coeffs[1] * grad_l_dot

        hess_f_dot = np.asarray(obj.hess_dir(y, t, ydot), dtype=float) + np.asarray(
            obj.hess_t(y, t), dtype=float
        )
        rem_top = (
            hess_f_dot @ ydot
            + np.asarray(obj.grad_ty(y, t), dtype=float) @ ydot
            + np.asarray(obj.grad_tt(y, t), dtype=float)
            + a_ddot.T @ nu
            + 2.0 * (a_dot.T @ nudot)
        )
        rem_bot = 2.0 * (a_dot @ ydot) + a_ddot @ y - b_ddot
        forcing = forcing + np.concatenate([rem_top, rem_bot])
    else:
        raise UnsupportedOrder("equality loop is implemented for orders 1 and 2 only")

    return solve_linear(kkt, -forcing)


def slack_initial(ineq: TvInequalityConstraints, y0, eps_s: float = 0.1) -> float:
    """Initial slack: zero when y0 is feasible at t = 0, otherwise the
    worst violation plus eps_s so the shifted constraints start strictly
    satisfied."""
    if eps_s <= 0.0:
        raise ValueError("eps_s must be positive")
    y0 = np.asarray(y0, dtype=float)
    if len(ineq) == 0:
        return 0.0
    worst = max(float(f.value(y0, 0.0)) for f in ineq.functions)
    return 0.0 if worst <= 0.0 else worst + eps_s


def barrier_objective(
    obj: TvObjective, ineq: TvInequalityConstraints, sched: BarrierSchedule
) -> TvObjective:
    """Log-barrier surrogate f0(y,t) - (1/c(t)) sum_i log(s(t) - f_i(y,t)).

    Returns a TvObjective with the full derivative surface assembled
    from the constraint callbacks; every callback raises BarrierDomain
    when some s(t) - f_i(y,t) <= 0, which the integrator turns into a
    step rejection.  With no constraints the objective is returned
    unchanged, so the inequality path degenerates to the unconstrained
    one exactly.  The surrogate keeps the strong-convexity modulus of
    f0 because each barrier term only adds positive-semidefinite
    curvature on its domain.
    """
    if len(ineq) == 0:
        return obj
    fns = ineq.functions
    m = obj.dim

    # The controller evaluates half a dozen derivative callbacks at one
    # (y, t) per right-hand-side call; a one-slot memo of the shared
    # constraint pieces keeps that from re-running every constraint
    # callback once per derivative.
    memo: dict = {"key": None}

    def pieces(y, t):
        key = (t, y.tobytes())
        if memo["key"] == key:
            return memo
        s = sched.s(t)
        gs = []
        for i, f in enumerate(fns):
            g = s - float(f.value(y, t))
            if g <= 0.0:
                raise BarrierDomain(
                    f"constraint {i} reaches the shifted boundary (s - f = {g:g}) at t = {t:g}"
                )
            gs.append(g)
        memo.clear()
        memo.update(key=key, gs=gs)
        return memo

    def con_grads(y, t, pc):
        if "gv" not in pc:
            pc["gv"] = [np.asarray(f.grad(y, t), dtype=float) for f in fns]
        return pc["gv"]

    def con_hessians(y, t, pc):
        if "hm" not in pc:
            pc["hm"] = [np.asarray(f.hess(y, t), dtype=float) for f in fns]
        return pc["hm"]

    def con_time(y, t, pc):
        if "gt" not in pc:
            pc["gt"] = [np.asarray(f.grad_t(y, t), dtype=float) for f in fns]
            pc["ft"] = [float(f.value_t(y, t)) for f in fns]
        return pc["gt"], pc["ft"]

    def value(y, t):
        gs = pieces(y, t)["gs"]
        return float(obj.value(y, t)) - sum(math.log(g) for g in gs) / sched.c(t)

    def grad(y, t):
        pc = pieces(y, t)
        gs = pc["gs"]
        gvs = con_grads(y, t, pc)
        total = np.asarray(obj.grad(y, t), dtype=float).copy()
        inv_c = 1.0 / sched.c(t)
        for gv, g in zip(gvs, gs):
            total += inv_c * gv / g
        return total

    def hess(y, t):
        pc = pieces(y, t)
        gs = pc["gs"]
        gvs = con_grads(y, t, pc)
        hms = con_hessians(y, t, pc)
        total = np.asarray(obj.hess(y, t), dtype=float).copy()
        inv_c = 1.0 / sched.c(t)
        for gv, hm, g in zip(gvs, hms, gs):
            total += inv_c * (gv[:, None] * gv / (g * g) + hm / g)
        return total

    def grad_t(y, t):
        pc = pieces(y, t)
        gs = pc["gs"]
        gvs = con_grads(y, t, pc)
        gts, fts = con_time(y, t, pc)
        total = np.asarray(obj.grad_t(y, t), dtype=float).copy()
        c = sched.c(t)
        ratio = sched.c_dot(t) / (c * c)
        s_dot = sched.s_dot(t)
        for gv, gt, ft, g in zip(gvs, gts, fts, gs):
            total += -ratio * gv / g + (gt / g + gv * (ft - s_dot) / (g * g)) / c
        return total

    surface_needed = ("hess_dir", "hess_t", "grad_ty", "grad_tt", "value_t", "value_tt")
    has_order2 = all(
        all(getattr(f, name) is not None for name in surface_needed) for f in fns
    ) and all(getattr(obj, name) is not None for name in ("hess_dir", "hess_t", "grad_ty", "grad_tt"))

    kwargs = {}
    if has_order2:

        def hess_dir(y, t, v):
            pc = pieces(y, t)
            gs = pc["gs"]
            gvs = con_grads(y, t, pc)
            hms = con_hessians(y, t, pc)
            v = np.asarray(v, dtype=float)
            total = np.asarray(obj.hess_dir(y, t, v), dtype=float).copy()
            inv_c = 1.0 / sched.c(t)
            for f, gv, hm, g in zip(fns, gvs, hms, gs):
                hv = hm @ v
                gdotv = float(gv @ v)
                total += inv_c * (
                    (hv[:, None] * gv + gv[:, None] * hv) / (g * g)
                    + 2.0 * gdotv * (gv[:, None] * gv) / (g * g * g)
                    + np.asarray(f.hess_dir(y, t, v), dtype=float) / g
                    + gdotv * hm / (g * g)
                )
            return total

        def _mixed_matrix(y, t, use_grad_ty):
            # d/dt of the barrier Hessian; equals d/dy of the barrier
            # grad_t up to which mixed-partial callback feeds the f_i
            # term, so one routine serves hess_t and grad_ty.
            pc = pieces(y, t)
            gs = pc["gs"]
            gvs = con_grads(y, t, pc)
            hms = con_hessians(y, t, pc)
            gts, fts = con_time(y, t, pc)
            c = sched.c(t)
            ratio = sched.c_dot(t) / (c * c)
            s_dot = sched.s_dot(t)
            base = obj.grad_ty(y, t) if use_grad_ty else obj.hess_t(y, t)
            total = np.asarray(base, dtype=float).copy()
            for f, gv, gt, hm, ft, g in zip(fns, gvs, gts, hms, fts, gs):
                mixed = f.grad_ty(y, t) if use_grad_ty else f.hess_t(y, t)
                outer_gg = gv[:, None] * gv
                total += -ratio * (outer_gg / (g * g) + hm / g) + (
                    (gt[:, None] * gv + gv[:, None] * gt) / (g * g)
                    + 2.0 * (ft - s_dot) * outer_gg / (g * g * g)
                    + np.asarray(mixed, dtype=float) / g
                    + (ft - s_dot) * hm / (g * g)
                ) / c
            return total

        def hess_t(y, t):
            return _mixed_matrix(y, t, use_grad_ty=False)

        def grad_ty(y, t):
            return _mixed_matrix(y, t, use_grad_ty=True)

        def grad_tt(y, t):
            pc = pieces(y, t)
            gs = pc["gs"]
            gvs = con_grads(y, t, pc)
            gts, fts = con_time(y, t, pc)
            c = sched.c(t)
            c_dot = sched.c_dot(t)
            ratio = c_dot / (c * c)
            ratio_dot = sched.c_ddot(t) / (c * c) - 2.0 * c_dot * c_dot / (c * c * c)
            s_dot = sched.s_dot(t)
            s_ddot = sched.s_ddot(t)
            total = np.asarray(obj.grad_tt(y, t), dtype=float).copy()
            for f, gv, gt, ft, g in zip(fns, gvs, gts, fts, gs):
                gtt = np.asarray(f.grad_tt(y, t), dtype=float)
                ftt = float(f.value_tt(y, t))
                drift = gt / g + gv * (ft - s_dot) / (g * g)
                total += (
                    -ratio_dot * gv / g
                    - 2.0 * ratio * drift
                    + (
                        gtt / g
                        + 2.0 * gt * (ft - s_dot) / (g * g)
                        + gv * (ftt - s_ddot) / (g * g)
                        + 2.0 * gv * (ft - s_dot) ** 2 / (g * g * g)
                    )
                    / c
                )
            return total

        kwargs = dict(hess_dir=hess_dir, hess_t=hess_t, grad_ty=grad_ty, grad_tt=grad_tt)

    return TvObjective(
        dim=m,
        value=value,
        grad=grad,
        hess=hess,
        grad_t=grad_t,
        m_f=obj.m_f,
        L=math.inf,
        **kwargs,
    )


def g_ineq(
    obj: TvObjective,
    ineq: TvInequalityConstraints,
    sched: BarrierSchedule,
    spec: TargetSystemSpec,
    jet,
    t: float,
) -> np.ndarray:
    """Highest derivative for the inequality loop: g_unc on the barrier
    surrogate.  With no constraints this is g_unc on the raw objective."""
    return g_unc(barrier_objective(obj, ineq, sched), spec, jet, t)


@dataclass(frozen=True)
class MultiplierDiagnostics:
    """Barrier multiplier estimates with the bounds they should obey.

    estimates are lambda_i = 1 / (c(t) (s(t) - f_i)); these are the
    stationarity-consistent interior-point estimates, not the exact
    optimal multipliers.  multiplier_bound is L d / eps; gap_bound is
    the suboptimality bound p / c(t) + sum_i lambda_i s(t).
    """

    estimates: np.ndarray
    multiplier_bound: float
    gap_bound: float


def multiplier_diagnostics(
    ineq: TvInequalityConstraints,
    sched: BarrierSchedule,
    y,
    t: float,
    L: float,
    d: float,
    eps: float,
) -> MultiplierDiagnostics:
    """Multiplier estimates at a strictly feasible y, plus the bounds."""
    y = np.asarray(y, dtype=float)
    c = sched.c(t)
    s = sched.s(t)
    lam = np.empty(len(ineq))
    for i, f in enumerate(ineq.functions):
        g = s - float(f.value(y, t))
        if g <= 0.0:
            raise BarrierDomain(
                f"constraint {i} reaches the shifted boundary (s - f = {g:g}) at t = {t:g}"
            )
        lam[i] = 1.0 / (c * g)
    gap = len(ineq) / c + float(lam.sum()) * s
    return MultiplierDiagnostics(lam, L * d / eps, gap)
