"""Flat-system models: velocity-controlled integrator and wheeled
mobile robot (unicycle).

Both plants are differentially flat with positional output: the state
and the input are functions of the output jet alone.  Controllers plan
entirely in output space; the maps below convert jets to inputs u and
states x so the simulator can drive the physical model and confirm it
reproduces the planned output.

Model conventions:
  integrator  x' = u, y = x, flat order 1.
  wmr         state (x1, x2, x3) = (position, heading), inputs
              (u1, u2) = (forward speed, turn rate),
              x' = (u1 cos x3, u1 sin x3, u2), y = (x1, x2),
              flat order 2.  The flat maps are undefined at zero
              velocity, guarded by v_min.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FlatnessSingularity
from .opt_dynamics import OutputJet
from .problem import _jet_values

__all__ = [
    "FlatModel",
    "integrator_model",
    "wmr_model",
    "input_from_jet",
    "state_from_jet",
    "output_from_state",
    "plant_rhs",
    "initial_jet_from_state",
]


@dataclass(frozen=True)
class FlatModel:
    """Dimensions and parameters of one flat plant.

    order is the number of output derivatives the input map needs
    (jet orders 0..order).  v_min is the singularity guard for models
    whose flat maps divide by the output speed.
    """

    name: str
    order: int
    state_dim: int
    input_dim: int
    output_dim: int
    v_min: float = 1e-6

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("only flat orders 1 and 2 are supported")
        if self.v_min <= 0.0:
            raise ValueError("v_min must be positive")


def integrator_model(dim: int = 2) -> FlatModel:
    return FlatModel("integrator", order=1, state_dim=dim, input_dim=dim, output_dim=dim)


def wmr_model(v_min: float = 1e-6) -> FlatModel:
    return FlatModel("wmr", order=2, state_dim=3, input_dim=2, output_dim=2, v_min=v_min)


def _speed_sq(model: FlatModel, ydot) -> float:
    s2 = float(ydot[0] * ydot[0] + ydot[1] * ydot[1])
    if s2 < model.v_min * model.v_min:
        raise FlatnessSingularity(
            f"output speed {math.sqrt(s2):g} below v_min = {model.v_min:g}; "
            "the unicycle flat maps are undefined at rest"
        )
    return s2


def input_from_jet(model: FlatModel, jet, t: float = 0.0) -> np.ndarray:
    """Input u realizing the jet: needs orders 0..model.order.

    integrator: u = y'.  wmr: u1 = ||y'||, u2 = the heading rate
    (y1' y2'' - y1'' y2') / ||y'||^2, i.e. d/dt atan2(y2', y1').
    """
    vals = _jet_values(jet)
    if len(vals) < model.order + 1:
        raise ValueError(f"input map needs jet orders 0..{model.order}")
    if model.name == "integrator":
        return vals[1].copy()
    if model.name == "wmr":
        ydot, yddot = vals[1], vals[2]
        s2 = _speed_sq(model, ydot)
        u1 = math.sqrt(s2)
        u2 = float(ydot[0] * yddot[1] - yddot[0] * ydot[1]) / s2
        return np.array([u1, u2])
    raise ValueError(f"unknown model '{model.name}'")


def state_from_jet(model: FlatModel, jet) -> np.ndarray:
    """Plant state consistent with the jet.

    integrator: x = y.  wmr: (x1, x2) = y, x3 = atan2(y2', y1')
    (principal value; continuous unwrapping is the trajectory logger's
    concern)."""
    vals = _jet_values(jet)
    if model.name == "integrator":
        return vals[0].copy()
    if model.name == "wmr":
        if len(vals) < 2:
            raise ValueError("wmr state recovery needs the first derivative")
        ydot = vals[1]
        _speed_sq(model, ydot)
        heading = math.atan2(ydot[1], ydot[0])
        return np.array([vals[0][0], vals[0][1], heading])
    raise ValueError(f"unknown model '{model.name}'")


def output_from_state(model: FlatModel, x) -> np.ndarray:
    """Flat output read off the plant state (the h map)."""
    x = np.asarray(x, dtype=float)
    if model.name == "integrator":
        return x.copy()
    if model.name == "wmr":
        return x[:2].copy()
    raise ValueError(f"unknown model '{model.name}'")


def plant_rhs(model: FlatModel, x, u) -> np.ndarray:
    """Physical dynamics x' = f(x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if model.name == "integrator":
        return u.copy()
    if model.name == "wmr":
        return np.array([math.cos(x[2]) * u[0], math.sin(x[2]) * u[0], u[1]])
    raise ValueError(f"unknown model '{model.name}'")


def initial_jet_from_state(model: FlatModel, x0, speed: float = 0.5) -> OutputJet:
    """Jet y^[order-1] consistent with an initial plant pose.

    The unicycle pose fixes position and heading but not speed, so the
    initial output velocity is speed * (cos x3, sin x3) with a
    configurable scalar speed (it must respect v_min)."""
    x0 = np.asarray(x0, dtype=float)
    if model.name == "integrator":
        return OutputJet((x0.copy(),))
    if model.name == "wmr":
        if abs(speed) < model.v_min:
            raise FlatnessSingularity(
                f"initial speed {speed:g} below v_min = {model.v_min:g}"
            )
        ydot = speed * np.array([math.cos(x0[2]), math.sin(x0[2])])
        return OutputJet((x0[:2].copy(), ydot))
    raise ValueError(f"unknown model '{model.name}'")
