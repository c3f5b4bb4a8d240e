"""Hurwitz companion target system for the gradient stack.

The closed loop is designed so that the stacked objective gradient
w = (g, g', ..., g^(k-1)) obeys w' = (C ⊗ I_m) w with C a companion
matrix built from user-chosen coefficients a_0..a_{k-1}.  When the
characteristic polynomial s^k + a_{k-1} s^{k-1} + ... + a_0 is Hurwitz
the stack, and with it the tracking error, decays exponentially.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import NotHurwitz

__all__ = ["TargetSystemSpec", "companion_matrix", "decay_rate", "EPS_H"]

# Margin subtracted from the spectral abscissa so the reported rate is
# strictly achievable (repeated poles carry polynomial prefactors).
EPS_H = 1e-6


@dataclass(frozen=True)
class TargetSystemSpec:
    """Companion coefficients for one decoupled block of the target system.

    order is the number of stacked derivatives k, dim the width m of
    each block (the flat output dimension), coeffs the polynomial
    coefficients (a_0, ..., a_{k-1}).
    """

    order: int
    dim: int
    coeffs: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if len(self.coeffs) != self.order:
            raise ValueError("need exactly `order` coefficients")
        if not all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")


def companion_matrix(spec: TargetSystemSpec) -> np.ndarray:
    """k-by-k companion block: superdiagonal ones, last row -a_0..-a_{k-1}.

    The full system matrix is the Kronecker product with the identity
    of size spec.dim; callers exploit that block structure instead of
    materializing it.
    """
    k = spec.order
    c = np.zeros((k, k))
    for i in range(k - 1):
        c[i, i + 1] = 1.0
    c[k - 1, :] = [-a for a in spec.coeffs]
    return c


def decay_rate(spec: TargetSystemSpec) -> float:
    """Guaranteed exponential rate of the target system.

    Returns -(spectral abscissa) - EPS_H, with the spectrum computed
    from the eigenvalues of the companion block.  Raises NotHurwitz
    when any root has a nonnegative real part.
    """
    roots = np.linalg.eigvals(companion_matrix(spec))
    abscissa = float(np.max(roots.real))
    if abscissa >= 0.0:
        raise NotHurwitz(
            f"characteristic polynomial has a root with real part {abscissa:g} >= 0"
        )
    return -abscissa - EPS_H
