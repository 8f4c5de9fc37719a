"""Lifshitz-Petrich model parameters, bulk polynomial, and spectral symbols.

The free energy splits into an interaction part, built from the two-ring
operator (nabla^2 + 1)(nabla^2 + q^2), and a bulk polynomial part.  Both are
reported as densities (per unit volume) throughout the package so that values
are independent of the computational box size.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# q = 2 cos(pi/12) gives the 12-fold symmetric quasicrystal; q^2 is kept as
# the exact 2 + sqrt(3) so that the q-ring zeros of the spectral symbol are
# exact for integer index combinations such as e1 + e2.
Q_DEFAULT = 2.0 * math.cos(math.pi / 12.0)
Q_SQ_DEFAULT = 2.0 + math.sqrt(3.0)


class StateKind(enum.Enum):
    """The six candidate phases of the two-length-scale model."""

    QC = "QC"    # 12-fold quasicrystal
    C6 = "C6"    # 6-fold crystal
    LQ = "LQ"    # lamellar quasicrystal
    T6 = "T6"    # transformed 6-fold crystal (q-ring hexagon)
    Lam = "Lam"  # lamellae
    Lq = "Lq"    # liquid (constant field, no solver initializer)


#: Fixed comparison / tie-break order used everywhere a state ordering matters.
STATE_ORDER = (StateKind.QC, StateKind.C6, StateKind.LQ, StateKind.T6,
               StateKind.Lam, StateKind.Lq)

#: The five states that are relaxed by the solver (everything but the liquid).
ORDERED_STATES = STATE_ORDER[:5]


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters (c, q, eps, alpha) of the free energy functional."""

    eps: float
    alpha: float
    c_pen: float = 1.0
    q: float = Q_DEFAULT

    def __post_init__(self):
        if self.c_pen <= 0:
            raise ValueError(f"c_pen must be positive, got {self.c_pen}")
        if self.q <= 1:
            raise ValueError(f"q must exceed 1, got {self.q}")

    @property
    def q_sq(self) -> float:
        """q^2, exact 2 + sqrt(3) for the default 12-fold q."""
        if self.q == Q_DEFAULT:
            return Q_SQ_DEFAULT
        return self.q * self.q


@dataclass(frozen=True)
class EnergyBreakdown:
    """Interaction (e1) and bulk (e2) energy densities."""

    e1: float
    e2: float

    @property
    def total(self) -> float:
        return self.e1 + self.e2


def bulk_density(phi_value, p: ModelParams):
    """Bulk energy density -eps/2 v^2 - alpha/3 v^3 + 1/4 v^4 (vectorized)."""
    v = np.asarray(phi_value)
    v_sq = v * v
    return v_sq * (-0.5 * p.eps - (p.alpha / 3.0) * v + 0.25 * v_sq)


def bulk_force(phi_value, p: ModelParams):
    """Explicit nonlinear forcing alpha v^2 - v^3 used by the stepper.

    The linear eps*v part of the bulk force is handled separately by the
    semi-implicit time discretization.
    """
    v = np.asarray(phi_value)
    return (p.alpha - v) * (v * v)


def spectral_symbol(k_sq, p: ModelParams):
    """First-power Fourier symbol (1 - k^2)(q^2 - k^2) of the ring operator."""
    k_sq = np.asarray(k_sq)
    return (1.0 - k_sq) * (p.q_sq - k_sq)


def quartic_multiplier(k_sq, p: ModelParams):
    """Implicit-operator factor c (1 - k^2)^2 (q^2 - k^2)^2; nonnegative."""
    s = spectral_symbol(k_sq, p)
    return p.c_pen * s * s


def liquid_equilibrium(p: ModelParams) -> tuple[float, float]:
    """Constant-field minimizer of the energy density and its energy.

    For a constant field v the ring operator acts as multiplication by q^2,
    so the density is f(v) = (c/2) q^4 v^2 + bulk_density(v).  Stationary
    points are v = 0 and the real roots of v^2 - alpha v + (c q^4 - eps) = 0.
    """
    q4 = p.q_sq * p.q_sq

    def f(v):
        return 0.5 * p.c_pen * q4 * v * v + float(bulk_density(v, p))

    candidates = [0.0]
    disc = p.alpha * p.alpha - 4.0 * (p.c_pen * q4 - p.eps)
    if disc >= 0:
        root = math.sqrt(disc)
        candidates.append(0.5 * (p.alpha + root))
        candidates.append(0.5 * (p.alpha - root))
    best = min(candidates, key=f)
    return best, f(best)
