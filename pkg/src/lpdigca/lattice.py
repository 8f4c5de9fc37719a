"""Superspace index lattice and projection to physical wave vectors.

The quasiperiodic field lives on a 4-dimensional periodic torus; its Fourier
modes are indexed by signed integer 4-vectors h.  The 2x4 projection matrix S
maps each mode to its physical wave vector g = S h.  Storage follows standard
FFT order (0, 1, ..., n_h/2 - 1, -n_h/2, ..., -1) per axis, dimension-major;
every module in the package uses this single convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, quartic_multiplier, spectral_symbol


def projection_matrix() -> np.ndarray:
    """The 2x4 matrix whose columns are the four basis wave vectors."""
    return np.array([
        [1.0, math.cos(math.pi / 6.0), math.cos(math.pi / 3.0), 0.0],
        [0.0, math.sin(math.pi / 6.0), math.sin(math.pi / 3.0), 1.0],
    ])


@dataclass(frozen=True)
class LatticeSpec:
    """Index-lattice geometry: 4D superspace, 2D physical space, n_h modes/axis."""

    n_h: int = 32
    n: int = 4
    d: int = 2

    def __post_init__(self):
        if self.n != 4 or self.d != 2:
            raise ValueError("only the (n=4, d=2) projection lattice is supported")
        if self.n_h < 2 or self.n_h % 2:
            raise ValueError(f"n_h must be a positive even integer, got {self.n_h}")

    @property
    def projection(self) -> np.ndarray:
        return projection_matrix()

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_h,) * 4

    @property
    def n_modes(self) -> int:
        return self.n_h**4

    def axis_frequencies(self) -> np.ndarray:
        """Signed integer frequencies of one axis in FFT storage order."""
        return np.fft.fftfreq(self.n_h, d=1.0 / self.n_h).astype(np.int64)

    def index_grids(self) -> np.ndarray:
        """Array (4, n_h, n_h, n_h, n_h) of signed indices per storage slot."""
        f = self.axis_frequencies()
        return np.stack(np.meshgrid(f, f, f, f, indexing="ij"))

    def in_range(self, h) -> bool:
        h = np.asarray(h)
        return bool(np.all(h >= -self.n_h // 2) and np.all(h <= self.n_h // 2 - 1))

    def storage_index(self, h) -> tuple[int, int, int, int]:
        """Array position of a signed index 4-vector."""
        h = np.asarray(h, dtype=np.int64)
        if not self.in_range(h):
            raise ValueError(f"mode index {h.tolist()} outside lattice range")
        return tuple(int(c) % self.n_h for c in h)


def project(spec: LatticeSpec, h) -> np.ndarray:
    """Physical wave vector g = S h of one mode index."""
    h = np.asarray(h, dtype=float)
    return spec.projection @ h


@dataclass(frozen=True)
class MultiplierTable:
    """Per-mode |g|^2, first-power symbol, and quartic multiplier arrays."""

    k_sq: np.ndarray
    symbol: np.ndarray
    quartic: np.ndarray


def build_tables(spec: LatticeSpec, p: ModelParams) -> MultiplierTable:
    """Evaluate the spectral symbols of the model on every lattice mode."""
    s = spec.projection
    idx = spec.index_grids().astype(float)
    gx = np.tensordot(s[0], idx, axes=(0, 0))
    gy = np.tensordot(s[1], idx, axes=(0, 0))
    k_sq = gx * gx + gy * gy
    return MultiplierTable(
        k_sq=k_sq,
        symbol=spectral_symbol(k_sq, p),
        quartic=quartic_multiplier(k_sq, p),
    )


# Seed index sets for the solver initializers, expressed as signed 4-vectors.
# Each state lists one representative per conjugate pair; the negatives are
# implied by Hermitian symmetry of the real field.
E1, E2, E3, E4 = np.eye(4, dtype=np.int64)

# The 12 unit-ring modes sit at angles 0, 30, ..., 330 degrees; summing each
# angularly adjacent pair yields the 12 q-ring modes (|g|^2 = 2 + sqrt(3)).
UNIT_RING = [E1, E2, E3, E4, E3 - E1, E4 - E2]
Q_RING = [E1 + E2, E2 + E3, E3 + E4, E3 + E4 - E1,
          E3 + E4 - E1 - E2, E4 - E1 - E2]
