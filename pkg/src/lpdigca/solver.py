"""Projection-method solver: semi-implicit Fourier-space gradient flow.

State lives as complex Fourier coefficients on the 4D index lattice.  Each
step treats the stiff quartic ring operator implicitly and the polynomial
forcing explicitly; the nonlinearity is evaluated pseudospectrally on the 4D
torus (inverse FFT, pointwise alpha*phi^2 - phi^3, forward FFT).  Physical
2D fields are reconstructed by direct evaluation of the sparse Fourier sum
through the projection matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .lattice import LatticeSpec, MultiplierTable, build_tables, project
from .lattice import E1, E2, E3, E4
from .model import (EnergyBreakdown, ModelParams, StateKind, bulk_density,
                    bulk_force, spectral_symbol)


class SolverError(Exception):
    """Base class for solver failures."""


class NonFiniteError(SolverError):
    """A coefficient became NaN/Inf (blow-up; reduce dt)."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.1
    max_steps: int = 20000
    conv_tol: float = 1e-9
    dealias: bool = False
    zero_mean: bool = False
    energy_every: int = 0  # 0 disables energy history recording

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.conv_tol <= 0:
            raise ValueError(f"conv_tol must be positive, got {self.conv_tol}")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


@dataclass(frozen=True)
class GridSpec:
    """Physical sampling window: n_g x n_g points on a box of edge L * 2pi."""

    n_g: int = 256
    box_multiplier: float = 30.0

    def __post_init__(self):
        if self.n_g < 8:
            raise ValueError(f"n_g must be at least 8, got {self.n_g}")
        if self.box_multiplier <= 0:
            raise ValueError("box_multiplier must be positive")

    @property
    def edge(self) -> float:
        return self.box_multiplier * 2.0 * np.pi

    @property
    def spacing(self) -> float:
        return self.edge / self.n_g

    def coordinates(self) -> np.ndarray:
        """1D sample coordinates {0, dx, ..., D - dx} shared by both axes."""
        return np.arange(self.n_g) * self.spacing


@dataclass
class SpectralField:
    """Complex Fourier coefficients over the full index lattice."""

    coeffs: np.ndarray
    spec: LatticeSpec

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.spec)


@dataclass
class RelaxationResult:
    field: SpectralField
    energy: EnergyBreakdown
    steps_taken: int
    converged: bool
    energy_history: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Initializers

_SEED_SETS: dict[StateKind, list[np.ndarray]] = {
    StateKind.QC: [E1, E2, E3, E4, E3 - E1, E4 - E2],
    StateKind.C6: [E1, E3, E3 - E1],
    StateKind.T6: [E1 + E2, E3 + E4, E3 + E4 - E1 - E2],
    StateKind.Lam: [E1],
    StateKind.LQ: [E2, E3, E2 + E3],
}


def initialize(state: StateKind, spec: LatticeSpec,
               amplitude: float = 0.3) -> SpectralField:
    """Seed field for one ordered state: amplitude on the state's mode set.

    Conjugate partners at -h carry the same (real) amplitude, so the seed is
    Hermitian and the superspace field is real.
    """
    if state is StateKind.Lq:
        raise ValueError("the liquid state is analytic and has no initializer")
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    coeffs = np.zeros(spec.shape, dtype=np.complex128)
    for h in _SEED_SETS[state]:
        coeffs[spec.storage_index(h)] = amplitude
        coeffs[spec.storage_index(-h)] = amplitude
    return SpectralField(coeffs, spec)


# ---------------------------------------------------------------------------
# Stepping

def hermitian_defect(coeffs: np.ndarray) -> float:
    """Sup-norm deviation from coeffs[-h] == conj(coeffs[h])."""
    flipped = coeffs
    for ax in range(coeffs.ndim - 4, coeffs.ndim):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return float(np.max(np.abs(coeffs - np.conj(flipped))))


def _axis_mask(spec: LatticeSpec, keep: np.ndarray) -> np.ndarray:
    out = np.ones(spec.shape, dtype=bool)
    for ax in range(4):
        shape = [1, 1, 1, 1]
        shape[ax] = spec.n_h
        out &= keep.reshape(shape)
    return out


def _nyquist_mask(spec: LatticeSpec) -> np.ndarray:
    """False on modes with any h_i = -n_h/2.

    The signed index range is asymmetric: the Nyquist frequency has no
    conjugate partner, so its projected multipliers are uneven and a diagonal
    update there would break Hermitian symmetry.  The stepper therefore keeps
    those hyperplanes at zero.
    """
    f = spec.axis_frequencies()
    return _axis_mask(spec, f != -spec.n_h // 2)


def _dealias_mask(spec: LatticeSpec) -> np.ndarray:
    """Half-rule truncation: keep modes with all |h_i| < n_h/4."""
    f = np.abs(spec.axis_frequencies())
    return _axis_mask(spec, f < spec.n_h // 4)


def superspace_samples(coeffs: np.ndarray) -> np.ndarray:
    """Real samples of the field on the uniform 4D torus grid.

    Raises NonFiniteError if the imaginary residue exceeds the Hermitian
    round-off budget 1e-8 * (1 + sup|phi|).
    """
    phys = sfft.ifftn(coeffs, axes=(-4, -3, -2, -1), norm="forward")
    real = phys.real
    residue = np.max(np.abs(phys.imag))
    if not np.isfinite(residue):
        raise NonFiniteError("non-finite field samples")
    if residue > 1e-8 * (1.0 + np.max(np.abs(real))):
        raise SolverError(
            f"imaginary residue {residue:.3e} exceeds Hermitian tolerance")
    return real


def _step_batch(coeffs: np.ndarray, eps: np.ndarray, alpha: np.ndarray,
                cfg: SolverConfig, tables: MultiplierTable,
                dealias_mask: np.ndarray | None,
                nyquist_mask: np.ndarray) -> np.ndarray:
    """One semi-implicit step for a (possibly batched) coefficient array.

    coeffs has shape (..., n_h, n_h, n_h, n_h); eps/alpha broadcast against
    the leading dimensions.
    """
    work = coeffs
    if dealias_mask is not None:
        work = coeffs * dealias_mask
    phi = superspace_samples(work)
    nonlinear = (alpha - phi) * (phi * phi)
    nhat = sfft.fftn(nonlinear, axes=(-4, -3, -2, -1), norm="forward")
    inv_dt = 1.0 / cfg.dt
    out = ((inv_dt + eps) * coeffs + nhat) / (inv_dt + tables.quartic)
    out *= nyquist_mask
    if cfg.zero_mean:
        out[..., 0, 0, 0, 0] = 0.0
    if not np.all(np.isfinite(out.view(np.float64))):
        raise NonFiniteError("step produced NaN/Inf coefficients")
    return out


def step(field: SpectralField, p: ModelParams, cfg: SolverConfig,
         tables: MultiplierTable) -> SpectralField:
    """Advance one field by one semi-implicit time step."""
    mask = _dealias_mask(field.spec) if cfg.dealias else None
    new = _step_batch(field.coeffs, np.float64(p.eps), np.float64(p.alpha),
                      cfg, tables, mask, _nyquist_mask(field.spec))
    return SpectralField(new, field.spec)


# ---------------------------------------------------------------------------
# Energy

def energy_batch(coeffs: np.ndarray, eps: np.ndarray, alpha: np.ndarray,
                 c_pen: float, tables: MultiplierTable
                 ) -> tuple[np.ndarray, np.ndarray]:
    """(e1, e2) densities for a batched coefficient array.

    e1 is the Parseval form (c/2) sum sigma^2 |phi_hat|^2; e2 is the mean of
    the bulk polynomial over the 4D torus, evaluated pseudospectrally.
    """
    mag_sq = coeffs.real**2 + coeffs.imag**2
    e1 = 0.5 * c_pen * np.sum(tables.symbol**2 * mag_sq, axis=(-4, -3, -2, -1))
    phi = superspace_samples(coeffs)
    eps_b = np.asarray(eps)[..., None, None, None, None]
    alpha_b = np.asarray(alpha)[..., None, None, None, None]
    phi_sq = phi * phi
    bulk = phi_sq * (-0.5 * eps_b - (alpha_b / 3.0) * phi + 0.25 * phi_sq)
    e2 = np.mean(bulk, axis=(-4, -3, -2, -1))
    return e1, e2


def energy(field: SpectralField, p: ModelParams,
           tables: MultiplierTable) -> EnergyBreakdown:
    """Free energy density split of one field."""
    e1, e2 = energy_batch(field.coeffs, np.float64(p.eps),
                          np.float64(p.alpha), p.c_pen, tables)
    e1, e2 = float(e1), float(e2)
    if not (np.isfinite(e1) and np.isfinite(e2)):
        raise NonFiniteError("non-finite energy")
    return EnergyBreakdown(e1=e1, e2=e2)


# ---------------------------------------------------------------------------
# Relaxation

def relax(state: StateKind, p: ModelParams, cfg: SolverConfig,
          spec: LatticeSpec, tables: MultiplierTable | None = None,
          amplitude: float = 0.3) -> RelaxationResult:
    """Gradient-flow relaxation of one seeded state to a local minimum."""
    results = relax_batch([(state, p)], cfg, spec, tables, amplitude)
    return results[0]


def relax_batch(jobs: list[tuple[StateKind, ModelParams]], cfg: SolverConfig,
                spec: LatticeSpec, tables: MultiplierTable | None = None,
                amplitude: float = 0.3) -> list[RelaxationResult]:
    """Relax many (state, params) jobs in lockstep with batched FFTs.

    All jobs must share c_pen and q (the implicit operator is shared); eps
    and alpha may vary per job.  Jobs that converge are frozen in place while
    the rest continue.
    """
    if not jobs:
        return []
    c_pen = jobs[0][1].c_pen
    q = jobs[0][1].q
    for _, p in jobs:
        if p.c_pen != c_pen or p.q != q:
            raise ValueError("batched jobs must share c_pen and q")
    if tables is None:
        tables = build_tables(spec, jobs[0][1])

    n_jobs = len(jobs)
    coeffs = np.stack([initialize(s, spec, amplitude).coeffs for s, _ in jobs])
    eps = np.array([p.eps for _, p in jobs])[:, None, None, None, None]
    alpha = np.array([p.alpha for _, p in jobs])[:, None, None, None, None]
    mask = _dealias_mask(spec) if cfg.dealias else None
    nyquist = _nyquist_mask(spec)

    record = cfg.energy_every > 0
    histories: list[list[float]] = [[] for _ in range(n_jobs)]
    if record:
        e1, e2 = energy_batch(coeffs, eps[..., 0, 0, 0, 0].ravel(),
                              alpha[..., 0, 0, 0, 0].ravel(), c_pen, tables)
        for j in range(n_jobs):
            histories[j].append(float(e1[j] + e2[j]))

    active = np.ones(n_jobs, dtype=bool)
    steps_taken = np.zeros(n_jobs, dtype=np.int64)
    for n in range(cfg.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = coeffs[idx]
        new = _step_batch(sub, eps[idx], alpha[idx], cfg, tables, mask, nyquist)
        delta = np.max(np.abs(new - sub), axis=(-4, -3, -2, -1))
        coeffs[idx] = new
        steps_taken[idx] = n + 1
        if record and (n + 1) % cfg.energy_every == 0:
            e1, e2 = energy_batch(new, eps[idx, 0, 0, 0, 0],
                                  alpha[idx, 0, 0, 0, 0], c_pen, tables)
            for pos, j in enumerate(idx):
                histories[j].append(float(e1[pos] + e2[pos]))
        active[idx] = delta >= cfg.conv_tol

    results = []
    for j, (state, p) in enumerate(jobs):
        f = SpectralField(coeffs[j], spec)
        results.append(RelaxationResult(
            field=f,
            energy=energy(f, p, tables),
            steps_taken=int(steps_taken[j]),
            converged=not active[j],
            energy_history=np.array(histories[j]) if record else None,
        ))
    return results


# ---------------------------------------------------------------------------
# Physical reconstruction

def _sparse_modes(field: SpectralField, threshold: float
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(coefficients, gx, gy) of the modes above the sparsity threshold."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    coeffs = field.coeffs
    keep = np.abs(coeffs) > threshold
    values = coeffs[keep]
    idx = field.spec.index_grids()
    h = np.stack([idx[a][keep] for a in range(4)], axis=1).astype(float)
    g = h @ field.spec.projection.T
    return values, g[:, 0], g[:, 1]


def _evaluate_modes(values: np.ndarray, gx: np.ndarray, gy: np.ndarray,
                    grid: GridSpec) -> np.ndarray:
    """Evaluate sum c_m exp(i g_m . r) on the tensor-product grid."""
    r = grid.coordinates()
    ex = np.exp(1j * np.outer(gx, r))
    ey = np.exp(1j * np.outer(gy, r))
    out = (values[:, None] * ex).T @ ey
    sup = np.max(np.abs(out.real))
    residue = np.max(np.abs(out.imag)) if out.size else 0.0
    if residue > 1e-8 * (1.0 + sup):
        raise SolverError(
            f"imaginary residue {residue:.3e} in physical reconstruction")
    return out.real


def reconstruct_physical(field: SpectralField, grid: GridSpec,
                         threshold: float = 1e-8) -> np.ndarray:
    """Sample phi(r) on the physical grid from the sparse Fourier sum."""
    values, gx, gy = _sparse_modes(field, threshold)
    if values.size == 0:
        return np.zeros((grid.n_g, grid.n_g))
    return _evaluate_modes(values, gx, gy, grid)


def reconstruct_gradient_term(field: SpectralField, grid: GridSpec,
                              p: ModelParams,
                              threshold: float = 1e-8) -> np.ndarray:
    """Sample the ring-operator image G(phi)(r), symbol-weighted modes."""
    values, gx, gy = _sparse_modes(field, threshold)
    if values.size == 0:
        return np.zeros((grid.n_g, grid.n_g))
    k_sq = gx * gx + gy * gy
    weighted = spectral_symbol(k_sq, p) * values
    return _evaluate_modes(weighted, gx, gy, grid)
