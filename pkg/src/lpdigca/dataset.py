"""Full-order phase labeling, dataset generation, and phase-diagram assembly.

A sample at parameter point mu relaxes all five ordered initializers, stores
their spectral snapshots and physical grids, and is labeled by the minimum
energy density among the five totals and the analytic liquid value.  Dataset
randomness is derived per draw from (seed, draw index) so results do not
depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .lattice import LatticeSpec, build_tables
from .model import (EnergyBreakdown, ModelParams, StateKind, ORDERED_STATES,
                    STATE_ORDER, liquid_equilibrium)
from .solver import (GridSpec, NonFiniteError, SolverConfig, relax_batch,
                     reconstruct_gradient_term, reconstruct_physical)

#: Default parameter domain bounds: eps in [-0.01, 0.05], alpha in [0, 1].
DEFAULT_DOMAIN = ((-0.01, 0.05), (0.0, 1.0))

#: Energies within this of the minimum are ties, broken by STATE_ORDER.
TIE_TOL = 1e-12

#: Draw cap factor for rejection sampling (times 6 branches times n_per_branch).
DRAW_CAP_FACTOR = 50

MANIFEST_SCHEMA_VERSION = 1


class SolverFailure(Exception):
    """A relaxation blew up while labeling a parameter point."""


class BranchExhausted(Exception):
    """Rejection sampling hit its draw cap before filling every branch."""

    def __init__(self, message: str, manifest: dict):
        super().__init__(message)
        self.manifest = manifest


@dataclass(frozen=True)
class ParamPoint:
    eps: float
    alpha: float

    def validate(self, domain=DEFAULT_DOMAIN):
        (e0, e1), (a0, a1) = domain
        if not (e0 <= self.eps <= e1 and a0 <= self.alpha <= a1):
            raise ValueError(f"({self.eps}, {self.alpha}) outside the domain")


def pick_label(energies: dict[StateKind, float]) -> StateKind:
    """Argmin over the five ordered totals and the liquid energy.

    Ties within TIE_TOL are broken by the fixed order QC, C6, LQ, T6, Lam, Lq.
    """
    best = min(energies.values())
    for state in STATE_ORDER:
        if state in energies and energies[state] <= best + TIE_TOL:
            return state
    raise ValueError("no finite energies to compare")


def full_order_phase(mu: ParamPoint, spec: LatticeSpec, cfg: SolverConfig,
                     c_pen: float = 1.0,
                     domain=DEFAULT_DOMAIN,
                     ) -> tuple[StateKind, dict[StateKind, EnergyBreakdown]]:
    """Relax the five ordered seeds at mu and return (label, energies)."""
    mu.validate(domain)
    p = ModelParams(eps=mu.eps, alpha=mu.alpha, c_pen=c_pen)
    try:
        results = relax_batch([(s, p) for s in ORDERED_STATES], cfg, spec)
    except NonFiniteError as exc:
        raise SolverFailure(f"relaxation blew up at {mu}") from exc
    energies = {s: r.energy for s, r in zip(ORDERED_STATES, results)}
    totals = {s: e.total for s, e in energies.items()}
    _, liquid = liquid_equilibrium(p)
    totals[StateKind.Lq] = liquid
    return pick_label(totals), energies


def add_noise(grid: np.ndarray, level: float, seed) -> np.ndarray:
    """Additive white noise scaled to level * std(grid) per node."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    grid = np.asarray(grid, dtype=float)
    if level == 0:
        return grid.copy()
    scale = level * float(np.std(grid))
    rng = np.random.default_rng(seed)
    return grid + scale * rng.standard_normal(grid.shape)


# ---------------------------------------------------------------------------
# Dataset generation

def _draw_mu(seed: int, draw: int, domain) -> ParamPoint:
    rng = np.random.default_rng([seed, draw])
    (e0, e1), (a0, a1) = domain
    return ParamPoint(eps=float(rng.uniform(e0, e1)),
                      alpha=float(rng.uniform(a0, a1)))


def _label_batch(mus: list[ParamPoint], spec, cfg, c_pen):
    """Relax all five states for every mu in one batched solve."""
    jobs = []
    for mu in mus:
        p = ModelParams(eps=mu.eps, alpha=mu.alpha, c_pen=c_pen)
        jobs.extend((s, p) for s in ORDERED_STATES)
    results = relax_batch(jobs, cfg, spec)
    out = []
    for i, mu in enumerate(mus):
        chunk = results[5 * i:5 * i + 5]
        energies = {s: r.energy for s, r in zip(ORDERED_STATES, chunk)}
        totals = {s: e.total for s, e in energies.items()}
        p = ModelParams(eps=mu.eps, alpha=mu.alpha, c_pen=c_pen)
        totals[StateKind.Lq] = liquid_equilibrium(p)[1]
        out.append((pick_label(totals), energies,
                    {s: r.field for s, r in zip(ORDERED_STATES, chunk)}))
    return out


def generate_dataset(out_dir, spec: LatticeSpec, grid: GridSpec,
                     cfg: SolverConfig, n_per_branch: int, r_t: float,
                     seed: int, c_pen: float = 1.0, domain=DEFAULT_DOMAIN,
                     chunk_size: int = 16, store_snapshots: bool = True,
                     patience: int | None = None) -> dict:
    """Rejection-sample uniform mu until every branch holds n_per_branch samples.

    Every accepted sample stores all five relaxed snapshots plus physical phi
    and G grids, its energies, and its label.  Raises BranchExhausted (with
    the partial manifest attached) if the draw cap is reached first, or, when
    patience is set, once that many consecutive draws accept nothing into any
    unfilled branch (a branch with an empty stability region would otherwise
    churn through the whole cap).
    """
    if n_per_branch < 1:
        raise ValueError("n_per_branch must be positive")
    if not 0 < r_t < 1:
        raise ValueError("r_t must lie strictly between 0 and 1")
    out_dir = Path(out_dir)
    (out_dir / "fields").mkdir(parents=True, exist_ok=True)

    counts = {s: 0 for s in STATE_ORDER}
    samples = []
    cap = DRAW_CAP_FACTOR * 6 * n_per_branch
    draw = 0
    drought = 0
    exhausted = False
    while any(c < n_per_branch for c in counts.values()) and not exhausted:
        if patience is not None and drought >= patience:
            exhausted = True
            break
        todo = []
        while len(todo) < chunk_size and draw < cap:
            todo.append((draw, _draw_mu(seed, draw, domain)))
            draw += 1
        if not todo:
            exhausted = True
            break
        labeled = _label_batch([mu for _, mu in todo], spec, cfg, c_pen)
        for (draw_idx, mu), (label, energies, fields) in zip(todo, labeled):
            if counts[label] >= n_per_branch:
                drought += 1
                continue
            counts[label] += 1
            drought = 0
            sample_id = f"s{draw_idx:06d}"
            files = {}
            for state, f in fields.items():
                base = f"fields/{sample_id}_{state.value}"
                p = ModelParams(eps=mu.eps, alpha=mu.alpha, c_pen=c_pen)
                phi = reconstruct_physical(f, grid)
                g = reconstruct_gradient_term(f, grid, p)
                fileio.write_grid(out_dir / f"{base}_phi.lppg", phi, grid)
                fileio.write_grid(out_dir / f"{base}_g.lppg", g, grid)
                entry = {"phi_grid": f"{base}_phi.lppg",
                         "g_grid": f"{base}_g.lppg"}
                if store_snapshots:
                    fileio.write_snapshot(out_dir / f"{base}.lpsf", f)
                    entry["snapshot"] = f"{base}.lpsf"
                files[state.value] = entry
            samples.append({
                "id": sample_id,
                "eps": mu.eps,
                "alpha": mu.alpha,
                "label": label.value,
                "energies": {s.value: {"e1": e.e1, "e2": e.e2,
                                       "total": e.total}
                             for s, e in energies.items()},
                "files": files,
            })

    _assign_splits(samples, r_t, seed)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "seed": seed,
        "n_per_branch": n_per_branch,
        "r_t": r_t,
        "domain": [list(domain[0]), list(domain[1])],
        "c_pen": c_pen,
        "solver": {"n_h": spec.n_h, "dt": cfg.dt, "max_steps": cfg.max_steps,
                   "conv_tol": cfg.conv_tol},
        "grid": {"n_g": grid.n_g, "box_multiplier": grid.box_multiplier},
        "branch_counts": {s.value: counts[s] for s in STATE_ORDER},
        "samples": samples,
    }
    fileio.write_json(out_dir / "manifest.json", manifest)
    if any(c < n_per_branch for c in counts.values()):
        short = {s.value: c for s, c in counts.items() if c < n_per_branch}
        raise BranchExhausted(
            f"stopped after {draw} draws (cap {cap}) with unfilled "
            f"branches {short}", manifest)
    return manifest


def _assign_splits(samples: list[dict], r_t: float, seed: int):
    """Per-branch train/test split with round(r_t * n) training samples."""
    by_label: dict[str, list[dict]] = {}
    for s in samples:
        by_label.setdefault(s["label"], []).append(s)
    branch_index = {s.value: k for k, s in enumerate(STATE_ORDER)}
    for label, group in sorted(by_label.items()):
        rng = np.random.default_rng([seed, 1000 + branch_index[label]])
        order = rng.permutation(len(group))
        n_train = round(r_t * len(group))
        for pos, j in enumerate(order):
            group[j]["split"] = "train" if pos < n_train else "test"


def load_manifest(path) -> dict:
    manifest = fileio.read_json(Path(path) / "manifest.json"
                                if Path(path).is_dir() else path)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise fileio.FormatError("unsupported manifest schema version")
    return manifest


# ---------------------------------------------------------------------------
# Phase diagram assembly

@dataclass
class PhaseDiagram:
    eps_values: np.ndarray
    alpha_values: np.ndarray
    labels: list[list[str]]          # labels[i][j] at (eps_i, alpha_j)
    energies: list[list[dict | None]]
    boundary_points: list[tuple[float, float]]
    refined: list[dict]


def assemble_phase_diagram(eps_values, alpha_values, label_source,
                           refine: bool = False) -> PhaseDiagram:
    """Evaluate a label source on a uniform grid, optionally refining edges.

    label_source(mu) returns (StateKind, energies-or-None); failures mark the
    point "Unknown".  With refine=True, midpoints of grid edges whose
    endpoints disagree are evaluated once more and reported separately.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    alpha_values = np.asarray(alpha_values, dtype=float)

    def query(mu):
        try:
            label, energies = label_source(mu)
            return label.value, energies
        except SolverFailure:
            return "Unknown", None

    labels, energies = [], []
    for e in eps_values:
        row_l, row_e = [], []
        for a in alpha_values:
            l, en = query(ParamPoint(float(e), float(a)))
            row_l.append(l)
            row_e.append(en)
        labels.append(row_l)
        energies.append(row_e)

    boundary = []
    for i in range(len(eps_values)):
        for j in range(len(alpha_values)):
            if i + 1 < len(eps_values) and labels[i][j] != labels[i + 1][j]:
                boundary.append((0.5 * (eps_values[i] + eps_values[i + 1]),
                                 float(alpha_values[j])))
            if j + 1 < len(alpha_values) and labels[i][j] != labels[i][j + 1]:
                boundary.append((float(eps_values[i]),
                                 0.5 * (alpha_values[j] + alpha_values[j + 1])))

    refined = []
    if refine:
        for e, a in boundary:
            l, _ = query(ParamPoint(e, a))
            refined.append({"eps": e, "alpha": a, "label": l})

    return PhaseDiagram(eps_values, alpha_values, labels, energies,
                        boundary, refined)
