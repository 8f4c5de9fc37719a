"""Lifshitz-Petrich phase diagrams: spectral solver, surrogate, classifier."""

from .model import (EnergyBreakdown, ModelParams, ORDERED_STATES, STATE_ORDER,
                    StateKind)
from .lattice import LatticeSpec, build_tables, projection_matrix
from .solver import (GridSpec, RelaxationResult, SolverConfig, SolverError,
                     initialize, relax, relax_batch, reconstruct_physical,
                     reconstruct_gradient_term)
from .dataset import (ParamPoint, PhaseDiagram, assemble_phase_diagram,
                      full_order_phase, generate_dataset, load_manifest,
                      pick_label)
from .digca import DiGCANet, TrainConfig
from .classifier import ClassifierConfig, ClassifierNet, assemble_features
from .config import RunConfig, load_config

__all__ = [
    "EnergyBreakdown", "ModelParams", "ORDERED_STATES", "STATE_ORDER",
    "StateKind", "LatticeSpec", "build_tables", "projection_matrix",
    "GridSpec", "RelaxationResult", "SolverConfig", "SolverError",
    "initialize", "relax", "relax_batch", "reconstruct_physical",
    "reconstruct_gradient_term", "ParamPoint", "PhaseDiagram",
    "assemble_phase_diagram", "full_order_phase", "generate_dataset",
    "load_manifest", "pick_label", "DiGCANet", "TrainConfig",
    "ClassifierConfig", "ClassifierNet", "assemble_features",
    "RunConfig", "load_config",
]
