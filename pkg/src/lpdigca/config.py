"""Run configuration: one JSON document with full defaulting.

Unknown keys are rejected so a stored config is always an exact record of a
run.  CLI flags override individual values after the file is parsed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import fileio
from .classifier import ClassifierConfig
from .digca import TrainConfig
from .lattice import LatticeSpec
from .solver import GridSpec, SolverConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    n_per_branch: int = 40
    r_t: float = 0.75
    seed: int = 0
    noise_levels: tuple = (0.01, 0.05, 0.10)
    chunk_size: int = 16
    store_snapshots: bool = True
    patience: int | None = None


@dataclass(frozen=True)
class SolverSection:
    n_h: int = 8
    dt: float = 0.1
    max_steps: int = 20000
    conv_tol: float = 1e-9
    dealias: bool = False
    zero_mean: bool = False

    def lattice(self) -> LatticeSpec:
        return LatticeSpec(n_h=self.n_h)

    def solver(self, energy_every: int = 0) -> SolverConfig:
        return SolverConfig(dt=self.dt, max_steps=self.max_steps,
                            conv_tol=self.conv_tol, dealias=self.dealias,
                            zero_mean=self.zero_mean,
                            energy_every=energy_every)


@dataclass(frozen=True)
class GridSection:
    n_g: int = 64
    box_multiplier: float = 30.0

    def grid(self) -> GridSpec:
        return GridSpec(n_g=self.n_g, box_multiplier=self.box_multiplier)


@dataclass(frozen=True)
class DomainSection:
    eps: tuple = (-0.01, 0.05)
    alpha: tuple = (0.0, 1.0)

    def bounds(self):
        return (tuple(self.eps), tuple(self.alpha))


@dataclass(frozen=True)
class RunConfig:
    solver: SolverSection = field(default_factory=SolverSection)
    grid: GridSection = field(default_factory=GridSection)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    digca: TrainConfig = field(default_factory=TrainConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    domain: DomainSection = field(default_factory=DomainSection)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "solver": SolverSection,
    "grid": GridSection,
    "dataset": DatasetConfig,
    "digca": TrainConfig,
    "classifier": ClassifierConfig,
    "domain": DomainSection,
}


def _build_section(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in section '{context}'")
    coerced = {k: tuple(v) if isinstance(v, list) else v
               for k, v in data.items()}
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{context}': {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse a JSON config file (all keys optional) and apply overrides.

    overrides maps dotted paths like "dataset.seed" to values.
    """
    data = fileio.read_json(path) if path else {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")

    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section '{name}' must be a JSON object")
        sections[name] = _build_section(cls, raw, name)
    cfg = RunConfig(output_dir=data.get("output_dir", "out"), **sections)

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            if section != "output_dir":
                raise ConfigError(f"cannot override '{dotted}'")
            cfg = replace(cfg, output_dir=value)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"cannot override unknown section '{section}'")
        current = getattr(cfg, section)
        if key not in {f.name for f in fields(current)}:
            raise ConfigError(f"unknown key '{key}' in section '{section}'")
        cfg = replace(cfg, **{section: replace(current, **{key: value})})
    return cfg
