"""Command-line surface: solve, dataset, training, prediction, diagrams.

Every command echoes its resolved configuration so a run can be reproduced
from its log alone; all randomness flows from the seeds in the config.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click
import numpy as np
import scipy.fft
from PIL import Image

from . import fileio
from .classifier import ClassifierNet, assemble_features
from .config import RunConfig, load_config
from .dataset import (ParamPoint, PhaseDiagram, add_noise,
                      assemble_phase_diagram, BranchExhausted,
                      full_order_phase, generate_dataset, load_manifest)
from .digca import DiGCANet, TrainConfig
from .model import (ModelParams, ORDERED_STATES, STATE_ORDER, StateKind,
                    bulk_density)
from .solver import (SolverConfig, reconstruct_gradient_term,
                     reconstruct_physical, relax)

#: Fixed phase-diagram palette (documented in the README).
PALETTE = {
    "QC": (230, 60, 60),
    "C6": (60, 120, 230),
    "LQ": (60, 200, 120),
    "T6": (240, 180, 40),
    "Lam": (160, 90, 200),
    "Lq": (230, 230, 230),
    "Unknown": (0, 0, 0),
}


class MissingArtifact(click.ClickException):
    pass


def _echo_config(cfg: RunConfig):
    click.echo("resolved config: " + json.dumps(cfg.to_dict(), sort_keys=True))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing {what}: {path}")
    return path


def _state_choice(value: str) -> StateKind:
    try:
        return StateKind(value)
    except ValueError:
        raise click.BadParameter(
            f"unknown state {value!r}; choose from "
            f"{[s.value for s in STATE_ORDER]}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON config file.")
@click.option("--seed", type=int, default=None,
              help="Override every seed in the config.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Override the output directory.")
@click.option("--threads", type=int, default=1,
              help="FFT worker threads (results are thread-count independent).")
@click.pass_context
def main(ctx, config_path, seed, out_dir, threads):
    """Lifshitz-Petrich solver, surrogate training, and phase diagrams."""
    overrides = {}
    if seed is not None:
        overrides.update({"dataset.seed": seed, "digca.seed": seed,
                          "classifier.seed": seed})
    if out_dir is not None:
        overrides["output_dir"] = out_dir
    try:
        cfg = load_config(config_path, overrides)
    except Exception as exc:
        raise click.ClickException(str(exc))
    if threads < 1:
        raise click.BadParameter("--threads must be positive")
    ctx.with_resource(scipy.fft.set_workers(threads))
    ctx.obj = {"cfg": cfg, "threads": threads}


def _out(ctx) -> Path:
    out = Path(ctx.obj["cfg"].output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


@main.command()
@click.argument("state")
@click.option("--eps", type=float, required=True)
@click.option("--alpha", type=float, required=True)
@click.pass_context
def solve(ctx, state, eps, alpha):
    """Relax one seeded STATE at (eps, alpha) and write its artifacts."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    kind = _state_choice(state)
    if kind is StateKind.Lq:
        raise click.ClickException("the liquid state has no relaxation")
    out = _out(ctx)
    p = ModelParams(eps=eps, alpha=alpha)
    spec = cfg.solver.lattice()
    grid = cfg.grid.grid()
    try:
        result = relax(kind, p, cfg.solver.solver(), spec)
    except Exception as exc:
        raise click.ClickException(f"solver failure: {exc}")
    stem = f"{kind.value}_{eps:g}_{alpha:g}"
    fileio.write_snapshot(out / f"{stem}.lpsf", result.field)
    fileio.write_grid(out / f"{stem}_phi.lppg",
                      reconstruct_physical(result.field, grid), grid)
    fileio.write_grid(out / f"{stem}_g.lppg",
                      reconstruct_gradient_term(result.field, grid, p), grid)
    report = (f"state {kind.value}\neps {fileio.format_float(eps)}\n"
              f"alpha {fileio.format_float(alpha)}\n"
              f"e1 {fileio.format_float(result.energy.e1)}\n"
              f"e2 {fileio.format_float(result.energy.e2)}\n"
              f"total {fileio.format_float(result.energy.total)}\n"
              f"steps {result.steps_taken}\n"
              f"converged {result.converged}\n")
    (out / f"{stem}_energy.txt").write_text(report, encoding="utf-8")
    click.echo(report.rstrip())


@main.command()
@click.pass_context
def dataset(ctx):
    """Generate the labeled multi-state dataset."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    ds = cfg.dataset
    try:
        manifest = generate_dataset(
            out, cfg.solver.lattice(), cfg.grid.grid(), cfg.solver.solver(),
            n_per_branch=ds.n_per_branch, r_t=ds.r_t, seed=ds.seed,
            domain=cfg.domain.bounds(), chunk_size=ds.chunk_size,
            store_snapshots=ds.store_snapshots, patience=ds.patience)
    except BranchExhausted as exc:
        click.echo(f"warning: {exc}", err=True)
        manifest = exc.manifest
    click.echo("branch counts: " + json.dumps(manifest["branch_counts"]))


def _training_arrays(manifest: dict, root: Path, state: StateKind,
                     derivative_weight: float, split: str):
    """(mu, features) arrays of one state's solutions for one split."""
    mus, feats = [], []
    for sample in manifest["samples"]:
        if sample["split"] != split:
            continue
        entry = sample["files"][state.value]
        phi, _ = fileio.read_grid(root / entry["phi_grid"])
        channels = [phi.ravel()]
        if derivative_weight > 0:
            g, _ = fileio.read_grid(root / entry["g_grid"])
            channels.append(derivative_weight * g.ravel())
        mus.append([sample["eps"], sample["alpha"]])
        feats.append(np.stack(channels, axis=-1))
    if not mus:
        raise MissingArtifact(f"no '{split}' samples for state {state.value}")
    return np.array(mus), np.stack(feats)


@main.command("train-ae")
@click.option("--data", "data_dir", type=click.Path(exists=True),
              required=True, help="Dataset directory with manifest.json.")
@click.option("--state", "states", multiple=True,
              help="States to train (default: all five).")
@click.pass_context
def train_ae(ctx, data_dir, states):
    """Train the per-state autoencoder subnets."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    root = Path(data_dir)
    manifest = load_manifest(_require(root / "manifest.json", "dataset manifest"))
    grid = cfg.grid.grid()
    if grid.n_g != manifest["grid"]["n_g"]:
        raise click.ClickException(
            f"config n_g={grid.n_g} does not match dataset "
            f"n_g={manifest['grid']['n_g']}")
    todo = [_state_choice(s) for s in states] if states else list(ORDERED_STATES)
    for state in todo:
        mu, feats = _training_arrays(manifest, root, state,
                                     cfg.digca.derivative_weight, "train")
        net = DiGCANet(state, grid, cfg.digca,
                       mu_bounds=cfg.domain.bounds())
        t0 = time.perf_counter()
        history = net.train(mu, feats)
        net.save(out / f"digca_{state.value}.dgca")
        rows = ["epoch,total,L_s,L_v"]
        rows += [f"{i},{fileio.format_float(h[0])},{fileio.format_float(h[1])},"
                 f"{fileio.format_float(h[2])}" for i, h in enumerate(history)]
        (out / f"digca_{state.value}_loss.csv").write_text(
            "\n".join(rows) + "\n", encoding="utf-8")
        click.echo(f"{state.value}: final loss {history[-1, 0]:.3e} "
                   f"({time.perf_counter() - t0:.1f}s)")


def _full_order_features(manifest: dict, split: str | None):
    feats, labels = [], []
    for sample in manifest["samples"]:
        if split and sample["split"] != split:
            continue
        totals = [sample["energies"][s.value]["total"] for s in ORDERED_STATES]
        feats.append(assemble_features((sample["eps"], sample["alpha"]),
                                       totals))
        labels.append(StateKind(sample["label"]))
    return np.array(feats), labels


@main.command("train-classifier")
@click.option("--data", "data_dir", type=click.Path(exists=True),
              required=True)
@click.pass_context
def train_classifier(ctx, data_dir):
    """Train the phase classifier on full-order energy features."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    root = Path(data_dir)
    manifest = load_manifest(_require(root / "manifest.json", "dataset manifest"))
    train_x, train_y = _full_order_features(manifest, "train")
    test_x, test_y = _full_order_features(manifest, "test")
    net = ClassifierNet(cfg.classifier)
    net.train(train_x, train_y)
    net.save(out / "classifier.lpcl")
    acc, confusion = net.evaluate_accuracy(test_x, test_y)
    click.echo(f"held-out accuracy: {acc:.4f}")
    click.echo("confusion (rows=true, order QC,C6,LQ,T6,Lam,Lq):")
    for row in confusion:
        click.echo("  " + " ".join(f"{v:4d}" for v in row))


def _load_subnets(models_dir: Path) -> dict[StateKind, DiGCANet]:
    nets = {}
    for state in ORDERED_STATES:
        path = _require(models_dir / f"digca_{state.value}.dgca",
                        f"autoencoder model for {state.value}")
        nets[state] = DiGCANet.load(path)
    return nets


def _rom_label_source(nets, classifier: ClassifierNet, c_pen: float = 1.0):
    def source(mu: ParamPoint):
        p = ModelParams(eps=mu.eps, alpha=mu.alpha, c_pen=c_pen)
        totals = {}
        for state, net in nets.items():
            e1, e2 = net.rom_energy([mu.eps, mu.alpha], p)
            totals[state] = e1 + e2
        feature = assemble_features(mu, {s: totals[s] for s in ORDERED_STATES})
        _, label = classifier.classify(feature)
        return label, {s.value: totals[s] for s in ORDERED_STATES}
    return source


@main.command()
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--state", required=True)
@click.option("--eps", type=float, required=True)
@click.option("--alpha", type=float, required=True)
@click.pass_context
def predict(ctx, models_dir, state, eps, alpha):
    """Predict phi and G grids plus surrogate energies at one point."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    kind = _state_choice(state)
    net = DiGCANet.load(_require(
        Path(models_dir) / f"digca_{kind.value}.dgca",
        f"autoencoder model for {kind.value}"))
    p = ModelParams(eps=eps, alpha=alpha)
    fields = net.predict([eps, alpha])
    grid = net.grid
    stem = f"predict_{kind.value}_{eps:g}_{alpha:g}"
    fileio.write_grid(out / f"{stem}_phi.lppg",
                      fields[:, 0].reshape(grid.n_g, grid.n_g), grid)
    if net.channels == 2:
        g_vals = (fields[:, 1] / net.cfg.derivative_weight)
        fileio.write_grid(out / f"{stem}_g.lppg",
                          g_vals.reshape(grid.n_g, grid.n_g), grid)
    e1, e2 = net.rom_energy([eps, alpha], p)
    report = (f"e1 {fileio.format_float(e1)}\ne2 {fileio.format_float(e2)}\n"
              f"total {fileio.format_float(e1 + e2)}\n")
    (out / f"{stem}_energy.txt").write_text(report, encoding="utf-8")
    click.echo(report.rstrip())


def _diagram_csv(diagram: PhaseDiagram, with_energies: bool) -> str:
    rows = ["eps,alpha,label,E_QC,E_C6,E_LQ,E_T6,E_Lam"]
    for i, e in enumerate(diagram.eps_values):
        for j, a in enumerate(diagram.alpha_values):
            energies = diagram.energies[i][j]
            if with_energies and energies is not None:
                def total(s):
                    entry = energies[s.value]
                    if isinstance(entry, dict):
                        return entry["e1"] + entry["e2"]
                    return float(entry)
                tail = ",".join(fileio.format_float(total(s))
                                for s in ORDERED_STATES)
            else:
                tail = ",,,,"
            rows.append(f"{fileio.format_float(float(e))},"
                        f"{fileio.format_float(float(a))},"
                        f"{diagram.labels[i][j]},{tail}")
    return "\n".join(rows) + "\n"


def _diagram_image(diagram: PhaseDiagram, path: Path, upscale: int = 8):
    n_e = len(diagram.eps_values)
    n_a = len(diagram.alpha_values)
    img = Image.new("RGB", (n_e, n_a))
    for i in range(n_e):
        for j in range(n_a):
            # alpha increases upward in the image
            img.putpixel((i, n_a - 1 - j), PALETTE[diagram.labels[i][j]])
    img = img.resize((n_e * upscale, n_a * upscale), Image.NEAREST)
    img.save(path)


@main.command("phase-diagram")
@click.option("--source", type=click.Choice(["full", "rom"]), default="full")
@click.option("--models", "models_dir", type=click.Path(), default=None)
@click.option("--n-eps", type=int, default=11)
@click.option("--n-alpha", type=int, default=11)
@click.option("--refine", is_flag=True, default=False)
@click.pass_context
def phase_diagram(ctx, source, models_dir, n_eps, n_alpha, refine):
    """Assemble a phase diagram from the full-order solver or the surrogate."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    (e0, e1), (a0, a1) = cfg.domain.bounds()
    eps_values = np.linspace(e0, e1, n_eps)
    alpha_values = np.linspace(a0, a1, n_alpha)
    spec = cfg.solver.lattice()
    solver_cfg = cfg.solver.solver()

    if source == "full":
        def label_source(mu):
            label, energies = full_order_phase(mu, spec, solver_cfg,
                                              domain=cfg.domain.bounds())
            return label, {s.value: {"e1": e.e1, "e2": e.e2}
                           for s, e in energies.items()}
    else:
        if models_dir is None:
            raise MissingArtifact("--models is required for --source rom")
        models = Path(models_dir)
        nets = _load_subnets(models)
        classifier = ClassifierNet.load(_require(models / "classifier.lpcl",
                                                 "classifier model"))
        label_source = _rom_label_source(nets, classifier)

    diagram = assemble_phase_diagram(eps_values, alpha_values, label_source,
                                     refine=refine)
    (out / f"phase_diagram_{source}.csv").write_text(
        _diagram_csv(diagram, with_energies=True), encoding="utf-8")
    _diagram_image(diagram, out / f"phase_diagram_{source}.png")
    if refine:
        fileio.write_json(out / f"phase_diagram_{source}_refined.json",
                          {"points": diagram.refined})
    click.echo(f"wrote phase_diagram_{source}.csv/.png "
               f"({n_eps}x{n_alpha} points, "
               f"{len(diagram.boundary_points)} boundary edges)")


@main.command()
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--n-points", type=int, default=5)
@click.pass_context
def bench(ctx, models_dir, n_points):
    """Wall-time comparison: full-order labeling vs surrogate per point."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    models = Path(models_dir)
    nets = _load_subnets(models)
    classifier = ClassifierNet.load(_require(models / "classifier.lpcl",
                                             "classifier model"))
    rom_source = _rom_label_source(nets, classifier)
    spec = cfg.solver.lattice()
    solver_cfg = cfg.solver.solver()
    rng = np.random.default_rng([cfg.dataset.seed, 17])
    (e0, e1), (a0, a1) = cfg.domain.bounds()

    rows = ["eps,alpha,t_full,t_rom,ratio,cum_full,cum_rom"]
    cum_full = cum_rom = 0.0
    for _ in range(n_points):
        mu = ParamPoint(float(rng.uniform(e0, e1)), float(rng.uniform(a0, a1)))
        t0 = time.perf_counter()
        full_order_phase(mu, spec, solver_cfg, domain=cfg.domain.bounds())
        t_full = time.perf_counter() - t0
        t0 = time.perf_counter()
        rom_source(mu)
        t_rom = time.perf_counter() - t0
        cum_full += t_full
        cum_rom += t_rom
        rows.append(f"{mu.eps!r},{mu.alpha!r},{t_full!r},{t_rom!r},"
                    f"{t_full / t_rom!r},{cum_full!r},{cum_rom!r}")
    (out / "bench.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    click.echo(f"marginal speedup over {n_points} points: "
               f"{cum_full / cum_rom:.1f}x")


@main.command("noise-study")
@click.option("--data", "data_dir", type=click.Path(exists=True),
              required=True)
@click.pass_context
def noise_study(ctx, data_dir):
    """Held-out classification accuracy under feature-field noise."""
    cfg: RunConfig = ctx.obj["cfg"]
    _echo_config(cfg)
    out = _out(ctx)
    root = Path(data_dir)
    manifest = load_manifest(_require(root / "manifest.json", "dataset manifest"))
    levels = [0.0] + list(cfg.dataset.noise_levels)
    accuracies = noise_robustness(manifest, root, cfg.classifier, levels,
                                  seed=cfg.dataset.seed)
    rows = ["noise_level,accuracy"]
    rows += [f"{fileio.format_float(l)},{fileio.format_float(a)}"
             for l, a in zip(levels, accuracies)]
    (out / "noise_study.csv").write_text("\n".join(rows) + "\n",
                                         encoding="utf-8")
    for level, acc in zip(levels, accuracies):
        click.echo(f"noise {level:5.2%}: accuracy {acc:.4f}")


def _quadrature_features(manifest: dict, root: Path, split: str,
                         noise_level: float, seed: int):
    """Features with energies recomputed by grid quadrature, optionally noisy."""
    feats, labels = [], []
    for k, sample in enumerate(manifest["samples"]):
        if sample["split"] != split:
            continue
        p = ModelParams(eps=sample["eps"], alpha=sample["alpha"])
        totals = []
        for s in ORDERED_STATES:
            entry = sample["files"][s.value]
            phi, _ = fileio.read_grid(root / entry["phi_grid"])
            g, _ = fileio.read_grid(root / entry["g_grid"])
            if noise_level > 0:
                phi = add_noise(phi, noise_level, [seed, k, 2])
                g = add_noise(g, noise_level, [seed, k, 3])
            e1 = 0.5 * p.c_pen * float(np.mean(g**2))
            e2 = float(np.mean(bulk_density(phi, p)))
            totals.append(e1 + e2)
        feats.append(assemble_features((sample["eps"], sample["alpha"]),
                                       totals))
        labels.append(StateKind(sample["label"]))
    return np.array(feats), labels


def noise_robustness(manifest: dict, root: Path, classifier_cfg,
                     levels: list[float], seed: int) -> list[float]:
    """Train once on clean quadrature features, evaluate under each level."""
    train_x, train_y = _quadrature_features(manifest, root, "train", 0.0, seed)
    net = ClassifierNet(classifier_cfg)
    net.train(train_x, train_y)
    out = []
    for level in levels:
        test_x, test_y = _quadrature_features(manifest, root, "test", level,
                                              seed)
        acc, _ = net.evaluate_accuracy(test_x, test_y)
        out.append(acc)
    return out


if __name__ == "__main__":
    main()
