"""Supervised phase classification from 7-dimensional energy features.

Features are [eps, alpha, E_QC, E_C6, E_LQ, E_T6, E_Lam] (energy density
totals in the fixed state order).  The network is a dense [7, 40, 40, 40, 6]
stack with tanh hidden activations and a softmax head trained with
cross-entropy; the predicted phase is the argmax, ties broken by the fixed
state order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fileio
from .model import ORDERED_STATES, STATE_ORDER, StateKind
from .nn import Adam, Dense, MLP, cross_entropy, grad_flat, softmax, zero_grads

LAYER_WIDTHS = [7, 40, 40, 40, 6]


class Diverged(Exception):
    pass


def assemble_features(mu, energies) -> np.ndarray:
    """7-vector [eps, alpha, five ordered-state totals]."""
    if isinstance(energies, dict):
        totals = [energies[s] for s in ORDERED_STATES]
    else:
        totals = list(energies)
    if len(totals) != 5:
        raise ValueError(f"expected 5 state energies, got {len(totals)}")
    if hasattr(mu, "eps"):
        eps, alpha = mu.eps, mu.alpha
    else:
        eps, alpha = mu
    vec = np.array([eps, alpha, *totals], dtype=float)
    if not np.all(np.isfinite(vec)):
        raise ValueError("non-finite feature values")
    return vec


def one_hot(state: StateKind) -> np.ndarray:
    out = np.zeros(6)
    out[STATE_ORDER.index(state)] = 1.0
    return out


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 3000
    learning_rate: float = 1e-3
    seed: int = 0


class ClassifierNet:
    """[7,40,40,40,6] tanh network with z-score feature normalization."""

    def __init__(self, cfg: ClassifierConfig = ClassifierConfig()):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 99])
        self.mlp = MLP(LAYER_WIDTHS, rng, activation="tanh")
        self.feat_mean = np.zeros(7)
        self.feat_std = np.ones(7)

    def _normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feat_mean) / self.feat_std

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self.mlp.forward(self._normalize(np.atleast_2d(features)))

    def classify(self, feature: np.ndarray) -> tuple[np.ndarray, StateKind]:
        """(probabilities over the six phases, argmax state)."""
        p = softmax(self.logits(feature))[0]
        return p, STATE_ORDER[int(np.argmax(p))]

    def train(self, features: np.ndarray, labels: list[StateKind]
              ) -> np.ndarray:
        """Full-batch Adam on mean cross-entropy; returns the loss history."""
        features = np.asarray(features, dtype=float)
        targets = np.stack([one_hot(s) for s in labels])
        if len({s for s in labels}) < 2:
            raise ValueError("training needs at least 2 classes")
        self.feat_mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.feat_std = np.where(std < 1e-12, 1.0, std)
        x = self._normalize(features)
        opt = Adam(self.mlp, lr=self.cfg.learning_rate)
        history = np.zeros(self.cfg.epochs)
        for epoch in range(self.cfg.epochs):
            zero_grads(self.mlp)
            logits = self.mlp.forward(x)
            loss, dlogits = cross_entropy(logits, targets)
            if not np.isfinite(loss):
                raise Diverged(f"loss became non-finite at epoch {epoch}")
            self.mlp.backward(dlogits)
            opt.step()
            history[epoch] = loss
        return history

    def evaluate_accuracy(self, features: np.ndarray,
                          labels: list[StateKind]
                          ) -> tuple[float, np.ndarray]:
        """(fraction of argmax matches, 6x6 confusion matrix rows=true)."""
        features = np.asarray(features, dtype=float)
        confusion = np.zeros((6, 6), dtype=np.int64)
        hits = 0
        for feat, true in zip(features, labels):
            _, pred = self.classify(feat)
            ti = STATE_ORDER.index(true)
            pi = STATE_ORDER.index(pred)
            confusion[ti, pi] += 1
            hits += ti == pi
        return hits / max(len(labels), 1), confusion

    # -- persistence -------------------------------------------------------

    def save(self, path):
        header = {
            "widths": LAYER_WIDTHS,
            "config": {"epochs": self.cfg.epochs,
                       "learning_rate": self.cfg.learning_rate,
                       "seed": self.cfg.seed},
        }
        tensors = {"feat_mean": self.feat_mean, "feat_std": self.feat_std}
        for k, layer in enumerate(self.mlp.sublayers()):
            for name in sorted(layer.params):
                tensors[f"layer{k}.{name}"] = layer.params[name]
        header["tensor_shapes"] = {n: list(t.shape) for n, t in tensors.items()}
        fileio.write_model(path, b"LPCL", header, tensors)

    @classmethod
    def load(cls, path) -> "ClassifierNet":
        header, tensors = fileio.read_model(path, b"LPCL")
        if header["widths"] != LAYER_WIDTHS:
            raise fileio.FormatError(f"{path}: unexpected layer widths")
        net = cls(ClassifierConfig(**header["config"]))
        for k, layer in enumerate(net.mlp.sublayers()):
            for name in sorted(layer.params):
                key = f"layer{k}.{name}"
                expected = tuple(header["tensor_shapes"][key])
                if key not in tensors or tensors[key].shape != expected:
                    raise fileio.FormatError(f"{path}: bad tensor {key}")
                layer.params[name][...] = tensors[key]
        net.feat_mean = tensors["feat_mean"]
        net.feat_std = tensors["feat_std"]
        return net
