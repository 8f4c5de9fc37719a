"""Derivative-informed graph convolutional autoencoder for one ordered state.

Node features carry the solution field and (scaled by the derivative weight)
its ring-operator image.  The encoder is a stack of Gaussian-mixture graph
convolutions followed by a dense bottleneck; the decoder mirrors it with its
own weights.  A small sin-activated MLP maps (eps, alpha) to the latent
vector so that online prediction needs no solver call.  All gradients are
hand-written reverse mode and finite-difference validated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .graph import GridGraph, build_grid_graph
from .model import ModelParams, StateKind, bulk_density, spectral_symbol
from .nn import (Adam, Dense, Layer, MLP, SinActivation, sigmoid, softplus,
                 zero_grads)
from .solver import GridSpec


class ShapeMismatch(Exception):
    pass


class Diverged(Exception):
    pass


class MoNetConv(Layer):
    """Gaussian-mixture graph convolution with mean neighborhood aggregation.

    h_u' = act( 1/|N(u)| sum_{v in N(u)} sum_q w_q(e_uv) W_q h_v ), where each
    kernel weight is a Gaussian in the edge pseudo-coordinate with trainable
    mean and (softplus-positive) diagonal covariance.
    """

    def __init__(self, n_in: int, n_out: int, n_kernels: int,
                 rng: np.random.Generator, activation: str = "sin"):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.n_kernels = n_kernels
        scale = np.sqrt(6.0 / (n_in * n_kernels))
        self._register(
            W=rng.uniform(-scale, scale, size=(n_kernels, n_out, n_in)),
            mu=rng.uniform(-1.0, 1.0, size=(n_kernels, 2)),
            sraw=np.zeros((n_kernels, 2)),
        )
        if activation == "sin":
            self.act: Layer | None = SinActivation()
        elif activation == "linear":
            self.act = None
        else:
            raise ValueError(f"unsupported activation {activation!r}")
        self._cache = None

    def sublayers(self):
        return [self] + ([self.act] if self.act is not None else [])

    def kernel_weights(self, offsets: np.ndarray) -> np.ndarray:
        """(n_kernels, n_groups) Gaussian weights at the distinct offsets."""
        mu = self.params["mu"][:, None, :]
        var = softplus(self.params["sraw"])[:, None, :]
        d = offsets[None, :, :] - mu
        return np.exp(-0.5 * np.sum(d * d / var, axis=-1))

    def forward(self, graph: GridGraph, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(
                f"expected {self.n_in} input channels, got {x.shape[-1]}")
        W = self.params["W"]
        om = self.kernel_weights(graph.offsets)
        hw = np.einsum("qoi,bni->qbno", W, x)
        agg = np.zeros(x.shape[:-1] + (self.n_out,))
        for g in range(graph.offsets.shape[0]):
            m = np.tensordot(om[:, g], hw, axes=(0, 0))
            agg += graph.aggregate(g, m)
        acc = agg / graph.degree[None, :, None]
        self._cache = (graph, x, hw, om, acc)
        if self.act is not None:
            return self.act.forward(acc)
        return acc

    def backward(self, dy: np.ndarray) -> np.ndarray:
        graph, x, hw, om, acc = self._cache
        if self.act is not None:
            dy = self.act.backward(dy)
        dacc = dy / graph.degree[None, :, None]
        W = self.params["W"]
        var = softplus(self.params["sraw"])
        mu = self.params["mu"]
        dhw = np.zeros_like(hw)
        dom = np.zeros_like(om)
        for g in range(graph.offsets.shape[0]):
            dm = graph.aggregate_transpose(g, dacc)
            dom[:, g] = np.einsum("bno,qbno->q", dm, hw)
            dhw += om[:, g][:, None, None, None] * dm
        self.grads["W"] += np.einsum("qbno,bni->qoi", dhw, x)
        dx = np.einsum("qbno,qoi->bni", dhw, W)
        # Gaussian kernel parameter gradients via the per-group weights.
        d = graph.offsets[None, :, :] - mu[:, None, :]  # (Q, G, 2)
        common = (dom * om)[:, :, None]
        self.grads["mu"] += np.sum(common * d / var[:, None, :], axis=1)
        dvar = np.sum(common * 0.5 * d * d / var[:, None, :]**2, axis=1)
        self.grads["sraw"] += dvar * sigmoid(self.params["sraw"])
        return dx


@dataclass
class FeatureNorm:
    """Per-channel min-max map of node features onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureNorm":
        lo = features.min(axis=(0, 1))
        hi = features.max(axis=(0, 1))
        degenerate = hi - lo < 1e-300
        hi = np.where(degenerate, lo + 1.0, hi)
        return cls(lo=lo, hi=hi)

    def encode(self, features: np.ndarray) -> np.ndarray:
        return 2.0 * (features - self.lo) / (self.hi - self.lo) - 1.0

    def decode(self, normalized: np.ndarray) -> np.ndarray:
        return 0.5 * (normalized + 1.0) * (self.hi - self.lo) + self.lo


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int = 16
    n_kernels: int = 4
    n_conv_layers: int = 3
    hidden_channels: int = 8
    mlp_hidden: int = 50
    latent_weight: float = 1.0       # lambda: weight of the latent loss term
    derivative_weight: float = 1.0   # lambda_u: scale of the G feature channel
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("latent_dim", "n_kernels", "n_conv_layers",
                     "hidden_channels", "mlp_hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.latent_weight < 0 or self.derivative_weight < 0:
            raise ValueError("loss weights must be nonnegative")


class DiGCANet:
    """Per-state autoencoder + latent MLP with shared normalization constants.

    With derivative_weight > 0 the node features are [phi, lambda_u * G(phi)]
    (2 channels); with derivative_weight == 0 the net is the solution-only
    ablation carrying just [phi].
    """

    def __init__(self, state: StateKind, grid: GridSpec, cfg: TrainConfig,
                 mu_bounds=((-0.01, 0.05), (0.0, 1.0))):
        self.state = state
        self.grid = grid
        self.cfg = cfg
        self.mu_bounds = mu_bounds
        self.graph = build_grid_graph(grid)
        self.channels = 2 if cfg.derivative_weight > 0 else 1
        self.feature_norm: FeatureNorm | None = None

        rng = np.random.default_rng([cfg.seed, _state_tag(state)])
        ch = cfg.hidden_channels
        n_nodes = self.graph.n_nodes

        widths = [self.channels] + [ch] * cfg.n_conv_layers
        self.enc_convs = [
            MoNetConv(widths[k], widths[k + 1], cfg.n_kernels, rng)
            for k in range(cfg.n_conv_layers)]
        self.enc_dense = Dense(n_nodes * ch, cfg.latent_dim, rng,
                               scale=np.sqrt(6.0 / (n_nodes * ch)))
        self.dec_dense = Dense(cfg.latent_dim, n_nodes * ch, rng)
        self.dec_act = SinActivation()
        dec_widths = [ch] * cfg.n_conv_layers + [self.channels]
        self.dec_convs = [
            MoNetConv(dec_widths[k], dec_widths[k + 1], cfg.n_kernels, rng,
                      activation="sin" if k < cfg.n_conv_layers - 1
                      else "linear")
            for k in range(cfg.n_conv_layers)]
        self.mlp = MLP([2, cfg.mlp_hidden, cfg.mlp_hidden, cfg.latent_dim],
                       rng, activation="sin")

    # -- plumbing ----------------------------------------------------------

    def layer_groups(self):
        return [self.enc_convs, self.enc_dense, self.dec_dense, self.dec_act,
                self.dec_convs, self.mlp]

    def all_layers(self):
        out = []
        for conv in self.enc_convs + self.dec_convs:
            out.extend(conv.sublayers())
        out.extend([self.enc_dense, self.dec_dense, self.dec_act])
        out.extend(self.mlp.sublayers())
        return out

    def normalize_mu(self, mu: np.ndarray) -> np.ndarray:
        (e0, e1), (a0, a1) = self.mu_bounds
        mu = np.asarray(mu, dtype=float)
        return np.stack([
            2.0 * (mu[..., 0] - e0) / (e1 - e0) - 1.0,
            2.0 * (mu[..., 1] - a0) / (a1 - a0) - 1.0,
        ], axis=-1)

    # -- forward passes ----------------------------------------------------

    def encode_normalized(self, un: np.ndarray) -> np.ndarray:
        h = un
        for conv in self.enc_convs:
            h = conv.forward(self.graph, h)
        return self.enc_dense.forward(h.reshape(h.shape[0], -1))

    def decode_normalized(self, z: np.ndarray) -> np.ndarray:
        h = self.dec_act.forward(self.dec_dense.forward(z))
        h = h.reshape(z.shape[0], self.graph.n_nodes, -1)
        for conv in self.dec_convs:
            h = conv.forward(self.graph, h)
        return h

    def encode(self, features: np.ndarray) -> np.ndarray:
        """Latent vectors of raw (de-normalized) node features (B, n, ch)."""
        self._require_fit()
        return self.encode_normalized(self.feature_norm.encode(features))

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Raw node features from latent vectors."""
        self._require_fit()
        return self.feature_norm.decode(self.decode_normalized(z))

    def mlp_forward(self, mu: np.ndarray) -> np.ndarray:
        return self.mlp.forward(self.normalize_mu(np.atleast_2d(mu)))

    def predict(self, mu) -> np.ndarray:
        """Node features at a parameter point; no solver call."""
        mu = np.asarray(mu, dtype=float)
        single = mu.ndim == 1
        out = self.decode(self.mlp_forward(mu))
        return out[0] if single else out

    def _require_fit(self):
        if self.feature_norm is None:
            raise RuntimeError("feature normalization not fitted; train first")

    # -- loss and training -------------------------------------------------

    def loss_and_grads(self, mu_batch: np.ndarray, feat_batch: np.ndarray,
                       compute_grads: bool = True
                       ) -> tuple[float, float, float]:
        """(total, L_s, L_v) on normalized features; accumulates gradients."""
        self._require_fit()
        b = feat_batch.shape[0]
        un = self.feature_norm.encode(feat_batch)
        z = self.encode_normalized(un)
        zm = self.mlp.forward(self.normalize_mu(mu_batch))
        rec = self.decode_normalized(z)
        r_s = rec - un
        r_v = z - zm
        l_s = float(np.sum(r_s**2) / b)
        l_v = float(np.sum(r_v**2) / b)
        total = l_s + self.cfg.latent_weight * l_v
        if compute_grads:
            drec = 2.0 * r_s / b
            h = drec
            for conv in reversed(self.dec_convs):
                h = conv.backward(h)
            h = self.dec_act.backward(h.reshape(b, -1))
            dz_dec = self.dec_dense.backward(h)
            dz = dz_dec + self.cfg.latent_weight * 2.0 * r_v / b
            h = self.enc_dense.backward(dz)
            h = h.reshape(b, self.graph.n_nodes, -1)
            for conv in reversed(self.enc_convs):
                h = conv.backward(h)
            self.mlp.backward(-self.cfg.latent_weight * 2.0 * r_v / b)
        return total, l_s, l_v

    def fit_normalization(self, features: np.ndarray):
        self.feature_norm = FeatureNorm.fit(features)

    def train(self, mu_train: np.ndarray, feat_train: np.ndarray
              ) -> np.ndarray:
        """Minibatch Adam; returns per-epoch (total, L_s, L_v) history."""
        if feat_train.shape[0] == 0:
            raise ValueError("empty training set")
        if self.feature_norm is None:
            self.fit_normalization(feat_train)
        cfg = self.cfg
        n = feat_train.shape[0]
        batch = min(cfg.batch_size, n)
        opt = Adam(self.all_layers(), lr=cfg.learning_rate)
        rng = np.random.default_rng([cfg.seed, _state_tag(self.state), 7])
        history = np.zeros((cfg.epochs, 3))
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            sums = np.zeros(3)
            n_batches = 0
            for start in range(0, n, batch):
                pick = order[start:start + batch]
                zero_grads(self.all_layers())
                totals = self.loss_and_grads(mu_train[pick], feat_train[pick])
                if not np.isfinite(totals[0]):
                    raise Diverged(f"loss became non-finite at epoch {epoch}")
                opt.step()
                sums += totals
                n_batches += 1
            history[epoch] = sums / n_batches
        return history

    # -- energies ----------------------------------------------------------

    def rom_energy(self, mu, p: ModelParams) -> tuple[float, float]:
        """(e1, e2) densities from the predicted fields via grid means."""
        fields = self.predict(mu)
        phi = fields[:, 0]
        if self.channels == 2:
            g = fields[:, 1] / self.cfg.derivative_weight
        else:
            g = grid_gradient_estimate(
                phi.reshape(self.grid.n_g, self.grid.n_g),
                self.grid, p).ravel()
        e1 = 0.5 * p.c_pen * float(np.mean(g**2))
        e2 = float(np.mean(bulk_density(phi, p)))
        return e1, e2

    # -- persistence -------------------------------------------------------

    def save(self, path):
        self._require_fit()
        cfg = self.cfg
        header = {
            "state": self.state.value,
            "channels": self.channels,
            "grid": {"n_g": self.grid.n_g,
                     "box_multiplier": self.grid.box_multiplier},
            "mu_bounds": [list(self.mu_bounds[0]), list(self.mu_bounds[1])],
            "config": {
                "latent_dim": cfg.latent_dim,
                "n_kernels": cfg.n_kernels,
                "n_conv_layers": cfg.n_conv_layers,
                "hidden_channels": cfg.hidden_channels,
                "mlp_hidden": cfg.mlp_hidden,
                "latent_weight": cfg.latent_weight,
                "derivative_weight": cfg.derivative_weight,
                "learning_rate": cfg.learning_rate,
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "seed": cfg.seed,
            },
            "tensor_shapes": {name: list(p.shape)
                              for name, p in self._named_tensors()},
        }
        tensors = dict(self._named_tensors())
        tensors["norm_lo"] = self.feature_norm.lo
        tensors["norm_hi"] = self.feature_norm.hi
        header["tensor_shapes"]["norm_lo"] = list(self.feature_norm.lo.shape)
        header["tensor_shapes"]["norm_hi"] = list(self.feature_norm.hi.shape)
        fileio.write_model(path, b"DGCA", header, tensors)

    def _named_tensors(self):
        out = []
        groups = [("enc_conv", self.enc_convs), ("dec_conv", self.dec_convs)]
        for prefix, convs in groups:
            for k, conv in enumerate(convs):
                for name in sorted(conv.params):
                    out.append((f"{prefix}{k}.{name}", conv.params[name]))
                if conv.act is not None:
                    out.append((f"{prefix}{k}.act.w", conv.act.params["w"]))
        for prefix, layer in [("enc_dense", self.enc_dense),
                              ("dec_dense", self.dec_dense)]:
            for name in sorted(layer.params):
                out.append((f"{prefix}.{name}", layer.params[name]))
        out.append(("dec_act.w", self.dec_act.params["w"]))
        for k, layer in enumerate(self.mlp.sublayers()):
            for name in sorted(layer.params):
                out.append((f"mlp{k}.{name}", layer.params[name]))
        return out

    @classmethod
    def load(cls, path) -> "DiGCANet":
        header, tensors = fileio.read_model(path, b"DGCA")
        cfg = TrainConfig(**header["config"])
        grid = GridSpec(n_g=header["grid"]["n_g"],
                        box_multiplier=header["grid"]["box_multiplier"])
        bounds = tuple(tuple(b) for b in header["mu_bounds"])
        net = cls(StateKind(header["state"]), grid, cfg, mu_bounds=bounds)
        for name, param in net._named_tensors():
            expected = tuple(header["tensor_shapes"][name])
            if name not in tensors or tensors[name].shape != expected:
                raise fileio.FormatError(
                    f"{path}: tensor {name} missing or mis-shaped")
            param[...] = tensors[name]
        net.feature_norm = FeatureNorm(lo=tensors["norm_lo"],
                                       hi=tensors["norm_hi"])
        return net


def _state_tag(state: StateKind) -> int:
    from .model import STATE_ORDER
    return STATE_ORDER.index(state)


def grid_gradient_estimate(phi: np.ndarray, grid: GridSpec,
                           p: ModelParams) -> np.ndarray:
    """Post-hoc G(phi) estimate from a periodic FFT of the sampled window.

    This is the differentiation route a solution-only surrogate must take;
    its error against the exact symbol-weighted reconstruction is what the
    derivative-informed training avoids.
    """
    phi = np.asarray(phi, dtype=float)
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n_g, d=grid.spacing)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    k_sq = kx * kx + ky * ky
    return np.fft.ifft2(spectral_symbol(k_sq, p) * np.fft.fft2(phi)).real
