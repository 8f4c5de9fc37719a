"""Binary artifact formats and small persistence helpers.

Formats (all little-endian):

* ``LPSF`` spectral snapshot: magic, version u32, n_h u32, then n_h^4
  complex values as (real f64, imag f64) in FFT storage order.
* ``LPPG`` physical grid: magic, version u32, n_g u32, box edge D f64,
  then n_g^2 f64 values row-major.
* ``DGCA`` / ``LPCL`` model containers: magic, version u32, a JSON header
  (architecture + normalization constants), then named f64 weight tensors
  with declared shapes; loading validates shapes against the header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeSpec
from .solver import GridSpec, SpectralField

FORMAT_VERSION = 1


class FormatError(Exception):
    """Raised when an artifact file fails validation."""


def _expect(cond: bool, message: str):
    if not cond:
        raise FormatError(message)


# ---------------------------------------------------------------------------
# Spectral snapshots

def write_snapshot(path, field: SpectralField):
    data = np.ascontiguousarray(field.coeffs, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(b"LPSF")
        fh.write(struct.pack("<II", FORMAT_VERSION, field.spec.n_h))
        fh.write(data.tobytes())


def read_snapshot(path) -> SpectralField:
    with open(path, "rb") as fh:
        _expect(fh.read(4) == b"LPSF", f"{path}: bad magic for spectral snapshot")
        version, n_h = struct.unpack("<II", fh.read(8))
        _expect(version == FORMAT_VERSION, f"{path}: unsupported version {version}")
        spec = LatticeSpec(n_h=n_h)
        raw = fh.read()
    _expect(len(raw) == 16 * spec.n_modes,
            f"{path}: truncated snapshot payload")
    coeffs = np.frombuffer(raw, dtype="<c16")
    return SpectralField(coeffs.reshape(spec.shape).astype(np.complex128), spec)


# ---------------------------------------------------------------------------
# Physical grids

def write_grid(path, values: np.ndarray, grid: GridSpec):
    values = np.asarray(values, dtype=float)
    _expect(values.shape == (grid.n_g, grid.n_g),
            f"grid payload shape {values.shape} does not match n_g={grid.n_g}")
    with open(path, "wb") as fh:
        fh.write(b"LPPG")
        fh.write(struct.pack("<IId", FORMAT_VERSION, grid.n_g, grid.edge))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_grid(path) -> tuple[np.ndarray, GridSpec]:
    with open(path, "rb") as fh:
        _expect(fh.read(4) == b"LPPG", f"{path}: bad magic for physical grid")
        version, n_g, edge = struct.unpack("<IId", fh.read(16))
        _expect(version == FORMAT_VERSION, f"{path}: unsupported version {version}")
        raw = fh.read()
    _expect(len(raw) == 8 * n_g * n_g, f"{path}: truncated grid payload")
    values = np.frombuffer(raw, dtype="<f8")
    grid = GridSpec(n_g=n_g, box_multiplier=edge / (2.0 * np.pi))
    return values.reshape(n_g, n_g).astype(float), grid


# ---------------------------------------------------------------------------
# Model containers (shared by the autoencoder and the classifier)

def write_model(path, magic: bytes, header: dict,
                tensors: dict[str, np.ndarray]):
    _expect(len(magic) == 4, "magic must be 4 bytes")
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            # asarray keeps 0-d tensors 0-d (ascontiguousarray would not)
            value = np.asarray(value, dtype="<f8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(value.tobytes(order="C"))


def read_model(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        _expect(fh.read(4) == magic,
                f"{path}: bad magic, expected {magic.decode()}")
        version, header_len = struct.unpack("<II", fh.read(8))
        _expect(version == FORMAT_VERSION, f"{path}: unsupported version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_values = int(np.prod(shape)) if ndim else 1
            raw = fh.read(8 * n_values)
            _expect(len(raw) == 8 * n_values, f"{path}: truncated tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header, tensors


# ---------------------------------------------------------------------------
# Text helpers

def format_float(x: float) -> str:
    """Shortest round-trip decimal form, reproducible across runs."""
    return repr(float(x))


def write_json(path, payload: dict):
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
