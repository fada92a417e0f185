"""Low-rank adaptation of named weight tensors.

An adapter holds, per layer, a pair of factors (A: rank x d_in, B: d_out x
rank) and a scalar ``scale``. Merging into base weights computes

    W' = W + alpha * scale * (B @ A)

with ``alpha`` in [0, 1] controlling interpolation between the base model
(alpha = 0, bit-exact) and the fully adapted model (alpha = 1). Linear layers
are adapted directly; 4-D convolution kernels are adapted through their
(out_ch, in_ch*kh*kw) flattening. B starts at zero, so a freshly initialized
adapter is a zero update by construction.
"""

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AdapterLoadError, ConfigurationError, MergeError, ValidationError
from .seeding import derive_seed

_FORMAT_VERSION = 1


@dataclass
class LoraEntry:
    A: np.ndarray  # (rank, d_in) float32
    B: np.ndarray  # (d_out, rank) float32
    scale: float


@dataclass
class LoraAdapter:
    rank: int
    entries: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


def _flat_dims(name: str, shape) -> tuple:
    """(d_out, d_in) of the 2-D view a layer is adapted through."""
    if len(shape) == 2:
        return int(shape[0]), int(shape[1])
    if len(shape) == 4:
        return int(shape[0]), int(shape[1] * shape[2] * shape[3])
    raise ConfigurationError(f"layer {name!r}: cannot adapt a tensor of shape {tuple(shape)}")


def init_adapter(base_layer_shapes: dict, rank: int, seed: int, scale=None, metadata=None) -> LoraAdapter:
    """Initialize factors for every layer in ``base_layer_shapes``.

    A is Gaussian with std 1/sqrt(d_in); B is zero. ``scale`` defaults to
    1/rank so merge magnitudes stay comparable across ranks. Per-layer draws
    use seeds derived from the layer name, independent of dict order.
    """
    if rank < 1:
        raise ConfigurationError(f"rank must be >= 1, got {rank}")
    if scale is None:
        scale = 1.0 / rank
    entries = {}
    for name, shape in base_layer_shapes.items():
        d_out, d_in = _flat_dims(name, shape)
        if rank > min(d_in, d_out):
            raise ConfigurationError(
                f"layer {name!r}: rank {rank} exceeds min(d_in={d_in}, d_out={d_out})"
            )
        rng = np.random.default_rng(derive_seed(seed, "lora-init", name))
        entries[name] = LoraEntry(
            A=(rng.standard_normal((rank, d_in)) / np.sqrt(d_in)).astype(np.float32),
            B=np.zeros((d_out, rank), dtype=np.float32),
            scale=float(scale),
        )
    return LoraAdapter(rank=rank, entries=entries, metadata=dict(metadata or {}))


def entry_delta(entry: LoraEntry) -> np.ndarray:
    """The low-rank update scale * (B @ A) in flattened form, float32."""
    return (np.float32(entry.scale) * (entry.B @ entry.A)).astype(np.float32)


def merge(base_weights: dict, adapter: LoraAdapter, alpha: float) -> dict:
    """Return merged weights; base tensors are never mutated.

    alpha = 0 returns a bit-exact copy of the base. Layers named by the
    adapter must exist in the base with matching flattened dimensions;
    base layers the adapter does not name pass through unchanged.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    for name in adapter.entries:
        if name not in base_weights:
            raise MergeError(f"adapter names layer {name!r} absent from base weights")
    merged = {name: np.array(w, dtype=np.float32, copy=True) for name, w in base_weights.items()}
    if alpha == 0.0:
        return merged
    for name, entry in adapter.entries.items():
        w = merged[name]
        d_out, d_in = _flat_dims(name, w.shape)
        if entry.A.shape[1] != d_in or entry.B.shape[0] != d_out:
            raise MergeError(
                f"layer {name!r}: adapter factors ({entry.B.shape[0]}x{entry.A.shape[1]}) "
                f"do not match base dims ({d_out}x{d_in})"
            )
        flat = w.reshape(d_out, d_in)
        merged[name] = (flat + np.float32(alpha) * entry_delta(entry)).reshape(w.shape)
    return merged


def save_adapter(adapter: LoraAdapter, path) -> Path:
    """Write a named-tensor archive (npz) with a JSON metadata record inside."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    meta = {
        "format_version": _FORMAT_VERSION,
        "rank": adapter.rank,
        "layers": sorted(adapter.entries),
        "scales": {name: adapter.entries[name].scale for name in sorted(adapter.entries)},
        "metadata": adapter.metadata,
    }
    for name, entry in adapter.entries.items():
        arrays[f"A::{name}"] = entry.A
        arrays[f"B::{name}"] = entry.B
    arrays["meta.json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_adapter(path) -> LoraAdapter:
    path = Path(path)
    try:
        with np.load(path) as data:
            raw = {key: data[key] for key in data.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError, KeyError) as exc:
        raise AdapterLoadError(f"cannot read adapter archive {path}: {exc}") from exc
    if "meta.json" not in raw:
        raise AdapterLoadError(f"adapter archive {path} has no metadata record")
    try:
        meta = json.loads(bytes(raw["meta.json"].tobytes()).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise AdapterLoadError(f"adapter archive {path} has malformed metadata: {exc}") from exc
    if meta.get("format_version") != _FORMAT_VERSION:
        raise AdapterLoadError(
            f"adapter archive {path} has format version {meta.get('format_version')!r}, "
            f"expected {_FORMAT_VERSION}"
        )
    entries = {}
    for name in meta["layers"]:
        a_key, b_key = f"A::{name}", f"B::{name}"
        if a_key not in raw or b_key not in raw:
            raise AdapterLoadError(f"adapter archive {path} is missing tensors for layer {name!r}")
        entries[name] = LoraEntry(A=raw[a_key], B=raw[b_key], scale=float(meta["scales"][name]))
    return LoraAdapter(rank=int(meta["rank"]), entries=entries, metadata=meta.get("metadata", {}))
