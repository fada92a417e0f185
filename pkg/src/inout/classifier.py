"""Weakly supervised defect classifier over manifest samples.

Training consumes image-level labels only; nothing here ever touches an
annotation mask. The default backbone is a small convolutional net sized for
desk-scale strips (global average pooling makes it resolution-agnostic), with
``resnet50`` available for full-scale runs. Optimization is plain SGD on a
sigmoid/binary cross-entropy head.

Images for a split are materialized in memory, which is fine at desk scale;
full-scale datasets would need a streaming loader instead.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, TrainingError, ValidationError
from .ingest import load_entry_pixels
from .manifest import LABEL_POSITIVE, SPLIT_TEST, SPLIT_TRAIN, DatasetManifest
from .seeding import derive_seed

BACKBONES = ("tiny_cnn", "resnet50")


@dataclass(frozen=True)
class TrainConfig:
    backbone: str = "tiny_cnn"
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 5
    seed: int = 0
    pretrained_backbone: bool = False  # resnet50 only; requires a weights download

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.backbone not in BACKBONES:
            raise ConfigurationError(f"unknown backbone {self.backbone!r} (have: {BACKBONES})")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")


class _TinyCnn(torch.nn.Module):
    def __init__(self, gen: torch.Generator):
        super().__init__()
        self.conv1 = torch.nn.Conv2d(3, 12, 3, padding=1)
        self.conv2 = torch.nn.Conv2d(12, 24, 3, padding=1)
        self.conv3 = torch.nn.Conv2d(24, 32, 3, padding=1)
        self.head = torch.nn.Linear(32, 1)
        for m in (self.conv1, self.conv2, self.conv3, self.head):
            fan_in = m.weight.shape[1] * (m.weight[0, 0].numel() if m.weight.dim() == 4 else 1)
            with torch.no_grad():
                m.weight.copy_(
                    torch.randn(m.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5
                )
                m.bias.zero_()

    def forward(self, x):
        h = F.max_pool2d(torch.relu(self.conv1(x)), 2)
        h = F.max_pool2d(torch.relu(self.conv2(h)), 2)
        h = torch.relu(self.conv3(h))
        h = h.mean(dim=(2, 3))
        return self.head(h).squeeze(1)


def _build_backbone(config: TrainConfig, gen: torch.Generator) -> torch.nn.Module:
    if config.backbone == "tiny_cnn":
        return _TinyCnn(gen)
    from torchvision.models import resnet50

    torch.manual_seed(int(gen.initial_seed()) & 0x7FFFFFFF)
    net = resnet50(weights="IMAGENET1K_V2" if config.pretrained_backbone else None)
    net.fc = torch.nn.Linear(net.fc.in_features, 1)
    wrapped = net

    class _Squeeze(torch.nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner

        def forward(self, x):
            return self.inner(x).squeeze(1)

    return _Squeeze(wrapped)


@dataclass
class ClassifierModel:
    module: torch.nn.Module
    resolution: tuple  # (w, h) the model was trained at
    config: TrainConfig
    train_manifest_hash: str

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "state": self.module.state_dict(),
                "resolution": list(self.resolution),
                "config": asdict(self.config),
                "train_manifest_hash": self.train_manifest_hash,
            },
            path,
        )
        return path


def load_model(path) -> ClassifierModel:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, ValueError) as exc:
        raise ConfigurationError(f"cannot load classifier checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "config" not in payload:
        raise ConfigurationError(f"checkpoint {path} is not a classifier checkpoint")
    config = TrainConfig(**payload["config"])
    gen = torch.Generator().manual_seed(0)
    module = _build_backbone_for_load(config, gen)
    module.load_state_dict(payload["state"])
    module.eval()
    return ClassifierModel(
        module=module,
        resolution=tuple(payload["resolution"]),
        config=config,
        train_manifest_hash=payload["train_manifest_hash"],
    )


def _build_backbone_for_load(config: TrainConfig, gen: torch.Generator) -> torch.nn.Module:
    cfg = TrainConfig(**{**asdict(config), "pretrained_backbone": False})
    return _build_backbone(cfg, gen)


@dataclass
class ClassifierRunResult:
    scores: np.ndarray  # float64, aligned with the manifest's test split order
    sample_ids: list
    labels: np.ndarray  # int, from the manifest (image-level only)
    manifest_hash: str
    config_digest: str


def _split_tensors(manifest: DatasetManifest, split: str):
    entries = manifest.split_entries(split)
    if not entries:
        raise ValidationError(f"manifest has no samples in split {split!r}")
    images = np.stack([load_entry_pixels(manifest, e) for e in entries])
    x = torch.from_numpy(images).permute(0, 3, 1, 2).contiguous()
    y = torch.tensor([1.0 if e.label == LABEL_POSITIVE else 0.0 for e in entries])
    return entries, x, y


def train_classifier(manifest: DatasetManifest, config: TrainConfig) -> ClassifierModel:
    """Train on the manifest's train split; deterministic for a given seed."""
    config.validate()
    entries, x, y = _split_tensors(manifest, SPLIT_TRAIN)
    n_pos = int(y.sum())
    if config.epochs > 0 and (n_pos == 0 or n_pos == len(entries)):
        raise ConfigurationError(
            f"training needs both classes; train split has {n_pos} positives "
            f"out of {len(entries)} samples"
        )
    gen = torch.Generator().manual_seed(derive_seed(config.seed, "classifier-init"))
    module = _build_backbone(config, gen)
    shuffle_gen = torch.Generator().manual_seed(derive_seed(config.seed, "classifier-shuffle"))
    opt = torch.optim.SGD(module.parameters(), lr=config.learning_rate)
    module.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(entries), generator=shuffle_gen)
        for start in range(0, len(entries), config.batch_size):
            idx = order[start : start + config.batch_size]
            opt.zero_grad()
            logits = module(x[idx])
            loss = F.binary_cross_entropy_with_logits(logits, y[idx])
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite classifier loss at epoch {epoch}")
            loss.backward()
            opt.step()
    module.eval()
    return ClassifierModel(
        module=module,
        resolution=manifest.target_resolution,
        config=config,
        train_manifest_hash=manifest.content_hash,
    )


def predict_scores(model: ClassifierModel, manifest: DatasetManifest,
                   split: str = SPLIT_TEST) -> ClassifierRunResult:
    """Score a split in manifest order; scores are sigmoid outputs in [0, 1]."""
    if tuple(manifest.target_resolution) != tuple(model.resolution):
        raise ValidationError(
            f"manifest resolution {tuple(manifest.target_resolution)} does not match "
            f"the model's training resolution {tuple(model.resolution)}"
        )
    entries, x, y = _split_tensors(manifest, split)
    model.module.eval()
    with torch.no_grad():
        scores = torch.sigmoid(model.module(x)).numpy().astype(np.float64)
    return ClassifierRunResult(
        scores=scores,
        sample_ids=[e.sample_id for e in entries],
        labels=y.numpy().astype(int),
        manifest_hash=manifest.content_hash,
        config_digest=model.config.digest(),
    )
