"""Subject-driven fine-tuning of a diffusion backend through low-rank factors.

The base model stays frozen; only the adapter factors receive gradient. The
training objective is the denoising loss on the instance images plus a
prior-preservation term on images the base model generates from the class
prompt, weighted by ``prior_weight``. The identification token rides in the
instance prompt (e.g. "skt background"), and generation prompts append defect
words to it.

Merging strength ``alpha`` is not a training knob: adapters train at full
strength and ``alpha`` interpolates base and adapted weights at generation
time, per scenario preset.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import TrainingError, ValidationError
from ..imgio import array_digest, read_image, write_image
from ..lora import LoraAdapter, init_adapter, merge
from ..manifest import LABEL_POSITIVE, SOURCE_DIFFUSION, ImageSample
from ..seeding import derive_seed

IDENTIFIER_TOKEN = "skt"
DEFAULT_INSTANCE_PROMPT = f"{IDENTIFIER_TOKEN} background"
DEFAULT_CLASS_PROMPT = "background"
DEFAULT_GENERATION_PROMPTS = (
    f"{IDENTIFIER_TOKEN} background cracked",
    f"{IDENTIFIER_TOKEN} background scratched",
)


@dataclass(frozen=True)
class FinetuneConfig:
    instance_prompt: str = DEFAULT_INSTANCE_PROMPT
    class_prompt: str = DEFAULT_CLASS_PROMPT
    prior_weight: float = 1.0
    rank: int = 8
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 4
    num_regularization_images: int = 50
    seed: int = 0

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.num_regularization_images < 0:
            raise ValidationError("num_regularization_images must be >= 0")
        if self.prior_weight < 0:
            raise ValidationError("prior_weight must be >= 0")
        if not self.instance_prompt.strip():
            raise ValidationError("instance_prompt must be nonempty")


@dataclass(frozen=True)
class ScenarioPreset:
    """How each data regime fine-tunes and merges."""

    scenario: str
    n_positives: int  # instance positives (0 = fine-tune on sampled negatives)
    instance_negatives: int  # only used when n_positives == 0
    epochs: int
    merge_alpha: float


SCENARIO_PRESETS = {
    "zero_shot": ScenarioPreset("zero_shot", 0, 50, epochs=5, merge_alpha=0.60),
    "few_shot": ScenarioPreset("few_shot", 5, 0, epochs=49, merge_alpha=0.95),
    "full_shot": ScenarioPreset("full_shot", 246, 0, epochs=25, merge_alpha=0.80),
}


@dataclass(frozen=True)
class GenerationRequest:
    prompts: tuple = DEFAULT_GENERATION_PROMPTS
    count: int = 1
    seed: int = 0
    resolution: tuple = None  # (w, h); None = backend native
    id_prefix: str = "diffusion"

    def validate(self) -> None:
        if self.count < 0:
            raise ValidationError(f"generation count must be >= 0, got {self.count}")
        if not self.prompts:
            raise ValidationError("at least one generation prompt is required")


@dataclass
class FinetuneResult:
    adapter: LoraAdapter
    loss_history: list  # combined loss per epoch
    instance_ids: list = field(default_factory=list)


def prepare_regularization_set(backend, prompt: str, count: int, seed: int,
                               cache_dir=None) -> list:
    """Generate (or reuse cached) class-prompt images from the frozen base.

    Returns float32 (H, W, 3) arrays, quantized to 8 bits so the cached and
    freshly generated variants are bit-identical.
    """
    if count < 0:
        raise ValidationError(f"regularization count must be >= 0, got {count}")
    if count == 0:
        return []
    key = hashlib.sha256(
        f"{backend.model_id}|{prompt}|{count}|{seed}".encode()
    ).hexdigest()[:16]
    if cache_dir is not None:
        slot = Path(cache_dir) / f"reg-{key}"
        if (slot / "done").is_file():
            return [read_image(slot / f"{i:04d}.png") for i in range(count)]
    grays = backend.sample(backend.base_weights(), prompt, count, seed)
    images = [_quantize(backend.to_rgb(g)) for g in grays]
    if cache_dir is not None:
        slot = Path(cache_dir) / f"reg-{key}"
        for i, img in enumerate(images):
            write_image(slot / f"{i:04d}.png", img)
        (slot / "done").write_text(key)
    return images


def _quantize(image: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def finetune(backend, instance_images, config: FinetuneConfig,
             reg_cache_dir=None, instance_ids=None) -> FinetuneResult:
    """Train adapter factors on the instance set with prior preservation.

    ``instance_images`` are float32 (H, W, 3) arrays. With ``epochs=0`` the
    freshly initialized (zero-update) adapter is returned untouched. The
    backend's own weights are never written.
    """
    config.validate()
    if not instance_images:
        raise ValidationError("finetune needs at least one instance image")
    adapter = init_adapter(
        backend.layer_shapes(),
        rank=config.rank,
        seed=derive_seed(config.seed, "adapter-init"),
        metadata={
            "base_model_id": backend.model_id,
            "training_config_digest": config.digest(),
        },
    )
    result = FinetuneResult(adapter=adapter, loss_history=[], instance_ids=list(instance_ids or []))
    if config.epochs == 0:
        return result

    reg_images = prepare_regularization_set(
        backend,
        config.class_prompt,
        config.num_regularization_images,
        seed=derive_seed(config.seed, "regularization"),
        cache_dir=reg_cache_dir,
    )

    base_t = backend.torch_weights(backend.base_weights())
    for w in base_t.values():
        w.requires_grad_(False)
    factors = {}
    for name, entry in adapter.entries.items():
        factors[name] = (
            torch.from_numpy(entry.A.copy()).requires_grad_(True),
            torch.from_numpy(entry.B.copy()).requires_grad_(True),
            float(entry.scale),
        )

    inst = torch.from_numpy(np.stack([backend.from_rgb(im) for im in instance_images]))[:, None]
    inst_emb = torch.from_numpy(backend.encode_prompt(config.instance_prompt))
    reg = None
    if reg_images and config.prior_weight > 0:
        reg = torch.from_numpy(np.stack([backend.from_rgb(im) for im in reg_images]))[:, None]
        reg_emb = torch.from_numpy(backend.encode_prompt(config.class_prompt))

    gen = torch.Generator().manual_seed(derive_seed(config.seed, "train"))
    n_inst = inst.shape[0]
    reg_cursor = 0
    for epoch in range(config.epochs):
        order = torch.randperm(n_inst, generator=gen)
        epoch_losses = []
        for start in range(0, n_inst, config.batch_size):
            idx = order[start : start + config.batch_size]
            eff = dict(base_t)
            for name, (a, b, scale) in factors.items():
                eff[name] = base_t[name] + scale * (b @ a).view(base_t[name].shape)
            x0 = inst[idx]
            loss = backend.denoise_loss(eff, x0, inst_emb.expand(x0.shape[0], -1), gen)
            if reg is not None:
                take = torch.arange(reg_cursor, reg_cursor + x0.shape[0]) % reg.shape[0]
                reg_cursor = int((reg_cursor + x0.shape[0]) % reg.shape[0])
                x0r = reg[take]
                loss = loss + config.prior_weight * backend.denoise_loss(
                    eff, x0r, reg_emb.expand(x0r.shape[0], -1), gen
                )
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            for a, b, _ in factors.values():
                if a.grad is not None:
                    a.grad = None
                if b.grad is not None:
                    b.grad = None
            loss.backward()
            with torch.no_grad():
                for a, b, _ in factors.values():
                    a -= config.learning_rate * a.grad
                    b -= config.learning_rate * b.grad
            epoch_losses.append(loss_value)
        result.loss_history.append(sum(epoch_losses) / len(epoch_losses))

    for name, (a, b, scale) in factors.items():
        adapter.entries[name].A = a.detach().numpy().astype(np.float32)
        adapter.entries[name].B = b.detach().numpy().astype(np.float32)
    return result


def generate(backend, adapter, alpha: float, request: GenerationRequest) -> list:
    """Sample images from the adapter-merged model.

    The request's prompts are cycled uniformly over ``count``. With
    ``alpha == 0`` (or no adapter) the output is bit-identical to sampling
    the base model at the same seed.
    """
    request.validate()
    if request.count == 0:
        return []
    base = backend.base_weights()
    weights = merge(base, adapter, alpha) if adapter is not None else base
    n_prompts = len(request.prompts)
    per_prompt = [
        request.count // n_prompts + (1 if i < request.count % n_prompts else 0)
        for i in range(n_prompts)
    ]
    samples = []
    k = 0
    for i, (prompt, cnt) in enumerate(zip(request.prompts, per_prompt)):
        if cnt == 0:
            continue
        grays = backend.sample(weights, prompt, cnt, derive_seed(request.seed, "generate", i))
        for g in grays:
            samples.append(
                ImageSample(
                    sample_id=f"{request.id_prefix}-{request.seed}-{k:04d}",
                    pixels=backend.to_rgb(g, request.resolution),
                    label=LABEL_POSITIVE,
                    source=SOURCE_DIFFUSION,
                    split="train",
                )
            )
            k += 1
    return samples


def adapter_digest(adapter: LoraAdapter) -> str:
    """Stable digest over the adapter's tensors, for provenance records."""
    h = hashlib.sha256()
    for name in sorted(adapter.entries):
        entry = adapter.entries[name]
        h.update(name.encode())
        h.update(array_digest(entry.A).encode())
        h.update(array_digest(entry.B).encode())
        h.update(repr(entry.scale).encode())
    return h.hexdigest()[:16]
