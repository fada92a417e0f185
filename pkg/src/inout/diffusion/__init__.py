"""Diffusion backends and subject-driven fine-tuning."""

from ..errors import ConfigurationError
from .finetune import (
    DEFAULT_CLASS_PROMPT,
    DEFAULT_GENERATION_PROMPTS,
    DEFAULT_INSTANCE_PROMPT,
    IDENTIFIER_TOKEN,
    SCENARIO_PRESETS,
    FinetuneConfig,
    FinetuneResult,
    GenerationRequest,
    ScenarioPreset,
    adapter_digest,
    finetune,
    generate,
    prepare_regularization_set,
)
from .pretrained import PretrainedBackendConfig, PretrainedLatentBackend
from .toy import ToyBackendConfig, ToyDiffusionBackend


def get_backend(name: str, **kwargs):
    """Construct a diffusion backend by registry name ('toy' or 'pretrained')."""
    if name == "toy":
        return ToyDiffusionBackend(ToyBackendConfig(**kwargs))
    if name == "pretrained":
        return PretrainedLatentBackend(PretrainedBackendConfig(**kwargs))
    raise ConfigurationError(f"unknown diffusion backend {name!r} (have: toy, pretrained)")


__all__ = [
    "DEFAULT_CLASS_PROMPT",
    "DEFAULT_GENERATION_PROMPTS",
    "DEFAULT_INSTANCE_PROMPT",
    "IDENTIFIER_TOKEN",
    "SCENARIO_PRESETS",
    "FinetuneConfig",
    "FinetuneResult",
    "GenerationRequest",
    "ScenarioPreset",
    "PretrainedBackendConfig",
    "PretrainedLatentBackend",
    "ToyBackendConfig",
    "ToyDiffusionBackend",
    "adapter_digest",
    "finetune",
    "generate",
    "get_backend",
    "prepare_regularization_set",
]
