"""Optional adapter for a pretrained latent diffusion model.

The production-scale path fine-tunes a pretrained text-to-image latent
diffusion model (512x512, 8-bit AdamW, learning rate 1e-5) instead of the
desk-scale backend. That requires the optional ``diffusers`` stack, which
this package does not depend on; constructing the backend without it raises
``BackendError``. The class exists so configs can name it and so the wiring
is documented, not because it is exercised at desk scale.
"""

from dataclasses import dataclass

from ..errors import BackendError


@dataclass(frozen=True)
class PretrainedBackendConfig:
    model_id: str = "stable-diffusion-v1-5"
    resolution: int = 512
    sampling_steps: int = 50
    guidance_scale: float = 7.5


class PretrainedLatentBackend:
    name = "pretrained"

    def __init__(self, config: PretrainedBackendConfig = PretrainedBackendConfig()):
        try:
            import diffusers  # noqa: F401
        except ImportError as exc:
            raise BackendError(
                "the pretrained latent backend needs the optional 'diffusers' package "
                "(pip install diffusers transformers accelerate); at desk scale use "
                "the 'toy' backend instead"
            ) from exc
        self.config = config
        raise BackendError(
            "pretrained latent backend wiring is documented but not bundled; "
            "see README for the full-scale recipe"
        )
