"""Desk-scale denoising diffusion backend.

A three-layer convolutional noise predictor over grayscale strips, with the
timestep injected as an extra input channel and the prompt injected as a
per-channel bias after the first convolution. Prompt strings map to learned
embedding slots through a stable token hash, so the same string always hits
the same rows of the embedding table in any process.

Weights live as named numpy float32 tensors; torch is used functionally for
the forward pass so low-rank factors can be trained with autograd while the
base stays frozen.
"""

import hashlib
from dataclasses import dataclass

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ValidationError
from ..imgio import array_digest


@dataclass(frozen=True)
class ToyBackendConfig:
    width: int = 32
    height: int = 96
    channels: int = 8
    embed_dim: int = 8
    vocab_size: int = 32
    timesteps: int = 200
    init_seed: int = 0


def _token_slot(token: str, vocab_size: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big") % vocab_size


class ToyDiffusionBackend:
    name = "toy"

    def __init__(self, config: ToyBackendConfig = ToyBackendConfig()):
        self.config = config
        c, e = config.channels, config.embed_dim
        rng = np.random.default_rng(config.init_seed)

        def w(shape, fan_in):
            return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

        self._weights = {
            "conv1.weight": w((c, 2, 3, 3), 2 * 9),
            "conv1.bias": np.zeros(c, dtype=np.float32),
            "cond.weight": w((c, e), e),
            "cond.bias": np.zeros(c, dtype=np.float32),
            "conv2.weight": w((c, c, 3, 3), c * 9),
            "conv2.bias": np.zeros(c, dtype=np.float32),
            "conv3.weight": w((1, c, 3, 3), c * 9),
            "conv3.bias": np.zeros(1, dtype=np.float32),
            "embed.weight": (rng.standard_normal((config.vocab_size, e)) * 0.5).astype(np.float32),
        }
        betas = np.linspace(1e-4, 0.02, config.timesteps, dtype=np.float64)
        self.betas = betas.astype(np.float32)
        self.alphas = (1.0 - betas).astype(np.float32)
        self.alpha_bars = np.cumprod(1.0 - betas).astype(np.float32)
        self.model_id = "toy-" + array_digest(
            np.concatenate([v.ravel() for _, v in sorted(self._weights.items())])
        )[:12]

    @property
    def image_size(self) -> tuple:
        return (self.config.width, self.config.height)

    def base_weights(self) -> dict:
        """Copies; the backend's own tensors are never handed out mutable."""
        return {name: w.copy() for name, w in self._weights.items()}

    def layer_shapes(self) -> dict:
        """Layers eligible for low-rank adaptation: the hidden convs plus the
        conditioning projection. The single-channel output head stays base
        (its min dimension is 1, below any useful rank)."""
        return {
            name: self._weights[name].shape
            for name in ("conv1.weight", "conv2.weight", "cond.weight")
        }

    def encode_prompt(self, prompt: str) -> np.ndarray:
        tokens = prompt.lower().split()
        if not tokens:
            raise ValidationError("prompt must contain at least one token")
        slots = [_token_slot(tok, self.config.vocab_size) for tok in tokens]
        return self._weights["embed.weight"][slots].mean(axis=0).astype(np.float32)

    # torch-side plumbing ---------------------------------------------------

    def torch_weights(self, weights: dict) -> dict:
        return {name: torch.from_numpy(np.ascontiguousarray(w)) for name, w in weights.items()}

    def forward(self, weights_t: dict, x: torch.Tensor, t_norm: torch.Tensor, emb: torch.Tensor):
        """Predict noise. x: (B,1,H,W); t_norm: (B,) in [0,1]; emb: (B,E)."""
        tmap = t_norm.view(-1, 1, 1, 1).expand(-1, 1, x.shape[2], x.shape[3])
        h = F.conv2d(torch.cat([x, tmap], dim=1), weights_t["conv1.weight"],
                     weights_t["conv1.bias"], padding=1)
        bias = emb @ weights_t["cond.weight"].T + weights_t["cond.bias"]
        h = torch.relu(h + bias[:, :, None, None])
        h = torch.relu(F.conv2d(h, weights_t["conv2.weight"], weights_t["conv2.bias"], padding=1))
        return F.conv2d(h, weights_t["conv3.weight"], weights_t["conv3.bias"], padding=1)

    def denoise_loss(self, weights_t: dict, x0: torch.Tensor, emb: torch.Tensor,
                     gen: torch.Generator) -> torch.Tensor:
        """One denoising objective draw: MSE between predicted and true noise."""
        b = x0.shape[0]
        t = torch.randint(0, self.config.timesteps, (b,), generator=gen)
        ab = torch.from_numpy(self.alpha_bars)[t].view(b, 1, 1, 1)
        noise = torch.randn(x0.shape, generator=gen)
        x_t = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * noise
        t_norm = t.to(torch.float32) / max(1, self.config.timesteps - 1)
        return F.mse_loss(self.forward(weights_t, x_t, t_norm, emb), noise)

    def sample(self, weights: dict, prompt: str, count: int, seed: int) -> np.ndarray:
        """Ancestral sampling; returns float32 (count, H, W) in [0, 1]."""
        if count == 0:
            return np.zeros((0, self.config.height, self.config.width), dtype=np.float32)
        weights_t = self.torch_weights(weights)
        emb = torch.from_numpy(self.encode_prompt(prompt)).expand(count, -1)
        gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFF)
        t_steps = self.config.timesteps
        with torch.no_grad():
            x = torch.randn((count, 1, self.config.height, self.config.width), generator=gen)
            for t in reversed(range(t_steps)):
                t_norm = torch.full((count,), t / max(1, t_steps - 1), dtype=torch.float32)
                eps = self.forward(weights_t, x, t_norm, emb)
                a_t = float(self.alphas[t])
                ab_t = float(self.alpha_bars[t])
                beta_t = float(self.betas[t])
                x = (x - beta_t / np.sqrt(1.0 - ab_t) * eps) / np.sqrt(a_t)
                if t > 0:
                    x = x + np.sqrt(beta_t) * torch.randn(x.shape, generator=gen)
        imgs = ((x.squeeze(1).numpy() + 1.0) / 2.0).clip(0.0, 1.0)
        return imgs.astype(np.float32)

    def to_rgb(self, gray: np.ndarray, resolution=None) -> np.ndarray:
        """(H, W) grayscale sample to the float32 (H, W, 3) image contract."""
        rgb = np.repeat(gray[..., None], 3, axis=2).astype(np.float32)
        if resolution is not None and tuple(resolution) != self.image_size:
            rgb = cv2.resize(rgb, (int(resolution[0]), int(resolution[1])),
                             interpolation=cv2.INTER_LINEAR).astype(np.float32)
        return np.clip(rgb, 0.0, 1.0)

    def from_rgb(self, image: np.ndarray) -> np.ndarray:
        """(H, W, 3) image in [0, 1] to the (H, W) model space in [-1, 1]."""
        gray = np.asarray(image, dtype=np.float32).mean(axis=2)
        if gray.shape != (self.config.height, self.config.width):
            gray = cv2.resize(gray, self.image_size, interpolation=cv2.INTER_LINEAR)
        return gray * 2.0 - 1.0
