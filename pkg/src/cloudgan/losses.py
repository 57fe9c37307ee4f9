"""Training losses: least-squares adversarial, L1 reconstruction, attention supervision.

The generator objective is ``g_adv + lambda_l1 * L1 + lambda_att * attention``
with least-squares adversarial terms (real target 1, fake target 0). The
attention supervision target is a binary mask of pixels whose mean absolute
cloudy/clean difference exceeds a threshold — i.e. the visibly clouded area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import ImagePair

DEFAULT_ATTENTION_TAU = 30.0 / 255.0


@dataclass
class LossWeights:
    lambda_l1: float = 100.0
    lambda_att: float = 10.0
    attention_tau: float = DEFAULT_ATTENTION_TAU

    def __post_init__(self):
        if self.lambda_l1 < 0 or self.lambda_att < 0:
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return {
            "lambda_l1": self.lambda_l1,
            "lambda_att": self.lambda_att,
            "attention_tau": self.attention_tau,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LossWeights":
        return cls(**doc)


def l1_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def generator_adversarial_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return ((d_fake - 1.0) ** 2).mean()


def discriminator_adversarial_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor
) -> torch.Tensor:
    return 0.5 * ((d_real - 1.0) ** 2).mean() + 0.5 * (d_fake**2).mean()


def gan_losses(d_real: torch.Tensor, d_fake: torch.Tensor) -> dict[str, torch.Tensor]:
    """Least-squares GAN terms for both players, from the same score maps."""
    return {
        "g_adv": generator_adversarial_loss(d_fake),
        "d_adv": discriminator_adversarial_loss(d_real, d_fake),
    }


def attention_target(pair: ImagePair, tau: float = DEFAULT_ATTENTION_TAU) -> np.ndarray:
    """Binary (H, W, 1) mask of pixels where mean |cloudy - clean| > tau."""
    diff = np.abs(pair.cloudy.astype(np.float32) - pair.clean.astype(np.float32))
    mask = diff.mean(axis=2, keepdims=True) > tau
    return mask.astype(np.float32)


def attention_loss(maps: list[torch.Tensor], target: torch.Tensor) -> torch.Tensor:
    """Mean over maps of the MSE between each attention map and the target."""
    if not maps:
        raise ValueError("attention_loss needs at least one map")
    total = maps[0].new_zeros(())
    for m in maps:
        if m.shape != target.shape:
            raise ValueError(f"map shape {tuple(m.shape)} != target {tuple(target.shape)}")
        total = total + ((m - target) ** 2).mean()
    return total / len(maps)
