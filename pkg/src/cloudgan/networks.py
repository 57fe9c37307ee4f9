"""Generator and discriminator assembly.

The generator is a global-residual image-to-image network: a 3x3 head conv,
a sequence of stages (each stage = one spatial attention block followed by
attention-gated residual blocks), and a 3x3 tail conv whose tanh output is
added to the input. Zeroing the tail makes it the exact identity, so an
untrained model reproduces its cloudy input.

Two variants share the interface: ``baseline`` (3 stages of 2 gated blocks by
default) and ``dual`` (exactly 2 attention maps with 3 gated blocks each,
sized to keep parameter counts comparable).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .attention import (
    AttentiveResidualBlock,
    Neighborhood,
    SpatialAttentionBlock,
    init_conv,
)


class GeneratorVariant(str, Enum):
    BASELINE = "baseline"
    DUAL = "dual"


@dataclass
class GeneratorConfig:
    """Architecture knobs; ``None`` fields resolve to per-variant defaults."""

    variant: GeneratorVariant = GeneratorVariant.BASELINE
    mode: Neighborhood = Neighborhood.FOUR
    base_channels: int = 32
    sarbs_per_stage: int | None = None
    stages: int | None = None

    def __post_init__(self):
        self.variant = GeneratorVariant(self.variant)
        self.mode = Neighborhood(self.mode)
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.variant is GeneratorVariant.DUAL and self.stages not in (None, 2):
            raise ValueError("dual variant always has exactly 2 stages")
        if self.resolved_stages < 1 or self.resolved_sarbs < 1:
            raise ValueError("stage and block counts must be >= 1")

    @property
    def resolved_stages(self) -> int:
        if self.variant is GeneratorVariant.DUAL:
            return 2
        return 3 if self.stages is None else self.stages

    @property
    def resolved_sarbs(self) -> int:
        if self.sarbs_per_stage is not None:
            return self.sarbs_per_stage
        return 3 if self.variant is GeneratorVariant.DUAL else 2

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "mode": self.mode.value,
            "base_channels": self.base_channels,
            "sarbs_per_stage": self.sarbs_per_stage,
            "stages": self.stages,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        return cls(**doc)

    @property
    def label(self) -> str:
        return f"{self.variant.value}-{self.mode.value}"


class GeneratorOutput(NamedTuple):
    image: torch.Tensor
    attention_maps: list[torch.Tensor]


class _Stage(nn.Module):
    def __init__(self, channels: int, mode: Neighborhood, blocks: int):
        super().__init__()
        self.attention = SpatialAttentionBlock(channels, mode)
        self.blocks = nn.ModuleList(AttentiveResidualBlock(channels) for _ in range(blocks))

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        attention = self.attention(features)
        for block in self.blocks:
            features = block(features, attention)
        return features, attention


class CloudRemovalGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig, in_channels: int = 3):
        super().__init__()
        self.config = config
        self.in_channels = in_channels
        f = config.base_channels
        self.head = init_conv(nn.Conv2d(in_channels, f, kernel_size=3, padding=1))
        self.stages = nn.ModuleList(
            _Stage(f, config.mode, config.resolved_sarbs)
            for _ in range(config.resolved_stages)
        )
        self.tail = init_conv(nn.Conv2d(f, in_channels, kernel_size=3, padding=1))

    def forward(self, x: torch.Tensor) -> GeneratorOutput:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (N, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        features = self.head(x)
        maps: list[torch.Tensor] = []
        for stage in self.stages:
            features, attention = stage(features)
            maps.append(attention)
        image = torch.clamp(torch.tanh(self.tail(features)) + x, -1.0, 1.0)
        return GeneratorOutput(image, maps)

    @torch.no_grad()
    def zero_tail_(self) -> "CloudRemovalGenerator":
        """Zero the tail conv, making the network the exact identity map."""
        self.tail.weight.zero_()
        self.tail.bias.zero_()
        return self


@dataclass
class DiscriminatorConfig:
    layers: int = 4
    base_channels: int = 64

    def __post_init__(self):
        if self.layers < 1 or self.base_channels < 1:
            raise ValueError("layers and base_channels must be >= 1")

    def to_dict(self) -> dict:
        return {"layers": self.layers, "base_channels": self.base_channels}

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscriminatorConfig":
        return cls(**doc)


class PatchDiscriminator(nn.Module):
    """Least-squares patch critic: stride-2 conv stack, unbounded score map.

    Each stride-2 layer pads asymmetrically (extra right/bottom on odd dims)
    so the score map is exactly ceil(H / 2**layers) x ceil(W / 2**layers).
    """

    def __init__(self, config: DiscriminatorConfig, in_channels: int = 3):
        super().__init__()
        self.config = config
        convs = []
        ch_in = in_channels
        for i in range(config.layers):
            ch_out = min(config.base_channels * 2**i, 512)
            convs.append(init_conv(nn.Conv2d(ch_in, ch_out, kernel_size=4, stride=2)))
            ch_in = ch_out
        self.convs = nn.ModuleList(convs)
        self.score = init_conv(nn.Conv2d(ch_in, 1, kernel_size=3, padding=1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        min_side = min(x.shape[-2:])
        if min_side < 2 ** self.config.layers:
            raise ValueError(
                f"input side {min_side} smaller than receptive footprint "
                f"{2 ** self.config.layers}"
            )
        for conv in self.convs:
            h, w = x.shape[-2:]
            x = F.pad(x, (1, 1 + w % 2, 1, 1 + h % 2))
            x = F.leaky_relu(conv(x), negative_slope=0.2)
        return self.score(x)


def count_params(config: GeneratorConfig | DiscriminatorConfig) -> int:
    """Exact learnable scalar count for a config (leaves the RNG untouched)."""
    with torch.random.fork_rng():
        if isinstance(config, GeneratorConfig):
            module: nn.Module = CloudRemovalGenerator(config)
        else:
            module = PatchDiscriminator(config)
    return sum(p.numel() for p in module.parameters())
