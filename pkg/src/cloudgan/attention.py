"""Spatial attention blocks built on recurrent directional propagation.

A :class:`SpatialAttentionBlock` runs two rounds of multi-directional
recurrent scans (4 axis-aligned directions, or 8 including diagonals) with
1x1 projection/fusion convolutions, then squashes to a single-channel
attention map in (0, 1). An :class:`AttentiveResidualBlock` is a plain
two-conv residual block whose residual branch is gated elementwise by such a
map.
"""

from __future__ import annotations

from enum import Enum

import torch
import torch.nn.functional as F
from torch import nn

from .scan import EIGHT_DIRECTIONS, FOUR_DIRECTIONS, directional_pass


class Neighborhood(str, Enum):
    """Number of propagation directions in the recurrent scans."""

    FOUR = "four"
    EIGHT = "eight"

    @property
    def directions(self) -> tuple[tuple[int, int], ...]:
        return FOUR_DIRECTIONS if self is Neighborhood.FOUR else EIGHT_DIRECTIONS


def init_conv(conv: nn.Conv2d) -> nn.Conv2d:
    """Fan-in-scaled weight init (torch's kaiming-uniform default), zero bias."""
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)
    return conv


class PropagationRound(nn.Module):
    """One round: 1x1 projection, per-direction scans, 1x1 fusion.

    The fusion conv consumes the direction outputs concatenated in
    ``neighborhood.directions`` order, so a FOUR-mode parameterization embeds
    into EIGHT mode as the first four channel groups.
    """

    def __init__(self, channels: int, neighborhood: Neighborhood):
        super().__init__()
        directions = neighborhood.directions
        self.directions = directions
        self.project = init_conv(nn.Conv2d(channels, channels, kernel_size=1))
        # contractive start: gains sum to 1 across directions
        self.gains = nn.Parameter(
            torch.full((len(directions), channels), 1.0 / len(directions))
        )
        self.fuse = init_conv(
            nn.Conv2d(len(directions) * channels, channels, kernel_size=1)
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        projected = self.project(features)
        scans = [
            directional_pass(projected, self.gains[i], d)
            for i, d in enumerate(self.directions)
        ]
        return self.fuse(torch.cat(scans, dim=1))


class SpatialAttentionBlock(nn.Module):
    """Produce an (N, 1, H, W) attention map with values strictly in (0, 1)."""

    # float32 sigmoid rounds to exactly 0/1 once |pre-activation| > ~17; the
    # clamp keeps the open-interval contract for arbitrary finite inputs
    _EPS = 1e-6

    def __init__(self, channels: int, neighborhood: Neighborhood, rounds: int = 2):
        super().__init__()
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.neighborhood = Neighborhood(neighborhood)
        self.rounds = nn.ModuleList(
            PropagationRound(channels, self.neighborhood) for _ in range(rounds)
        )
        self.to_map = init_conv(nn.Conv2d(channels, 1, kernel_size=1))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        for propagation in self.rounds:
            features = propagation(features)
        gate = torch.sigmoid(self.to_map(features))
        return torch.clamp(gate, self._EPS, 1.0 - self._EPS)


class AttentiveResidualBlock(nn.Module):
    """Residual block with the residual branch gated by an attention map.

    ``out = x + conv_b(relu(conv_a(x))) * att`` with ``att`` broadcast over
    the feature channels; ``att == 0`` makes this the exact identity.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.conv_a = init_conv(nn.Conv2d(channels, channels, kernel_size=3, padding=1))
        self.conv_b = init_conv(nn.Conv2d(channels, channels, kernel_size=3, padding=1))

    def forward(self, features: torch.Tensor, attention: torch.Tensor) -> torch.Tensor:
        if attention.shape[-2:] != features.shape[-2:]:
            raise ValueError(
                f"attention {tuple(attention.shape)} does not match "
                f"features {tuple(features.shape)}"
            )
        return features + self.conv_b(F.relu(self.conv_a(features))) * attention


@torch.no_grad()
def embed_four_into_eight(
    four: SpatialAttentionBlock, eight: SpatialAttentionBlock
) -> None:
    """Copy a FOUR-mode parameterization into an EIGHT-mode block.

    Axis-aligned gains and projection/fusion weights are copied; the fusion
    weights on the four diagonal channel groups are zeroed, so the EIGHT block
    reproduces the FOUR block's output (up to float summation order).
    """
    if four.neighborhood is not Neighborhood.FOUR or eight.neighborhood is not Neighborhood.EIGHT:
        raise ValueError("expected (FOUR, EIGHT) blocks")
    channels = four.to_map.in_channels
    for src, dst in zip(four.rounds, eight.rounds):
        dst.project.weight.copy_(src.project.weight)
        dst.project.bias.copy_(src.project.bias)
        dst.gains[:4].copy_(src.gains)
        dst.fuse.weight.zero_()
        dst.fuse.weight[:, : 4 * channels].copy_(src.fuse.weight)
        dst.fuse.bias.copy_(src.fuse.bias)
    eight.to_map.weight.copy_(four.to_map.weight)
    eight.to_map.bias.copy_(four.to_map.bias)
