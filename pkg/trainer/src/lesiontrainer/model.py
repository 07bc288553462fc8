"""Small configurable-depth CNN for normal-vs-anomalous classification."""

from __future__ import annotations

import torch
from torch import nn


class SmallCnn(nn.Module):
    """Stack of stride-2 conv blocks, global max pooling, linear head.

    Widths double per block up to 128; `depth` counts the conv blocks.
    Max pooling (not average) feeds the head: anomalies are small local
    structures, and averaging would drown them in background activations.
    """

    def __init__(self, in_channels: int = 3, depth: int = 3, width: int = 16):
        super().__init__()
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        blocks = []
        c_in = in_channels
        c_out = width
        for _ in range(depth):
            blocks += [
                nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
            c_in = c_out
            c_out = min(c_out * 2, 128)
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveMaxPool2d(1)
        self.head = nn.Linear(c_in, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.features(x)
        x = self.pool(x).flatten(1)
        return self.head(x)
