"""
Image enhancer: head conv, stacked recursive multi-scale residual blocks, tail conv.

Every block is in delta form, block(x) = x + f(x), so zeroing the learnable
paths turns the whole trunk into the identity on its light-up input.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ConfigurationError, DimensionError
from .nn import Conv2d, Module, ModuleList
from .tensor import (
    Tensor,
    add,
    clamp,
    concat,
    down2,
    global_avg_pool,
    leaky_relu,
    mul,
    reshape,
    sigmoid,
    softmax,
    sum_,
    up2,
)

logger = logging.getLogger(__name__)

SCALES = 3


class EnhancerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_rmrb: int = Field(default=4, ge=1)
    num_mrb_per_rmrb: int = Field(default=2, ge=1)
    width: int = Field(default=32, ge=4)

    @field_validator("width")
    @classmethod
    def width_divisible_by_four(cls, value: int) -> int:
        if value % 4:
            raise ValueError(f"width must be divisible by 4, got {value}")
        return value


def check_divisible(x: Tensor, factor: int = 4) -> None:
    H, W = x.shape[-2:]
    if H % factor or W % factor:
        raise DimensionError(
            f"spatial size {H}×{W} is not divisible by {factor}; reflect-pad the input to a multiple of {factor}"
        )


class ContextBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, rng)
        self.gate = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        local = leaky_relu(self.conv(x), 0.2)
        gate = sigmoid(self.gate(global_avg_pool(x)))
        return add(mul(local, gate), x)


class MultiScaleResidualBlock(Module):
    """Full/half/quarter resolution context branches, softmax-weighted per channel, then 1×1 fusion."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.branches = ModuleList([ContextBlock(channels, rng) for _ in range(SCALES)])
        self.fusion_logits = Conv2d(SCALES * channels, SCALES * channels, 1, rng)
        self.channel_fusion = Conv2d(channels, channels, 1, rng)

    def branch_features(self, x: Tensor) -> List[Tensor]:
        check_divisible(x)
        full = self.branches[0](x)
        half = up2(self.branches[1](down2(x)))
        quarter = up2(up2(self.branches[2](down2(down2(x)))))
        return [full, half, quarter]

    def fusion_weights(self, branches: List[Tensor]) -> Tensor:
        """N×3×C×1×1 weights, positive and summing to one over the scale axis."""
        N = branches[0].shape[0]
        logits = self.fusion_logits(global_avg_pool(concat(branches, axis=1)))
        return softmax(reshape(logits, (N, SCALES, self.channels, 1, 1)), axis=1)

    def forward(self, x: Tensor) -> Tensor:
        N, C, H, W = x.shape
        branches = self.branch_features(x)
        weights = self.fusion_weights(branches)
        stacked = concat([reshape(b, (N, 1, C, H, W)) for b in branches], axis=1)
        fused = sum_(mul(stacked, weights), axis=1)
        return add(x, self.channel_fusion(fused))


class RecursiveMultiScaleResidualBlock(Module):
    """rmrb(x) = x + conv(mrb_n(...mrb_1(x)))."""

    def __init__(self, channels: int, num_mrb: int, rng: np.random.Generator):
        super().__init__()
        self.blocks = ModuleList([MultiScaleResidualBlock(channels, rng) for _ in range(num_mrb)])
        self.tail = Conv2d(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for block in self.blocks:
            h = block(h)
        return add(x, self.tail(h))


class ImageEnhancer(Module):
    def __init__(self, config: EnhancerConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        C = config.width
        self.head = Conv2d(3, C, 3, rng)
        self.rmrbs = ModuleList(
            [RecursiveMultiScaleResidualBlock(C, config.num_mrb_per_rmrb, rng) for _ in range(config.num_rmrb)]
        )
        self.tail = Conv2d(C, 3, 3, rng)

    def encode(self, image: Tensor, F_fea: Optional[Tensor] = None) -> Tensor:
        if image.ndim != 4 or image.shape[1] != 3:
            raise DimensionError(f"enhancer input must be N×3×H×W, got {list(image.shape)}")
        check_divisible(image)
        h = self.head(image)
        if F_fea is not None:
            if F_fea.shape != h.shape:
                raise DimensionError(f"injected features {list(F_fea.shape)} do not match trunk {list(h.shape)}")
            h = add(h, F_fea)
        return h

    def decode(self, image: Tensor, h: Tensor) -> Tensor:
        for rmrb in self.rmrbs:
            h = rmrb(h)
        return clamp(add(image, self.tail(h)), 0.0, 1.0)

    def forward(self, image: Tensor, F_fea: Optional[Tensor] = None) -> Tensor:
        return self.decode(image, self.encode(image, F_fea))


EnhancerParams = ImageEnhancer


def context_block(x: Tensor, params: ContextBlock) -> Tensor:
    return params(x)


def mrb_forward(x: Tensor, params: MultiScaleResidualBlock) -> Tensor:
    return params(x)


def rmrb_forward(x: Tensor, params: RecursiveMultiScaleResidualBlock) -> Tensor:
    return params(x)


def enhance(I_light_up: Tensor, F_fea: Optional[Tensor], params: EnhancerParams, config: EnhancerConfig) -> Tensor:
    if params.config != config:
        raise ConfigurationError(f"enhancer parameters were built for {params.config}, not {config}")
    return params(I_light_up, F_fea)


def reflect_pad(chw: np.ndarray, multiple: int = 4) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Reflect-pad the trailing H, W axes up to a multiple; returns the padded array and the original size."""
    H, W = chw.shape[-2:]
    pad = [(0, 0)] * (chw.ndim - 2) + [(0, -H % multiple), (0, -W % multiple)]
    return np.pad(chw, pad, mode="reflect"), (H, W)
