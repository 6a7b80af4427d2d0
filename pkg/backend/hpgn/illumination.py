from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nn import Conv2d, Module
from .tensor import Tensor, concat, mean, mul, softplus

# N×1×H×W per-pixel channel mean of the compressed input
IlluminationPriorMap = Tensor


@dataclass
class IlluminationOutputs:
    brightness: Tensor  # N×3×H×W, strictly positive
    features: Tensor  # N×C×H×W


def _check_rgb(name: str, x: Tensor) -> None:
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError(f"{name} must be N×3×H×W, got {list(x.shape)}")


def illum_prior(I_comp: Tensor) -> IlluminationPriorMap:
    _check_rgb("illumination prior input", I_comp)
    return mean(I_comp, axis=1, keepdims=True)


class IlluminationEstimator(Module):
    """1×1 conv -> depthwise 5×5 -> {1×1 feature head, 1×1 brightness head + softplus}."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.conv_in = Conv2d(4, channels, 1, rng)
        self.depth_conv = Conv2d(channels, channels, 5, rng, groups=channels)
        self.feature_head = Conv2d(channels, channels, 1, rng)
        self.brightness_head = Conv2d(channels, 3, 1, rng)

    def forward(self, I_comp: Tensor, prior: IlluminationPriorMap) -> IlluminationOutputs:
        _check_rgb("estimator input", I_comp)
        N, _, H, W = I_comp.shape
        if prior.shape != (N, 1, H, W):
            raise DimensionError(f"illumination prior {list(prior.shape)} does not match input {list(I_comp.shape)}")
        hidden = self.depth_conv(self.conv_in(concat([I_comp, prior], axis=1)))
        return IlluminationOutputs(
            brightness=softplus(self.brightness_head(hidden)),
            features=self.feature_head(hidden),
        )


def estimate(I_comp: Tensor, prior: IlluminationPriorMap, params: IlluminationEstimator) -> IlluminationOutputs:
    return params(I_comp, prior)


def light_up(I_bri: Tensor, I_comp: Tensor) -> Tensor:
    if I_bri.shape != I_comp.shape:
        raise DimensionError(f"brightness {list(I_bri.shape)} and input {list(I_comp.shape)} must have identical shapes")
    return mul(I_bri, I_comp)
