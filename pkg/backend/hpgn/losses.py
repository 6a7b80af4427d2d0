"""
Training loss: L1 plus a weighted perceptual term.

The perceptual feature extractor is NOT a pretrained VGG19. It is a fixed
stack of four randomly initialised strided convolutions (3→16→32→64→64, 3×3,
stride 2, leaky ReLU), seeded so the same seed always gives the same weights.
The loss compares stage-3 and stage-4 features. Set perceptual_mode=off for
pure L1.
"""
from functools import lru_cache
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError
from .tensor import Tensor, abs_, add, conv2d, leaky_relu, mean, mul, sub

STAGE_CHANNELS = (3, 16, 32, 64, 64)
COMPARED_STAGES = (2, 3)


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_per: float = Field(default=0.01, ge=0)
    perceptual_mode: Literal["fixed_random_features", "off"] = "fixed_random_features"
    extractor_seed: int = Field(default=0, ge=0)


def _check_pair(I_en: Tensor, I_high: Tensor) -> None:
    if I_en.shape != I_high.shape:
        raise DimensionError(f"prediction {list(I_en.shape)} and target {list(I_high.shape)} differ in shape")


def l1_loss(I_en: Tensor, I_high: Tensor) -> Tensor:
    _check_pair(I_en, I_high)
    return mean(abs_(sub(I_en, I_high)))


@lru_cache(maxsize=8)
def _extractor_weights(seed: int, dtype: str) -> Tuple[Tensor, ...]:
    rng = np.random.default_rng(seed)
    weights = []
    for c_in, c_out in zip(STAGE_CHANNELS[:-1], STAGE_CHANNELS[1:]):
        bound = np.sqrt(6.0 / (c_in * 9))
        weights.append(Tensor(rng.uniform(-bound, bound, (c_out, c_in, 3, 3)), dtype=np.dtype(dtype)))
    return tuple(weights)


def random_features(x: Tensor, seed: int) -> List[Tensor]:
    """Stage outputs of the frozen extractor; no gradient reaches its weights."""
    features = []
    for weight in _extractor_weights(seed, np.dtype(x.dtype).str):
        x = leaky_relu(conv2d(x, weight, stride=2, padding=1), 0.2)
        features.append(x)
    return features


def perceptual_loss(I_en: Tensor, I_high: Tensor, extractor_seed: int = 0) -> Tensor:
    _check_pair(I_en, I_high)
    if I_en.ndim != 4 or I_en.shape[1] != 3 or min(I_en.shape[2:]) < 16:
        raise DimensionError(f"perceptual loss needs N×3×H×W with H, W >= 16, got {list(I_en.shape)}")
    ours = random_features(I_en, extractor_seed)
    theirs = random_features(I_high, extractor_seed)
    terms = [mean(abs_(sub(ours[s], theirs[s]))) for s in COMPARED_STAGES]
    return mul(add(terms[0], terms[1]), 0.5)


def total_loss(I_en: Tensor, I_high: Tensor, config: LossConfig, seed: Optional[int] = None) -> Tensor:
    l1 = l1_loss(I_en, I_high)
    if config.perceptual_mode == "off" or config.lambda_per == 0:
        return l1
    seed = config.extractor_seed if seed is None else seed
    return add(l1, mul(perceptual_loss(I_en, I_high, seed), config.lambda_per))
