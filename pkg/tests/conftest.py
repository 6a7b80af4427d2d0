from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from hpgn.config import TrainConfig
from hpgn.storage import write_png


def smooth_image(rng: np.random.Generator, height: int, width: int, brightness: float = 1.0) -> np.ndarray:
    """Deterministic natural-looking RGB image: low-frequency waves plus mild noise."""
    y, x = np.mgrid[0:height, 0:width]
    phases = rng.uniform(0, 2 * np.pi, (3, 2))
    freqs = rng.uniform(0.02, 0.15, (3, 2))
    channels = [
        0.5 + 0.35 * np.sin(freqs[c, 0] * x + phases[c, 0]) * np.cos(freqs[c, 1] * y + phases[c, 1]) for c in range(3)
    ]
    image = np.stack(channels, axis=-1) * 255 * brightness + rng.normal(0, 2, (height, width, 3))
    return np.clip(np.round(image), 0, 255).astype(np.uint8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_corpus(tmp_path: Path) -> Callable[..., Path]:
    """Write `count` low/high PNG pairs under a fresh directory and return it."""

    def build(count: int = 4, height: int = 48, width: int = 64, seed: int = 0, name: str = "corpus") -> Path:
        rng = np.random.default_rng(seed)
        root = tmp_path / name
        for index in range(count):
            high = smooth_image(rng, height, width)
            low = np.clip(np.round(high.astype(np.float64) * 0.25), 0, 255).astype(np.uint8)
            write_png(root / "high" / f"{index:03d}.png", high)
            write_png(root / "low" / f"{index:03d}.png", low)
        return root

    return build


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        seed=3,
        qf_mode="random(10,90)",
        crop=16,
        batch=2,
        steps=3,
        checkpoint_every=0,
        log_every=1,
        model={"enhancer": {"width": 8, "num_rmrb": 1, "num_mrb_per_rmrb": 1}},
    )


@pytest.fixture
def natural_image(rng: np.random.Generator) -> Callable[..., np.ndarray]:
    def build(height: int = 32, width: int = 32, brightness: float = 1.0) -> np.ndarray:
        return smooth_image(rng, height, width, brightness)

    return build
