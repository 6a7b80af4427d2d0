"""
PSNR and SSIM over 8-bit images, and the MetricsReport text format.

PSNR is computed on RGB jointly (one MSE over every channel). SSIM is the
single-scale definition on BT.601 luminance with an 11×11 Gaussian window
(σ = 1.5), K1 = 0.01, K2 = 0.03, L = 255, averaged over valid window positions.

Report file layout, one record per line, tab-separated key=value fields:

    # hpgn-metrics v1
    # seed=<int> config_hash=<hex> qf_mode=<mode>
    path=<str>	qf=<int>	psnr_db=<float|inf>	ssim=<float>
    ...
    # mean psnr_db=<float|inf> ssim=<float> count=<int>
"""
import logging
import math
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.signal import convolve2d

from .errors import DimensionError, IngestionError
from .storage import atomic_write_text

logger = logging.getLogger(__name__)

PSNR_IDENTICAL = math.inf
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0
REPORT_HEADER = "# hpgn-metrics v1"


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"images differ in size: {list(a.shape)} vs {list(b.shape)}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    _check_same(a, b)
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_IDENTICAL
    return float(10.0 * np.log10(DATA_RANGE**2 / mse))


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ LUMA_WEIGHTS
    raise DimensionError(f"expected H×W or H×W×3 image, got {list(image.shape)}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    profile = np.exp(-(offsets**2) / (2 * sigma**2))
    profile /= profile.sum()
    return np.outer(profile, profile)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    x, y = luminance(a), luminance(b)
    _check_same(x, y)
    if min(x.shape) < SSIM_WINDOW:
        raise DimensionError(f"ssim needs H, W >= {SSIM_WINDOW}, got {x.shape[0]}×{x.shape[1]}")
    window = gaussian_window()

    def blur(z: np.ndarray) -> np.ndarray:
        return convolve2d(z, window, mode="valid")

    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
    return float(np.clip(ssim_map.mean(), -1.0, 1.0))


class MetricsRecord(BaseModel):
    path: str
    qf: int = Field(ge=1, le=100)
    psnr_db: float
    ssim: float = Field(ge=-1.0, le=1.0)


class MetricsReport(BaseModel):
    seed: int
    config_hash: str
    qf_mode: str
    records: List[MetricsRecord] = Field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.records])) if self.records else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.records])) if self.records else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records], columns=["path", "qf", "psnr_db", "ssim"])

    def to_text(self) -> str:
        lines = [REPORT_HEADER, f"# seed={self.seed} config_hash={self.config_hash} qf_mode={self.qf_mode}"]
        for r in self.records:
            lines.append(f"path={r.path}\tqf={r.qf}\tpsnr_db={r.psnr_db:.6f}\tssim={r.ssim:.6f}")
        lines.append(f"# mean psnr_db={self.mean_psnr:.6f} ssim={self.mean_ssim:.6f} count={len(self.records)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        lines = text.splitlines()
        if len(lines) < 3 or lines[0] != REPORT_HEADER:
            raise IngestionError("not a metrics report (missing header)")
        meta = dict(field.split("=", 1) for field in lines[1].lstrip("# ").split(" "))
        records = []
        for line in lines[2:]:
            if line.startswith("#") or not line.strip():
                continue
            records.append(MetricsRecord(**dict(field.split("=", 1) for field in line.split("\t"))))
        return cls(seed=int(meta["seed"]), config_hash=meta["config_hash"], qf_mode=meta["qf_mode"], records=records)

    def write(self, path: Union[str, Path]) -> None:
        atomic_write_text(path, self.to_text())
        logger.info(
            "report %s: %d images, mean PSNR %.3f dB, mean SSIM %.4f",
            path, len(self.records), self.mean_psnr, self.mean_ssim,
        )

    @classmethod
    def read(cls, path: Union[str, Path]) -> "MetricsReport":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))
