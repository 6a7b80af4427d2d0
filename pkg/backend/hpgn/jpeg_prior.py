"""
JPEG compression priors: quality factor, quantization matrices and a simulated
blockwise DCT quantize/dequantize round trip.

The round trip works in 4:4:4 BT.601 full-range YCbCr:

    Y  =  0.2990 R + 0.5870 G + 0.1140 B
    Cb = -0.1687 R - 0.3313 G + 0.5000 B + 128
    Cr =  0.5000 R - 0.4187 G - 0.0813 B + 128

    R = Y + 1.4020 (Cr - 128)
    G = Y - 0.3441 (Cb - 128) - 0.7141 (Cr - 128)
    B = Y + 1.7720 (Cb - 128)
"""
import io
import logging
from dataclasses import dataclass
from typing import Iterable, Literal, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field
from scipy.fft import dctn, idctn

from .errors import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

ChannelKind = Literal["luma", "chroma"]

BASE_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)

BASE_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)

RGB_TO_YCBCR = np.array(
    [
        [0.2990, 0.5870, 0.1140],
        [-0.1687, -0.3313, 0.5000],
        [0.5000, -0.4187, -0.0813],
    ]
)

YCBCR_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.4020],
        [1.0, -0.3441, -0.7141],
        [1.0, 1.7720, 0.0],
    ]
)

QF_AUTO_CANDIDATES = tuple(range(10, 101, 10))


class QualityFactor(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int = Field(ge=1, le=100)

    def __int__(self) -> int:
        return self.value


QfLike = Union[int, QualityFactor]


def as_qf(qf: QfLike) -> QualityFactor:
    return qf if isinstance(qf, QualityFactor) else QualityFactor(value=qf)


@dataclass(frozen=True)
class QuantizationMatrix:
    entries: np.ndarray
    channel_kind: ChannelKind = "luma"

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.shape != (8, 8):
            raise DimensionError(f"quantization matrix must be 8×8, got {list(entries.shape)}")
        if entries.min() < 1 or entries.max() > 255:
            raise ContractError(f"quantization entries must lie in [1, 255], got [{entries.min()}, {entries.max()}]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizationMatrix):
            return NotImplemented
        return self.channel_kind == other.channel_kind and np.array_equal(self.entries, other.entries)

    def __hash__(self) -> int:
        return hash((self.channel_kind, self.entries.tobytes()))

    def format_grid(self) -> str:
        return "\n".join(" ".join(f"{v:3d}" for v in row) for row in self.entries)


def qf_to_scale(qf: QfLike) -> int:
    value = as_qf(qf).value
    return 5000 // value if value < 50 else 200 - 2 * value


def qf_to_qm(qf: QfLike, kind: ChannelKind = "luma") -> QuantizationMatrix:
    scale = qf_to_scale(qf)
    base = BASE_LUMA if kind == "luma" else BASE_CHROMA
    entries = np.clip((base * scale + 50) // 100, 1, 255)
    return QuantizationMatrix(entries, kind)


def qm_to_feature_vector(qm: QuantizationMatrix) -> np.ndarray:
    return qm.entries.reshape(64).astype(np.float64) / 255.0


def dct8x8(block: np.ndarray, direction: Literal["forward", "inverse"] = "forward") -> np.ndarray:
    """Orthonormal 2-D DCT-II (forward) or DCT-III (inverse) over the last two 8×8 axes."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape[-2:] != (8, 8):
        raise DimensionError(f"dct8x8 needs trailing 8×8 blocks, got {list(block.shape)}")
    if not np.all(np.isfinite(block)):
        raise NumericError("dct8x8 input contains non-finite values")
    if direction == "forward":
        return dctn(block, type=2, axes=(-2, -1), norm="ortho")
    if direction == "inverse":
        return idctn(block, type=2, axes=(-2, -1), norm="ortho")
    raise ContractError(f"unknown dct direction {direction!r}")


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    ycc = np.asarray(rgb, dtype=np.float64) @ RGB_TO_YCBCR.T
    ycc[..., 1:] += 128.0
    return ycc


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    shifted = np.array(ycc, dtype=np.float64)
    shifted[..., 1:] -= 128.0
    return shifted @ YCBCR_TO_RGB.T


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected an H×W×3 RGB image, got {list(image.shape)}")
    if image.shape[0] < 8 or image.shape[1] < 8:
        raise DimensionError(f"image must be at least 8×8 pixels, got {image.shape[0]}×{image.shape[1]}")
    return image


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    H, W = plane.shape
    blocks = plane.reshape(H // 8, 8, W // 8, 8).transpose(0, 2, 1, 3) - 128.0
    coeffs = dct8x8(blocks, "forward")
    restored = dct8x8(round_half_away(coeffs / table) * table, "inverse") + 128.0
    return restored.transpose(0, 2, 1, 3).reshape(H, W)


def compress_roundtrip(image: np.ndarray, qf: QfLike) -> np.ndarray:
    """Simulate JPEG compression of an 8-bit RGB image; returns 8-bit RGB."""
    image = _check_image(image)
    qf = as_qf(qf)
    H, W, _ = image.shape
    ycc = rgb_to_ycbcr(image)
    pad_h, pad_w = -H % 8, -W % 8
    ycc = np.pad(ycc, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    luma = qf_to_qm(qf, "luma").entries
    chroma = qf_to_qm(qf, "chroma").entries
    planes = [_quantize_plane(ycc[..., c], luma if c == 0 else chroma) for c in range(3)]
    restored = np.stack(planes, axis=-1)[:H, :W]
    rgb = np.clip(ycbcr_to_rgb(restored), 0, 255)
    return round_half_away(rgb).astype(np.uint8)


def compress_with_encoder(image: np.ndarray, qf: QfLike) -> np.ndarray:
    """Round trip through a real baseline JPEG encoder (4:4:4) for comparison runs."""
    image = _check_image(image)
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), "RGB").save(
        buffer, format="JPEG", quality=as_qf(qf).value, subsampling=0
    )
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return np.asarray(decoded.convert("RGB"), dtype=np.uint8)


def recompression_residual(image: np.ndarray, qf: QfLike) -> float:
    image = _check_image(image)
    return float(np.mean(np.abs(compress_roundtrip(image, qf).astype(np.float64) - image)))


def estimate_qf(
    image: np.ndarray,
    candidates: Iterable[int] = QF_AUTO_CANDIDATES,
    tolerance: float = 0.1,
) -> QualityFactor:
    """
    Guess the QF an image was compressed with by re-compressing it.

    A previously compressed image is nearly a fixed point of its own
    quantizer (and trivially of QF 100), so among candidates whose residual is
    within `tolerance` (relative, plus the same absolute margin in levels) of
    the minimum, the coarsest one is returned.
    """
    residuals = {qf: recompression_residual(image, qf) for qf in sorted(candidates)}
    floor = min(residuals.values())
    limit = floor * (1 + tolerance) + tolerance
    chosen = next(qf for qf, residual in residuals.items() if residual <= limit)
    logger.debug("qf residuals %s -> %d", {k: round(v, 3) for k, v in residuals.items()}, chosen)
    return QualityFactor(value=chosen)
