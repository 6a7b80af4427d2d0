import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, IngestionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write through a temp file in the target directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_image(path: PathLike) -> np.ndarray:
    """Load an image file as an 8-bit H×W×3 RGB array."""
    path = Path(path)
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise IngestionError(f"image not found: {path}")
    except (UnidentifiedImageError, OSError) as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}")


def write_png(path: PathLike, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DimensionError(f"write_png expects uint8 H×W×3, got {image.dtype} {list(image.shape)}")
    buffer = io.BytesIO()
    Image.fromarray(image, "RGB").save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())
    logger.debug("wrote %s (%d×%d)", path, image.shape[1], image.shape[0])


def to_unit(image: np.ndarray) -> np.ndarray:
    """uint8 H×W×3 -> float 3×H×W in [0, 1]."""
    return np.ascontiguousarray(np.asarray(image, dtype=np.float64).transpose(2, 0, 1) / 255.0)


def to_uint8(chw: np.ndarray) -> np.ndarray:
    """float 3×H×W in [0, 1] -> uint8 H×W×3."""
    scaled = np.clip(np.asarray(chw, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8).transpose(1, 2, 0).copy()
