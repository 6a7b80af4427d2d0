import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigurationError, IngestionError
from .jpeg_prior import (
    QualityFactor,
    QuantizationMatrix,
    compress_roundtrip,
    compress_with_encoder,
    estimate_qf,
    qf_to_qm,
)
from .storage import PathLike, read_image, to_unit
from .tensor import Tensor, default_dtype

if TYPE_CHECKING:
    from .config import TrainConfig

logger = logging.getLogger(__name__)

LOSSLESS_SUFFIXES = (".png",)
ENCODED_SUFFIXES = (".jpg", ".jpeg")
QF_MANIFEST = "qf.txt"
Codec = Literal["simulated", "encoder"]

_MODE_PATTERN = re.compile(r"^\s*(fixed|random)\s*\(\s*(\d+)\s*(?:,\s*(\d+)\s*)?\)\s*$")


class QfMode(BaseModel):
    """fixed(Q) or random(LO,HI); random draws are uniform integers in [LO, HI]."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["fixed", "random"]
    lo: int = Field(ge=1, le=100)
    hi: int = Field(ge=1, le=100)

    @model_validator(mode="after")
    def ordered(self) -> "QfMode":
        if self.lo > self.hi:
            raise ValueError(f"random QF range needs lo <= hi, got ({self.lo}, {self.hi})")
        if self.kind == "fixed" and self.lo != self.hi:
            raise ValueError("fixed QF mode takes a single value")
        return self

    @classmethod
    def fixed(cls, qf: int) -> "QfMode":
        return cls(kind="fixed", lo=qf, hi=qf)

    @classmethod
    def random(cls, lo: int, hi: int) -> "QfMode":
        return cls(kind="random", lo=lo, hi=hi)

    @classmethod
    def parse(cls, text: Union[str, int, "QfMode"]) -> "QfMode":
        if isinstance(text, QfMode):
            return text
        if isinstance(text, int) or str(text).strip().isdigit():
            return cls.fixed(int(text))
        match = _MODE_PATTERN.match(str(text))
        if not match:
            raise ValueError(f"qf mode must look like fixed(Q) or random(LO,HI), got {text!r}")
        kind, first, second = match.groups()
        if kind == "fixed":
            if second is not None:
                raise ValueError(f"fixed() takes one value, got {text!r}")
            return cls.fixed(int(first))
        if second is None:
            raise ValueError(f"random() takes two values, got {text!r}")
        return cls.random(int(first), int(second))

    def __str__(self) -> str:
        return f"fixed({self.lo})" if self.kind == "fixed" else f"random({self.lo},{self.hi})"


def sample_qf(rng: np.random.Generator, mode: QfMode) -> QualityFactor:
    if mode.kind == "fixed":
        return QualityFactor(value=mode.lo)
    return QualityFactor(value=int(rng.integers(mode.lo, mode.hi + 1)))


@dataclass(eq=False)
class ImagePair:
    low_path: Path
    high_path: Path
    qf_assigned: Optional[QualityFactor] = None
    # low is already compressed (prepared dataset or external JPEG)
    precompressed: bool = False

    @property
    def name(self) -> str:
        return self.high_path.name

    @cached_property
    def low(self) -> np.ndarray:
        return read_image(self.low_path)

    @cached_property
    def high(self) -> np.ndarray:
        return read_image(self.high_path)


def _image_size(path: Path) -> tuple:
    try:
        with Image.open(path) as image:
            return image.size
    except OSError as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}")


def _read_manifest(path: Path) -> Dict[str, int]:
    table: Dict[str, int] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[1].isdigit():
            raise IngestionError(f"{path}:{number}: expected '<file> <qf>', got {line!r}")
        table[Path(parts[0]).stem] = int(parts[1])
    return table


def _scan(directory: Path, suffixes: Sequence[str], root: Path) -> Dict[str, Path]:
    """Map stem -> file. Dotfiles are ignored; any other non-image entry raises."""
    found: Dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.name.startswith("."):
            continue
        if not path.is_file() or path.suffix.lower() not in suffixes:
            raise IngestionError(f"unrecognised file {path.relative_to(root)}; expected {', '.join(suffixes)}")
        if path.stem in found:
            raise IngestionError(
                f"{found[path.stem].relative_to(root)} and {path.relative_to(root)} share the stem {path.stem!r}"
            )
        found[path.stem] = path
    return found


def ingest(root: PathLike, allow_encoded: bool = True) -> List[ImagePair]:
    """
    Pair `root/low/*` with `root/high/*` by file stem, sorted by name.

    Low images may be JPEG files when `allow_encoded` is set; those, and every
    low image listed in a `qf.txt` manifest, are treated as already compressed.
    """
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    for directory in (low_dir, high_dir):
        if not directory.is_dir():
            raise IngestionError(f"missing directory {directory}")

    low_suffixes = LOSSLESS_SUFFIXES + (ENCODED_SUFFIXES if allow_encoded else ())
    lows = _scan(low_dir, low_suffixes, root)
    highs = _scan(high_dir, LOSSLESS_SUFFIXES, root)
    if not lows and not highs:
        raise IngestionError(f"no images under {low_dir} or {high_dir}")

    unmatched = sorted(
        [str(lows[s].relative_to(root)) for s in set(lows) - set(highs)]
        + [str(highs[s].relative_to(root)) for s in set(highs) - set(lows)]
    )
    if unmatched:
        raise IngestionError(f"unmatched files: {', '.join(unmatched)}")

    manifest = _read_manifest(root / QF_MANIFEST) if (root / QF_MANIFEST).is_file() else {}
    pairs: List[ImagePair] = []
    for stem in sorted(highs):
        low_path, high_path = lows[stem], highs[stem]
        if _image_size(low_path) != _image_size(high_path):
            logger.warning(
                "rejecting %s: low is %s but high is %s", stem, _image_size(low_path), _image_size(high_path)
            )
            continue
        encoded = low_path.suffix.lower() in ENCODED_SUFFIXES
        qf = QualityFactor(value=manifest[stem]) if stem in manifest else None
        pairs.append(ImagePair(low_path, high_path, qf_assigned=qf, precompressed=encoded or qf is not None))
    if not pairs:
        raise IngestionError(f"every pair under {root} was rejected")
    logger.info("ingested %d pairs from %s", len(pairs), root)
    return pairs


def compressed_low(pair: ImagePair, qf: QualityFactor, codec: Codec = "simulated") -> np.ndarray:
    if pair.precompressed:
        return pair.low
    encode = compress_roundtrip if codec == "simulated" else compress_with_encoder
    return encode(pair.low, qf.value)


def pair_qf(pair: ImagePair, rng: np.random.Generator, mode: QfMode) -> QualityFactor:
    """The QF a pair is (or was) compressed with; draws from `rng` only for raw pairs."""
    if pair.precompressed:
        if pair.qf_assigned is None:
            pair.qf_assigned = estimate_qf(pair.low)
        return pair.qf_assigned
    return sample_qf(rng, mode)


@dataclass
class TrainingExample:
    comp: np.ndarray  # 3×c×c in [0, 1]
    high: np.ndarray  # 3×c×c in [0, 1]
    qf: QualityFactor
    qm: QuantizationMatrix
    name: str = ""
    offset: tuple = (0, 0)


def make_example(pair: ImagePair, rng: np.random.Generator, config: "TrainConfig") -> TrainingExample:
    """Draw order on `rng`: qf, crop y, crop x, then the flip coin when flips are on."""
    qf = pair_qf(pair, rng, config.qf_mode)
    comp = compressed_low(pair, qf, config.codec)
    H, W = comp.shape[:2]
    c = config.crop
    if c > H or c > W:
        raise ConfigurationError(f"crop {c} is larger than {pair.name} ({H}×{W}); use a smaller crop")
    y = int(rng.integers(0, H - c + 1))
    x = int(rng.integers(0, W - c + 1))
    comp_crop = comp[y : y + c, x : x + c]
    high_crop = pair.high[y : y + c, x : x + c]
    if config.flip and rng.random() < 0.5:
        comp_crop, high_crop = comp_crop[:, ::-1], high_crop[:, ::-1]
    return TrainingExample(
        comp=to_unit(comp_crop),
        high=to_unit(high_crop),
        qf=qf,
        qm=qf_to_qm(qf, "luma"),
        name=pair.name,
        offset=(y, x),
    )


@dataclass
class Batch:
    comp: Tensor
    high: Tensor
    qfs: List[QualityFactor]
    qms: List[QuantizationMatrix]
    names: List[str] = field(default_factory=list)


def make_batch(data: Sequence[ImagePair], rng: np.random.Generator, config: "TrainConfig", step: int) -> Batch:
    """Pairs are visited cyclically; only the examples themselves draw from `rng`."""
    start = step * config.batch
    examples = [make_example(data[(start + i) % len(data)], rng, config) for i in range(config.batch)]
    dtype = default_dtype()
    return Batch(
        comp=Tensor(np.stack([e.comp for e in examples]).astype(dtype)),
        high=Tensor(np.stack([e.high for e in examples]).astype(dtype)),
        qfs=[e.qf for e in examples],
        qms=[e.qm for e in examples],
        names=[e.name for e in examples],
    )
