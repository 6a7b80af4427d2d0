"""
Run configuration and its key=value file format.

    # comment
    seed = 7
    qf_mode = random(10,90)
    width = 32

Keys are flat; nested groups (model, enhancer, loss) are filled from the
table below. Unknown and repeated keys are rejected.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .data import Codec, QfMode
from .errors import ConfigurationError
from .losses import LossConfig
from .model import ModelConfig
from .settings import get_settings

logger = logging.getLogger(__name__)

FLAT_KEYS: Dict[str, Tuple[str, ...]] = {
    "seed": ("seed",),
    "qf_mode": ("qf_mode",),
    "crop": ("crop",),
    "batch": ("batch",),
    "steps": ("steps",),
    "lr": ("lr",),
    "beta1": ("beta1",),
    "beta2": ("beta2",),
    "eps": ("eps",),
    "checkpoint_every": ("checkpoint_every",),
    "log_every": ("log_every",),
    "flip": ("flip",),
    "codec": ("codec",),
    "width": ("model", "enhancer", "width"),
    "num_rmrb": ("model", "enhancer", "num_rmrb"),
    "num_mrb": ("model", "enhancer", "num_mrb_per_rmrb"),
    "trunk_input": ("model", "trunk_input"),
    "use_illumination": ("model", "use_illumination"),
    "use_qf_branch": ("model", "use_qf_branch"),
    "use_qm_branch": ("model", "use_qm_branch"),
    "lambda_per": ("loss", "lambda_per"),
    "perceptual_mode": ("loss", "perceptual_mode"),
    "extractor_seed": ("loss", "extractor_seed"),
}


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(default=0, ge=0, lt=2**64)
    qf_mode: QfMode = Field(default_factory=lambda: QfMode.random(10, 90))
    crop: int = Field(default=64, ge=4)
    batch: int = Field(default=4, ge=1)
    steps: int = Field(default=2000, ge=0)
    lr: float = Field(default=2e-4, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    checkpoint_every: int = Field(default=500, ge=0)
    log_every: int = Field(default_factory=lambda: get_settings().log_every, ge=1)
    flip: bool = False
    codec: Codec = "simulated"
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)

    @field_validator("qf_mode", mode="before")
    @classmethod
    def parse_qf_mode(cls, value: Any) -> Any:
        return QfMode.parse(value) if isinstance(value, (str, int)) else value

    @field_validator("crop")
    @classmethod
    def crop_divisible_by_four(cls, value: int) -> int:
        if value % 4:
            raise ValueError(f"crop must be divisible by 4, got {value}")
        return value

    @model_validator(mode="after")
    def crop_fits_perceptual(self) -> "TrainConfig":
        if self.loss.perceptual_mode != "off" and self.loss.lambda_per > 0 and self.crop < 16:
            raise ValueError(f"the perceptual loss needs crop >= 16, got {self.crop}")
        return self

    def with_model(self, **flags: Any) -> "TrainConfig":
        return self.model_copy(update={"model": ModelConfig(**{**self.model.model_dump(), **flags})})


def config_hash(config: TrainConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _describe(exc: ValidationError) -> str:
    error = exc.errors()[0]
    where = ".".join(str(part) for part in error["loc"]) or "config"
    return f"{where}: {error['msg']}"


def build_config(values: Dict[str, Any]) -> TrainConfig:
    """Validate a flat key -> value mapping."""
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in FLAT_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        *parents, leaf = FLAT_KEYS[key]
        node = nested
        for parent in parents:
            node = node.setdefault(parent, {})
        node[leaf] = value
    try:
        return TrainConfig.model_validate(nested)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {_describe(exc)}")


def parse_config_text(text: str) -> TrainConfig:
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FLAT_KEYS:
            raise ConfigurationError(f"line {number}: unknown config key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {number}: key {key!r} given twice")
        values[key] = value
    return build_config(values)


def load_config(path: Union[str, Path]) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    config = parse_config_text(text)
    logger.info("loaded config %s (hash %s)", path, config_hash(config)[:12])
    return config


def format_config(config: TrainConfig) -> str:
    """Inverse of parse_config_text: every key, one per line."""
    dumped = config.model_dump()
    lines = []
    for key, path in FLAT_KEYS.items():
        value: Any = dumped
        for part in path:
            value = value[part]
        if key == "qf_mode":
            value = str(config.qf_mode)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
