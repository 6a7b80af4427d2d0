"""Compressed low-light image enhancement guided by illumination and JPEG priors."""
from .errors import HpgnError
from .jpeg_prior import QualityFactor, QuantizationMatrix, compress_roundtrip, qf_to_qm
from .model import HPGN, ModelConfig
from .tensor import Tensor, no_grad, precision

__version__ = "1.0.0"

__all__ = [
    "HPGN",
    "HpgnError",
    "ModelConfig",
    "QualityFactor",
    "QuantizationMatrix",
    "Tensor",
    "compress_roundtrip",
    "no_grad",
    "precision",
    "qf_to_qm",
]
