import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .enhancer import EnhancerConfig, ImageEnhancer, reflect_pad
from .errors import DimensionError
from .hif import HybridInformationFilter, QfBatch, QmBatch
from .illumination import IlluminationEstimator, illum_prior, light_up
from .jpeg_prior import QfLike, as_qf, qf_to_qm
from .nn import Module
from .storage import to_uint8, to_unit
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    enhancer: EnhancerConfig = Field(default_factory=EnhancerConfig)
    trunk_input: Literal["light_up", "comp"] = "light_up"
    use_illumination: bool = True
    use_qf_branch: bool = True
    use_qm_branch: bool = True

    @model_validator(mode="after")
    def branches_need_illumination(self) -> "ModelConfig":
        if not self.use_illumination and (self.use_qf_branch or self.use_qm_branch or self.trunk_input == "light_up"):
            raise ValueError("without the illumination estimator the trunk must consume comp and both HIF branches must be off")
        return self


@dataclass
class HpgnOutputs:
    enhanced: Tensor
    trunk_input: Tensor
    prior: Optional[Tensor] = None
    brightness: Optional[Tensor] = None
    light_up: Optional[Tensor] = None
    features: Optional[Tensor] = None
    filtered: Optional[Tensor] = None


class HPGN(Module):
    """Illumination estimator -> hybrid information filter -> image enhancer."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        C = config.enhancer.width
        if config.use_illumination:
            self.estimator = IlluminationEstimator(C, rng)
        if config.use_qf_branch or config.use_qm_branch:
            self.hif = HybridInformationFilter(
                C, rng, use_qf_branch=config.use_qf_branch, use_qm_branch=config.use_qm_branch
            )
        self.enhancer = ImageEnhancer(config.enhancer, rng)

    def forward(self, I_comp: Tensor, qf: QfBatch, qm: Optional[QmBatch] = None) -> HpgnOutputs:
        if I_comp.ndim != 4 or I_comp.shape[1] != 3:
            raise DimensionError(f"model input must be N×3×H×W, got {list(I_comp.shape)}")
        if not self.config.use_illumination:
            return HpgnOutputs(enhanced=self.enhancer(I_comp), trunk_input=I_comp)

        if qm is None:
            qfs = list(qf) if isinstance(qf, (list, tuple)) else [qf] * I_comp.shape[0]
            qm = [qf_to_qm(q, "luma") for q in qfs]
        prior = illum_prior(I_comp)
        illumination = self.estimator(I_comp, prior)
        brightened = light_up(illumination.brightness, I_comp)
        if "hif" in self._modules:
            filtered = self.hif(illumination.features, qf, qm)
        else:
            filtered = illumination.features
        trunk = brightened if self.config.trunk_input == "light_up" else I_comp
        return HpgnOutputs(
            enhanced=self.enhancer(trunk, filtered),
            trunk_input=trunk,
            prior=prior,
            brightness=illumination.brightness,
            light_up=brightened,
            features=illumination.features,
            filtered=filtered,
        )

    def predict(self, image: np.ndarray, qf: QfLike) -> np.ndarray:
        """Enhance one compressed uint8 H×W×3 image of any size."""
        padded, (H, W) = reflect_pad(to_unit(image), 4)
        with no_grad():
            out = self.forward(Tensor(padded[None]), as_qf(qf))
        return to_uint8(out.enhanced.data[0, :, :H, :W])
