"""
Hybrid information filter: modulates illumination features with compression priors.

    F_fea1 = F_illum * (1 + tanh(a(qf))) + b(qf)        channel affine from the QF
    F_fea2 = F_illum * sigmoid(conv([F_illum, e(qm)]))  spatial attention from the QM
    F_fea  = F_fea1 + F_fea2
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DimensionError
from .jpeg_prior import QfLike, QuantizationMatrix, as_qf, qm_to_feature_vector
from .nn import MLP, Conv2d, Module
from .tensor import Tensor, add, broadcast_to, concat, default_dtype, mul, narrow, sigmoid, tanh

logger = logging.getLogger(__name__)

QfBatch = Union[QfLike, Sequence[QfLike]]
QmBatch = Union[QuantizationMatrix, Sequence[QuantizationMatrix]]

# N×1×H×W, values in (0, 1)
QmAttention = Tensor


@dataclass
class QfCoefficients:
    scale: Tensor  # N×C×1×1
    shift: Tensor  # N×C×1×1


def _per_item(value: object, batch: int) -> list:
    items = list(value) if isinstance(value, (list, tuple)) else [value] * batch
    if len(items) != batch:
        raise DimensionError(f"got {len(items)} priors for a batch of {batch}")
    return items


def _check_features(F_illum: Tensor, channels: int) -> None:
    if F_illum.ndim != 4 or F_illum.shape[1] != channels:
        raise DimensionError(f"features must be N×{channels}×H×W, got {list(F_illum.shape)}")


class HybridInformationFilter(Module):
    """Holds parameters for the enabled branches only."""

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        hidden: int = 64,
        use_qf_branch: bool = True,
        use_qm_branch: bool = True,
    ):
        super().__init__()
        self.channels = channels
        if use_qf_branch:
            self.qf_mlp = MLP([1, hidden, hidden, 2 * channels], rng)
        if use_qm_branch:
            self.qm_embed = MLP([64, hidden, hidden, channels], rng)
            self.qm_spatial = Conv2d(2 * channels, 1, 3, rng)

    @property
    def has_qf_branch(self) -> bool:
        return "qf_mlp" in self._modules

    @property
    def has_qm_branch(self) -> bool:
        return "qm_embed" in self._modules

    def _require(self, built: bool, branch: str) -> None:
        if not built:
            raise ConfigurationError(f"this filter was built without the {branch} branch")

    def qf_coefficients(self, qf: QfBatch, batch: int) -> QfCoefficients:
        self._require(self.has_qf_branch, "QF")
        values = [as_qf(q).value / 100.0 for q in _per_item(qf, batch)]
        raw = self.qf_mlp(Tensor(np.array(values).reshape(batch, 1, 1, 1)))
        C = self.channels
        return QfCoefficients(scale=1.0 + tanh(narrow(raw, 1, 0, C)), shift=narrow(raw, 1, C, 2 * C))

    def qm_attention(self, F_illum: Tensor, qm: QmBatch) -> QmAttention:
        self._require(self.has_qm_branch, "QM")
        N, C, H, W = F_illum.shape
        vectors = np.stack([qm_to_feature_vector(m) for m in _per_item(qm, N)]).astype(default_dtype())
        embedding = self.qm_embed(Tensor(vectors.reshape(N, 64, 1, 1)))
        guided = concat([F_illum, broadcast_to(embedding, (N, C, H, W))], axis=1)
        return sigmoid(self.qm_spatial(guided))

    def qf_branch(self, F_illum: Tensor, qf: QfBatch) -> Tensor:
        _check_features(F_illum, self.channels)
        coeffs = self.qf_coefficients(qf, F_illum.shape[0])
        return add(mul(F_illum, coeffs.scale), coeffs.shift)

    def qm_branch(self, F_illum: Tensor, qm: QmBatch) -> Tensor:
        _check_features(F_illum, self.channels)
        return mul(F_illum, self.qm_attention(F_illum, qm))

    def forward(
        self,
        F_illum: Tensor,
        qf: QfBatch,
        qm: QmBatch,
        use_qf_branch: Optional[bool] = None,
        use_qm_branch: Optional[bool] = None,
    ) -> Tensor:
        """Branch flags left as None use whatever branches the filter was built with."""
        use_qf_branch = self.has_qf_branch if use_qf_branch is None else use_qf_branch
        use_qm_branch = self.has_qm_branch if use_qm_branch is None else use_qm_branch
        if use_qf_branch and use_qm_branch:
            return fuse(self.qf_branch(F_illum, qf), self.qm_branch(F_illum, qm))
        if use_qf_branch:
            return self.qf_branch(F_illum, qf)
        if use_qm_branch:
            return self.qm_branch(F_illum, qm)
        return F_illum


HifParams = HybridInformationFilter


def qf_branch(F_illum: Tensor, qf: QfBatch, params: HifParams) -> Tensor:
    return params.qf_branch(F_illum, qf)


def qm_branch(F_illum: Tensor, qm: QmBatch, params: HifParams) -> Tensor:
    return params.qm_branch(F_illum, qm)


def fuse(F_fea1: Tensor, F_fea2: Tensor) -> Tensor:
    if F_fea1.shape != F_fea2.shape:
        raise DimensionError(f"cannot fuse {list(F_fea1.shape)} with {list(F_fea2.shape)}")
    return add(F_fea1, F_fea2)


class HifAdapter(Module):
    """Feature transform (features, qf, qm) -> features for insertion into a host enhancer."""

    def __init__(
        self,
        host_channels: int,
        hif: HifParams,
        rng: Optional[np.random.Generator] = None,
        use_qf_branch: Optional[bool] = None,
        use_qm_branch: Optional[bool] = None,
    ):
        super().__init__()
        self.hif = hif
        self.host_channels = host_channels
        self.use_qf_branch = use_qf_branch
        self.use_qm_branch = use_qm_branch
        if host_channels != hif.channels:
            rng = rng or np.random.default_rng(0)
            self.proj_in = Conv2d(host_channels, hif.channels, 1, rng)
            self.proj_out = Conv2d(hif.channels, host_channels, 1, rng)

    @property
    def projected(self) -> bool:
        return "proj_in" in self._modules

    def forward(self, features: Tensor, qf: QfBatch, qm: QmBatch) -> Tensor:
        _check_features(features, self.host_channels)
        if not self.projected:
            return self.hif(features, qf, qm, self.use_qf_branch, self.use_qm_branch)
        inner = self.hif(self.proj_in(features), qf, qm, self.use_qf_branch, self.use_qm_branch)
        return self.proj_out(inner)


def attach(
    host_channels: int,
    params: HifParams,
    adapter: bool = False,
    rng: Optional[np.random.Generator] = None,
    use_qf_branch: Optional[bool] = None,
    use_qm_branch: Optional[bool] = None,
) -> HifAdapter:
    if host_channels != params.channels and not adapter:
        raise ConfigurationError(
            f"host width {host_channels} differs from HIF width {params.channels}; enable the projection adapter"
        )
    logger.debug("attaching HIF (C=%d) to host width %d", params.channels, host_channels)
    return HifAdapter(host_channels, params, rng, use_qf_branch, use_qm_branch)
