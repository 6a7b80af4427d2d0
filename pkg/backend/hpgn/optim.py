import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .errors import ContractError, NumericError
from .nn import ModelParams

logger = logging.getLogger(__name__)


def block_of(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class AdamMoments:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: ModelParams,
    grads: Mapping[str, Optional[np.ndarray]],
    moments: AdamMoments,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    t: int,
) -> ModelParams:
    """Bias-corrected Adam update applied in place; missing gradients count as zero."""
    if t < 1:
        raise ContractError(f"adam step index must be >= 1, got {t}")
    for name, grad in grads.items():
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient in parameter block '{block_of(name)}' ({name}); step {t} aborted")
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        m = moments.m.get(name)
        v = moments.v.get(name)
        if m is None or m.shape != param.shape:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        moments.m[name] = m.astype(param.dtype)
        moments.v[name] = v.astype(param.dtype)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)
    return params


class Adam:
    def __init__(
        self,
        params: ModelParams,
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.moments = AdamMoments()

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        grads = {name: param.grad for name, param in self.params.items()}
        adam_step(self.params, grads, self.moments, self.lr, self.beta1, self.beta2, self.eps, self.t + 1)
        self.t += 1

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for name in self.params:
            if name in self.moments.m:
                state[f"adam.m.{name}"] = self.moments.m[name]
                state[f"adam.v.{name}"] = self.moments.v[name]
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], t: int) -> None:
        self.t = t
        self.moments = AdamMoments()
        for name, param in self.params.items():
            if f"adam.m.{name}" in state:
                self.moments.m[name] = np.asarray(state[f"adam.m.{name}"], dtype=param.dtype)
                self.moments.v[name] = np.asarray(state[f"adam.v.{name}"], dtype=param.dtype)
