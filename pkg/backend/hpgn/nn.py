import logging
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import CheckpointError
from .tensor import Tensor, conv2d, leaky_relu

logger = logging.getLogger(__name__)

# ordered name -> parameter; names carry the sub-network prefix
ModelParams = Dict[str, "Parameter"]


class Parameter(Tensor):
    def __init__(self, data: Any, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Container that registers parameters and child modules by attribute name."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def params(self) -> ModelParams:
        return dict(self.named_parameters())

    def parameter_count(self) -> int:
        return sum(param.size for param in self.parameters())

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def zero_parameters(self) -> "Module":
        for param in self.parameters():
            param.data[...] = 0
        return self

    def astype(self, dtype: Any) -> "Module":
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = self.params()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(f"parameter {name} has shape {list(value.shape)}, expected {list(param.shape)}")
            param.data = value.astype(param.dtype)


class ModuleList(Module):
    def __init__(self, modules: Sequence[Module]):
        super().__init__()
        for index, module in enumerate(modules):
            setattr(self, str(index), module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return self._modules[str(index)]


class Conv2d(Module):
    """Conv layer with uniform(±1/sqrt(fan_in)) weights and zero bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: Optional[int] = None,
        groups: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        fan_in = in_channels // groups * kernel_size * kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_channels, in_channels // groups, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups)


class Linear(Conv2d):
    """Fully connected layer over N×F×1×1 vectors."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__(in_features, out_features, 1, rng)


class MLP(Module):
    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, alpha: float = 0.2):
        super().__init__()
        self.layers = ModuleList([Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])])
        self.alpha = alpha

    @property
    def head(self) -> Linear:
        return self.layers[len(self.layers) - 1]

    def forward(self, x: Tensor) -> Tensor:
        for index, layer in enumerate(self.layers):
            x = layer(x)
            if index < len(self.layers) - 1:
                x = leaky_relu(x, self.alpha)
        return x
