from typing import Callable, Optional, Sequence, Union

import numpy as np

from .tensor import Tensor, no_grad


def _numeric(fn: Callable[[], Tensor], flat: np.ndarray, indices: np.ndarray, eps: float) -> np.ndarray:
    numeric = np.empty(len(indices))
    with no_grad():
        for n, i in enumerate(indices):
            original = flat[i]
            flat[i] = original + eps
            plus = fn().item()
            flat[i] = original - eps
            minus = fn().item()
            flat[i] = original
            numeric[n] = (plus - minus) / (2 * eps)
    return numeric


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: Union[float, Sequence[float]] = 1e-3,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare analytic gradients with central finite differences.

    `fn` rebuilds a scalar loss from `tensors` on every call. When `samples` is
    set, only that many randomly chosen coordinates per tensor are perturbed.
    `eps` may list several step sizes; each tensor then keeps its best
    agreement, so round-off at small steps and kink crossings at large steps
    are told apart from real errors. Returns the worst normwise relative error
    over all tensors.
    """
    steps = [eps] if np.isscalar(eps) else list(eps)
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.zero_grad()
    fn().backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64) for t in tensors]
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        if samples is None or samples >= flat.size:
            indices = np.arange(flat.size)
        else:
            indices = np.sort(rng.choice(flat.size, size=samples, replace=False))
        chosen = grad.reshape(-1)[indices]
        errors = []
        for step in steps:
            numeric = _numeric(fn, flat, indices, step)
            scale = max(np.linalg.norm(chosen), np.linalg.norm(numeric), 1e-12)
            errors.append(float(np.linalg.norm(chosen - numeric) / scale))
        worst = max(worst, min(errors))
    return worst
