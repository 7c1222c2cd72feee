from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gsep.errors import DivergenceError, GsepError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads: dict[str, np.ndarray], opt: AdamState):
    """Bias-corrected Adam update, applied in place.

    ``params`` is either a :class:`NetworkParams` or a plain dict of arrays.
    Non-finite gradients raise before anything is modified.
    """
    tensors = params.tensor_dict() if hasattr(params, "tensor_dict") else params
    for name, g in grads.items():
        if name not in tensors:
            raise GsepError(f"gradient for unknown tensor {name!r}")
        if g.shape != tensors[name].shape:
            raise GsepError(f"gradient shape {g.shape} does not match {name} {tensors[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"diverged: non-finite gradient in {name}")

    opt.step_count += 1
    t = opt.step_count
    c1 = 1.0 - opt.beta1**t
    c2 = 1.0 - opt.beta2**t
    for name, g in grads.items():
        theta = tensors[name]
        m = opt.m.setdefault(name, np.zeros_like(theta))
        v = opt.v.setdefault(name, np.zeros_like(theta))
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        theta -= (opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)).astype(theta.dtype)
    return params, opt
