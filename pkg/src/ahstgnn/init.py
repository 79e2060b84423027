"""Parameter initialisers (all draw from an explicit numpy Generator)."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


def glorot(rng: np.random.Generator, shape, fan_in: int | None = None, fan_out: int | None = None) -> Tensor:
    fan_in = shape[-2] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)
