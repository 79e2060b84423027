"""Node-level attention between the temporal and spatial branch outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .init import glorot


@dataclass
class StamParams:
    W_Q: Tensor  # [d, D]
    W_Kt: Tensor  # [D, D]
    W_Ks: Tensor  # [D, D]

    def named(self) -> dict[str, Tensor]:
        return {"W_Q": self.W_Q, "W_Kt": self.W_Kt, "W_Ks": self.W_Ks}


def init_stam(rng: np.random.Generator, d: int, D: int) -> StamParams:
    return StamParams(W_Q=glorot(rng, (d, D)), W_Kt=glorot(rng, (D, D)), W_Ks=glorot(rng, (D, D)))


def stam_forward(H_T: Tensor, H_S: Tensor, E_G: Tensor, p: StamParams, return_weights=False):
    """Per (sample, step, node) two-way softmax over temporal/spatial scores.

    The score of node i is the scaled inner product of its query (from the
    node embedding) with its own key at that step.
    """
    if H_T.shape != H_S.shape:
        raise DimensionError(f"STAM inputs differ: {H_T.shape} vs {H_S.shape}")
    N, D = H_T.shape[-2], H_T.shape[-1]
    if E_G.shape[0] != N:
        raise DimensionError(f"node embedding has {E_G.shape[0]} rows, inputs have {N} nodes")
    Q = E_G @ p.W_Q  # [N, D], broadcast over batch and time
    scale = 1.0 / math.sqrt(D)
    A_T = ad.sum(Q * (H_T @ p.W_Kt), axis=-1, keepdims=True) * scale
    A_S = ad.sum(Q * (H_S @ p.W_Ks), axis=-1, keepdims=True) * scale
    w = ad.softmax(ad.concat([A_T, A_S], axis=-1), axis=-1)
    att_T, att_S = w[..., 0:1], w[..., 1:2]
    H = att_S * H_S + att_T * H_T
    if return_weights:
        return H, att_T, att_S
    return H
