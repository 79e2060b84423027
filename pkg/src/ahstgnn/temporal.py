"""Temporal convolution module: three gated causal TCNs fused by an MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .init import glorot, zeros


@dataclass
class GatedTcnParams:
    W_t1: Tensor
    b_t1: Tensor
    W_t2: Tensor
    b_t2: Tensor
    dilation: int = 1

    def named(self) -> dict[str, Tensor]:
        return {"W_t1": self.W_t1, "b_t1": self.b_t1, "W_t2": self.W_t2, "b_t2": self.b_t2}


@dataclass
class TcmParams:
    recent: GatedTcnParams
    daily: GatedTcnParams
    weekly: GatedTcnParams
    W_mlp: Tensor
    b_mlp: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {}
        for comp in ("recent", "daily", "weekly"):
            for k, v in getattr(self, comp).named().items():
                out[f"{comp}.{k}"] = v
        out["W_mlp"] = self.W_mlp
        out["b_mlp"] = self.b_mlp
        return out


def init_gated_tcn(rng: np.random.Generator, c_in: int, c_out: int, k: int = 2, dilation: int = 1) -> GatedTcnParams:
    return GatedTcnParams(
        W_t1=glorot(rng, (k, c_in, c_out), fan_in=k * c_in),
        b_t1=zeros((c_out,)),
        W_t2=glorot(rng, (k, c_in, c_out), fan_in=k * c_in),
        b_t2=zeros((c_out,)),
        dilation=dilation,
    )


def init_tcm(rng: np.random.Generator, c_in: int, D: int, k: int = 2, dilation: int = 1) -> TcmParams:
    return TcmParams(
        recent=init_gated_tcn(rng, c_in, D, k, dilation),
        daily=init_gated_tcn(rng, c_in, D, k, dilation),
        weekly=init_gated_tcn(rng, c_in, D, k, dilation),
        W_mlp=glorot(rng, (3 * D, D)),
        b_mlp=zeros((D,)),
    )


def gated_tcn(H: Tensor, p: GatedTcnParams) -> Tensor:
    """tanh(conv(H; W_t1) + b_t1) * sigmoid(conv(H; W_t2) + b_t2), causal and length-preserving."""
    if p.W_t1.shape != p.W_t2.shape:
        raise DimensionError(f"filter {p.W_t1.shape} and gate {p.W_t2.shape} kernels differ")
    filt = ad.tanh(ad.dilated_causal_conv1d(H, p.W_t1, p.dilation) + p.b_t1)
    gate = ad.sigmoid(ad.dilated_causal_conv1d(H, p.W_t2, p.dilation) + p.b_t2)
    return filt * gate


def tcm_forward(H_R: Tensor, H_D: Tensor, H_W: Tensor, p: TcmParams):
    """Returns ``(H_T, H_R', H_D', H_W')``; the primed outputs feed the next block."""
    if not (H_R.shape[:3] == H_D.shape[:3] == H_W.shape[:3]):
        raise DimensionError(f"periodic inputs disagree: {H_R.shape}, {H_D.shape}, {H_W.shape}")
    r = gated_tcn(H_R, p.recent)
    d = gated_tcn(H_D, p.daily)
    w = gated_tcn(H_W, p.weekly)
    H_T = ad.relu(ad.concat([r, d, w], axis=-1) @ p.W_mlp + p.b_mlp)
    return H_T, r, d, w
