"""Adaptive hybrid graph learning: adaptive-adjacency GCN, distance-graph GAT, gate fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError
from .init import glorot, zeros


@dataclass
class SaglParams:
    Theta: list[Tensor]

    def named(self) -> dict[str, Tensor]:
        return {f"Theta{i}": t for i, t in enumerate(self.Theta)}


@dataclass
class GatParams:
    W: Tensor  # [K, D, D], one transform per head
    a: Tensor  # [K, 2D], attention vector per head

    @property
    def heads(self) -> int:
        return self.W.shape[0]

    def named(self) -> dict[str, Tensor]:
        return {"W": self.W, "a": self.a}


@dataclass
class GateFusionParams:
    W_g1: Tensor
    W_g2: Tensor
    b_g: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"W_g1": self.W_g1, "W_g2": self.W_g2, "b_g": self.b_g}


def init_sagl(rng: np.random.Generator, D: int, kernel_size: int = 2) -> SaglParams:
    if kernel_size < 1:
        raise ValueError("kernel_size must be >= 1")
    return SaglParams(Theta=[glorot(rng, (D, D)) for _ in range(kernel_size)])


def init_gat(rng: np.random.Generator, D: int, K: int = 4) -> GatParams:
    if K < 1:
        raise ValueError("need at least one attention head")
    return GatParams(W=glorot(rng, (K, D, D)), a=glorot(rng, (K, 2 * D), fan_in=2 * D, fan_out=1))


def init_gate_fusion(rng: np.random.Generator, D: int) -> GateFusionParams:
    return GateFusionParams(W_g1=glorot(rng, (D, D)), W_g2=glorot(rng, (D, D)), b_g=zeros((D,)))


def adaptive_adjacency(E_G: Tensor) -> Tensor:
    """Row-stochastic softmax(ReLU(E_G E_G^T))."""
    if E_G.shape[0] < 2:
        raise ContractError("adaptive adjacency needs at least two nodes")
    return ad.softmax(ad.relu(E_G @ ad.transpose(E_G)), axis=-1)


def row_normalize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1, keepdims=True)
    if (deg <= 0).any():
        raise ContractError("adjacency has a node with no neighbours")
    return A / deg


def sagl_forward(H_T: Tensor, A, p: SaglParams) -> Tensor:
    """Hops ``H <- (I + A) H Theta_i`` over the node axis, ReLU between hops."""
    A = ad.as_tensor(A)
    N = H_T.shape[-2]
    if A.shape != (N, N):
        raise DimensionError(f"adjacency {A.shape} does not match {N} nodes in {H_T.shape}")
    prop = A + np.eye(N)
    H = H_T
    for i, theta in enumerate(p.Theta):
        H = (prop @ H) @ theta
        if i < len(p.Theta) - 1:
            H = ad.relu(H)
    return H


def dgl_forward(H_T: Tensor, A_dis: np.ndarray, p: GatParams, activation: str = "sigmoid", return_attention=False):
    """Multi-head attention restricted to neighbours ``A_dis > 0``, averaged over heads.

    Attention is computed independently per time step with parameters
    shared over time.
    """
    B, T, N, D = H_T.shape
    A_dis = np.asarray(A_dis)
    if A_dis.shape != (N, N):
        raise DimensionError(f"distance adjacency {A_dis.shape} does not match {N} nodes")
    if p.W.shape[1:] != (D, D) or p.a.shape != (p.heads, 2 * D):
        raise DimensionError(f"GAT params {p.W.shape}/{p.a.shape} do not fit width {D}")
    mask = A_dis > 0
    if not mask.any(axis=1).all():
        isolated = np.flatnonzero(~mask.any(axis=1)).tolist()
        raise ContractError(f"nodes {isolated} have no neighbours; attention cannot be normalised")
    K = p.heads
    # every head in one product: W_cat is [D, K*D]
    W_cat = ad.reshape(ad.transpose(p.W, (1, 0, 2)), (D, K * D))
    Wh = ad.transpose(ad.reshape(H_T @ W_cat, (B, T, N, K, D)), (0, 1, 3, 2, 4))  # [B, T, K, N, D]
    # a^T [W h_i || W h_j] = h_i . (W a_src) + h_j . (W a_dst)
    a_src = ad.reshape(p.a[:, :D], (K, D, 1))
    a_dst = ad.reshape(p.a[:, D:], (K, D, 1))
    v_src = ad.transpose(ad.reshape(p.W @ a_src, (K, D)))  # [D, K]
    v_dst = ad.transpose(ad.reshape(p.W @ a_dst, (K, D)))
    s_src = ad.reshape(H_T @ v_src, (B, T, N, K, 1))
    s_dst = ad.reshape(ad.transpose(H_T @ v_dst, (0, 1, 3, 2)), (B, T, 1, K, N))
    # scores laid out [B, T, i, K, j] so the head mean folds into one product
    att = ad.masked_softmax(ad.leaky_relu(s_src + s_dst), mask[:, None, :], axis=-1)
    agg = ad.reshape(att, (B, T, N, K * N)) @ ad.reshape(Wh, (B, T, K * N, D))
    out = ad.activation(activation, agg * (1.0 / K))
    if return_attention:
        return out, ad.transpose(att, (0, 1, 3, 2, 4))  # [B, T, K, N, N]
    return out


def gate_fusion(H_SG: Tensor, H_DG: Tensor, p: GateFusionParams) -> Tensor:
    """gate * H_SG + (1 - gate) * H_DG with gate = sigmoid(H_SG W_g1 + H_DG W_g2 + b_g)."""
    if H_SG.shape != H_DG.shape:
        raise DimensionError(f"gate fusion inputs differ: {H_SG.shape} vs {H_DG.shape}")
    gate = ad.sigmoid(H_SG @ p.W_g1 + H_DG @ p.W_g2 + p.b_g)
    # same convex combination, written so equal inputs pass through exactly
    return H_DG + gate * (H_SG - H_DG)
