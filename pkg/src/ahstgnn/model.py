"""Stacked spatial-temporal blocks with skip connections and a two-layer output head."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .graph import (
    GateFusionParams,
    GatParams,
    SaglParams,
    adaptive_adjacency,
    dgl_forward,
    gate_fusion,
    init_gat,
    init_gate_fusion,
    init_sagl,
    row_normalize,
    sagl_forward,
)
from .init import glorot, zeros
from .stam import StamParams, init_stam, stam_forward
from .temporal import TcmParams, init_tcm, tcm_forward

ABLATIONS = ("full", "no_sagl", "no_dgl", "no_stam", "recently_only")
GAT_ACTIVATIONS = ("sigmoid", "elu", "relu", "tanh")


@dataclass(frozen=True)
class ModelConfig:
    N: int
    T: int = 12
    M: int = 12
    F: int = 1
    n_blocks: int = 4
    D: int = 32
    d: int = 10
    K: int = 4
    kernel_size: int = 2
    C: int = 256
    tcn_kernel: int = 2
    ablation: str = "full"
    gat_activation: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        for name in ("N", "T", "M", "F", "n_blocks", "D", "d", "K", "kernel_size", "C", "tcn_kernel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.N < 2:
            raise ConfigError("model.N must be >= 2")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"model.ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.gat_activation not in GAT_ACTIVATIONS:
            raise ConfigError(f"model.gat_activation must be one of {GAT_ACTIVATIONS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def structural_hash(self) -> str:
        """Hash of every field that shapes or wires parameters (all but the seed)."""
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class BlockParams:
    tcm: TcmParams
    sagl: SaglParams | None = None
    gat: GatParams | None = None
    gate: GateFusionParams | None = None
    stam: StamParams | None = None
    # second graph route used by the single-mechanism ablations
    sagl_dis: SaglParams | None = None
    gat_adp: GatParams | None = None

    def named(self) -> dict[str, Tensor]:
        out = {}
        for part in ("tcm", "sagl", "gat", "gate", "stam", "sagl_dis", "gat_adp"):
            sub = getattr(self, part)
            if sub is not None:
                out.update({f"{part}.{k}": v for k, v in sub.named().items()})
        return out


@dataclass
class ModelParams:
    E_G: Tensor
    blocks: list[BlockParams]
    W_f1: Tensor
    b_f1: Tensor
    W_f2: Tensor
    b_f2: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {"E_G": self.E_G}
        for i, blk in enumerate(self.blocks):
            out.update({f"block{i}.{k}": v for k, v in blk.named().items()})
        out.update({"out.W_f1": self.W_f1, "out.b_f1": self.b_f1, "out.W_f2": self.W_f2, "out.b_f2": self.b_f2})
        return out

    def zero_grad(self) -> None:
        for t in self.named().values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self.named().items():
            t.data = values[k].copy()

    def count(self) -> int:
        return sum(t.size for t in self.named().values())


def init_params(cfg: ModelConfig, rng: np.random.Generator | None = None) -> ModelParams:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    E_G = Tensor(rng.standard_normal((cfg.N, cfg.d)) / np.sqrt(cfg.d), requires_grad=True)
    blocks = []
    for l in range(cfg.n_blocks):
        c_in = cfg.F if l == 0 else cfg.D
        blk = BlockParams(tcm=init_tcm(rng, c_in, cfg.D, cfg.tcn_kernel, dilation=2**l))
        if cfg.ablation != "no_sagl":
            blk.sagl = init_sagl(rng, cfg.D, cfg.kernel_size)
        if cfg.ablation != "no_dgl":
            blk.gat = init_gat(rng, cfg.D, cfg.K)
        if cfg.ablation == "no_sagl":
            blk.gat_adp = init_gat(rng, cfg.D, cfg.K)
        elif cfg.ablation == "no_dgl":
            blk.sagl_dis = init_sagl(rng, cfg.D, cfg.kernel_size)
        else:
            blk.gate = init_gate_fusion(rng, cfg.D)
        if cfg.ablation != "no_stam":
            blk.stam = init_stam(rng, cfg.d, cfg.D)
        blocks.append(blk)
    return ModelParams(
        E_G=E_G,
        blocks=blocks,
        W_f1=glorot(rng, (cfg.T * cfg.D, cfg.C)),
        b_f1=zeros((cfg.C,)),
        W_f2=glorot(rng, (cfg.C, cfg.M * cfg.F)),
        b_f2=zeros((cfg.M * cfg.F,)),
    )


def spatial_forward(H_T: Tensor, A_adp: Tensor, A_dis: np.ndarray, blk: BlockParams, cfg: ModelConfig) -> Tensor:
    if cfg.ablation == "no_sagl":
        adp_mask = np.ones_like(A_adp.data)  # softmax rows are strictly positive
        return dgl_forward(H_T, adp_mask, blk.gat_adp, cfg.gat_activation) + dgl_forward(
            H_T, A_dis, blk.gat, cfg.gat_activation
        )
    if cfg.ablation == "no_dgl":
        return sagl_forward(H_T, A_adp, blk.sagl) + sagl_forward(H_T, row_normalize(A_dis), blk.sagl_dis)
    H_SG = sagl_forward(H_T, A_adp, blk.sagl)
    H_DG = dgl_forward(H_T, A_dis, blk.gat, cfg.gat_activation)
    return gate_fusion(H_SG, H_DG, blk.gate)


def forward(params: ModelParams, cfg: ModelConfig, x_r, x_d, x_w, A_dis: np.ndarray, return_hidden=False):
    """Predict ``[B, M, N, F]`` from periodic inputs ``[B, T, N, F]``.

    With ``return_hidden`` also returns the per-block outputs and their sum.
    """
    x_r, x_d, x_w = ad.as_tensor(x_r), ad.as_tensor(x_d), ad.as_tensor(x_w)
    expected = (cfg.T, cfg.N, cfg.F)
    for name, x in (("x_r", x_r), ("x_d", x_d), ("x_w", x_w)):
        if x.ndim != 4 or x.shape[1:] != expected:
            raise DimensionError(f"{name} has shape {x.shape}; config expects [B, {cfg.T}, {cfg.N}, {cfg.F}]")
    if np.shape(A_dis) != (cfg.N, cfg.N):
        raise DimensionError(f"distance adjacency {np.shape(A_dis)} does not match N={cfg.N}")
    if cfg.ablation == "recently_only":
        x_d = ad.Tensor(np.zeros(x_d.shape))
        x_w = ad.Tensor(np.zeros(x_w.shape))

    A_adp = adaptive_adjacency(params.E_G)
    h_r, h_d, h_w = x_r, x_d, x_w
    block_out = []
    H_out = None
    for blk in params.blocks:
        H_T, h_r, h_d, h_w = tcm_forward(h_r, h_d, h_w, blk.tcm)
        H_S = spatial_forward(H_T, A_adp, A_dis, blk, cfg)
        H = H_S if blk.stam is None else stam_forward(H_T, H_S, params.E_G, blk.stam)
        block_out.append(H)
        H_out = H if H_out is None else H_out + H

    B = x_r.shape[0]
    h = ad.reshape(ad.transpose(H_out, (0, 2, 1, 3)), (B, cfg.N, cfg.T * cfg.D))
    h = ad.relu(h @ params.W_f1 + params.b_f1) @ params.W_f2 + params.b_f2
    y = ad.transpose(ad.reshape(h, (B, cfg.N, cfg.M, cfg.F)), (0, 2, 1, 3))
    if return_hidden:
        return y, block_out, H_out
    return y


def mae_loss(y_hat: Tensor, y) -> Tensor:
    y = ad.as_tensor(y)
    if y_hat.shape != y.shape:
        raise DimensionError(f"prediction {y_hat.shape} and target {y.shape} differ")
    return ad.mean(ad.absolute(y_hat - y))
