"""GroupComm-DPRNN-TasNet: encoder, dual-path separator, masks, decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .dprnn import DprnnBlock, SegmentedTensor, default_hop, overlap_add, segment
from .errors import ConfigError, ContractError, DimensionError
from .groupcomm import GroupComm, GroupedTensor, group_merge, group_split
from .layers import LayerNorm, Linear, Module, PReLU
from .tensor import Tensor


@dataclass
class ModelConfig:
    """Model hyperparameters.

    ``K`` groups of size ``M`` (``K*M == N``). With ``K == 1`` the model is the
    DPRNN baseline and ``H_i`` is the bottleneck width. ``H_o`` is the hidden
    size of each LSTM direction. ``block_hop`` of ``None`` picks
    ``ceil(sqrt(frames / 2))`` per input. ``causal_inter`` makes the
    inter-block LSTM forward-only.
    """

    K: int = 1
    M: int = 128
    N: int = 128
    H_i: int = 64
    H_o: int = 128
    depth_L: int = 6
    window: int = 32
    stride: int = 16
    n_spk: int = 2
    sample_rate: int = 16000
    block_hop: int | None = None
    dual_bias: bool = True
    causal_inter: bool = False
    init_seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def baseline(self) -> bool:
        return self.K == 1

    @property
    def feat_dim(self) -> int:
        """Width of the features the dual-path blocks operate on."""
        return self.H_i if self.baseline else self.M

    def validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("block_hop",) and value is None:
                continue
            if f.name in ("dual_bias", "causal_inter", "init_seed"):
                continue
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{f.name} must be a positive integer, got {value!r}")
        if self.K > 1:
            if self.K * self.M != self.N:
                raise ConfigError(f"K*M must equal N (K={self.K}, M={self.M}, N={self.N})")
            if self.H_i != self.M:
                raise ConfigError(f"H_i must equal M when K>1 (H_i={self.H_i}, M={self.M})")
        if self.stride > self.window:
            raise ConfigError(f"stride ({self.stride}) larger than window ({self.window})")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config key(s): {sorted(unknown)}")
        return cls(**d)


def _kernels(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class SeparatorModel(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.init_seed)
        self.encoder = _kernels(rng, (cfg.N, 1, cfg.window), cfg.window)
        self.input_norm = LayerNorm(cfg.N)
        if cfg.baseline:
            self.bottleneck = Linear(cfg.N, cfg.H_i, rng)
        else:
            # one GroupComm module per block, shared by all positions
            self.groupcomm = [GroupComm(cfg.M, cfg.H_o, rng, cfg.dual_bias)
                              for _ in range(cfg.depth_L)]
        # DPRNN blocks are shared across groups (groups ride along as a batch axis)
        self.blocks = [DprnnBlock(cfg.feat_dim, cfg.H_o, rng, cfg.dual_bias, cfg.causal_inter)
                       for _ in range(cfg.depth_L)]
        self.mask_act = PReLU()
        if cfg.baseline:
            self.mask = Linear(cfg.H_i, cfg.n_spk * cfg.N, rng)
        else:
            self.mask = Linear(cfg.M, cfg.n_spk * cfg.M, rng)
        self.decoder = _kernels(rng, (cfg.N, 1, cfg.window), cfg.N * cfg.window)

    # -- pipeline stages ---------------------------------------------------
    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.cfg.window) // self.cfg.stride + 1

    def encode(self, wave: Tensor) -> Tensor:
        """[..., L_samp] -> [..., N, L_frames] (linear, no activation)."""
        if wave.shape[-1] < self.cfg.window:
            raise ContractError(
                f"input of {wave.shape[-1]} samples is shorter than the {self.cfg.window}-sample window")
        x = T.reshape(wave, wave.shape[:-1] + (1, wave.shape[-1]))
        return T.conv1d(x, self.encoder, self.cfg.stride)

    def separate_features(self, enc: Tensor) -> Tensor:
        """Run the dual-path stack on encoder output; returns [..., feat, L_frames]."""
        cfg = self.cfg
        n_frames = enc.shape[-1]
        hop = cfg.block_hop or default_hop(n_frames)
        x = T.swapaxes(self.input_norm(T.swapaxes(enc, -1, -2)), -1, -2)
        if cfg.baseline:
            x = T.swapaxes(self.bottleneck(T.swapaxes(x, -1, -2)), -1, -2)
            seg = segment(x, hop)
            for block in self.blocks:
                seg = block(seg)
            return overlap_add(seg)

        grouped = group_split(x, cfg.K, axis=-2)  # [..., K, M, L]
        seg = segment(grouped.data, hop)  # [..., K, M, 2T, S]
        for gc, block in zip(self.groupcomm, self.blocks):
            comm = gc(GroupedTensor(seg.data, cfg.K, cfg.M))
            seg = block(SegmentedTensor(comm.data, seg.hop, seg.length))
        return group_merge(GroupedTensor(overlap_add(seg), cfg.K, cfg.M), axis=-2)

    def estimate_masks(self, feats: Tensor) -> Tensor:
        """[..., feat, L] -> nonnegative masks [..., n_spk, N, L]."""
        cfg = self.cfg
        n_frames = feats.shape[-1]
        lead = feats.shape[:-2]
        x = self.mask_act(T.swapaxes(feats, -1, -2))  # [..., L, feat]
        if cfg.baseline:
            if x.shape[-1] != cfg.H_i:
                raise DimensionError(f"mask input width {x.shape[-1]} != {cfg.H_i}")
            m = T.relu(self.mask(x))  # [..., L, n_spk*N]
            m = T.reshape(m, lead + (n_frames, cfg.n_spk, cfg.N))
            return T.transpose(m, _perm(len(lead), [1, 2, 0]))
        if x.shape[-1] != cfg.N:
            raise DimensionError(f"mask input width {x.shape[-1]} != {cfg.N}")
        x = T.reshape(x, lead + (n_frames, cfg.K, cfg.M))
        m = T.relu(self.mask(x))  # same layer for every group
        m = T.reshape(m, lead + (n_frames, cfg.K, cfg.n_spk, cfg.M))
        m = T.transpose(m, _perm(len(lead), [2, 1, 3, 0]))  # [..., n_spk, K, M, L]
        return T.reshape(m, lead + (cfg.n_spk, cfg.N, n_frames))

    def decode(self, masked: Tensor, n_samples: int) -> Tensor:
        """[..., n_spk, N, L] -> [..., n_spk, n_samples]; one decoder for all speakers."""
        out = T.conv1d_transpose(masked, self.decoder, self.cfg.stride)  # [..., n_spk, 1, L']
        out = T.reshape(out, out.shape[:-2] + (out.shape[-1],))
        produced = out.shape[-1]
        if produced > n_samples:
            return out[..., :n_samples]
        if produced < n_samples:
            return T.pad_last(out, 0, n_samples - produced)
        return out

    def __call__(self, wave) -> Tensor:
        return separate(wave, self)


def _perm(n_lead: int, tail: list[int]) -> list[int]:
    return list(range(n_lead)) + [n_lead + t for t in tail]


def separate(wave, model: SeparatorModel) -> Tensor:
    """Mixture ``[..., L_samp]`` -> per-speaker estimates ``[..., n_spk, L_samp]``."""
    wave = wave if isinstance(wave, Tensor) else Tensor(wave, dtype=model.dtype)
    n_samples = wave.shape[-1]
    enc = model.encode(wave)  # [..., N, L]
    masks = model.estimate_masks(model.separate_features(enc))
    lead = enc.shape[:-2]
    enc_b = T.reshape(enc, lead + (1,) + enc.shape[-2:])
    masked = masks * _expand_speakers(enc_b, model.cfg.n_spk)
    return model.decode(masked, n_samples)


def _expand_speakers(enc_b: Tensor, n_spk: int) -> Tensor:
    # explicit copy along the speaker axis; broadcasting is leading-dims only
    return T.concat([enc_b] * n_spk, axis=-3)
