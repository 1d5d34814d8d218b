"""Dual-path processing: segmentation, intra/inter-block passes, overlap-add.

Layouts follow the feature-first convention: a frame sequence is
``[..., N, L]`` and a segmented tensor is ``[..., N, 2T, S]``. Any leading
axes (batch, groups) are carried through untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import Module, RnnChain
from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class SegmentedTensor:
    data: Tensor  # [..., N, 2T, S]
    hop: int
    length: int  # original frame count

    @property
    def n_blocks(self) -> int:
        return self.data.shape[-1]

    @property
    def block_len(self) -> int:
        return self.data.shape[-2]


def default_hop(n_frames: int) -> int:
    """Block half-length giving roughly as many blocks as block positions."""
    return max(1, math.ceil(math.sqrt(n_frames / 2)))


def n_blocks(n_frames: int, hop: int) -> int:
    return -(-n_frames // hop) + 1


def segment(h: Tensor, hop: int) -> SegmentedTensor:
    """Cut ``[..., N, L]`` into 50%-overlapping blocks of length ``2*hop``.

    ``hop`` zero frames are prepended and enough appended that every original
    frame falls in exactly two blocks.
    """
    if hop < 1:
        raise ContractError("block hop must be >= 1")
    if h.ndim < 2:
        raise DimensionError(f"segment expects [..., N, L], got {h.shape}")
    length = h.shape[-1]
    if length < 1:
        raise ContractError("cannot segment an empty sequence")
    rest = (hop - length % hop) % hop
    padded = T.pad_last(h, hop, hop + rest)  # [..., N, (S+1)*hop]
    n_seg = (length + rest) // hop + 1
    chunks = T.reshape(padded, h.shape[:-1] + (n_seg + 1, hop))
    blocks = T.concat([chunks[..., :-1, :], chunks[..., 1:, :]], axis=-1)  # [..., N, S, 2T]
    return SegmentedTensor(T.swapaxes(blocks, -1, -2), hop, length)


def overlap_add(seg: SegmentedTensor) -> Tensor:
    """Sum blocks back at hops of T and drop the padding: ``[..., N, L]``.

    No 1/2 rescaling: ``overlap_add(segment(h)) == 2 * h``.
    """
    data, hop = seg.data, seg.hop
    if data.ndim < 3 or data.shape[-2] != 2 * hop:
        raise DimensionError(f"segmented data {data.shape} inconsistent with hop {hop}")
    n_seg = data.shape[-1]
    if n_blocks(seg.length, hop) != n_seg:
        raise DimensionError(
            f"{n_seg} blocks inconsistent with length {seg.length} and hop {hop}")
    blocks = T.swapaxes(data, -1, -2)  # [..., N, S, 2T]
    zero = T.zeros(blocks.shape[:-2] + (1, hop), dtype=data.data.dtype)
    first = T.concat([blocks[..., :hop], zero], axis=-2)
    second = T.concat([zero, blocks[..., hop:]], axis=-2)
    chunks = first + second  # [..., N, S+1, T]
    flat = T.reshape(chunks, chunks.shape[:-2] + ((n_seg + 1) * hop,))
    return flat[..., hop:hop + seg.length]


def _apply_along(x: Tensor, chain: RnnChain, seq_axis: int) -> Tensor:
    """Run ``chain`` along ``seq_axis`` of ``[..., N, 2T, S]`` and add the residual."""
    # move features last and the sequence axis just before it
    nd = x.ndim
    feat, other = nd - 3, (nd - 1 if seq_axis == nd - 2 else nd - 2)
    lead = list(range(nd - 3))
    perm = lead + [other, seq_axis, feat]
    y = chain(T.transpose(x, perm))
    return x + T.transpose(y, list(np.argsort(perm)))


def intra_block_pass(seg: SegmentedTensor, chain: RnnChain) -> SegmentedTensor:
    """BLSTM+FC+LN over the 2T positions of every block, plus residual."""
    if seg.data.shape[-3] != chain.norm.dim:
        raise DimensionError(
            f"feature dim {seg.data.shape[-3]} != chain width {chain.norm.dim}")
    out = _apply_along(seg.data, chain, seg.data.ndim - 2)
    return SegmentedTensor(out, seg.hop, seg.length)


def inter_block_pass(seg: SegmentedTensor, chain: RnnChain) -> SegmentedTensor:
    """BLSTM+FC+LN across the S blocks at every intra-block position, plus residual."""
    if seg.data.shape[-3] != chain.norm.dim:
        raise DimensionError(
            f"feature dim {seg.data.shape[-3]} != chain width {chain.norm.dim}")
    out = _apply_along(seg.data, chain, seg.data.ndim - 1)
    return SegmentedTensor(out, seg.hop, seg.length)


class DprnnBlock(Module):
    def __init__(self, feat_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dual_bias: bool = True, causal_inter: bool = False):
        self.intra = RnnChain(feat_dim, hidden_dim, rng, dual_bias)
        # the causal variant only looks at past blocks
        self.inter = RnnChain(feat_dim, hidden_dim, rng, dual_bias, bidirectional=not causal_inter)

    def __call__(self, seg: SegmentedTensor) -> SegmentedTensor:
        return inter_block_pass(intra_block_pass(seg, self.intra), self.inter)
