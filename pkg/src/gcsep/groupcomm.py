"""Group communication: split features into K groups, let the groups exchange
information through a small shared module, keep them separate afterwards."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import Module, RnnChain
from .errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass
class GroupedTensor:
    data: Tensor  # [..., K, M, *rest]
    groups: int
    group_size: int

    @property
    def n_features(self) -> int:
        return self.groups * self.group_size


def group_split(t: Tensor, groups: int, axis: int = 0) -> GroupedTensor:
    """Split feature ``axis`` into ``groups`` contiguous groups.

    Group ``i`` holds features ``[i*M, (i+1)*M)``. The feature axis is replaced
    by the pair ``(K, M)``.
    """
    axis = axis % t.ndim
    n = t.shape[axis]
    if groups < 1 or n % groups:
        raise ConfigError(f"number of groups K={groups} must divide feature size N={n}")
    m = n // groups
    shape = t.shape[:axis] + (groups, m) + t.shape[axis + 1:]
    return GroupedTensor(T.reshape(t, shape), groups, m)


def group_merge(g: GroupedTensor, axis: int = 0) -> Tensor:
    """Inverse of ``group_split``: concatenate the groups back along ``axis``."""
    shape = g.data.shape
    axis = axis % (len(shape) - 1)
    if shape[axis] != g.groups or shape[axis + 1] != g.group_size:
        raise DimensionError(
            f"grouped data {shape} does not carry (K={g.groups}, M={g.group_size}) at axis {axis}")
    merged = shape[:axis] + (g.groups * g.group_size,) + shape[axis + 2:]
    return T.reshape(g.data, merged)


class GroupComm(Module):
    """Shared inter-group BLSTM + FC + LN; its parameter count does not depend on K."""

    def __init__(self, group_size: int, hidden_dim: int, rng: np.random.Generator,
                 dual_bias: bool = True):
        self.chain = RnnChain(group_size, hidden_dim, rng, dual_bias)

    def __call__(self, g: GroupedTensor) -> GroupedTensor:
        return group_communicate(g, self.chain)


def group_communicate(g: GroupedTensor, chain: RnnChain) -> GroupedTensor:
    """Treat the K group vectors at each (position, block) as a length-K sequence.

    ``g.data`` is ``[..., K, M, 2T, S]``; the chain runs over K in natural group
    order, and its output is added back to the input groups.
    """
    x = g.data
    if x.ndim < 4 or x.shape[-4] != g.groups or x.shape[-3] != g.group_size:
        raise DimensionError(f"expected [..., K={g.groups}, M={g.group_size}, 2T, S], got {x.shape}")
    if g.group_size != chain.norm.dim:
        raise DimensionError(f"group size {g.group_size} != chain width {chain.norm.dim}")
    nd = x.ndim
    lead = list(range(nd - 4))
    perm = lead + [nd - 2, nd - 1, nd - 4, nd - 3]  # [..., 2T, S, K, M]
    y = chain(T.transpose(x, perm))
    out = x + T.transpose(y, list(np.argsort(perm)))
    return GroupedTensor(out, g.groups, g.group_size)
