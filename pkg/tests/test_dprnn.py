import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcsep import tensor as T
from gcsep.dprnn import (DprnnBlock, SegmentedTensor, default_hop, inter_block_pass,
                         intra_block_pass, n_blocks, overlap_add, segment)
from gcsep.errors import DimensionError
from gcsep.layers import RnnChain
from gcsep.tensor import Tensor

from helpers import chain_oracle, gradcheck, zero_fc


def test_segment_example():
    seg = segment(Tensor([[1.0, 2.0, 3.0, 4.0]]), 2)
    assert seg.n_blocks == 3 and seg.block_len == 4
    blocks = seg.data.data[0].T  # [S, 2T]
    assert blocks.tolist() == [[0, 0, 1, 2], [1, 2, 3, 4], [3, 4, 0, 0]]


def test_segment_length_equal_hop():
    assert segment(Tensor(np.ones((2, 5))), 5).n_blocks == 2


def test_overlap_add_hand_case():
    seg = segment(Tensor([[1.0, 2.0, 3.0, 4.0]]), 2)
    assert overlap_add(seg).data.tolist() == [[2.0, 4.0, 6.0, 8.0]]


def test_overlap_add_of_zero_blocks():
    seg = SegmentedTensor(Tensor(np.zeros((3, 4, 4))), 2, 5)
    assert not overlap_add(seg).data.any()


def test_overlap_add_rejects_inconsistent_metadata():
    with pytest.raises(DimensionError):
        overlap_add(SegmentedTensor(Tensor(np.zeros((3, 4, 4))), 2, 9))
    with pytest.raises(DimensionError):
        overlap_add(SegmentedTensor(Tensor(np.zeros((3, 5, 4))), 2, 5))


def test_default_hop():
    assert default_hop(3999) == math.ceil(math.sqrt(3999 / 2)) == 45
    assert default_hop(1) == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(1, 12), st.integers(1, 3))
def test_round_trip_doubles(length, hop, feat):
    h = np.random.default_rng(length * 13 + hop).standard_normal((feat, length))
    seg = segment(Tensor(h), hop)
    assert seg.n_blocks == -(-length // hop) + 1 == n_blocks(length, hop)
    np.testing.assert_array_equal(overlap_add(seg).data, 2 * h)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(1, 12))
def test_every_frame_in_exactly_two_blocks(length, hop):
    codes = np.arange(1, length + 1, dtype=np.float64)[None]
    blocks = segment(Tensor(codes), hop).data.data[0]
    counts = np.bincount(blocks.astype(int).ravel(), minlength=length + 1)[1:]
    assert np.all(counts == 2)


def _seg(rng, feat=3, hop=2, length=7, lead=()):
    return segment(Tensor(rng.standard_normal(lead + (feat, length))), hop)


@pytest.mark.parametrize("pass_fn", [intra_block_pass, inter_block_pass])
def test_zero_fc_pass_is_identity(pass_fn):
    rng = np.random.default_rng(0)
    chain = RnnChain(3, 4, rng)
    zero_fc(chain)
    seg = _seg(rng)
    np.testing.assert_array_equal(pass_fn(seg, chain).data.data, seg.data.data)


def test_intra_pass_is_per_block_chain():
    rng = np.random.default_rng(1)
    chain = RnnChain(3, 2, rng)
    seg = _seg(rng)
    out = intra_block_pass(seg, chain).data.data
    x = seg.data.data
    for s in range(seg.n_blocks):
        expect = x[:, :, s] + chain_oracle(x[:, :, s].T, chain).T
        np.testing.assert_allclose(out[:, :, s], expect, atol=1e-12)


def test_inter_pass_runs_across_blocks():
    rng = np.random.default_rng(2)
    chain = RnnChain(3, 2, rng)
    seg = _seg(rng)
    out = inter_block_pass(seg, chain).data.data
    x = seg.data.data
    for p in range(seg.block_len):
        expect = x[:, p, :] + chain_oracle(x[:, p, :].T, chain).T
        np.testing.assert_allclose(out[:, p, :], expect, atol=1e-12)


def test_single_block_degenerate():
    rng = np.random.default_rng(3)
    chain = RnnChain(2, 3, rng)
    data = rng.standard_normal((2, 4, 1))
    seg = SegmentedTensor(Tensor(data), 2, 1)
    out = intra_block_pass(seg, chain).data.data[:, :, 0]
    np.testing.assert_allclose(out, data[:, :, 0] + chain_oracle(data[:, :, 0].T, chain).T,
                               atol=1e-12)
    inter = inter_block_pass(seg, chain).data.data
    for p in range(4):
        np.testing.assert_allclose(inter[:, p, :], data[:, p, :] + chain_oracle(data[:, p, :].T, chain).T,
                                   atol=1e-12)


def test_inter_equals_transposed_intra():
    rng = np.random.default_rng(4)
    chain = RnnChain(3, 2, rng)
    seg = _seg(rng, lead=(2,))
    inter = inter_block_pass(seg, chain).data.data
    swapped = SegmentedTensor(T.swapaxes(seg.data, -1, -2), seg.hop, seg.length)
    via_intra = np.swapaxes(intra_block_pass(swapped, chain).data.data, -1, -2)
    np.testing.assert_allclose(inter, via_intra, atol=1e-13)


def test_block_order_does_not_matter_for_intra():
    rng = np.random.default_rng(5)
    chain = RnnChain(3, 2, rng)
    seg = _seg(rng, length=11)
    perm = rng.permutation(seg.n_blocks)
    shuffled = SegmentedTensor(Tensor(seg.data.data[..., perm]), seg.hop, seg.length)
    a = intra_block_pass(seg, chain).data.data[..., perm]
    b = intra_block_pass(shuffled, chain).data.data
    np.testing.assert_array_equal(a, b)


def test_pass_rejects_wrong_width():
    rng = np.random.default_rng(6)
    with pytest.raises(DimensionError):
        intra_block_pass(_seg(rng, feat=4), RnnChain(3, 2, rng))


def test_block_gradient():
    rng = np.random.default_rng(7)
    block = DprnnBlock(2, 3, rng)
    x = Tensor(rng.standard_normal((2, 5)), requires_grad=True)
    w = Tensor(rng.standard_normal((2, 5)))
    def build():
        return T.sum_(overlap_add(block(segment(x, 2))) * w)
    assert gradcheck(build, [x] + block.parameters()) < 1e-4


def test_causal_inter_block_ignores_future_blocks():
    rng = np.random.default_rng(8)
    block = DprnnBlock(2, 3, rng, causal_inter=True)
    data = rng.standard_normal((2, 4, 5))
    changed = data.copy()
    changed[..., -1] += 1.0
    inter = lambda d: inter_block_pass(SegmentedTensor(Tensor(d), 2, 8), block.inter).data.data
    np.testing.assert_array_equal(inter(data)[..., :-1], inter(changed)[..., :-1])
