import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcsep import layers, profiler
from gcsep import tensor as T
from gcsep.errors import ConfigError
from gcsep.layers import count_params
from gcsep.profiler import (TABLE2, count_model_macs, count_model_params, profile, sweep,
                            table2_sweep, to_csv, to_text)
from gcsep.separator import ModelConfig, SeparatorModel, separate
from gcsep.tensor import no_grad


@pytest.mark.parametrize("preset", TABLE2, ids=[p.name for p in TABLE2])
def test_analytic_count_equals_constructed_model(preset):
    cfg = preset.config()
    assert count_model_params(cfg) == count_params(SeparatorModel(cfg))


@pytest.mark.parametrize("preset", TABLE2, ids=[p.name for p in TABLE2])
def test_table_values(preset):
    cfg = preset.config()
    assert count_model_params(cfg) == pytest.approx(preset.reported_params, rel=0.03)
    assert count_model_macs(cfg, 4.0) == pytest.approx(preset.reported_macs, rel=0.10)


def test_reference_examples():
    base = ModelConfig(K=1, N=128, H_i=64, H_o=128, depth_L=6)
    assert count_model_params(base) == pytest.approx(2.6e6, rel=0.03)
    assert count_model_macs(base, 4.0) == pytest.approx(22.1e9, rel=0.10)
    k16 = ModelConfig(K=16, M=8, N=128, H_i=8, H_o=16, depth_L=6)
    assert count_model_params(k16) == pytest.approx(73.5e3, rel=0.03)
    assert count_model_macs(k16, 4.0) == pytest.approx(9.6e9, rel=0.10)
    k32 = ModelConfig(K=32, M=4, N=128, H_i=4, H_o=8, depth_L=6)
    assert count_model_params(k32) == pytest.approx(26.0e3, rel=0.03)


def test_size_ratios():
    rows = {r["name"]: r for r in table2_sweep()}
    assert rows["GC-K4-L4"]["params_ratio"] == pytest.approx(3.9, rel=0.05)
    assert rows["GC-K16-M8-L6"]["params_ratio"] == pytest.approx(35.6, rel=0.05)


@pytest.mark.parametrize("k", [4, 8])
def test_group_scaling_approaches_k_squared(k):
    # the K=2 grid row is the full-width reference; dividing M and H_o by s shrinks it ~s^2
    ref = ModelConfig(K=2, M=64, N=128, H_i=64, H_o=128, depth_L=4)
    s = k // 2
    small = ModelConfig(K=k, M=64 // s, N=128, H_i=64 // s, H_o=128 // s, depth_L=4)
    ratio = count_model_params(ref) / count_model_params(small)
    assert ratio == pytest.approx(s * s, rel=0.15)
    assert ratio <= s * s


def test_block_counts_scale_exactly_without_fixed_costs():
    # blocks alone: biases shrink only linearly, so the ratio sits just under s^2
    for s in (2, 4, 8):
        big = profiler.chain_params(256, 256, 2)
        small = profiler.chain_params(256 // s, 256 // s, 2)
        assert 0.95 * s * s < big / small <= s * s


@pytest.mark.parametrize("preset", TABLE2, ids=[p.name for p in TABLE2])
def test_macs_double_from_four_to_eight_seconds(preset):
    cfg = preset.config()
    assert count_model_macs(cfg, 8.0) / count_model_macs(cfg, 4.0) == pytest.approx(2.0, rel=0.01)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TABLE2), st.floats(0.5, 16.0))
def test_macs_nearly_linear_at_any_duration(preset, seconds):
    # segment padding adds ~2T/F with T ~ sqrt(F), so short clips drift a little
    cfg = preset.config()
    one, two = count_model_macs(cfg, seconds), count_model_macs(cfg, 2 * seconds)
    assert two / one == pytest.approx(2.0, rel=0.03)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(TABLE2), st.integers(4, 50))
def test_macs_nearly_independent_of_block_hop(preset, hop):
    default = count_model_macs(preset.config(), 4.0)
    assert count_model_macs(preset.config(block_hop=hop), 4.0) == pytest.approx(default, rel=0.02)


def test_totals_equal_breakdown():
    for preset in TABLE2:
        rep = profile(preset.config(), 4.0)
        assert rep.total_params == sum(p for _, p, _ in rep.breakdown)
        assert rep.total_macs == sum(m for _, _, m in rep.breakdown)
        assert rep == profile(preset.config(), 4.0)


def test_causal_variant_is_smaller_and_still_exact():
    cfg = ModelConfig(K=4, M=8, N=32, H_i=8, H_o=16, depth_L=2, causal_inter=True)
    assert count_model_params(cfg) == count_params(SeparatorModel(cfg))
    full = ModelConfig(K=4, M=8, N=32, H_i=8, H_o=16, depth_L=2)
    assert count_model_params(cfg) < count_model_params(full)
    assert count_model_macs(cfg) < count_model_macs(full)


def test_too_short_duration_rejected():
    with pytest.raises(ConfigError):
        count_model_macs(ModelConfig(), 0.001)


# -- constructive MAC oracle -------------------------------------------------------

class _Counter:
    def __init__(self):
        self.macs = 0


def _instrument(monkeypatch, counter):
    lstm_call, linear_call = layers.Lstm.__call__, layers.Linear.__call__
    conv, conv_t = T.conv1d, T.conv1d_transpose

    def lstm(self, seq, reverse=False):
        if seq.ndim > 2:  # 2-D inputs re-enter with a batch axis
            steps = int(np.prod(seq.shape[:-1]))
            n_bias = 2 if self.dual_bias else 1
            h, i = self.hidden_dim, self.input_dim
            counter.macs += steps * (4 * h * (i + h) + 4 * h * n_bias + 8 * h)
        return lstm_call(self, seq, reverse)

    def linear(self, x):
        counter.macs += int(np.prod(x.shape[:-1])) * self.in_dim * self.out_dim
        return linear_call(self, x)

    def conv1d(x, k, stride=1):
        out = conv(x, k, stride)
        counter.macs += out.size * k.shape[1] * k.shape[2]
        return out

    def conv1d_transpose(x, k, stride=1):
        out = conv_t(x, k, stride)
        counter.macs += out.size * k.shape[0] * k.shape[2]
        return out

    monkeypatch.setattr(layers.Lstm, "__call__", lstm)
    monkeypatch.setattr(layers.Linear, "__call__", linear)
    monkeypatch.setattr(T, "conv1d", conv1d)
    monkeypatch.setattr(T, "conv1d_transpose", conv1d_transpose)


@pytest.mark.parametrize("kw", [
    dict(K=1, M=16, N=16, H_i=4, H_o=6, depth_L=2),
    dict(K=4, M=4, N=16, H_i=4, H_o=6, depth_L=2),
    dict(K=4, M=4, N=16, H_i=4, H_o=6, depth_L=1, block_hop=7),
    dict(K=2, M=4, N=8, H_i=4, H_o=5, depth_L=1, dual_bias=False, causal_inter=True),
])
def test_analytic_macs_equal_instrumented_forward(monkeypatch, kw):
    cfg = ModelConfig(**kw)
    model = SeparatorModel(cfg)
    counter = _Counter()
    _instrument(monkeypatch, counter)
    seconds = 0.05
    with no_grad():
        separate(np.zeros(int(seconds * cfg.sample_rate)), model)
    assert counter.macs == count_model_macs(cfg, seconds)


# -- sweep tables ------------------------------------------------------------------

def test_sweep_edge_cases():
    assert sweep([]) == []
    (row,) = sweep([ModelConfig()])
    assert row["params_ratio"] == 1.0 and row["macs_ratio"] == 1.0


def test_sweep_baseline_is_first_k1_row():
    grouped = ModelConfig(K=4, M=32, N=128, H_i=32, H_o=64, depth_L=4)
    rows = sweep([grouped, ModelConfig()])
    assert rows[1]["params_ratio"] == 1.0
    assert rows[0]["params_ratio"] == pytest.approx(3.9, rel=0.05)


def test_table2_outputs():
    rows = table2_sweep()
    assert len(rows) == 12
    parsed = list(csv.DictReader(io.StringIO(to_csv(rows))))
    assert list(parsed[0]) == list(profiler.COLUMNS)
    assert [int(r["params"]) for r in parsed] == [r["params"] for r in rows]
    text = to_text(rows)
    assert len(text.splitlines()) == 13
    assert "2.6M" in text and "35.6x" in text


def test_human_units():
    assert profiler.human(2_616_129) == "2.6M"
    assert profiler.human(21.7e9) == "21.7G"
    assert profiler.human(73_537) == "73.5K"
    assert profiler.human(12) == "12"


def test_frame_count_convention():
    frames = (64000 - 32) // 16 + 1
    assert frames == 3999
    assert profiler.default_hop(frames) == math.ceil(math.sqrt(frames / 2))
