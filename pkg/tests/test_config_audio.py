from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from gcsep.audio import AudioFormatError, read_wav, write_wav
from gcsep.config import (RunConfig, load_run_config, parse_run_config, save_run_config,
                          serialize_run_config)
from gcsep.errors import ConfigError
from gcsep.separator import ModelConfig
from gcsep.training import TrainConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_defaults_round_trip():
    run = RunConfig()
    assert parse_run_config(serialize_run_config(run)) == run


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([(1, 128, 64), (2, 64, 64), (4, 16, 16), (8, 2, 2)]),
       st.integers(1, 6), st.integers(2, 64), st.booleans(), st.booleans(),
       st.floats(1e-5, 1e-1), st.integers(0, 2**31), st.one_of(st.none(), st.integers(1, 99)))
def test_parse_inverts_serialize(kmh, depth, h_o, dual, causal, lr, seed, hop):
    k, m, h_i = kmh
    model = ModelConfig(K=k, M=m, N=k * m, H_i=h_i, H_o=h_o, depth_L=depth, dual_bias=dual,
                        causal_inter=causal, block_hop=hop)
    run = RunConfig(model, TrainConfig(lr=lr, seed=seed))
    assert parse_run_config(serialize_run_config(run)) == run


def test_comments_blank_lines_and_partial_files():
    run = parse_run_config("# header\n\nK = 4   # groups\nM=32\nH_i = 32\nH_o=64\nlr = 0.002\n")
    assert (run.model.K, run.model.M, run.model.H_o) == (4, 32, 64)
    assert run.train.lr == 0.002 and run.train.patience == 10


@pytest.mark.parametrize("text, needle", [
    ("bogus = 1\n", "bogus"),
    ("K = four\n", "K"),
    ("K = 2\nK = 2\n", "twice"),
    ("just words\n", "line 1"),
    ("dual_bias = yes\n", "dual_bias"),
    ("K = 3\nM = 5\n", "K\\*M"),
    ("patience = 200\n", "patience"),
])
def test_bad_files_name_the_problem(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_run_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "nope.cfg")


def test_save_and_load(tmp_path):
    run = RunConfig(ModelConfig(K=4, M=32, N=128, H_i=32, H_o=64, depth_L=4))
    save_run_config(tmp_path / "a.cfg", run)
    assert load_run_config(tmp_path / "a.cfg") == run


@pytest.mark.parametrize("name", ["example.cfg", "overfit.cfg", "micro.cfg"])
def test_shipped_configs_parse(name):
    run = load_run_config(CONFIGS / name)
    assert isinstance(run.model, ModelConfig)


# -- WAV -----------------------------------------------------------------------------

def test_pcm16_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    write_wav(tmp_path / "a.wav", x, 16000, pcm16=True)
    y, rate = read_wav(tmp_path / "a.wav", 16000)
    assert rate == 16000 and y.dtype == np.float64
    assert np.max(np.abs(x - y)) <= 0.5 / 32768 + 1e-12


def test_float32_round_trip(tmp_path):
    x = np.random.default_rng(1).uniform(-1, 1, 1000)
    write_wav(tmp_path / "a.wav", x, 16000)
    y, _ = read_wav(tmp_path / "a.wav")
    np.testing.assert_array_equal(y, x.astype(np.float32).astype(np.float64))


def test_pcm16_clips_full_scale(tmp_path):
    write_wav(tmp_path / "a.wav", np.array([1.5, -1.5, 1.0, -1.0]), 16000, pcm16=True)
    _, raw = wavfile.read(tmp_path / "a.wav")
    assert raw.tolist() == [32767, -32768, 32767, -32768]


def test_rejects_other_rates(tmp_path):
    write_wav(tmp_path / "a.wav", np.zeros(100), 8000, pcm16=True)
    with pytest.raises(AudioFormatError, match="8000"):
        read_wav(tmp_path / "a.wav", 16000)


def test_rejects_stereo(tmp_path):
    wavfile.write(tmp_path / "s.wav", 16000, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(AudioFormatError, match="mono"):
        read_wav(tmp_path / "s.wav")
    with pytest.raises(AudioFormatError):
        write_wav(tmp_path / "t.wav", np.zeros((2, 10)), 16000)


def test_rejects_other_sample_formats(tmp_path):
    wavfile.write(tmp_path / "i.wav", 16000, np.zeros(100, dtype=np.int32))
    with pytest.raises(AudioFormatError, match="int32"):
        read_wav(tmp_path / "i.wav")


def test_rejects_malformed_files(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    with pytest.raises(AudioFormatError, match="malformed"):
        read_wav(tmp_path / "bad.wav")
    (tmp_path / "text.wav").write_text("not audio at all")
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "text.wav")
