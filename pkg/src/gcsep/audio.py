"""Mono WAV I/O (16-bit PCM or 32-bit float). No resampling, ever."""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class AudioFormatError(ValueError):
    """Unreadable, unsupported or mismatched WAV data."""


def read_wav(path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Return ``(float64 samples in [-1, 1], sample_rate)``."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(Path(path))
    except OSError:
        raise
    except Exception as exc:  # scipy raises assorted types on truncated headers
        raise AudioFormatError(f"{path}: malformed WAV ({exc})") from exc
    if data.ndim != 1:
        raise AudioFormatError(f"{path}: expected mono, found {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype} "
                               "(need 16-bit PCM or 32-bit float)")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(
            f"{path}: sample rate {rate} Hz does not match the model's {expected_rate} Hz")
    return samples, int(rate)


def write_wav(path, samples, sample_rate: int, pcm16: bool = False):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise AudioFormatError("only mono signals can be written")
    if pcm16:
        data = np.round(np.clip(samples, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    else:
        data = samples.astype(np.float32)
    wavfile.write(Path(path), int(sample_rate), data)
