"""Training recipe (Adam, step-decayed lr, global-norm clipping, early stopping)
and the synthetic two-source mixtures used for desk-scale runs."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .layers import Module, ParamRegistry, load_state_dict, state_dict
from .metrics import pit_loss, pit_si_sdr, snr_db
from .separator import SeparatorModel, separate

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "lr", "train_loss", "valid_snr", "valid_sisdr")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.98
    decay_every: int = 2
    max_epochs: int = 100
    clip_norm: float = 5.0
    patience: int = 10
    batch_size: int = 2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    precision: str = "float32"
    # synthetic data
    train_items: int = 20
    valid_items: int = 5
    duration_s: float = 1.0
    noisy: bool = False
    data_seed: int = 1000

    def __post_init__(self):
        for name in ("lr", "lr_decay", "clip_norm", "duration_s", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("decay_every", "max_epochs", "patience", "batch_size",
                     "train_items", "valid_items"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.duration_s < 0.1:
            raise ConfigError("duration_s must be at least 0.1 s")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training config key(s): {sorted(unknown)}")
        return cls(**d)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """lr0 * decay ** floor(epoch / decay_every)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


class GradientError(FloatingPointError):
    pass


def clip_global_norm(grads: list[np.ndarray], max_norm: float = 5.0) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly rescaled) gradients and the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if not math.isfinite(total):
        bad = [i for i, g in enumerate(grads) if not np.all(np.isfinite(g))]
        raise GradientError(f"non-finite gradient in parameter(s) {bad}")
    if total <= max_norm:
        return list(grads), total
    factor = max_norm / total
    return [g * g.dtype.type(factor) for g in grads], total


class Adam:
    """Bias-corrected Adam over a parameter registry; updates ``p.data`` in place."""

    def __init__(self, registry: ParamRegistry, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = registry.tensors()
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float):
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)


def adam_step(registry: ParamRegistry, grads: list[np.ndarray], state: Adam, lr: float):
    if state.params != registry.tensors():
        raise ValueError("optimizer state was built for a different registry")
    state.step(grads, lr)


# -- synthetic data ----------------------------------------------------------

@dataclass
class ToyMixture:
    mixture: np.ndarray
    sources: np.ndarray  # [2, L]
    seed: int
    duration_s: float
    sample_rate: int
    noise: np.ndarray | None = None


def _band_noise(rng: np.random.Generator, n: int, sr: int, lo: float, hi: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0
    x = np.fft.irfft(spectrum, n)
    return x / (np.std(x) + 1e-12)


def generate_toy_mixture(seed: int, duration_s: float = 1.0, sample_rate: int = 16000,
                         noisy: bool = False, peak: float = 0.9) -> ToyMixture:
    """Two amplitude-modulated band-limited noises in disjoint bands, summed.

    One source sits in a low band (centre 300-1500 Hz), the other in a high band
    (centre 2500-5000 Hz); which one comes first is drawn per seed.
    """
    if duration_s < 0.1:
        raise ValueError("duration must be at least 0.1 s")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    nyq = sample_rate / 2
    centres = [rng.uniform(300, 1500), rng.uniform(2500, min(5000, 0.8 * nyq))]
    if rng.random() < 0.5:
        centres.reverse()
    sources = []
    for centre in centres:
        width = rng.uniform(200, 500)
        x = _band_noise(rng, n, sample_rate, centre - width / 2, centre + width / 2)
        rate, phase = rng.uniform(1.0, 4.0), rng.uniform(0, 2 * np.pi)
        sources.append(x * (0.6 + 0.4 * np.sin(2 * np.pi * rate * t + phase)))
    gain_db = rng.uniform(-2.5, 2.5)
    sources[1] = sources[1] * 10 ** (gain_db / 20)
    sources = np.stack(sources)
    mixture = sources.sum(axis=0)
    noise = None
    if noisy:
        noise = rng.standard_normal(n)
        noise *= np.sqrt(np.mean(mixture ** 2) / np.mean(noise ** 2)) * 10 ** (-20 / 20)
        mixture = mixture + noise
    scale = peak / max(np.max(np.abs(mixture)), np.max(np.abs(sources)))
    sources = sources * scale
    if noise is not None:
        noise = noise * scale
        mixture = sources.sum(axis=0) + noise
    else:
        mixture = sources.sum(axis=0)
    return ToyMixture(mixture, sources, seed, duration_s, sample_rate, noise)


def make_dataset(n_items: int, first_seed: int, cfg: TrainConfig,
                 sample_rate: int = 16000) -> list[ToyMixture]:
    return [generate_toy_mixture(first_seed + i, cfg.duration_s, sample_rate, cfg.noisy)
            for i in range(n_items)]


# -- evaluation --------------------------------------------------------------

def evaluate(model: SeparatorModel, items: list[ToyMixture]) -> dict:
    """Mean PIT-SNR and PIT SI-SDR of the model, and SI-SDR of the raw mixture."""
    snrs, sisdrs, mix_sisdrs = [], [], []
    with T.no_grad():
        for item in items:
            est = separate(item.mixture, model).data.astype(np.float64)
            refs = item.sources
            straight = np.mean([snr_db(est[j], refs[j]) for j in range(2)])
            swapped = np.mean([snr_db(est[1 - j], refs[j]) for j in range(2)])
            snrs.append(max(straight, swapped))
            sisdrs.append(pit_si_sdr(est, refs)["mean"])
            mix_sisdrs.append(pit_si_sdr(np.stack([item.mixture] * 2), refs)["mean"])
    return {"snr": float(np.mean(snrs)), "sisdr": float(np.mean(sisdrs)),
            "mixture_sisdr": float(np.mean(mix_sisdrs)),
            "sisdr_improvement": float(np.mean(sisdrs) - np.mean(mix_sisdrs))}


# -- training loop ------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good_state: dict, history: list[dict]):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.history = history


@dataclass
class TrainResult:
    best_state: dict
    best_epoch: int
    best_valid_snr: float
    history: list[dict] = field(default_factory=list)
    stopped_early: bool = False


def train(model: SeparatorModel, train_set: list[ToyMixture], valid_set: list[ToyMixture],
          cfg: TrainConfig, extra_loss: Callable[[T.Tensor, np.ndarray, np.ndarray], T.Tensor] | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Run the recipe; returns the best-validation parameters and per-epoch history.

    ``extra_loss(estimates, mixtures, references)`` is added to the PIT loss
    when given (a hook for auxiliary objectives).
    """
    if not train_set or not valid_set:
        raise ValueError("training and validation sets must be non-empty")
    model.astype(cfg.dtype)
    reg = model.registry()
    opt = Adam(reg, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    mixes = np.stack([it.mixture for it in train_set]).astype(cfg.dtype)
    refs = np.stack([it.sources for it in train_set]).astype(cfg.dtype)

    history: list[dict] = []
    best_state, best_epoch, best_valid = state_dict(reg), -1, -np.inf
    since_best = 0
    stopped_early = False
    for epoch in range(cfg.max_epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            est = separate(T.Tensor(mixes[idx]), model)
            loss = pit_loss(est, refs[idx])
            if extra_loss is not None:
                loss = loss + extra_loss(est, mixes[idx], refs[idx])
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", best_state, history)
            reg.zero_grad()
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in reg.tensors()]
            try:
                grads, _ = clip_global_norm(grads, cfg.clip_norm)
            except GradientError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", best_state, history) from exc
            opt.step(grads, lr)
            losses.append(loss.item())
        reg.zero_grad()
        scores = evaluate(model, valid_set)
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)),
               "valid_snr": scores["snr"], "valid_sisdr": scores["sisdr"]}
        history.append(row)
        log.info("epoch %d lr %.6g loss %.4f valid snr %.3f si-sdr %.3f",
                 epoch, lr, row["train_loss"], row["valid_snr"], row["valid_sisdr"])
        if on_epoch is not None:
            on_epoch(row)
        if not np.isfinite(row["train_loss"]):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}", best_state, history)
        if row["valid_snr"] > best_valid:
            best_valid, best_epoch = row["valid_snr"], epoch
            best_state = state_dict(reg)
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                stopped_early = True
                break
    return TrainResult(best_state, best_epoch, float(best_valid), history, stopped_early)


def restore_best(model: Module, result: TrainResult) -> Module:
    load_state_dict(model, result.best_state)
    return model


def history_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for row in history:
        writer.writerow([row["epoch"]] + [f"{row[k]:.10g}" for k in HISTORY_FIELDS[1:]])
    return buf.getvalue()


def write_history(path, history: list[dict]):
    Path(path).write_text(history_csv(history))


@dataclass
class ExperimentResult:
    model: SeparatorModel
    result: TrainResult
    train_scores: dict
    valid_scores: dict


def run_experiment(model_cfg, cfg: TrainConfig,
                   on_epoch: Callable[[dict], None] | None = None) -> ExperimentResult:
    """Build a model, train it on fresh toy data and score the best checkpoint.

    Training items use seeds ``data_seed ...``; validation items follow on
    directly, so the two sets never share a seed.
    """
    sr = model_cfg.sample_rate
    train_set = make_dataset(cfg.train_items, cfg.data_seed, cfg, sr)
    valid_set = make_dataset(cfg.valid_items, cfg.data_seed + cfg.train_items, cfg, sr)
    model = SeparatorModel(model_cfg)
    result = train(model, train_set, valid_set, cfg, on_epoch=on_epoch)
    restore_best(model, result)
    return ExperimentResult(model, result, evaluate(model, train_set), evaluate(model, valid_set))
