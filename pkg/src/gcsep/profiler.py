"""Analytical parameter and MAC accounting for separator configurations.

MAC convention (matches the common PyTorch op-counter the published numbers
were produced with):

* LSTM, per step and direction: ``4H(I+H)`` weight MACs plus ``4H`` per bias
  vector and ``8H`` for gate/cell elementwise products.
* Linear: ``in * out`` per application.
* Convolutions (including the transposed decoder): output elements times
  ``C_in * W``. The decoder runs once per speaker.
* LayerNorm, PReLU/ReLU, residual adds and mask products are not counted.

Every frame appears in two blocks, so the dual-path passes run over
``2T * S`` positions, about twice the frame count.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .dprnn import default_hop, n_blocks
from .errors import ConfigError
from .separator import ModelConfig


@dataclass
class ComplexityReport:
    config: ModelConfig
    seconds: float
    total_params: int
    total_macs: int
    breakdown: list[tuple[str, int, int]] = field(default_factory=list)


def lstm_params(input_dim: int, hidden_dim: int, n_bias: int = 2) -> int:
    return 4 * hidden_dim * (input_dim + hidden_dim) + n_bias * 4 * hidden_dim


def lstm_step_macs(input_dim: int, hidden_dim: int, n_bias: int = 2) -> int:
    return 4 * hidden_dim * (input_dim + hidden_dim) + 4 * hidden_dim * n_bias + 8 * hidden_dim


def linear_params(in_dim: int, out_dim: int) -> int:
    return in_dim * out_dim + out_dim


def chain_params(feat: int, hidden: int, n_bias: int, directions: int = 2) -> int:
    """(B)LSTM(feat -> hidden per direction) + FC(directions*hidden -> feat) + LayerNorm(feat)."""
    return (directions * lstm_params(feat, hidden, n_bias)
            + linear_params(directions * hidden, feat) + 2 * feat)


def chain_macs(feat: int, hidden: int, n_bias: int, directions: int = 2) -> int:
    """MACs of one chain application to a single sequence element."""
    return directions * (lstm_step_macs(feat, hidden, n_bias) + hidden * feat)


def _n_bias(cfg: ModelConfig) -> int:
    return 2 if cfg.dual_bias else 1


def _inter_dirs(cfg: ModelConfig) -> int:
    return 1 if cfg.causal_inter else 2


def _param_breakdown(cfg: ModelConfig) -> list[tuple[str, int]]:
    nb = _n_bias(cfg)
    rows = [("encoder", cfg.N * cfg.window), ("input_norm", 2 * cfg.N)]
    if cfg.baseline:
        rows.append(("bottleneck", linear_params(cfg.N, cfg.H_i)))
    for i in range(cfg.depth_L):
        if not cfg.baseline:
            rows.append((f"block{i}.groupcomm", chain_params(cfg.M, cfg.H_o, nb)))
        rows.append((f"block{i}.intra", chain_params(cfg.feat_dim, cfg.H_o, nb)))
        rows.append((f"block{i}.inter", chain_params(cfg.feat_dim, cfg.H_o, nb, _inter_dirs(cfg))))
    rows.append(("mask_act", 1))
    if cfg.baseline:
        rows.append(("mask", linear_params(cfg.H_i, cfg.n_spk * cfg.N)))
    else:
        rows.append(("mask", linear_params(cfg.M, cfg.n_spk * cfg.M)))
    rows.append(("decoder", cfg.N * cfg.window))
    return rows


def count_model_params(cfg: ModelConfig) -> int:
    return sum(n for _, n in _param_breakdown(cfg))


def _frames(cfg: ModelConfig, seconds: float) -> tuple[int, int]:
    n_samples = int(round(seconds * cfg.sample_rate))
    if n_samples < cfg.window:
        raise ConfigError(f"{seconds} s is shorter than one {cfg.window}-sample window")
    n_frames = (n_samples - cfg.window) // cfg.stride + 1
    return n_samples, n_frames


def _mac_breakdown(cfg: ModelConfig, seconds: float) -> list[tuple[str, int]]:
    nb = _n_bias(cfg)
    _, frames = _frames(cfg, seconds)
    hop = cfg.block_hop or default_hop(frames)
    positions = 2 * hop * n_blocks(frames, hop)
    out_len = (frames - 1) * cfg.stride + cfg.window
    per_elem = chain_macs(cfg.feat_dim, cfg.H_o, nb)
    inter_elem = chain_macs(cfg.feat_dim, cfg.H_o, nb, _inter_dirs(cfg))
    rows = [("encoder", cfg.N * frames * cfg.window), ("input_norm", 0)]
    if cfg.baseline:
        rows.append(("bottleneck", frames * cfg.N * cfg.H_i))
    for i in range(cfg.depth_L):
        if not cfg.baseline:
            # K-step sequence at every position
            rows.append((f"block{i}.groupcomm", positions * cfg.K * per_elem))
        rows.append((f"block{i}.intra", cfg.K * positions * per_elem))
        rows.append((f"block{i}.inter", cfg.K * positions * inter_elem))
    rows.append(("mask_act", 0))
    if cfg.baseline:
        rows.append(("mask", frames * cfg.H_i * cfg.n_spk * cfg.N))
    else:
        rows.append(("mask", frames * cfg.K * cfg.M * cfg.n_spk * cfg.M))
    rows.append(("decoder", cfg.n_spk * out_len * cfg.N * cfg.window))
    return rows


def count_model_macs(cfg: ModelConfig, input_seconds: float = 4.0) -> int:
    return sum(n for _, n in _mac_breakdown(cfg, input_seconds))


def profile(cfg: ModelConfig, input_seconds: float = 4.0) -> ComplexityReport:
    params = dict(_param_breakdown(cfg))
    macs = _mac_breakdown(cfg, input_seconds)
    breakdown = [(name, params[name], m) for name, m in macs]
    return ComplexityReport(cfg, input_seconds, sum(p for _, p, _ in breakdown),
                            sum(m for _, _, m in breakdown), breakdown)


# -- reference grid --------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    K: int
    M: int
    N: int
    H_i: int
    H_o: int
    depth_L: int
    reported_params: float
    reported_macs: float
    reported_params_ratio: float
    reported_macs_ratio: float

    def config(self, **overrides) -> ModelConfig:
        kw = dict(K=self.K, M=self.M, N=self.N, H_i=self.H_i, H_o=self.H_o,
                  depth_L=self.depth_L)
        kw.update(overrides)
        return ModelConfig(**kw)


TABLE2 = [
    Preset("DPRNN", 1, 128, 128, 64, 128, 6, 2.6e6, 22.1e9, 1.0, 1.0),
    Preset("GC-K2-L4", 2, 64, 128, 64, 128, 4, 2.6e6, 43.4e9, 1.0, 0.5),
    Preset("GC-K4-L4", 4, 32, 128, 32, 64, 4, 663.0e3, 22.4e9, 3.9, 1.0),
    Preset("GC-K8-L4", 8, 16, 128, 16, 32, 4, 175.5e3, 11.9e9, 14.9, 1.8),
    Preset("GC-K16-M8-L4", 16, 8, 128, 8, 16, 4, 51.9e3, 6.6e9, 50.4, 3.3),
    Preset("GC-K16-M8-L6", 16, 8, 128, 8, 16, 6, 73.5e3, 9.6e9, 35.6, 2.3),
    Preset("GC-K16-M16-L2", 16, 16, 256, 16, 32, 2, 100.7e3, 12.4e9, 26.0, 1.8),
    Preset("GC-K16-M16-L4", 16, 16, 256, 16, 32, 4, 183.9e3, 23.7e9, 14.2, 0.9),
    Preset("GC-K32-M4-L6", 32, 4, 128, 4, 8, 6, 26.0e3, 5.7e9, 100.7, 3.8),
    Preset("GC-K32-M4-L10", 32, 4, 128, 4, 8, 10, 37.6e3, 9.1e9, 69.5, 2.4),
    Preset("GC-K32-M8-L2", 32, 8, 256, 8, 16, 2, 38.7e3, 7.2e9, 67.6, 3.1),
    Preset("GC-K32-M8-L4", 32, 8, 256, 8, 16, 4, 60.3e3, 13.2e9, 43.4, 1.7),
]


def sweep(configs, seconds: float = 4.0, names=None) -> list[dict]:
    """Profile every config; ratios are baseline / row (how many times smaller).

    The baseline is the first K == 1 config in the grid, or the first row.
    """
    configs = list(configs)
    if not configs:
        return []
    names = list(names) if names is not None else [f"cfg{i}" for i in range(len(configs))]
    reports = [profile(c, seconds) for c in configs]
    base = next((r for r in reports if r.config.baseline), reports[0])
    rows = []
    for name, rep in zip(names, reports):
        c = rep.config
        rows.append({
            "name": name, "K": c.K, "M": c.M, "N": c.N, "H_i": c.H_i, "H_o": c.H_o,
            "depth_L": c.depth_L, "params": rep.total_params,
            "params_ratio": base.total_params / rep.total_params,
            "macs": rep.total_macs, "macs_ratio": base.total_macs / rep.total_macs,
        })
    return rows


def table2_sweep(seconds: float = 4.0) -> list[dict]:
    return sweep([p.config() for p in TABLE2], seconds, [p.name for p in TABLE2])


COLUMNS = ("name", "K", "M", "N", "H_i", "H_o", "depth_L",
           "params", "params_ratio", "macs", "macs_ratio")


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{row[k]:.4f}" if k.endswith("ratio") else row[k]) for k in COLUMNS})
    return buf.getvalue()


def human(n: float, unit: str = "") -> str:
    for div, suffix in ((1e9, "G"), (1e6, "M"), (1e3, "K")):
        if abs(n) >= div:
            return f"{n / div:.1f}{suffix}{unit}"
    return f"{n:.0f}{unit}"


def to_text(rows: list[dict]) -> str:
    header = ["name", "K", "M", "N", "H_i/H_o", "L", "params", "size x", "MACs", "MAC x"]
    body = [[r["name"], str(r["K"]), str(r["M"]), str(r["N"]), f"{r['H_i']}/{r['H_o']}",
             str(r["depth_L"]), human(r["params"]), f"{r['params_ratio']:.1f}x",
             human(r["macs"]), f"{r['macs_ratio']:.1f}x"] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(header, *body)] if body else [len(h) for h in header]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines) + "\n"
