"""``gcsep`` command line: profile, train, separate, evaluate.

Exit codes: 0 success, 1 usage/config/input error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import profiler
from .audio import AudioFormatError, read_wav, write_wav
from .config import load_run_config, save_run_config
from .errors import ConfigError, ContractError, DimensionError
from .layers import load_checkpoint, load_state_dict, save_checkpoint
from .metrics import pit_si_sdr
from .separator import ModelConfig, SeparatorModel, separate
from .tensor import no_grad
from .training import TrainingDiverged, run_experiment, write_history

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("gcsep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- profile -------------------------------------------------------------------

def cmd_profile(args) -> int:
    if args.table2:
        rows = profiler.table2_sweep(args.seconds)
    else:
        if args.config:
            cfg = load_run_config(args.config).model
        else:
            flags = {k: getattr(args, k) for k in ("K", "M", "N", "H_i", "H_o", "depth_L")
                     if getattr(args, k) is not None}
            cfg = ModelConfig(**flags)
        rows = profiler.sweep([cfg], args.seconds, [Path(args.config).stem if args.config else "config"])
        if args.breakdown:
            report = profiler.profile(cfg, args.seconds)
            width = max(len(name) for name, _, _ in report.breakdown)
            for name, params, macs in report.breakdown:
                print(f"{name:<{width}}  {params:>10}  {macs:>14}")
            print()
    print(f"MACs for {args.seconds:g} s inputs")
    print(profiler.to_text(rows), end="")
    if args.csv:
        Path(args.csv).write_text(profiler.to_csv(rows))
    return EXIT_OK


# -- train -------------------------------------------------------------------

def _sidecar(checkpoint: Path) -> Path:
    return checkpoint.with_suffix(".cfg")


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.npz"

    def report(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:3d}  lr {row['lr']:.6g}  loss {row['train_loss']:.4f}  "
                  f"valid snr {row['valid_snr']:.3f} dB  si-sdr {row['valid_sisdr']:.3f} dB",
                  flush=True)

    try:
        exp = run_experiment(run.model, run.train, on_epoch=report)
    except TrainingDiverged as exc:
        write_history(out / "history.csv", exc.history)
        model = SeparatorModel(run.model).astype(run.train.dtype)
        load_state_dict(model, exc.last_good_state)
        save_checkpoint(ckpt, model)
        save_run_config(_sidecar(ckpt), run)
        print(f"error: training diverged: {exc}; last good checkpoint saved to {ckpt}",
              file=sys.stderr)
        return EXIT_RUNTIME
    save_checkpoint(ckpt, exp.model)
    save_run_config(_sidecar(ckpt), run)
    write_history(out / "history.csv", exp.result.history)
    tr, va = exp.train_scores, exp.valid_scores
    print(f"best epoch {exp.result.best_epoch} of {len(exp.result.history)}")
    print(f"train SI-SDR {tr['sisdr']:.3f} dB (mixture {tr['mixture_sisdr']:.3f} dB, "
          f"improvement {tr['sisdr_improvement']:.3f} dB)")
    print(f"valid SI-SDR {va['sisdr']:.3f} dB (improvement {va['sisdr_improvement']:.3f} dB)")
    print(f"wrote {ckpt}, {_sidecar(ckpt)}, {out / 'history.csv'}")
    return EXIT_OK


# -- separate / evaluate -----------------------------------------------------------

def _load_model(checkpoint, config=None) -> SeparatorModel:
    checkpoint = Path(checkpoint)
    cfg_path = Path(config) if config else _sidecar(checkpoint)
    run = load_run_config(cfg_path)
    model = SeparatorModel(run.model)
    try:
        load_checkpoint(checkpoint, model)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {checkpoint}") from exc
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(f"{checkpoint}: {exc}") from exc
    return model


def _separate_file(model: SeparatorModel, path) -> np.ndarray:
    wave, _ = read_wav(path, model.cfg.sample_rate)
    with no_grad():
        return separate(wave, model).data.astype(np.float64)


def cmd_separate(args) -> int:
    model = _load_model(args.checkpoint, args.config)
    est = _separate_file(model, args.input)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, track in enumerate(est, 1):
        path = out / f"est{i}.wav"
        write_wav(path, track, model.cfg.sample_rate, pcm16=args.pcm16)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if bool(args.estimates) == bool(args.mixture):
        raise UsageError("give either --mixture with --checkpoint, or --estimates")
    if args.mixture:
        if not args.checkpoint:
            raise UsageError("--mixture needs --checkpoint")
        model = _load_model(args.checkpoint, args.config)
        rate = model.cfg.sample_rate
        est = _separate_file(model, args.mixture)
        refs = np.stack([read_wav(p, rate)[0] for p in args.refs])
    else:
        first, rate = read_wav(args.estimates[0])
        est = np.stack([first] + [read_wav(p, rate)[0] for p in args.estimates[1:]])
        refs = np.stack([read_wav(p, rate)[0] for p in args.refs])
    if est.shape != refs.shape:
        raise AudioFormatError(f"estimates {est.shape} and references {refs.shape} differ in shape")
    report = pit_si_sdr(est, refs)
    for j, (i, score) in enumerate(zip(report["permutation"], report["per_source"]), 1):
        print(f"ref{j} <- est{i + 1}: SI-SDR {score:.3f} dB")
    print(f"mean SI-SDR {report['mean']:.3f} dB")
    print("permutation " + " ".join(str(i + 1) for i in report["permutation"]))
    return EXIT_OK


# -- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcsep", description="GroupComm dual-path speech separation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="parameter and MAC counts")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--table2", action="store_true", help="the 12 preset configurations")
    src.add_argument("--config", help="run config file")
    for flag, dest in (("-K", "K"), ("-M", "M"), ("-N", "N"), ("--H-i", "H_i"),
                       ("--H-o", "H_o"), ("--depth", "depth_L")):
        p.add_argument(flag, dest=dest, type=int)
    p.add_argument("--seconds", type=float, default=4.0, help="input duration for MACs")
    p.add_argument("--csv", help="also write the table as CSV")
    p.add_argument("--breakdown", action="store_true", help="per-submodule counts")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train", help="train on synthetic mixtures")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", help="split a mono WAV into per-speaker WAVs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="run config (default: checkpoint sidecar .cfg)")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pcm16", action="store_true", help="write 16-bit PCM instead of float")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="PIT SI-SDR against reference WAVs")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--mixture")
    p.add_argument("--estimates", nargs="+")
    p.add_argument("--refs", nargs="+", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, AudioFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, DimensionError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
