"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import torch

from . import __version__
from .checkpoint import CheckpointError, model_from_checkpoint, read_checkpoint, save_checkpoint
from .config import ConfigError, load_ablation_specs, load_synth_spec, load_train_config
from .losses import evaluate_horizons, model_predictor, oracle_predictor, zero_velocity_predictor
from .motion import MotionDataError, SynthSpec, load_canonical, save_canonical, synthesize_motion, window_sequence

DEFAULT_HORIZONS = "80,160,320,400"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--precision", choices=("single", "double"), default=None)
    p.add_argument("--out", default=None, help="directory for CSV reports and figures")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stmsgcn", description="Spatio-temporal multi-subgraph GCN motion prediction")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from a key=value config")
    p.add_argument("config")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default: <out>/model.ckpt)")
    _common(p)

    p = sub.add_parser("eval", help="MPJPE at fixed horizons")
    p.add_argument("checkpoint", help="checkpoint file, or '-' for the oracle / zero-velocity predictors")
    p.add_argument("data", help="canonical motion file")
    p.add_argument("--horizons", default=DEFAULT_HORIZONS, help="comma-separated milliseconds")
    p.add_argument("--predictor", choices=("model", "oracle", "zero-velocity"), default="model")
    p.add_argument("--output", choices=("spatial", "temporal", "fusion"), default="spatial",
                   help="which branch output the model predictor reports")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--tp", type=int, default=None, help="observed frames (required without a checkpoint)")
    p.add_argument("--tf", type=int, default=None, help="future frames (required without a checkpoint)")
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradient")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--w-st", type=float, default=0.1)
    p.add_argument("--w-con", type=float, default=0.1)
    p.add_argument("--constraint", choices=("none", "A", "W", "both"), default="A")
    p.add_argument("--unsquared", action="store_true", help="check the plain-distance loss instead")
    _common(p)

    p = sub.add_parser("ablate", help="train and evaluate a set of ablation specs")
    p.add_argument("config")
    p.add_argument("specs", help="spec file or preset names (components, constraints, lambda, beta)")
    p.add_argument("--horizons", default=DEFAULT_HORIZONS)
    p.add_argument("--epochs", type=int, default=None)
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic motion file")
    p.add_argument("spec", help="key=value synth spec file, or 'default'")
    p.add_argument("out_file", metavar="out")
    _common(p)
    return parser


def _horizons(text: str) -> list[float]:
    try:
        return [float(h) for h in text.split(",") if h.strip()]
    except ValueError:
        raise UsageError(f"invalid --horizons {text!r}") from None


def _require_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _out_dir(args) -> str | None:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _train_config(args):
    _require_file(args.config, "config file")
    config = load_train_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.precision is not None:
        overrides["precision"] = args.precision
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    return replace(config, **overrides)


def cmd_train(args) -> int:
    from .plotting import plot_training_log
    from .train import log_to_csv, train

    config = _train_config(args)
    out = _out_dir(args)
    ckpt_path = args.checkpoint or os.path.join(out or ".", "model.ckpt")
    result = train(config)
    save_checkpoint(result.model, ckpt_path, result.steps, config.to_dict())
    last = result.log[-1] if result.log else None
    if last is not None:
        print(f"epochs={last.epoch} l1={last.l1:.6f} l_st={last.l_st:.6f} "
              f"l_con_s={last.l_con_s:.6f} l_con_t={last.l_con_t:.6f} total={last.total:.6f}")
    print(f"checkpoint: {ckpt_path}")
    if out:
        _write(os.path.join(out, "train_log.csv"), log_to_csv(result.log))
        if result.log:
            plot_training_log(result.log, os.path.join(out, "train_log.png"))
    return 0


def cmd_eval(args) -> int:
    from .plotting import plot_horizons

    horizons = _horizons(args.horizons)
    _require_file(args.data, "data file")
    model = None
    if args.checkpoint == "-":
        if args.predictor == "model":
            raise UsageError("the model predictor needs a checkpoint")
        if args.tp is None or args.tf is None:
            raise UsageError("--tp and --tf are required without a checkpoint")
        T_p, T_f = args.tp, args.tf
    else:
        _require_file(args.checkpoint, "checkpoint")
        ckpt = read_checkpoint(args.checkpoint)
        model = model_from_checkpoint(ckpt)
        T_p, T_f = model.config.T_p, model.config.T_f
        if args.precision is not None:
            model = model.to(torch.float64 if args.precision == "double" else torch.float32)
    seq = load_canonical(args.data)
    samples = window_sequence(seq, T_p, T_f, args.stride)
    if not samples:
        raise MotionDataError(f"{args.data}: {len(seq)} frames give no {T_p}+{T_f} window")
    if args.predictor == "oracle":
        predictor = oracle_predictor
    elif args.predictor == "zero-velocity":
        predictor = zero_velocity_predictor
    else:
        predictor = model_predictor(model, args.output)
    table = evaluate_horizons(predictor, samples, horizons)
    text = table.to_csv()
    sys.stdout.write(text)
    out = _out_dir(args)
    if out:
        _write(os.path.join(out, "eval.csv"), text)
        plot_horizons({args.predictor: table}, os.path.join(out, "eval.png"))
    return 0


def cmd_gradcheck(args) -> int:
    from .train import DESK_MODEL, gradient_check

    if args.precision == "single":
        raise UsageError("gradcheck always runs in double precision")
    result = gradient_check(DESK_MODEL, seed=args.seed or 0, epsilon=args.eps,
                            w_st=args.w_st, w_con=args.w_con, constraint=args.constraint,
                            squared=not args.unsquared)
    print(f"max_rel_error={result.max_rel_error:.3e} worst={result.worst_parameter} "
          f"params={len(result.per_parameter)}")
    out = _out_dir(args)
    if out:
        lines = ["parameter,rel_error"] + [f"{k},{v:.6e}" for k, v in result.per_parameter.items()]
        _write(os.path.join(out, "gradcheck.csv"), "\n".join(lines) + "\n")
    return 0


def cmd_ablate(args) -> int:
    from .plotting import plot_horizons
    from .train import ablation_csv, run_ablation

    horizons = _horizons(args.horizons)
    config = _train_config(args)
    try:
        specs = load_ablation_specs(args.specs)
    except FileNotFoundError:
        raise UsageError(f"spec file not found: {args.specs}") from None
    runs = run_ablation(config, specs, horizons)
    text = ablation_csv(runs)
    sys.stdout.write(text)
    out = _out_dir(args)
    if out:
        _write(os.path.join(out, "ablation.csv"), text)
        plot_horizons({r.spec.label: r.table for r in runs}, os.path.join(out, "ablation.png"))
    return 0


def cmd_synth(args) -> int:
    if args.spec == "default":
        spec = SynthSpec()
    else:
        _require_file(args.spec, "synth spec")
        spec = load_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    seq = synthesize_motion(spec)
    parent = os.path.dirname(os.path.abspath(args.out_file))
    os.makedirs(parent, exist_ok=True)
    save_canonical(seq, args.out_file)
    print(f"wrote {len(seq)} frames (J={seq.J}, D={seq.D}, {seq.frame_rate_hz:g} Hz) to {args.out_file}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"stmsgcn {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, CheckpointError) as exc:
        print(f"stmsgcn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
