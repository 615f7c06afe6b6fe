"""Command-line entry point.

Exit status: 0 success, 2 configuration error, 3 I/O error, 4 contract violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path as FsPath

from . import checkpoint as ckpt_io
from . import experiment as ex
from .channel import Link
from .data import generate_synthetic, ingest_csv, write_csv
from .errors import ConfigurationError, StorageError, UavSplitError
from .network import Strategy
from .sim import DEFAULT_REPEATS, DEFAULT_TOLERANCE, evaluate

log = logging.getLogger("uavsplit")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _prob(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {text}")
    return v


def _seed_list(text: str) -> tuple[int, ...]:
    return tuple(_seed(s) for s in text.split(",") if s.strip())


def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--config", type=FsPath, help="JSON experiment config")
    p.add_argument("--seed", type=_seed, help="random seed")
    p.add_argument("--out", type=FsPath, required=out_required, help="output path")


def _estimate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=ex.SCENARIOS)
    p.add_argument("--p1", type=_prob, help="sweep point; needs --scenario")
    p.add_argument("--p-es", type=_prob, help="edge-server erasure probability")
    p.add_argument("--p-ed", type=_prob, help="edge-drone erasure probability")
    p.add_argument("--p-ds", type=_prob, help="drone-server erasure probability")
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS, help="mask redraws per sample")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavsplit", description="Split LSTM training over erasure links.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic water-quality series as CSV")
    _common(p, out_required=True)
    p.add_argument("--days", type=int, default=3264)

    p = sub.add_parser("train", help="train one split network and write a checkpoint")
    _common(p, out_required=True)
    p.add_argument("--scenario", choices=ex.SCENARIOS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--data", type=FsPath, help="CSV series instead of synthetic data")
    p.add_argument("--log", type=FsPath, help="per-epoch loss CSV (default: <out>_log.csv)")

    p = sub.add_parser("eval", help="test MSE of a checkpoint under given erasure rates")
    _common(p)
    p.add_argument("--checkpoint", type=FsPath, required=True)
    p.add_argument("--data", type=FsPath, help="CSV series; default is the checkpoint's own dataset")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    _estimate_flags(p)

    p = sub.add_parser("sweep", help="MSE of every strategy across the p1 grid")
    _common(p, out_required=True)
    p.add_argument("--scenario", choices=ex.SCENARIOS)
    p.add_argument("--seeds", type=_seed_list, help="comma-separated training seeds")
    p.add_argument("--epochs", type=int)
    p.add_argument("--checkpoints", type=FsPath, default=FsPath("checkpoints"), help="checkpoint directory")
    p.add_argument("--train-first", action="store_true", help="train any missing checkpoint")

    p = sub.add_parser("select", help="pick a transmission strategy for given channel estimates")
    _common(p)
    p.add_argument("--checkpoint", type=FsPath, required=True)
    p.add_argument("--probe", type=FsPath, help="CSV series to score on; default is the held-out split")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    _estimate_flags(p)
    return parser


def load_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig()
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        try:
            cfg = ex.ExperimentConfig.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config} is not valid JSON: {exc}") from None
    cfg = cfg.with_overrides(
        scenario=getattr(args, "scenario", None),
        epochs=getattr(args, "epochs", None),
        seeds=getattr(args, "seeds", None),
    )
    data = getattr(args, "data", None)
    if data is not None:
        cfg.dataset = ex.DatasetSource(kind="csv", path=str(data))
    cfg.validate()
    return cfg


def resolve_estimates(args, ckpt) -> dict[Link, float]:
    """Channel estimates from --scenario/--p1, explicit --p-* flags, or the checkpoint's training rates."""
    exp = ex.ExperimentConfig.from_dict(ckpt.config.get("experiment", {}))
    p_ds = exp.p_ds if args.p_ds is None else args.p_ds
    if args.p1 is not None:
        if args.scenario is None:
            raise ConfigurationError("--p1 needs --scenario")
        probs = ex.scenario_test_probs(args.scenario, args.p1, p_ds)
    else:
        probs = ex.scenario_train_probs(args.scenario or exp.scenario, p_ds)
    if args.p_es is not None:
        probs[Link.EDGE_SERVER] = args.p_es
    if args.p_ed is not None:
        probs[Link.EDGE_DRONE] = args.p_ed
    return probs


def _dataset_of(ckpt) -> ex.DatasetSource:
    exp = ex.ExperimentConfig.from_dict(ckpt.config.get("experiment", {}))
    return exp.dataset


def _write_json(path: FsPath, payload: dict) -> None:
    ex.write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    series = generate_synthetic(7 if args.seed is None else args.seed, args.days)
    write_csv(series, args.out)
    print(f"wrote {series.days} days to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed

    def progress(entry):
        log.info("epoch %d/%d  loss %.6f", entry.epoch, cfg.epochs, entry.train_loss)

    out = ex.train(cfg, seed, progress=progress)
    ckpt_io.save(out.checkpoint, args.out)
    log_path = args.log or args.out.with_name(f"{args.out.stem}_log.csv")
    ex.write_loss_log(out.losses, log_path)
    final = f"{out.losses[-1]:.6f}" if out.losses else "n/a"
    print(f"checkpoint {args.out}  log {log_path}  final train loss {final}")
    return 0


def cmd_eval(args) -> int:
    ckpt = ckpt_io.load(args.checkpoint)
    series = ingest_csv(args.data) if args.data is not None else _dataset_of(ckpt).load()
    samples = ex.held_out(series, ckpt)
    probs = resolve_estimates(args, ckpt)
    strategies = [Strategy(args.strategy)] if args.strategy else list(Strategy)
    seed = 0 if args.seed is None else args.seed
    rescale = ex.trained_with_rescale(ckpt)
    mses = {s: evaluate(ckpt.network, samples, s, probs, seed, args.repeats, rescale) for s in strategies}
    for s, m in mses.items():
        print(f"{s.value} {m!r}")
    if args.out is not None:
        _write_json(
            args.out,
            {"estimates": {l.value: p for l, p in probs.items()}, "mse": {s.value: m for s, m in mses.items()}},
        )
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    if args.seed is not None and args.seeds is None:
        cfg.seeds = (args.seed,)

    def trained(path, out):
        ex.write_loss_log(out.losses, path.with_name(f"{path.stem}_log.csv"))
        log.info("trained %s", path)

    if args.train_first:
        try:
            args.checkpoints.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create {args.checkpoints}: {exc.strerror or exc}") from exc
    records = ex.run_sweep(cfg, args.checkpoints, args.train_first, trained)
    ex.write_text(args.out, ex.metrics_csv(records))
    mean_path = ex.means_path(args.out)
    ex.write_text(mean_path, ex.means_csv(records))
    print(f"wrote {len(records)} rows to {args.out} and means to {mean_path}")
    return 0


def cmd_select(args) -> int:
    ckpt = ckpt_io.load(args.checkpoint)
    if args.probe is not None:
        if not args.probe.exists():
            raise StorageError(f"probe file not found: {args.probe}")
        probe = ex.probe_samples(ingest_csv(args.probe), ckpt)
    else:
        probe = ex.held_out(_dataset_of(ckpt).load(), ckpt)
    report = ex.select(
        ckpt,
        probe,
        resolve_estimates(args, ckpt),
        tolerance=args.tolerance,
        seed=0 if args.seed is None else args.seed,
        repeats=args.repeats,
    )
    print(report.choice.value)
    if args.out is not None:
        _write_json(args.out, report.to_dict())
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "select": cmd_select,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UavSplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
