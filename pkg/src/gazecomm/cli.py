"""Command line entry point: ``gazecomm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .event import EventNet
from .graph import AnnotationError, GraphError, read_annotations, write_annotations
from .model import AtomicModel
from .nn.params import CheckpointError, atomic_write_text, load_json
from .simulator import GeneratorConfig, generate_dataset, make_splits
from .spatial import to_dot
from .training import DataError, TrainConfig, evaluate_atomic, evaluate_event, train_atomic, train_event, write_log

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SPLITS = ("all", "train", "val", "test")

log = logging.getLogger("gazecomm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _echo(command: str, resolved: dict) -> None:
    print(json.dumps({"command": command, **resolved}, sort_keys=True))


def _load_config(args) -> TrainConfig:
    payload = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
    for key in ("epochs", "seed", "iterations"):
        value = getattr(args, key, None)
        if value is not None:
            payload[key] = value
    if getattr(args, "implicit", False):
        payload["mode"] = "implicit"
    if getattr(args, "no_temporal", False):
        payload["temporal"] = False
    payload["data"] = args.data
    payload["out"] = args.out
    try:
        return TrainConfig.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _train_val(config: TrainConfig):
    episodes = read_annotations(config.data)
    if config.val_data:
        return episodes, read_annotations(config.val_data)
    train, val, _ = make_splits(episodes, config.split, config.seed)
    return train, val


def _select_split(episodes, split: str, payload: dict):
    if split == "all":
        return episodes
    train_cfg = payload.get("model", {}).get("train_config")
    if not train_cfg:
        raise DataError(f"checkpoint carries no training config; cannot rebuild split {split!r}")
    parts = make_splits(episodes, train_cfg["split"], train_cfg["seed"])
    return parts[SPLITS.index(split) - 1]


def cmd_generate(args) -> int:
    config = GeneratorConfig(label_noise=args.noise, seed=args.seed)
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _echo("generate", {"events": args.events, "mix": args.mix, "generator": asdict(config), "out": args.out})
    episodes = generate_dataset(args.events, args.mix, config)
    write_annotations(episodes, args.out)
    return EXIT_OK


def cmd_train_atomic(args) -> int:
    config = _load_config(args)
    _echo("train-atomic", config.to_dict())
    train, val = _train_val(config)
    model, rows = train_atomic(config, train, val)
    model.save(args.out, {"train_config": config.to_dict()})
    write_log(config.log or f"{args.out}.log.csv", rows)
    return EXIT_OK


def cmd_train_event(args) -> int:
    config = _load_config(args)
    atomic_model = None if args.atomic_source == "gt" else AtomicModel.load(args.atomic_source)
    _echo("train-event", config.to_dict() | {"atomic_source": args.atomic_source})
    train, val = _train_val(config)
    net, rows = train_event(config, train, val, atomic_model)
    net.save(args.out, {"train_config": config.to_dict(), "atomic_source": args.atomic_source})
    write_log(config.log or f"{args.out}.log.csv", rows)
    return EXIT_OK


def cmd_eval(args) -> int:
    payload = load_json(args.ckpt)
    _echo("eval", {k: getattr(args, k) for k in ("level", "ckpt", "atomic_ckpt", "data", "report", "split")})
    episodes = _select_split(read_annotations(args.data), args.split, payload)
    if args.level == "atomic":
        report, _ = evaluate_atomic(AtomicModel.from_payload(payload), episodes)
        row = "atomic"
    else:
        atomic_model = AtomicModel.load(args.atomic_ckpt) if args.atomic_ckpt else None
        report = evaluate_event(EventNet.from_payload(payload), episodes, atomic_model)
        row = "event w/o. GT" if atomic_model else "event w. GT"
    atomic_write_text(args.report, report.to_json() + "\n")
    table = report.table(row)
    atomic_write_text(Path(f"{args.report}.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    payload = load_json(args.ckpt)
    _echo("predict", {k: getattr(args, k) for k in ("ckpt", "data", "out", "split")})
    episodes = _select_split(read_annotations(args.data), args.split, payload)
    _, dump = evaluate_atomic(AtomicModel.from_payload(payload), episodes)
    atomic_write_text(args.out, "".join(json.dumps(r) + "\n" for r in dump))
    return EXIT_OK


def cmd_export_dot(args) -> int:
    _echo("export-dot", {k: getattr(args, k) for k in ("predictions", "episode", "frame", "out", "threshold")})
    with open(args.predictions, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise DataError(f"{args.predictions}:{lineno}: malformed JSON") from None
            if "adjacency" in rec and rec["episode_id"] == args.episode and rec["frame_idx"] == args.frame:
                dot = to_dot(
                    rec["node_ids"],
                    rec["node_kinds"],
                    np.asarray(rec["adjacency"]),
                    args.threshold,
                    name=f"{args.episode}_frame{args.frame}",
                )
                atomic_write_text(args.out, dot)
                return EXIT_OK
    raise DataError(f"no frame {args.frame} of episode {args.episode!r} in {args.predictions}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazecomm", description="Atomic- and event-level gaze communication reasoning.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", help="write synthetic annotated episodes")
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--mix", choices=("uniform", "paper"), default="paper")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-atomic", help="train the spatio-temporal atomic model")
    p.add_argument("--config", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--implicit", action="store_true")
    p.add_argument("--no-temporal", action="store_true")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_atomic)

    p = sub.add_parser("train-event", help="train the event network")
    p.add_argument("--config", required=True)
    p.add_argument("--atomic-source", required=True, help="'gt' or an atomic checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_event)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--level", choices=("atomic", "event"), required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--atomic-ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", choices=SPLITS, default="all")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="dump per-human atomic predictions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=SPLITS, default="all")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-dot", help="render one predicted frame as Graphviz DOT")
    p.add_argument("--predictions", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_export_dot)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "gazecomm: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationError, GraphError, CheckpointError, DataError, OSError) as exc:
        print(f"gazecomm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"gazecomm: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
