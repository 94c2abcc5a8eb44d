"""Command-line front end for the full pipeline.

Verbs: prepare, train, train-sketch, train-face, synthesize, evaluate,
serve.  Training and evaluation write line-delimited reports plus rendered
figures into their output directories; synthesis writes PNG files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attributes import FACE_ATTRIBUTES, FACE_DIM, face_attribute_index
from .config import TrainConfig, config_hash, load_config, save_config
from .data import load_cache, load_manifest, prepare_dataset, save_cache
from .evaluation import evaluate_run
from .figures import plot_loss_curves
from .predictor import load_predictor, save_predictor, train_attribute_predictor
from .synthesis import load_model_pair, progression, png_bytes, synthesize
from .training import run_training

log = logging.getLogger(__name__)

_CONFIG_FLAGS = {
    "dataset": str,
    "batch_size": int,
    "lr_stage1": float,
    "lr_stage2": float,
    "epochs": int,
    "freeze_epochs": int,
    "decay_fraction": float,
    "lambda_s": float,
    "lambda_f": float,
    "scales": str,
    "seed": int,
    "base_channels": int,
    "d_base_channels": int,
    "d_lr_scale": float,
    "pretrain_epochs": int,
    "adam_beta1": float,
    "adam_beta2": float,
    "checkpoint_every": int,
}
_CONFIG_SWITCHES = ("stop_sketch_gradient", "ground_truth_sketch", "saturating_generator_loss")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value config document")
    parser.add_argument("--smoke", action="store_true",
                        help="start from the desk-scale smoke profile")
    for name, kind in _CONFIG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=kind, default=None)
    for name in _CONFIG_SWITCHES:
        parser.add_argument(f"--{name.replace('_', '-')}",
                            action=argparse.BooleanOptionalAction, default=None)


def _build_config(args: argparse.Namespace) -> TrainConfig:
    """Config file (or dataset profile) first, explicit flags on top."""
    overrides = {}
    for name in list(_CONFIG_FLAGS) + list(_CONFIG_SWITCHES):
        value = getattr(args, name)
        if value is None:
            continue
        if name == "scales":
            value = tuple(int(s) for s in value.split(","))
        overrides[name] = value
    if args.config is not None:
        base = dataclasses.asdict(load_config(args.config))
        base.update(overrides)
        return TrainConfig(**base)
    if args.smoke:
        return TrainConfig.smoke(**overrides)
    dataset = overrides.pop("dataset", "celeba")
    return TrainConfig.for_dataset(dataset, **overrides)


def _load_train_data(args: argparse.Namespace, cfg: TrainConfig, split: str = "train"):
    if args.cache:
        return load_cache(args.cache, split=split)
    if args.data_root:
        samples = load_manifest(args.data_root, split=split)
        return prepare_dataset(samples, size=cfg.scales[-1], scales=cfg.scales)
    raise ValueError("provide --cache or --data-root")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data-root", type=Path, help="raw dataset root")
    parser.add_argument("--cache", type=Path, help="prepared sample cache directory")


def cmd_prepare(args: argparse.Namespace) -> int:
    scales = tuple(int(s) for s in args.scales.split(","))
    samples = load_manifest(args.data_root)
    dataset = prepare_dataset(samples, size=scales[-1], scales=scales,
                              blur_sigma=args.blur_sigma)
    save_cache(dataset, args.out)
    print(f"prepared {len(dataset)} samples at scales {scales} -> {args.out}")
    return 0


def _run_train(args: argparse.Namespace, phase_plan=None, stage1_init=None) -> int:
    cfg = _build_config(args)
    dataset = _load_train_data(args, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.cfg")
    trainer = run_training(
        cfg, dataset, out_dir,
        total_steps=args.steps,
        resume_from=args.resume,
        checkpoint_every=args.checkpoint_every,
        phase_plan=phase_plan,
        stage1_init=stage1_init,
    )
    reports = [json.loads(line) for line in (out_dir / "metrics.jsonl").read_text().splitlines()]
    if reports:
        plot_loss_curves(reports, out_dir / "loss_curves.png")
    print(f"trained to step {trainer.step} (config {config_hash(cfg)[:12]}) -> {out_dir}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    return _run_train(args)


def cmd_train_sketch(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    return _run_train(args, phase_plan=[("stage1", cfg.epochs)])


def cmd_train_face(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    return _run_train(args, phase_plan=[("stage2", cfg.epochs)], stage1_init=args.stage1)


def _parse_attrs(pairs: list[str]) -> np.ndarray:
    attrs = np.full(FACE_DIM, -1.0, dtype=np.float32)
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--attr takes Name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        attrs[face_attribute_index(name.strip())] = float(value)
    return np.clip(attrs, -1.0, 1.0)


def cmd_synthesize(args: argparse.Namespace) -> int:
    model = load_model_pair(args.stage1, args.stage2)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = _parse_attrs(args.attr)
    if args.progression:
        faces, weights = progression(model, base, args.progression, args.seed)
        for i, (face, weight) in enumerate(zip(faces, weights)):
            path = out_dir / f"progression-{args.progression.lower()}-{i}.png"
            path.write_bytes(png_bytes(face))
            print(f"{path}  weight={weight}")
        return 0
    rows = np.repeat(base[np.newaxis, :], args.count, axis=0)
    faces, sketches = synthesize(model, rows, args.seed)
    for i in range(args.count):
        path = out_dir / f"face-{i:03d}.png"
        path.write_bytes(png_bytes(faces[i]))
        print(path)
        if args.sketch:
            spath = out_dir / f"sketch-{i:03d}.png"
            spath.write_bytes(png_bytes(sketches[i]))
            print(spath)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    stage2 = args.checkpoint if args.checkpoint is not None else args.stage2
    if stage2 is None:
        raise ValueError("provide --checkpoint (stage-2 checkpoint) or --stage2")
    stage1 = args.stage1
    if stage1 is None:
        guess = Path(str(stage2).replace("stage2-", "stage1-"))
        if guess == Path(stage2) or not guess.exists():
            raise FileNotFoundError(
                f"cannot infer the stage-1 checkpoint for {stage2}; pass --stage1"
            )
        stage1 = guess
    model = load_model_pair(stage1, stage2)
    eval_split = load_cache(args.cache, split=args.split) if args.cache else None
    if eval_split is None:
        if not args.data_root:
            raise ValueError("provide --cache or --data-root")
        samples = load_manifest(args.data_root, split=args.split)
        eval_split = prepare_dataset(samples, size=model.resolution, scales=model.config.scales)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.predictor:
        predictor = load_predictor(args.predictor)
    else:
        log.info("no --predictor given; fitting one on the train split")
        if args.cache:
            train_split = load_cache(args.cache, split="train")
        else:
            samples = load_manifest(args.data_root, split="train")
            train_split = prepare_dataset(samples, size=model.resolution,
                                          scales=model.config.scales)
        predictor, fit_report = train_attribute_predictor(train_split, seed=args.seed)
        save_predictor(predictor, out_dir / "predictor.bin")
        (out_dir / "predictor.json").write_text(json.dumps(fit_report, indent=2, sort_keys=True))
    report = evaluate_run(
        model, eval_split, predictor,
        n_samples=args.n_samples, seed=args.seed,
        out_dir=out_dir, oracle_inject=args.oracle_inject,
    )
    print(report.to_table())
    print(f"report -> {out_dir / 'metrics.kv'}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.stage1, args.stage2, max_count=args.max_count)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchface",
        description="attribute -> sketch -> face synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("prepare", help="build the curated sample cache")
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scales", default="16,32,64")
    p.add_argument("--blur-sigma", type=float, default=None)
    p.set_defaults(fn=cmd_prepare)

    for name, fn in (("train", cmd_train), ("train-sketch", cmd_train_sketch),
                     ("train-face", cmd_train_face)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} against a prepared dataset")
        _add_data_flags(p)
        _add_config_flags(p)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--steps", type=int, default=None, help="stop after N total steps")
        p.add_argument("--resume", type=Path, default=None, help="run directory to resume")
        if name == "train-face":
            p.add_argument("--stage1", type=Path, required=True,
                           help="stage-1 checkpoint providing the sketch generator")
        p.set_defaults(fn=fn)

    p = sub.add_parser("synthesize", help="generate faces from a checkpoint pair")
    p.add_argument("--stage1", type=Path, required=True)
    p.add_argument("--stage2", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--attr", action="append", metavar="NAME=VALUE",
                   help=f"attribute override; names: {', '.join(FACE_ATTRIBUTES[:4])}, ...")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--sketch", action="store_true", help="also write the stage-1 sketches")
    p.add_argument("--progression", metavar="NAME",
                   help="sweep one attribute over the reference weights")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("evaluate", help="compute FID and attribute-L2 for a checkpoint pair")
    p.add_argument("--checkpoint", type=Path, default=None, help="stage-2 checkpoint")
    p.add_argument("--stage2", type=Path, default=None)
    p.add_argument("--stage1", type=Path, default=None)
    _add_data_flags(p)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--n-samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--predictor", type=Path, default=None)
    p.add_argument("--oracle-inject", action="store_true",
                   help="self-test: score the reference images against themselves")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="start the HTTP synthesis service")
    p.add_argument("--stage1", type=Path, required=True)
    p.add_argument("--stage2", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-count", type=int, default=16)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
