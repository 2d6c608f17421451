"""Command-line interface: tfgc synth | manifest | train | eval | infer."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report as reporting
from .config import RunConfig, load_config, save_config
from .data import resolve_dataset, synthetic_samples
from .errors import TfgcError
from .harness import evaluate_model, infer, load_checkpoint, train
from .manifest import read_manifest, split_report, write_manifest, ScenarioRecord
from .media_io import SYNTH_MODES, synth_pair, write_pair


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--no-lfs", action="store_true", help="disable the frequency-statistics stream")
    parser.add_argument("--no-rsfdm", action="store_true", help="disable frame-difference gating")
    parser.add_argument("--no-dctam", action="store_true", help="disable temporal discrepancy attention")
    parser.add_argument("--no-vafm", action="store_true", help="disable audio-visual cross-attention")


def _config_from_args(args: argparse.Namespace, extra: dict | None = None) -> RunConfig:
    overrides: dict = dict(extra or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.no_lfs:
        overrides["use_lfs"] = False
    if args.no_rsfdm:
        overrides["use_rsfdm"] = False
    if args.no_dctam:
        overrides["use_dctam"] = False
    if args.no_vafm:
        overrides["use_vafm"] = False
    return load_config(args.config, overrides)


def _cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = list(SYNTH_MODES) if args.mode == "balanced" else [args.mode]
    records = []
    for i in range(args.count):
        mode = modes[i % len(modes)]
        pair = synth_pair(args.seed + i, mode, T=args.T, size=args.size)
        record = write_pair(pair, out_dir)
        record["split"] = args.split
        records.append(ScenarioRecord(**record))
    write_manifest(records, out_dir / "manifest.jsonl")
    print(f"wrote {len(records)} pairs and manifest.jsonl under {out_dir}")
    return 0


def _cmd_manifest_validate(args: argparse.Namespace) -> int:
    records = read_manifest(args.manifest)
    print(f"{args.manifest}: {len(records)} records, schema OK")
    return 0


def _cmd_manifest_report(args: argparse.Namespace) -> int:
    records = read_manifest(args.manifest)
    report = split_report(records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    reporting.write_distribution_csv(report, out_dir / "scenario_counts.csv")
    reporting.plot_distribution(report, out_dir / "distribution.png")
    print(
        f"{report.total} records: {report.totals['real']} real, "
        f"{report.totals['fake']} fake; report under {out_dir}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    extra: dict = {}
    if args.synthetic_count is not None:
        extra["synth_count"] = args.synthetic_count
    if args.manifest is not None:
        extra.update({"data_kind": "manifest", "manifest": args.manifest})
    if args.data_root is not None:
        extra["data_root"] = args.data_root
    config = _config_from_args(args, extra)
    _, report = train(config)
    out_dir = Path(config.output_dir)
    save_config(config, out_dir / "config.json")
    print(
        f"trained {config.epochs} epochs; train accuracy {report.accuracy:.4f}; "
        f"checkpoint and reports under {out_dir}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    config = model.config
    if args.manifest is not None:
        config.data_kind = "manifest"
        config.manifest = args.manifest
    if args.data_root is not None:
        config.data_root = args.data_root
    if args.seed is not None:
        config.seed = args.seed
    split = args.split
    if config.data_kind == "synthetic":
        samples = synthetic_samples(
            model,
            count=args.synthetic_count or config.synth_count,
            seed=config.seed,
            T=config.clip_len,
            size=config.frame_size,
            salt=1 if split == "test" else 0,
        )
    else:
        samples = resolve_dataset(model, config, split=split)
    report = evaluate_model(model, samples, out_dir=args.out)
    print(f"accuracy {report.accuracy:.4f} over {report.n} clips (split {split})")
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    output, _ = infer(model, args.frames, args.wav, out_dir=args.out)
    print(
        f"video fake probability {output.video_prob:.4f}, "
        f"audio fake probability {output.audio_prob:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfgc",
        description="Coherence-analysis toolkit for detecting generated talking-face video",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic clip/audio pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=list(SYNTH_MODES) + ["balanced"], default="balanced")
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--T", dest="T", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("manifest", help="validate or report on a manifest")
    msub = p.add_subparsers(dest="manifest_command", required=True)
    v = msub.add_parser("validate", help="schema-check a JSONL manifest")
    v.add_argument("--manifest", type=str, required=True)
    v.set_defaults(fn=_cmd_manifest_validate)
    r = msub.add_parser("report", help="distribution report with figures")
    r.add_argument("--manifest", type=str, required=True)
    r.add_argument("--out", type=str, required=True)
    r.set_defaults(fn=_cmd_manifest_report)

    p = sub.add_parser("train", help="train a detector")
    _add_run_flags(p)
    p.add_argument("--synthetic-count", type=int, default=None)
    p.add_argument("--manifest", type=str, default=None)
    p.add_argument("--data-root", type=str, default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_run_flags(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--synthetic-count", type=int, default=None)
    p.add_argument("--manifest", type=str, default=None)
    p.add_argument("--data-root", type=str, default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("infer", help="score one clip directory plus wav")
    _add_run_flags(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--frames", type=str, required=True)
    p.add_argument("--wav", type=str, required=True)
    p.set_defaults(fn=_cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TfgcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
