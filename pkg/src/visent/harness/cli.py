"""Command-line entry point tying the pipeline together.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
Commands read one UTF-8 JSON config file; --set key.path=value overrides
individual fields (values parsed as JSON, bare words kept as strings).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from .. import dataset
from ..errors import ConfigError, RuntimeFailure, ValidationError
from ..features.store import FeatureStore
from ..features.synth import SynthConfig, synth_suite
from .checkpoint import load_checkpoint
from .evaluate import EvalReport, evaluate, report_table
from .gradsuite import THRESHOLD, run_suite
from .train import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(
            f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_overrides(config: dict, sets: Optional[List[str]]) -> dict:
    for item in sets or []:
        key, value = _parse_override(item)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return config


def _load_config(path: Optional[str], sets: Optional[List[str]]) -> dict:
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise ConfigError("config file must hold a JSON object")
    else:
        config = {}
    return _apply_overrides(config, sets)


def _cmd_build_dataset(args) -> int:
    spec = dataset.SplitSpec.from_files(args.train_images, args.val_images,
                                        args.test_images)
    with open(args.snli, "r", encoding="utf-8") as fh:
        issues: List[str] = []
        splits = dataset.build_snli_ve(fh, spec, strict=args.strict,
                                       issues=issues)
    os.makedirs(args.out, exist_ok=True)
    names = ("train", "val", "test")
    report = {}
    for name, split in zip(names, splits):
        path = f"{args.out}/snli_ve_{name}.jsonl"
        dataset.write_examples(split, path)
        report[name] = dataset.compute_stats(split).to_dict()
        report[name]["path"] = path
    report["issues"] = issues
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_stats(args) -> int:
    examples = dataset.read_examples(args.data)
    report = dataset.compute_stats(examples).to_dict()
    if args.features:
        store = FeatureStore.open(args.features)
        wanted = sorted({ex.image_id for ex in examples})
        problems = store.validate(wanted)
        report["features"] = {
            "directory": args.features,
            "kind": store.kind,
            "region_dim": store.region_dim,
            "images_checked": len(wanted),
            "problems": problems,
        }
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0 if not problems else 1
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    raw = _load_config(args.config, args.set)
    config = SynthConfig.from_dict(raw) if raw else SynthConfig()
    data = synth_suite(config, seed=args.seed)
    out = args.out
    os.makedirs(out, exist_ok=True)
    dataset.write_examples(data.train, f"{out}/train.jsonl")
    dataset.write_examples(data.val, f"{out}/val.jsonl")
    dataset.write_examples(data.test, f"{out}/test.jsonl")
    data.store.save(f"{out}/features")
    with open(f"{out}/synth_config.json", "w", encoding="utf-8") as fh:
        json.dump({"config": config.to_dict(), "seed": args.seed}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    summary = {
        "out": out,
        "train": dataset.compute_stats(data.train).to_dict(),
        "val": dataset.compute_stats(data.val).to_dict(),
        "test": dataset.compute_stats(data.test).to_dict(),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    raw = _load_config(args.config, args.set)
    config = TrainConfig.from_dict(raw)
    result = train(config)
    tail = {"event": "result", "epochs_run": result.epochs_run,
            "best_epoch": result.best_epoch,
            "best_val_accuracy": result.best_val_accuracy,
            "checkpoint": config.checkpoint, "log": config.log}
    print(json.dumps(tail, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    examples = dataset.read_examples(args.data)
    store = FeatureStore.open(args.features) if args.features else None
    if args.l2norm == "auto":
        l2norm = bool(store is not None and store.kind == "roi")
    else:
        l2norm = args.l2norm == "on"
    report = evaluate(model, examples, store, l2norm, split=args.split)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    results, ok, elapsed = run_suite()
    if args.json:
        print(json.dumps({"checks": results, "threshold": THRESHOLD,
                          "ok": ok, "seconds": elapsed}, sort_keys=True))
    else:
        for name, err in results.items():
            status = "ok" if err < THRESHOLD else "FAIL"
            print(f"{status:4s} {name:40s} max rel err {err:.3e}")
        print(f"{len(results)} checks in {elapsed:.1f}s; "
              f"{'all' if ok else 'NOT all'} under {THRESHOLD:g}")
    return 0 if ok else 1


def _report_from_json(path: str) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    report = EvalReport(split=d.get("split", "eval"))
    confusion = d.get("confusion")
    if (not isinstance(confusion, list) or len(confusion) != 3
            or any(len(row) != 3 for row in confusion)):
        raise ConfigError(f"{path}: confusion must be a 3x3 integer matrix")
    report.confusion = [[int(v) for v in row] for row in confusion]
    return report


def _cmd_report(args) -> int:
    rows = []
    for name, val_path, test_path in args.row or []:
        rows.append((name, _report_from_json(val_path),
                     _report_from_json(test_path)))
    text, payload = report_table(rows)
    print(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="visent",
                     description="visual entailment models, data, training")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build-dataset", parents=[], add_help=True,
                       help="derive the visual-entailment corpus from SNLI")
    p.add_argument("--snli", required=True,
                   help="SNLI records, one JSON object per line")
    p.add_argument("--train-images", required=True,
                   help="file of training image ids, one per line")
    p.add_argument("--val-images", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict", action="store_true",
                   help="reject malformed records instead of skipping")
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("stats", help="per-split dataset report")
    p.add_argument("--data", required=True, help="examples file (JSONL)")
    p.add_argument("--features",
                   help="feature directory to validate against the split")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("synth", help="generate the synthetic scene task")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="synthetic task config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True, help="train config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. model.seed=3")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="examples file (JSONL)")
    p.add_argument("--features", help="feature directory")
    p.add_argument("--split", default="eval", help="split name for the report")
    p.add_argument("--l2norm", choices=("auto", "on", "off"), default="auto",
                   help="L2-normalize region vectors before the model")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--json", action="store_true",
                   help="machine-readable output")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("report", help="format evaluation reports as a table")
    p.add_argument("--row", nargs=3, action="append",
                   metavar=("NAME", "VAL_JSON", "TEST_JSON"),
                   help="one table row: model name plus two report files")
    p.add_argument("--json", help="also write rows as JSON to this path")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
