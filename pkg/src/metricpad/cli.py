"""``metricpad`` command line: generate, train, evaluate, ablation, report.

Every command reads one JSON config (``--config``), applies flag overrides,
and writes the resolved config as ``<command>_config.json`` next to its
outputs together with ``<command>_manifest.json`` holding content hashes.
Re-running a command with ``--config <out>/<command>_config.json`` replays it.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, canonical_json, sha256_file
from .databench import Benchmark, DataError, export, generate, ingest
from .encoder import load_checkpoint, save_checkpoint
from .fewshot import write_scores
from .losses import LOSS_NAMES
from .protocols import evaluate_encoder, partition, run_protocol
from .training import MODES, train

log = logging.getLogger("metricpad")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

ABLATION_VARIANTS = (
    ("Baseline", "triplet", "classwise"),
    ("Model 1", "triplet", "anomaly"),
    ("Model 2", "triplet-focal", "anomaly"),
    ("Ours", "anomaly", "anomaly"),
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers ------------------------------------------------------------------


def _overrides(args) -> dict:
    o = {
        "out": args.out,
        "loss.name": args.loss,
        "loss.softmax_sign": args.softmax_sign,
        "miner.mode": args.mode,
        "evaluation.M": args.M,
        "optimizer.epochs": args.epochs,
    }
    if args.command == "generate":
        o["data.spec.seed"] = args.seed
    else:
        o["seed"] = args.seed
    if args.protocol is not None or args.holdout_tag is not None or args.holdout_pai is not None:
        kind = args.protocol or "holdout"
        o["protocol"] = {"kind": kind, "holdout_tag": args.holdout_tag, "holdout_pai": args.holdout_pai}
    return o


def _load_config(args) -> RunConfig:
    o = _overrides(args)
    seed = o.pop("data.spec.seed", None)
    cfg = RunConfig.load(args.config, o)
    if seed is not None:
        if "spec" not in cfg.raw["data"]:
            raise ConfigError("--seed for generate needs a benchmark spec in the config")
        cfg.raw["data"]["spec"]["seed"] = seed
    return cfg


def load_benchmark(cfg: RunConfig) -> Benchmark:
    spec = cfg.benchmark_spec()
    if spec is not None:
        return generate(spec)
    data = cfg.raw["data"]
    try:
        return ingest(data["path"], data.get("format"))
    except FileNotFoundError:
        raise DataError(f"benchmark file not found: {data['path']}") from None


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _write_manifest(out: Path, command: str, cfg: RunConfig, config_file, outputs: Sequence[Path], results=None):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_file": str(config_file),
        "config_file_sha256": sha256_file(config_file),
        "config_sha256": cfg.sha256(),
        "config": cfg.raw,
        "outputs": {p.name: sha256_file(p) for p in outputs},
        "replay": f"metricpad {command} --config {out / f'{command}_config.json'}",
    }
    if results is not None:
        manifest["results"] = results
    _write(out / f"{command}_manifest.json", canonical_json(manifest))


def _start(cfg: RunConfig, command: str) -> tuple:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    return out, _write(out / f"{command}_config.json", cfg.dumps())


# -- commands -------------------------------------------------------------------


def cmd_generate(cfg: RunConfig, args) -> dict:
    if cfg.benchmark_spec() is None:
        raise ConfigError("generate needs data.spec in the config")
    out, cfg_path = _start(cfg, "generate")
    bench = generate(cfg.benchmark_spec())
    fmt = args.format or "jsonl"
    path = export(bench, out / f"benchmark.{fmt}", fmt)
    counts = {k: v for k, v in sorted(bench.class_counts().items())}
    _write_manifest(out, "generate", cfg, args.config, [cfg_path, path], {"samples": len(bench), "class_counts": counts})
    print(f"wrote {len(bench)} samples to {path}")
    return {"path": path}


def cmd_train(cfg: RunConfig, args) -> dict:
    out, cfg_path = _start(cfg, "train")
    bench = load_benchmark(cfg)
    parts = partition(bench, cfg.protocol())
    pipe = cfg.pipeline()
    result = train(parts["train"], pipe.train, parts["dev"])
    ckpt = save_checkpoint(out / "checkpoint.json", result.params, pipe.train.to_dict(), cfg.seed)
    lines = [json.dumps(entry, sort_keys=True) for entry in result.history]
    log_path = _write(out / "train_log.jsonl", "".join(line + "\n" for line in lines))
    report, *_ = evaluate_encoder(result.params, parts["train"], parts["dev"], parts["test"], pipe, cfg.seed)
    results = {
        "loss": pipe.train.loss,
        "mode": pipe.train.mode,
        "epochs_run": len(result.history),
        "dev_aer": report.aer,
        "batch_class_counts": dict(sorted(result.batch_class_counts.items())),
    }
    _write_manifest(out, "train", cfg, args.config, [cfg_path, ckpt, log_path], results)
    print(f"trained {pipe.train.loss}/{pipe.train.mode} for {len(result.history)} epochs; dev AER {report.aer:.4f}")
    return results


def cmd_evaluate(cfg: RunConfig, args) -> dict:
    out, cfg_path = _start(cfg, "evaluate")
    ckpt_path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json"
    try:
        params, _meta = load_checkpoint(ckpt_path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {ckpt_path}") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"checkpoint {ckpt_path} is malformed: {exc}") from None
    bench = load_benchmark(cfg)
    parts = partition(bench, cfg.protocol())
    pipe = cfg.pipeline()
    report, refs, dev_scores, test_scores = evaluate_encoder(params, parts["train"], parts["dev"], parts["test"], pipe, cfg.seed)
    report.meta.update({"protocol": cfg.protocol().to_dict(), "checkpoint_sha256": sha256_file(ckpt_path)})
    paths = [
        cfg_path,
        _write(out / "report.json", report.to_json()),
        write_scores(out / "scores_dev.csv", dev_scores),
        write_scores(out / "scores_test.csv", test_scores),
        _write(out / "confusion.csv", report.confusion_csv()),
    ]
    _write_manifest(out, "evaluate", cfg, args.config, paths, {"hter": report.hter, "acer": report.acer, "aer": report.aer})
    print(format_report(report.to_dict()))
    return {"report": report}


def ablation_rows(per_seed: list) -> list:
    """Median AER/FAR/FRR per variant over seeds, with the relative improvement over the baseline."""
    rows = []
    for name, loss, mode in ABLATION_VARIANTS:
        runs = [r for r in per_seed if r["variant"] == name]
        rows.append(
            {
                "variant": name,
                "loss": loss,
                "mode": mode,
                "seeds": len(runs),
                "aer": float(np.median([r["aer"] for r in runs])),
                "far": float(np.median([r["far"] for r in runs])),
                "frr": float(np.median([r["frr"] for r in runs])),
            }
        )
    base = rows[0]["aer"]
    for r in rows:
        r["delta_aer"] = (base - r["aer"]) / base if base > 0 else float("nan")
    return rows


ABLATION_COLUMNS = ["variant", "loss", "mode", "seeds", "aer", "far", "frr", "delta_aer"]


def ablation_csv(rows: list, columns=ABLATION_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def ablation_text(rows: list) -> str:
    header = ["Variant", "Loss", "Mining", "AER %", "FAR %", "FRR %", "dAER %"]
    body = [
        [r["variant"], r["loss"], r["mode"]] + [f"{100 * r[k]:.2f}" for k in ("aer", "far", "frr", "delta_aer")]
        for r in rows
    ]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for row in [header] + body:
        cells = [c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_ablation(cfg: RunConfig, args) -> dict:
    out, cfg_path = _start(cfg, "ablation")
    bench = load_benchmark(cfg)
    protocol = cfg.protocol()
    seeds = [cfg.seed] if args.seed is not None else cfg.ablation_seeds()
    per_seed = []
    for seed in seeds:
        for name, loss, mode in ABLATION_VARIANTS:
            run = run_protocol(bench, protocol, cfg.pipeline(seed=seed, loss=loss, mode=mode))
            r = run.report
            per_seed.append(
                {"seed": seed, "variant": name, "loss": loss, "mode": mode, "aer": r.aer, "far": r.dev_far,
                 "frr": r.dev_frr, "hter": r.hter, "acer": r.acer}
            )
            log.info("seed %d %-8s AER %.4f HTER %.4f", seed, name, r.aer, r.hter)
    rows = ablation_rows(per_seed)
    paths = [
        cfg_path,
        _write(out / "ablation_runs.csv", ablation_csv(per_seed, ["seed", "variant", "loss", "mode", "aer", "far", "frr", "hter", "acer"])),
        _write(out / "ablation.csv", ablation_csv(rows)),
        _write(out / "ablation.txt", ablation_text(rows)),
    ]
    _write_manifest(out, "ablation", cfg, args.config, paths, {"seeds": seeds})
    print(ablation_text(rows), end="")
    return {"rows": rows, "runs": per_seed}


def format_report(d: dict) -> str:
    lines = [f"threshold {d['threshold']}"]
    for key in ("hter", "far", "frr", "acer", "apcer_max", "bpcer", "aer", "eer", "test_eer"):
        lines.append(f"{key:<10}{100 * d[key]:7.2f} %")
    for pai, v in d["apcer"].items():
        lines.append(f"apcer[{pai}]".ljust(10) + f"{100 * v:7.2f} %")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, args) -> dict:
    out = cfg.out
    parts = []
    if (out / "report.json").exists():
        parts.append(format_report(json.loads((out / "report.json").read_text())))
    if (out / "ablation.csv").exists():
        with open(out / "ablation.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            for k in ("aer", "far", "frr", "delta_aer"):
                r[k] = float(r[k])
        parts.append(ablation_text(rows))
    if not parts:
        raise DataError(f"no report.json or ablation.csv under {out}")
    text = "\n".join(parts)
    out, cfg_path = _start(cfg, "report")
    _write_manifest(out, "report", cfg, args.config, [cfg_path, _write(out / "report.txt", text)])
    print(text, end="")
    return {"text": text}


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablation": cmd_ablation,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metricpad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, help="training seed (benchmark seed for generate)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--loss", choices=LOSS_NAMES)
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--softmax-sign", choices=("paper", "corrected"))
        p.add_argument("--M", type=int, help="reference pairs for scoring")
        p.add_argument("--protocol", choices=("intra", "holdout"))
        p.add_argument("--holdout-tag")
        p.add_argument("--holdout-pai", help="pai type or type/subtype")
        p.add_argument("--epochs", type=int)
        if name == "generate":
            p.add_argument("--format", choices=("jsonl", "csv"))
        if name == "evaluate":
            p.add_argument("--checkpoint", help="defaults to <out>/checkpoint.json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
