"""Command-line entry point: ``edulstm {synth,train,eval,crossval,predict}``.

Every command reads one JSON run config. The whole config is validated
before anything is written. Exit codes are 0 on success, 1 for config or
usage errors and 2 for runtime failures; failures also emit one JSON line on
stderr of the form ``{"error": kind, "exit_code": n, "message": text}``.

Config schema (version 1)::

    {
      "version": 1,
      "seed": 0,                                 optional, sets all seeds below
      "data": {"events": PATH, "questions": PATH, "static": PATH},
      "synthetic": {SyntheticSpec keys},         exactly one of data/synthetic
      "clean": {"min_len": 5},
      "encoding": {"hash_buckets": 64},
      "model": {"hidden_dim": 128, "tasks": [...], "static_in_forget_gate": true},
      "train": {TrainConfig keys, "schedule": {ScheduleSpec keys}},
      "folds": {"k": 5, "seed": 0, "stratify_by_risk": false},
      "methods": ["lstm", "majority", "logreg", "knn", "knn_dtw"],
      "baselines": {"knn_k": 15, "dtw_window": 8, "logreg_lr": 0.5, "logreg_iters": 500},
      "output_dir": PATH,
      "format": "both"
    }

Relative paths inside the config resolve against the config file's directory.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .data import (
    DataError,
    EncodingConfig,
    StudentRecord,
    SyntheticSpec,
    clean,
    encode,
    encode_all,
    fit_encoding,
    gen_synthetic,
    kfold_split,
    load_events,
    write_events_csv,
    write_questions_csv,
    write_static_csv,
)
from .data.encoding import DEFAULT_HASH_BUCKETS, N_DENSE
from .data.records import DEFAULT_MIN_LEN
from .model import TASKS, ModelConfig, ModelError, load_checkpoint, param_shapes, save_checkpoint
from .optim import OptimError
from .train_eval.crossval import DEFAULT_METHODS, METHODS, BaselineOptions, CrossValidationError, cross_validate
from .train_eval.metrics import COUNTS, RATES, Metrics
from .train_eval.training import TrainConfig, TrainingError, evaluate, predict, train

log = logging.getLogger("edulstm")

CONFIG_VERSION = 1
FORMATS = ("csv", "json", "both")
TOP_LEVEL_KEYS = {
    "version", "seed", "data", "synthetic", "clean", "encoding", "model",
    "train", "folds", "methods", "baselines", "output_dir", "format",
}
MODEL_KEYS = {"hidden_dim", "tasks", "static_in_forget_gate"}
FOLD_KEYS = {"k", "seed", "stratify_by_risk"}
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    """Invalid config or usage; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


@dataclass(frozen=True)
class FoldParams:
    k: int = 5
    seed: int = 0
    stratify_by_risk: bool = False


@dataclass(frozen=True)
class RunConfig:
    raw: dict[str, Any]
    config_hash: str
    data: dict[str, Path] | None
    synthetic: SyntheticSpec | None
    min_len: int
    hash_buckets: int
    model: dict[str, Any]
    train: TrainConfig
    folds: FoldParams
    methods: tuple[str, ...]
    baselines: BaselineOptions
    output_dir: Path
    format: str

    def model_config(self, static_dim: int) -> ModelConfig:
        return ModelConfig(
            input_dim=N_DENSE + self.hash_buckets,
            static_dim=static_dim,
            dropout_rate=self.train.dropout_rate,
            **self.model,
        )

    def seed_lineage(self) -> dict[str, Any]:
        return {
            "train_seed": self.train.seed,
            "init_stream": self.train.seed,
            "shuffle_dropout_stream": [self.train.seed, 1],
            "fold_seed": self.folds.seed,
            "synthetic_seed": self.synthetic.seed if self.synthetic else None,
        }


def config_hash(raw: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON of the effective config.

    ``output_dir`` and ``format`` are left out so the same experiment hashes
    identically wherever and however its reports are written.
    """
    doc = {k: v for k, v in raw.items() if k not in ("output_dir", "format")}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _section(raw: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config key {key!r} must be an object")
    return dict(value)


def _check_keys(section: str, d: Mapping[str, Any], allowed: set[str]) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


def _writable(path: Path) -> bool:
    probe = path
    while not probe.exists():
        if probe.parent == probe:
            return False
        probe = probe.parent
    return probe.is_dir() and os.access(probe, os.W_OK | os.X_OK)


def apply_overrides(raw: dict[str, Any], args: argparse.Namespace) -> dict[str, Any]:
    raw = copy.deepcopy(raw)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        raw["output_dir"] = str(Path(args.out_dir).resolve())
    if getattr(args, "format", None) is not None:
        raw["format"] = args.format
    if "seed" in raw:
        seed = raw["seed"]
        raw["train"] = {**_section(raw, "train"), "seed": seed}
        raw["folds"] = {**_section(raw, "folds"), "seed": seed}
        if "synthetic" in raw:
            raw["synthetic"] = {**_section(raw, "synthetic"), "seed": seed}
    return raw


def parse_config(raw: Mapping[str, Any], base_dir: Path) -> RunConfig:
    """Validate a whole config; raises ConfigError without side effects."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("<top level>", raw, TOP_LEVEL_KEYS)
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {raw.get('version')!r}")
    if "seed" in raw and (not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool) or raw["seed"] < 0):
        raise ConfigError(f"seed must be a nonnegative integer, got {raw['seed']!r}")
    if ("data" in raw) == ("synthetic" in raw):
        raise ConfigError("config needs exactly one of 'data' and 'synthetic'")

    def resolve(p: Any) -> Path:
        if not isinstance(p, str) or not p:
            raise ConfigError(f"paths must be nonempty strings, got {p!r}")
        path = Path(p)
        return path if path.is_absolute() else base_dir / path

    data = synthetic = None
    try:
        if "data" in raw:
            d = _section(raw, "data")
            _check_keys("data", d, {"events", "questions", "static"})
            for key in ("events", "questions"):
                if key not in d:
                    raise ConfigError(f"data.{key} is required")
            data = {k: resolve(v) for k, v in d.items()}
            for key, path in data.items():
                if not path.exists():
                    raise ConfigError(f"data.{key}: {path}: no such file or directory")
        else:
            synthetic = SyntheticSpec.from_dict(_section(raw, "synthetic"))

        cl = _section(raw, "clean")
        _check_keys("clean", cl, {"min_len"})
        min_len = cl.get("min_len", DEFAULT_MIN_LEN)
        if not isinstance(min_len, int) or min_len < 1:
            raise ConfigError(f"clean.min_len must be a positive integer, got {min_len!r}")
        enc = _section(raw, "encoding")
        _check_keys("encoding", enc, {"hash_buckets"})
        hash_buckets = enc.get("hash_buckets", DEFAULT_HASH_BUCKETS)
        if not isinstance(hash_buckets, int) or hash_buckets < 1:
            raise ConfigError(f"encoding.hash_buckets must be a positive integer, got {hash_buckets!r}")

        model = _section(raw, "model")
        _check_keys("model", model, MODEL_KEYS)
        if "tasks" in model:
            model["tasks"] = tuple(model["tasks"])
        tc = TrainConfig.from_dict(_section(raw, "train"))
        ModelConfig(input_dim=N_DENSE + hash_buckets, dropout_rate=tc.dropout_rate, **model)

        fd = _section(raw, "folds")
        _check_keys("folds", fd, FOLD_KEYS)
        folds = FoldParams(**fd)
        if not isinstance(folds.k, int) or folds.k < 2:
            raise ConfigError(f"folds.k must be an integer >= 2, got {folds.k!r}")

        methods = tuple(raw.get("methods", DEFAULT_METHODS))
        bad = [m for m in methods if m not in METHODS]
        if bad or not methods:
            raise ConfigError(f"methods must be a nonempty subset of {list(METHODS)}, got {list(methods)}")
        baselines = BaselineOptions.from_dict(_section(raw, "baselines"))
    except (DataError, ModelError, TrainingError, OptimError, CrossValidationError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    if "output_dir" not in raw:
        raise ConfigError("output_dir is required (config key or --out-dir)")
    output_dir = resolve(raw["output_dir"])
    if output_dir.exists() and not output_dir.is_dir():
        raise ConfigError(f"output_dir {output_dir} exists and is not a directory")
    if not _writable(output_dir):
        raise ConfigError(f"output_dir {output_dir} is not writable")
    fmt = raw.get("format", "both")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {list(FORMATS)}, got {fmt!r}")

    return RunConfig(
        raw=dict(raw),
        config_hash=config_hash(raw),
        data=data,
        synthetic=synthetic,
        min_len=min_len,
        hash_buckets=hash_buckets,
        model=model,
        train=tc,
        folds=folds,
        methods=methods,
        baselines=baselines,
        output_dir=output_dir,
        format=fmt,
    )


def load_run_config(path: str | Path, args: argparse.Namespace | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if args is not None:
        raw = apply_overrides(raw, args)
    return parse_config(raw, path.resolve().parent)


def load_records(cfg: RunConfig) -> list[StudentRecord]:
    if cfg.synthetic is not None:
        records = gen_synthetic(cfg.synthetic).records
    else:
        records = load_events(cfg.data["events"], cfg.data["questions"], cfg.data.get("static"))
    records = clean(records, cfg.min_len)
    if not records:
        raise DataError(f"no students left after cleaning with min_len={cfg.min_len}")
    return records


def _static_dim(records: Sequence[StudentRecord]) -> int:
    return len(records[0].static_features)


def _prepare_out(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _write_metrics(cfg: RunConfig, metrics: Metrics, stem: str = "metrics") -> list[Path]:
    out = []
    if cfg.format in ("json", "both"):
        path = cfg.output_dir / f"{stem}.json"
        _write_json(path, {"config_hash": cfg.config_hash, "metrics": {t: m.to_dict() for t, m in metrics.items()}})
        out.append(path)
    if cfg.format in ("csv", "both"):
        path = cfg.output_dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            fh.write(f"# config_hash={cfg.config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task", *RATES, *COUNTS])
            for t, m in metrics.items():
                w.writerow([t, *(getattr(m, c) for c in RATES + COUNTS)])
        out.append(path)
    return out


def check_compatible(expected: ModelConfig, found: ModelConfig) -> None:
    """Raise ModelError naming both shapes when a checkpoint does not fit."""
    want, have = param_shapes(expected), param_shapes(found)
    for name in sorted(set(want) | set(have)):
        if want.get(name) != have.get(name):
            raise ModelError(
                f"checkpoint/model shape mismatch for {name}: "
                f"checkpoint has {have.get(name)}, config expects {want.get(name)}"
            )
    if expected.static_in_forget_gate != found.static_in_forget_gate:
        raise ModelError("checkpoint/model mismatch: static_in_forget_gate differs")


def _load_compatible(cfg: RunConfig, checkpoint: Path, records: Sequence[StudentRecord]):
    params, meta = load_checkpoint(checkpoint)
    check_compatible(cfg.model_config(_static_dim(records)), params.config)
    if "encoding" not in meta:
        raise ModelError(f"{checkpoint}: checkpoint carries no encoding statistics")
    return params, EncodingConfig.from_dict(meta["encoding"])


def cmd_synth(cfg: RunConfig) -> list[Path]:
    if cfg.synthetic is None:
        raise ConfigError("synth needs a 'synthetic' section")
    data = gen_synthetic(cfg.synthetic)
    out = _prepare_out(cfg)
    paths = [out / "events.csv", out / "questions.csv", out / "static.csv", out / "manifest.json"]
    write_events_csv(paths[0], data.records)
    write_questions_csv(paths[1], data.answers)
    write_static_csv(paths[2], data.records)
    _write_json(paths[3], {
        "config_hash": cfg.config_hash,
        "synthetic": cfg.synthetic.to_dict(),
        "files": [p.name for p in paths[:3]],
    })
    return paths


def cmd_train(cfg: RunConfig) -> list[Path]:
    records = load_records(cfg)
    model_cfg = cfg.model_config(_static_dim(records))
    enc = fit_encoding(records, cfg.hash_buckets)
    seqs = encode_all(records, enc)
    params, logs = train(seqs, cfg.train, model_cfg)
    out = _prepare_out(cfg)
    ckpt, log_path = out / "checkpoint.json", out / "epoch_log.csv"
    save_checkpoint(ckpt, params, {
        "config_hash": cfg.config_hash,
        "encoding": enc.to_dict(),
        "seeds": cfg.seed_lineage(),
        "train": cfg.train.to_dict(),
        "n_students": len(records),
    })
    with log_path.open("w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "loss"])
        for e in logs:
            w.writerow([e.epoch, repr(e.lr), repr(e.loss)])
    return [ckpt, log_path]


def cmd_eval(cfg: RunConfig, checkpoint: Path) -> list[Path]:
    records = load_records(cfg)
    params, enc = _load_compatible(cfg, checkpoint, records)
    metrics = evaluate(params, encode_all(records, enc), cfg.train.threshold)
    _prepare_out(cfg)
    return _write_metrics(cfg, metrics)


def cmd_crossval(cfg: RunConfig, parallel_folds: int = 1) -> list[Path]:
    records = load_records(cfg)
    model_cfg = cfg.model_config(_static_dim(records))
    plan = kfold_split(records, cfg.folds.k, cfg.folds.seed, cfg.folds.stratify_by_risk)
    report = cross_validate(
        records, plan, cfg.train, model_cfg, cfg.methods, cfg.baselines, parallel_folds=parallel_folds
    )
    out = _prepare_out(cfg)
    paths = []
    if cfg.format in ("csv", "both"):
        paths.append(out / "cvreport.csv")
        report.write_csv(paths[-1], cfg.config_hash)
    if cfg.format in ("json", "both"):
        paths.append(out / "cvreport.json")
        report.write_json(paths[-1], cfg.config_hash)
    return paths


def cmd_predict(cfg: RunConfig, checkpoint: Path, student_id: str) -> tuple[list[Path], dict[str, Any]]:
    records = load_records(cfg)
    match = [r for r in records if r.student_id == student_id]
    if not match:
        raise LookupError(f"student not found: {student_id!r}")
    params, enc = _load_compatible(cfg, checkpoint, records)
    outputs = predict(params, encode(match[0], enc))
    doc = {
        "config_hash": cfg.config_hash,
        "student_id": student_id,
        "predictions": {
            t: [float(v) for v in outputs[t]] if t == "next_correct" else float(outputs[t])
            for t in TASKS
            if t in outputs
        },
    }
    out = _prepare_out(cfg)
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in student_id)
    path = out / f"predictions_{safe}.json"
    _write_json(path, doc)
    return [path], doc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edulstm", description="Fused static/sequential LSTM for student performance prediction.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out-dir", help="override output_dir")
        p.add_argument("--parallel-folds", type=int, default=1, help="worker processes for crossval folds")
        p.add_argument("--format", choices=FORMATS, help="report format")
        return p

    common(sub.add_parser("synth", help="write a synthetic dataset"))
    common(sub.add_parser("train", help="train on the whole dataset and write a checkpoint"))
    common(sub.add_parser("eval", help="score a checkpoint on the dataset")).add_argument(
        "--checkpoint", required=True
    )
    common(sub.add_parser("crossval", help="K-fold comparison against the baselines"))
    p = common(sub.add_parser("predict", help="per-task predictions for one student"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--student", required=True, help="student_id to predict for")
    return parser


def _fail(kind: str, code: int, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.parallel_folds < 1:
            raise ConfigError(f"--parallel-folds must be >= 1, got {args.parallel_folds}")
        checkpoint = Path(args.checkpoint) if getattr(args, "checkpoint", None) else None
        if checkpoint is not None and not checkpoint.is_file():
            raise ConfigError(f"checkpoint {checkpoint}: no such file")
        cfg = load_run_config(args.config, args)
    except ConfigError as exc:
        return _fail("validation", EXIT_VALIDATION, str(exc))

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if args.command == "synth":
            paths = cmd_synth(cfg)
        elif args.command == "train":
            paths = cmd_train(cfg)
        elif args.command == "eval":
            paths = cmd_eval(cfg, checkpoint)
        elif args.command == "crossval":
            paths = cmd_crossval(cfg, args.parallel_folds)
        else:
            paths, doc = cmd_predict(cfg, checkpoint, args.student)
            print(json.dumps(doc))
    except ConfigError as exc:
        return _fail("validation", EXIT_VALIDATION, str(exc))
    except LookupError as exc:
        return _fail("not_found", EXIT_RUNTIME, str(exc.args[0]))
    except (DataError, ModelError, TrainingError, CrossValidationError, OptimError, OSError) as exc:
        return _fail(type(exc).__name__, EXIT_RUNTIME, str(exc))
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
