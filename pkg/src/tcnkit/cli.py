"""Command-line entry point: synth, train, predict, evaluate, ensemble.

Every run is a pure function of (flags, config file, input files, seed);
reruns produce byte-identical outputs. Option precedence is flags over
config file over built-in defaults, with the config file a flat
``key=value`` text file. Exit codes: 0 success, 1 usage or config error,
2 data error, 3 numerical divergence.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .metrics import PredictionMatrix, ensemble, evaluate
from .model import (
    TcnConfig,
    build_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .nncore import RngState
from .seqdata import (
    SPLITS,
    Dataset,
    PositionalEncodingConfig,
    concat_positional,
    drop_unannotated,
    generate_synthetic,
    load_feature_file,
    read_fseq,
    save_feature_file,
    write_fseq,
)
from .training import TrainConfig, train

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "precision": "standard",
    "epochs": 20,
    "lr": 0.005,
    "batch_size": 32,
    "dropout": 0.2,
    "kernel_size": 3,
    "blocks": 4,
    "hidden": 64,
    "head_hidden": 64,
    "pe_dim": 16,
    "pe_base": 10000.0,
    "positional_encoding": True,
    "lambda": 0.8,
    "videos": 8,
    "min_len": 110,
    "max_len": 130,
    "dim": 8,
    "expressions": 15,
    "gap_prob": 0.0,
    "split": "train",
    "clamp": False,
    "data_dir": None,
    "out_dir": None,
    "checkpoint": None,
    "predictions": None,
    "pred_a": None,
    "pred_b": None,
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(text):
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}") from None


_PARSERS = {
    int: int,
    float: float,
    bool: _parse_bool,
    str: lambda s: s.strip(),
}

SCHEMA = {key: type(value) if value is not None else str for key, value in DEFAULTS.items()}
SCHEMA["lambda"] = float

RELEVANT = {
    "synth": ("seed", "out_dir", "videos", "min_len", "max_len", "dim", "expressions",
              "gap_prob", "split"),
    "train": ("seed", "data_dir", "out_dir", "epochs", "lr", "batch_size", "dropout",
              "kernel_size", "blocks", "hidden", "head_hidden", "pe_dim", "pe_base",
              "positional_encoding", "precision", "threads"),
    "predict": ("checkpoint", "data_dir", "out_dir", "clamp", "threads"),
    "evaluate": ("predictions", "data_dir", "threads"),
    "ensemble": ("pred_a", "pred_b", "lambda", "out_dir"),
}

REQUIRED_PATHS = {
    "synth": ("out_dir",),
    "train": ("data_dir", "out_dir"),
    "predict": ("checkpoint", "data_dir", "out_dir"),
    "evaluate": ("predictions", "data_dir"),
    "ensemble": ("pred_a", "pred_b", "out_dir"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(prog="tcnkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    def add(name, help_text, flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file")
        for flag, kwargs in flags:
            p.add_argument(flag, **kwargs)
        p.set_defaults(command=name)
        return p

    common_int = lambda: {"type": int, "default": None}
    common_float = lambda: {"type": float, "default": None}
    path_arg = lambda: {"default": None}

    add("synth", "generate a synthetic FSEQ1 dataset plus manifest", [
        ("--out-dir", path_arg()),
        ("--seed", common_int()),
        ("--videos", common_int()),
        ("--min-len", common_int()),
        ("--max-len", common_int()),
        ("--dim", common_int()),
        ("--expressions", common_int()),
        ("--gap-prob", common_float()),
        ("--split", {"default": None, "choices": SPLITS}),
    ])
    add("train", "train a model on a directory of feature files", [
        ("--data-dir", path_arg()),
        ("--out-dir", path_arg()),
        ("--seed", common_int()),
        ("--epochs", common_int()),
        ("--lr", common_float()),
        ("--batch-size", common_int()),
        ("--dropout", common_float()),
        ("--kernel-size", common_int()),
        ("--blocks", common_int()),
        ("--hidden", common_int()),
        ("--head-hidden", common_int()),
        ("--pe-dim", common_int()),
        ("--pe-base", common_float()),
        ("--no-positional-encoding",
         {"action": "store_const", "const": False, "default": None,
          "dest": "positional_encoding"}),
        ("--precision", {"default": None, "choices": ("standard", "wide")}),
        ("--threads", common_int()),
    ])
    add("predict", "write per-timestamp predictions for a data directory", [
        ("--checkpoint", path_arg()),
        ("--data-dir", path_arg()),
        ("--out-dir", path_arg()),
        ("--clamp",
         {"action": "store_const", "const": True, "default": None,
          "help": "clip exported scores into [0, 1]"}),
        ("--threads", common_int()),
    ])
    add("evaluate", "score predictions against labeled data", [
        ("--predictions", path_arg()),
        ("--data-dir", path_arg()),
        ("--threads", common_int()),
    ])
    add("ensemble", "weighted average of two prediction sets", [
        ("--pred-a", path_arg()),
        ("--pred-b", path_arg()),
        ("--lambda", {"type": float, "default": None, "dest": "lambda_"}),
        ("--out-dir", path_arg()),
    ])
    return parser


def _read_config_file(path):
    values = {}
    errors = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"{path}:{lineno}: expected key=value, got {raw!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            errors.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _PARSERS[SCHEMA[key]](value)
        except ValueError as err:
            errors.append(f"{path}:{lineno}: bad value for {key!r}: {err}")
    if errors:
        raise ConfigError("\n".join(errors))
    return values


def _check_ranges(cfg):
    problems = []

    def need(cond, message):
        if not cond:
            problems.append(message)

    need(cfg["epochs"] >= 1, f"epochs must be >= 1, got {cfg['epochs']}")
    need(cfg["batch_size"] >= 1, f"batch_size must be >= 1, got {cfg['batch_size']}")
    need(cfg["lr"] >= 0, f"lr must be >= 0, got {cfg['lr']}")
    need(0 <= cfg["dropout"] < 1, f"dropout must be in [0, 1), got {cfg['dropout']}")
    need(cfg["threads"] >= 1, f"threads must be >= 1, got {cfg['threads']}")
    need(cfg["kernel_size"] >= 1, f"kernel_size must be >= 1, got {cfg['kernel_size']}")
    need(cfg["blocks"] >= 1, f"blocks must be >= 1, got {cfg['blocks']}")
    need(cfg["hidden"] >= 1, f"hidden must be >= 1, got {cfg['hidden']}")
    need(cfg["head_hidden"] >= 1, f"head_hidden must be >= 1, got {cfg['head_hidden']}")
    need(cfg["pe_dim"] > 0 and cfg["pe_dim"] % 2 == 0,
         f"pe_dim must be a positive even integer, got {cfg['pe_dim']}")
    need(cfg["pe_base"] > 1, f"pe_base must exceed 1, got {cfg['pe_base']}")
    need(0 <= cfg["lambda"] <= 1, f"lambda must be in [0, 1], got {cfg['lambda']}")
    need(cfg["videos"] >= 1, f"videos must be >= 1, got {cfg['videos']}")
    need(cfg["min_len"] >= 1, f"min_len must be >= 1, got {cfg['min_len']}")
    need(cfg["max_len"] >= cfg["min_len"],
         f"max_len must be >= min_len, got {cfg['max_len']} < {cfg['min_len']}")
    need(cfg["dim"] >= 1, f"dim must be >= 1, got {cfg['dim']}")
    need(cfg["expressions"] >= 1, f"expressions must be >= 1, got {cfg['expressions']}")
    need(0 <= cfg["gap_prob"] < 1, f"gap_prob must be in [0, 1), got {cfg['gap_prob']}")
    need(cfg["precision"] in ("standard", "wide"),
         f"precision must be standard or wide, got {cfg['precision']!r}")
    need(cfg["split"] in SPLITS, f"split must be one of {SPLITS}, got {cfg['split']!r}")
    if problems:
        raise ConfigError("\n".join(problems))


def _resolve(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_read_config_file(args.config))
    for key in SCHEMA:
        flag_value = getattr(args, "lambda_" if key == "lambda" else key, None)
        if flag_value is not None:
            cfg[key] = flag_value
    _check_ranges(cfg)
    for key in REQUIRED_PATHS[args.command]:
        if not cfg[key]:
            raise ConfigError(f"{args.command}: {key.replace('_', '-')} is required")
    return cfg


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _echo(command, cfg):
    print(f"command={command}")
    for key in sorted(RELEVANT[command]):
        print(f"{key}={_format_value(cfg[key])}")


def _load_many(paths, loader, threads):
    if threads <= 1:
        return [loader(p) for p in paths]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(loader, paths))


def _feature_files(directory):
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"not a directory: {directory}")
    files = sorted(root.glob("*.fseq"))
    if not files:
        raise DataError(f"no .fseq files found in {directory}")
    return files


def _load_prediction(path):
    timestamps, _, values, _, _ = read_fseq(path)
    if values is None:
        raise DataError(f"{path}: prediction file carries no score payload")
    return PredictionMatrix(
        video_id=Path(path).stem, values=values, timestamp_indices=timestamps
    )


def _prepare(seq, pe_cfg):
    return concat_positional(drop_unannotated(seq), pe_cfg)


def cmd_synth(cfg):
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(
        seed=cfg["seed"],
        n_videos=cfg["videos"],
        t_range=(cfg["min_len"], cfg["max_len"]),
        feature_dim=cfg["dim"],
        label_dim=cfg["expressions"],
        gap_prob=cfg["gap_prob"],
        split=cfg["split"],
    )
    lines = []
    for seq in dataset:
        name = f"{seq.video_id}.fseq"
        save_feature_file(seq, out / name)
        lines.append(f"{name}\t{seq.video_id}\t{dataset.split}")
    (out / "manifest.tsv").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(dataset)} sequences to {out}")
    return 0


def cmd_train(cfg):
    files = _feature_files(cfg["data_dir"])
    raw = _load_many(files, load_feature_file, cfg["threads"])
    pe_cfg = PositionalEncodingConfig(
        dim=cfg["pe_dim"], base=cfg["pe_base"], enabled=cfg["positional_encoding"]
    )
    prepared = [_prepare(seq, pe_cfg) for seq in raw]
    label_dims = {seq.label_dim for seq in prepared}
    if len(label_dims) != 1 or 0 in label_dims:
        raise DataError(f"training files disagree on label width: {sorted(label_dims)}")

    model_cfg = TcnConfig(
        input_dim=prepared[0].features.shape[1],
        output_dim=label_dims.pop(),
        hidden_channels=cfg["hidden"],
        num_blocks=cfg["blocks"],
        kernel_size=cfg["kernel_size"],
        dropout_rate=cfg["dropout"],
        head_hidden=cfg["head_hidden"],
    )
    metadata = {
        "positional_encoding": cfg["positional_encoding"],
        "pe_dim": cfg["pe_dim"],
        "pe_base": cfg["pe_base"],
    }
    model = build_model(
        model_cfg, rng=RngState(cfg["seed"]), precision=cfg["precision"], metadata=metadata
    )
    train_cfg = TrainConfig(
        epochs=cfg["epochs"],
        learning_rate=cfg["lr"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        precision=cfg["precision"],
    )
    model, log = train(model, Dataset(sequences=prepared), train_cfg)

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.tcnk")
    (out / "train_log.txt").write_text("\n".join(log.lines()) + "\n")
    for line in log.lines():
        print(line)
    print(f"checkpoint written to {out / 'checkpoint.tcnk'}")
    return 0


def cmd_predict(cfg):
    model = load_checkpoint(cfg["checkpoint"])
    md = model.metadata
    pe_cfg = PositionalEncodingConfig(
        dim=int(md.get("pe_dim", cfg["pe_dim"])),
        base=float(md.get("pe_base", cfg["pe_base"])),
        enabled=bool(md.get("positional_encoding", cfg["positional_encoding"])),
    )
    files = _feature_files(cfg["data_dir"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for path in files:
        seq = drop_unannotated(load_feature_file(path))
        scores = model_forward(model, concat_positional(seq, pe_cfg))
        if cfg["clamp"]:
            scores = np.clip(scores, 0.0, 1.0)
        write_fseq(
            out / f"{seq.video_id}.fseq",
            seq.timestamp_indices,
            np.zeros((len(seq), 0), dtype=np.float32),
            scores.astype(np.float32),
            np.ones(len(seq), dtype=bool),
        )
    print(f"wrote {len(files)} prediction files to {out}")
    return 0


def cmd_evaluate(cfg):
    gt_files = _feature_files(cfg["data_dir"])
    ground_truth = [
        drop_unannotated(seq)
        for seq in _load_many(gt_files, load_feature_file, cfg["threads"])
    ]
    pred_files = _feature_files(cfg["predictions"])
    predictions = _load_many(pred_files, _load_prediction, cfg["threads"])
    report = evaluate(Dataset(sequences=ground_truth), predictions)
    for line in report.lines():
        print(line)
    return 0


def cmd_ensemble(cfg):
    first = [_load_prediction(p) for p in _feature_files(cfg["pred_a"])]
    second = [_load_prediction(p) for p in _feature_files(cfg["pred_b"])]
    combined = ensemble(first, second, cfg["lambda"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for pred in combined:
        write_fseq(
            out / f"{pred.video_id}.fseq",
            pred.timestamp_indices,
            np.zeros((pred.values.shape[0], 0), dtype=np.float32),
            pred.values.astype(np.float32),
            np.ones(pred.values.shape[0], dtype=bool),
        )
    print(f"wrote {len(combined)} ensembled prediction files to {out}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "ensemble": cmd_ensemble,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise ConfigError("no command given; see tcnkit --help")
        cfg = _resolve(args)
        _echo(args.command, cfg)
        return _HANDLERS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
