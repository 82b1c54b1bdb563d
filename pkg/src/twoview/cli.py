"""Operator surface: dataset generation, training, evaluation, CAM export,
augmentation preview.

Configuration is flat `key = value` text; command-line flags override file
values, and the fully resolved configuration is echoed into the output
directory (`resolved.cfg`), so any run is reproducible from its own output.
Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.
No subcommand writes outside its --out directory.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .augment import STRATEGY_KINDS, AugStrategy, RngStream, apply_augment, derive_seed
from .imgops import ImageFileError, bilinear_resize, read_ppm, write_pgm, write_ppm
from .losses import PENALTY_KINDS
from .metrics import MetricUndefinedError, compute_report, write_scores_csv
from .model import ModelConfig, cam, encoder_forward
from .ndgrad import ContractError, DegenerateVectorError, ShapeError, Tensor
from .synthdata import SPLIT_NAMES, DatasetError, gen_dataset, load_dataset, save_dataset
from .trainer import (
    CheckpointError,
    TrainConfig,
    load_checkpoint,
    params_from_checkpoint,
    save_checkpoint,
    score_samples,
    train,
)


class ConfigError(Exception):
    """Bad configuration or usage; maps to exit code 2."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit int")
    return value


def _parse_channels(text: str) -> str:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if len(parts) < 2 or any(int(p) < 1 for p in parts):
        raise ValueError(f"channels must list >= 2 positive ints, got {text!r}")
    return ",".join(str(int(p)) for p in parts)


@dataclass(frozen=True)
class _Key:
    cast: Callable[[str], Any]
    default: Any = None  # None marks a required key
    choices: tuple | None = None


_SCHEMAS: dict[str, dict[str, _Key]] = {
    "gen-data": {
        "seed": _Key(_parse_seed, 0),
        "n_real": _Key(int, 100),
        "ratio": _Key(int, 4),
        "size": _Key(int, 64),
        "split_train": _Key(float, 0.7),
        "split_val": _Key(float, 0.15),
        "split_test": _Key(float, 0.15),
    },
    "train": {
        "seed": _Key(_parse_seed, 0),
        "data": _Key(str),
        "alpha": _Key(float, 1.0),
        "penalty": _Key(str, "cos", PENALTY_KINDS),
        "aug": _Key(str, "raaug", STRATEGY_KINDS),
        "pairs_per_batch": _Key(int, 32),
        "epochs": _Key(int, 30),
        "patience": _Key(int, 5),
        "lr": _Key(float, 2e-4),
        "w_real": _Key(float, 4.0),
        "w_fake": _Key(float, 1.0),
        "channels": _Key(_parse_channels, "16,32,64,128"),
    },
    "eval": {
        "seed": _Key(_parse_seed, 0),
        "checkpoint": _Key(str),
        "data": _Key(str),
        "split": _Key(str, "test", SPLIT_NAMES),
        "shifted_test": _Key(_parse_bool, False),
    },
    "cam": {
        "seed": _Key(_parse_seed, 0),
        "checkpoint": _Key(str),
        "data": _Key(str),
        "ids": _Key(str),
    },
    "aug-preview": {
        "seed": _Key(_parse_seed, 0),
        "image": _Key(str),
        "aug": _Key(str, "raaug", STRATEGY_KINDS),
        "count": _Key(int, 8),
    },
}


def _read_config_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def resolve_config(command: str, config_path: str | None, overrides: dict[str, Any]) -> dict[str, Any]:
    """defaults <- config file <- flags, with unknown keys rejected."""
    schema = _SCHEMAS[command]
    resolved: dict[str, Any] = {
        key: spec.default for key, spec in schema.items() if spec.default is not None
    }
    if config_path is not None:
        for key, text in _read_config_file(Path(config_path)).items():
            if key not in schema:
                raise ConfigError(f"{config_path}: unknown key {key!r} for {command}")
            try:
                resolved[key] = schema[key].cast(text)
            except ValueError as exc:
                raise ConfigError(f"{config_path}: key {key!r}: {exc}") from exc
    for key, value in overrides.items():
        if value is None:
            continue
        resolved[key] = value
    for key, spec in schema.items():
        if key not in resolved:
            raise ConfigError(f"{command} needs {key!r} (set it in the config file or by flag)")
        if spec.choices is not None and resolved[key] not in spec.choices:
            raise ConfigError(
                f"key {key!r} must be one of {list(spec.choices)}, got {resolved[key]!r}"
            )
    return resolved


def _echo_resolved(out: Path, command: str, cfg: dict[str, Any]) -> None:
    lines = [f"# resolved configuration for `{command}`"]
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    (out / "resolved.cfg").write_text("\n".join(lines) + "\n")


def _prepare_out(out_arg: str | None) -> Path:
    if not out_arg:
        raise ConfigError("--out is required")
    out = Path(out_arg)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ----------------------------------------------------------------


def cmd_gen_data(cfg: dict[str, Any], out: Path) -> None:
    ds = gen_dataset(
        n_real=cfg["n_real"],
        ratio=cfg["ratio"],
        seed=cfg["seed"],
        split_fracs=(cfg["split_train"], cfg["split_val"], cfg["split_test"]),
        size=cfg["size"],
    )
    save_dataset(ds, out)
    counts = {name: len(ds.split(name)) for name in SPLIT_NAMES}
    print(f"wrote {sum(counts.values())} samples to {out} " + str(counts))


def _model_config_for(cfg: dict[str, Any], dataset) -> ModelConfig:
    input_size = dataset.train[0].image.shape[0]
    channels = tuple(int(p) for p in cfg["channels"].split(","))
    return ModelConfig(input_size=input_size, channels=channels)


def cmd_train(cfg: dict[str, Any], out: Path) -> None:
    dataset = load_dataset(cfg["data"])
    tc = TrainConfig(
        pairs_per_batch=cfg["pairs_per_batch"],
        max_epochs=cfg["epochs"],
        patience=cfg["patience"],
        lr=cfg["lr"],
        alpha=cfg["alpha"],
        penalty=cfg["penalty"],
        aug=cfg["aug"],
        w_real=cfg["w_real"],
        w_fake=cfg["w_fake"],
        seed=cfg["seed"],
        model=_model_config_for(cfg, dataset),
    )

    def report(record):
        print(
            f"epoch {record.epoch:3d}  ce {record.ce_loss:9.4f}  "
            f"consistency {record.consistency_loss:9.6f}  val_auc {record.val_auc:.4f}  "
            f"({record.seconds:.1f}s)"
        )

    ckpt, history = train(tc, dataset, on_epoch=report)
    save_checkpoint(out / "model.ckpt", ckpt)
    history.to_csv(out / "history.csv")
    print(f"best epoch {ckpt.epoch} (val_auc {ckpt.best_val_auc:.4f}) -> {out / 'model.ckpt'}")


def cmd_eval(cfg: dict[str, Any], out: Path) -> None:
    ckpt = load_checkpoint(cfg["checkpoint"])
    enc, cls = params_from_checkpoint(ckpt)
    dataset = load_dataset(
        cfg["data"],
        shifted_test=cfg["shifted_test"],
        shift_seed=derive_seed(cfg["seed"], "shifted-test"),
    )
    samples = dataset.split(cfg["split"])
    if not samples:
        raise DatasetError(f"split {cfg['split']!r} is empty in {cfg['data']}")
    scored = score_samples(enc, cls, samples)
    report = compute_report(scored)
    (out / "report.txt").write_text(report.to_text())
    write_scores_csv(out / "scores.csv", [s.source_id for s in samples], scored)
    sys.stdout.write(report.to_text())


def _heat_overlay(image: np.ndarray, heat: np.ndarray) -> np.ndarray:
    """Red-tinted blend: hotter pixels pull the input toward pure red."""
    weight = (0.5 * heat)[:, :, None]
    red = np.zeros_like(image)
    red[:, :, 0] = 1.0
    return (1.0 - weight) * image + weight * red


def cmd_cam(cfg: dict[str, Any], out: Path) -> None:
    ckpt = load_checkpoint(cfg["checkpoint"])
    enc, cls = params_from_checkpoint(ckpt)
    dataset = load_dataset(cfg["data"])
    by_id = {s.source_id: s for name in SPLIT_NAMES for s in dataset.split(name)}
    ids = [token.strip() for token in cfg["ids"].split(",") if token.strip()]
    if not ids:
        raise ConfigError("cam needs at least one sample id in 'ids'")
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise ConfigError(f"unknown sample ids {unknown}; ids come from the index file stems")
    for sample_id in ids:
        sample = by_id[sample_id]
        x = sample.image.transpose(2, 0, 1)[None]
        _, maps = encoder_forward(Tensor(x), enc)
        heat = cam(maps.data[0], cls, class_index=1)
        size = sample.image.shape[0]
        up = np.clip(bilinear_resize(heat, size, size), 0.0, 1.0)
        write_ppm(out / f"{sample_id}_input.ppm", sample.image)
        write_pgm(out / f"{sample_id}_cam.pgm", up)
        write_ppm(out / f"{sample_id}_overlay.ppm", _heat_overlay(sample.image, up))
        if sample.mask is not None:
            write_pgm(out / f"{sample_id}_mask.pgm", sample.mask.astype(np.float64))
        print(f"{sample_id}: cam written (peak {up.max():.3f})")


def cmd_aug_preview(cfg: dict[str, Any], out: Path) -> None:
    image = read_ppm(cfg["image"])
    strategy = AugStrategy(kind=cfg["aug"])
    if cfg["count"] < 0:
        raise ConfigError(f"count must be >= 0, got {cfg['count']}")
    stem = Path(cfg["image"]).stem
    for k in range(cfg["count"]):
        view = apply_augment(image, strategy, RngStream(cfg["seed"], 0, k, 0))
        name = f"{stem}_{cfg['aug']}_s{cfg['seed']}_k{k:03d}.ppm"
        write_ppm(out / name, view)
    print(f"wrote {cfg['count']} previews to {out}")


# -- argument plumbing ----------------------------------------------------------


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "cam": cmd_cam,
    "aug-preview": cmd_aug_preview,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twoview",
        description="Two-view consistency training for tamper detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--out", metavar="DIR", help="output directory (required)")
        p.add_argument("--seed", type=_parse_seed, default=None, metavar="U64")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    common(p)
    p.add_argument("--n-real", dest="n_real", type=int, default=None)
    p.add_argument("--ratio", type=int, default=None)
    p.add_argument("--size", type=int, default=None)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.add_argument("--data", default=None, metavar="DIR")
    p.add_argument("--alpha", type=float, default=None, metavar="F")
    p.add_argument("--penalty", choices=PENALTY_KINDS, default=None)
    p.add_argument("--aug", choices=STRATEGY_KINDS, default=None)
    p.add_argument("--pairs-per-batch", dest="pairs_per_batch", type=int, default=None, metavar="N")
    p.add_argument("--epochs", type=int, default=None, metavar="N")
    p.add_argument("--patience", type=int, default=None, metavar="N")
    p.add_argument("--lr", type=float, default=None, metavar="F")
    p.add_argument("--w-real", dest="w_real", type=float, default=None, metavar="F")
    p.add_argument("--w-fake", dest="w_fake", type=float, default=None, metavar="F")
    p.add_argument("--channels", type=_parse_channels, default=None, metavar="C0,C1,...")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    common(p)
    p.add_argument("--checkpoint", default=None, metavar="PATH")
    p.add_argument("--data", default=None, metavar="DIR")
    p.add_argument("--split", choices=SPLIT_NAMES, default=None)
    p.add_argument(
        "--shifted-test",
        dest="shifted_test",
        action="store_const",
        const=True,
        default=None,
        help="corrupt the test split at load time (distribution shift)",
    )

    p = sub.add_parser("cam", help="export CAM heatmaps for chosen sample ids")
    common(p)
    p.add_argument("--checkpoint", default=None, metavar="PATH")
    p.add_argument("--data", default=None, metavar="DIR")
    p.add_argument("--ids", default=None, metavar="ID[,ID...]")

    p = sub.add_parser("aug-preview", help="write augmented variants of one image")
    common(p)
    p.add_argument("--image", default=None, metavar="PATH")
    p.add_argument("--aug", choices=STRATEGY_KINDS, default=None)
    p.add_argument("--count", type=int, default=None, metavar="N")

    return parser


# Bad keys, values, or flag combinations are the caller's mistake (exit 2);
# failures while doing the work (bad files on disk, degenerate numerics,
# filesystem trouble) are runtime errors (exit 1).
_CONFIG_ERRORS = (ConfigError, ContractError)
_RUNTIME_ERRORS = (
    DatasetError,
    CheckpointError,
    ImageFileError,
    MetricUndefinedError,
    DegenerateVectorError,
    ShapeError,
    OSError,
)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2

    command = args.command
    schema = _SCHEMAS[command]
    overrides = {key: getattr(args, key, None) for key in schema}
    try:
        cfg = resolve_config(command, args.config, overrides)
        out = _prepare_out(args.out)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        _echo_resolved(out, command, cfg)
        _HANDLERS[command](cfg, out)
        return 0
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
