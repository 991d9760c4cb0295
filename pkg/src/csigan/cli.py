"""Command-line front end.

Every setting lives in one flat key/value table.  A config file holds
``key = value`` lines (``#`` starts a comment) and any key can be overridden
with a flag of the same name, e.g. ``--lr-c 1e-3`` or ``--lr_c 1e-3``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from .experiments import (
    DEFAULT_BUDGETS,
    DEFAULT_DUMP_EPOCHS,
    MODELS,
    cmd_dump_fakes,
    cmd_evaluate,
    cmd_sweep,
    per_class_accuracy,
    write_fake_dumps,
)
from .models import load_checkpoint, save_checkpoint
from .tensor_engine import ConfigurationError, UsageError
from .trainer import AdamConfig, TrainConfig, train

log = logging.getLogger("csigan")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(t for t in text.replace(" ", "").split(",") if t)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: callable
    default: object
    help: str


KEYS: dict[str, Key] = {
    # data
    "data": Key(str, "", "dataset CSV; empty means generate in memory from the data_* keys"),
    "classes": Key(int, ds.DEFAULT_CLASSES, "number of locations"),
    "train_per_class": Key(int, ds.DEFAULT_TRAIN_PER_CLASS, "training samples per location"),
    "test_per_class": Key(int, ds.DEFAULT_TEST_PER_CLASS, "test samples per location"),
    "data_seed": Key(int, 0, "seed of the synthetic generator"),
    "noise_sigma": Key(float, ds.DEFAULT_NOISE_SIGMA, "white per-channel noise"),
    "drift_sigma": Key(float, ds.DEFAULT_DRIFT_SIGMA, "smooth per-sample perturbation"),
    # training
    "epochs": Key(int, 100, "training epochs"),
    "batch_size": Key(int, 32, "minibatch size"),
    "labeled_per_class": Key(int, 400, "labeled samples per location"),
    "seed": Key(int, 0, "training seed (init, shuffling, latents, labeled subset)"),
    "model": Key(str, "dcgan", "dcgan, cnn or dcgan_simplified_g"),
    "schedule": Key(str, "interleaved", "interleaved (C,D,G per minibatch) or phased"),
    "steps_per_epoch": Key(_opt_int, None, "minibatch steps per epoch; none = one pass over the training set"),
    "eval_every": Key(int, 1, "evaluate test accuracy every n epochs"),
    **{
        f"{name}_{net}": Key(float, getattr(cfg, attr), f"Adam {name} for {label}")
        for net, label, cfg in (
            ("c", "the classifier step", TrainConfig().adam_c),
            ("d", "the discriminator step", TrainConfig().adam_d),
            ("g", "the generator", TrainConfig().adam_g),
        )
        for name, attr in (("lr", "lr"), ("beta1", "beta1"), ("beta2", "beta2"), ("epsilon", "epsilon"))
    },
    # outputs and commands
    "out_dir": Key(str, "out", "directory for every output file"),
    "checkpoint": Key(str, "", "checkpoint to evaluate; default <out_dir>/checkpoint.npz"),
    "budgets": Key(_int_list, DEFAULT_BUDGETS, "sweep label budgets (total labeled samples)"),
    "seeds": Key(_int_list, (0, 1, 2, 3, 4), "sweep seeds"),
    "models": Key(_str_list, ("dcgan", "cnn"), "sweep models"),
    "dump_epochs": Key(_int_list, DEFAULT_DUMP_EPOCHS, "epochs at which fakes are dumped"),
    "dump_samples": Key(int, 64, "fakes per dumped epoch"),
    "log_level": Key(str, "INFO", "logging level"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def resolve(file_values: dict[str, str], overrides: dict[str, str]) -> dict:
    """Defaults, then the config file, then flags; every value parsed and checked."""
    settings = {k: spec.default for k, spec in KEYS.items()}
    errors = []
    for source in (file_values, overrides):
        for k, text in source.items():
            try:
                settings[k] = KEYS[k].parse(text)
            except ValueError as exc:
                errors.append(f"{k}: {exc}")
    if errors:
        raise ConfigurationError("; ".join(errors))
    return settings


def dump_settings(settings: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in settings.items())


def train_config(s: dict) -> TrainConfig:
    model = s["model"]
    if model not in MODELS:
        raise ConfigurationError(f"model: unknown {model!r}; choose from {', '.join(MODELS)}")
    adam = {
        net: AdamConfig(s[f"lr_{net}"], s[f"beta1_{net}"], s[f"beta2_{net}"], s[f"epsilon_{net}"]) for net in "cdg"
    }
    cfg = TrainConfig(
        epochs=s["epochs"],
        batch_size=s["batch_size"],
        labeled_per_class=s["labeled_per_class"],
        seed=s["seed"],
        simplified_g=model == "dcgan_simplified_g",
        cnn_only=model == "cnn",
        schedule=s["schedule"],
        steps_per_epoch=s["steps_per_epoch"],
        adam_c=adam["c"],
        adam_d=adam["d"],
        adam_g=adam["g"],
        eval_every=s["eval_every"],
    )
    cfg.validate()
    return cfg


def load_data(s: dict) -> ds.DatasetSplit:
    if s["data"]:
        path = Path(s["data"])
        if not path.exists():
            raise UsageError(f"data file not found: {path}")
        split = ds.load_csv(path)
        if "normalization" not in split.meta:
            split = ds.normalize(split)
        return ds.DatasetSplit(split.train_x, split.train_y, split.test_x, split.test_y,
                               n_classes=split.n_classes, meta=split.meta)
    return ds.normalize(
        ds.synth_generate(
            s["classes"], s["train_per_class"], s["test_per_class"], s["data_seed"], s["noise_sigma"], s["drift_sigma"]
        )
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run_generate_data(s: dict, out: Path) -> int:
    split = load_data({**s, "data": ""})
    path = Path(s["data"]) if s["data"] else out / "data.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save_csv(split, path)
    acc = ds.nearest_template_accuracy(split)
    print(f"wrote {len(split.train_x)} train + {len(split.test_x)} test samples to {path}")
    print(f"nearest-template test accuracy: {100 * acc:.2f}%")
    return 0


def run_train(s: dict, out: Path) -> int:
    cfg = train_config(s)
    data = load_data(s)
    g, d, history = train(cfg, data)
    nets = {"discriminator": d}
    if g is not None:
        nets["generator"] = g
    save_checkpoint(out / "checkpoint.npz", **nets)
    history.to_csv(out / "history.csv")
    print(f"final test accuracy: {history.records[-1].test_accuracy:.2f}%")
    print(f"wrote {out / 'checkpoint.npz'} and {out / 'history.csv'}")
    return 0


def run_evaluate(s: dict, out: Path) -> int:
    path = Path(s["checkpoint"]) if s["checkpoint"] else out / "checkpoint.npz"
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    nets = load_checkpoint(path)
    if "discriminator" not in nets:
        raise UsageError(f"{path} holds no discriminator/classifier")
    data = load_data(s)
    acc = cmd_evaluate(nets["discriminator"], data)
    per_class = per_class_accuracy(nets["discriminator"], data)
    with open(out / "evaluation.csv", "w") as fh:
        fh.write("class,accuracy\n")
        for m, a in enumerate(per_class, start=1):
            fh.write(f"{m},{a!r}\n")
        fh.write(f"all,{acc!r}\n")
    print(f"test accuracy: {acc:.2f}% on {len(data.test_x)} samples")
    return 0


def run_sweep(s: dict, out: Path) -> int:
    base = train_config(s)
    data = load_data(s)

    def progress(b, m, seed, acc):
        print(f"  budget {b:5d}  {m:<20s} seed {seed}: {acc:.2f}%", flush=True)

    result = cmd_sweep(data, base, s["budgets"], s["seeds"], s["models"], progress=progress)
    result.to_csv(out / "sweep.csv")
    table = result.table()
    (out / "sweep_table.txt").write_text(table + "\n")
    print(table)
    return 0 if all(r.ok for r in result.rows) else 2


def run_dump_fakes(s: dict, out: Path) -> int:
    cfg = train_config(s)
    data = load_data(s)
    dumps, history = cmd_dump_fakes(cfg, data, s["dump_epochs"], s["dump_samples"])
    write_fake_dumps(dumps, out / "fakes.csv")
    history.to_csv(out / "history.csv")
    for d in dumps:
        counts = np.bincount(d.predicted, minlength=data.n_classes + 1)[1:]
        print(f"epoch {d.epoch:4d}: {len(d.fakes)} fakes, classes hit {int((counts > 0).sum())}/{data.n_classes}")
    print(f"wrote {out / 'fakes.csv'}")
    return 0


COMMANDS = {
    "generate-data": run_generate_data,
    "train": run_train,
    "evaluate": run_evaluate,
    "sweep": run_sweep,
    "dump-fakes": run_dump_fakes,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csigan", description="Semi-supervised DCGAN CSI localization experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        for key, spec in KEYS.items():
            flag = "--" + key.replace("_", "-")
            alias = "--" + key
            names = [flag] if flag == alias else [flag, alias]
            p.add_argument(*names, dest=key, default=None, metavar="VALUE", help=f"{spec.help} [{_fmt(spec.default)}]")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        file_values = {}
        if args.config:
            cfg_path = Path(args.config)
            if not cfg_path.exists():
                raise UsageError(f"config file not found: {cfg_path}")
            file_values = parse_config_text(cfg_path.read_text(), str(cfg_path))
        overrides = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
        settings = resolve(file_values, overrides)
        logging.basicConfig(level=settings["log_level"].upper(), format="%(levelname)s %(name)s: %(message)s")
        if args.command != "generate-data":
            train_config(settings)  # field-level errors before anything is written
        out = Path(settings["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        echo = dump_settings(settings)
        print(f"# resolved configuration ({args.command})\n{echo}", end="")
        (out / f"config_{args.command.replace('-', '_')}.txt").write_text(echo)
        return COMMANDS[args.command](settings, out)
    except (UsageError, ConfigurationError, ds.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
