"""Command-line front end.

Subcommands: variance-scan, train, ablation, noise-sweep, tni, plus
make-data (synthetic digit corpus) and replay (re-run from a manifest).

Every run resolves its configuration as defaults < config file < flags,
writes its outputs under --out, and drops a manifest.json capturing the
fully resolved configuration.  Replaying a manifest on the same build
reproduces all noiseless outputs byte-for-byte; every random draw flows
from the single named seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import reference_plan
from .data import BinaryDataset, load_idx, make_binary, resolve_data_dir, split
from .experiments import (
    ablation_study,
    gradient_variance_scan,
    noise_sweep,
    train_study,
)
from .synthetic import make_synthetic_dir
from .tni import TniConfig, tni_pretrain
from .training import (
    CostKind,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    write_metrics_csv,
)

MANIFEST_SCHEMA = "qcnnlab.manifest.v1"
VARIANCE_SCHEMA = "qcnnlab.variance.v1"
NOISE_SCHEMA = "qcnnlab.noise.v1"
ABLATION_SCHEMA = "qcnnlab.ablation.v1"


class ConfigError(ValueError):
    pass


def _to_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes"):
        return True
    if s.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_opt_int(s: str) -> int | None:
    return None if s in ("", "none") else int(s)


def _to_floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip() != ""]


# key -> (converter, default); names mirror the hyperparameter table
CONFIG_SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "num_qubits": (int, 10),
    "cost": (str, "local"),
    "init": (str, "tni"),
    "learning_rate": (float, 0.015),
    "decay_rate": (float, 0.9),
    "decay_steps": (_to_opt_int, None),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "epsilon": (float, 1e-8),
    "batch_size": (int, 32),
    "epochs": (int, 150),
    "class_a": (int, 0),
    "class_b": (int, 7),
    "data_seed": (int, 7),
    "train_count": (int, 1000),
    "val_count": (int, 200),
    "test_count": (int, 200),
    "bond_dimension": (int, 16),
    "data_bond_dimension": (int, 1),
    "tni_iterations": (int, 50),
    "subset_size": (int, 128),
    "init_stddev": (float, 0.1),
    "tni_batch_size": (int, 8),
    "tni_learning_rate": (float, 0.05),
    "n_min": (int, 4),
    "n_max": (int, 12),
    "n_step": (int, 2),
    "samples_per_n": (int, 200),
    "scan_input": (str, "zero"),  # or "random-product"
    "num_seeds": (int, 5),
    "p_list": (_to_floats, [0.0, 0.005, 0.01, 0.02, 0.05]),
    "checkpoint": (str, ""),
    "eval_count": (int, 0),  # 0: whole test split
    "num_per_class": (int, 700),
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


def resolve_config(args: argparse.Namespace) -> dict:
    config = {k: default for k, (_, default) in CONFIG_SCHEMA.items()}
    if args.config:
        for key, text in parse_config_file(args.config).items():
            conv, _ = CONFIG_SCHEMA[key]
            try:
                config[key] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"{args.config}: key {key!r}: {exc}") from exc
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            config[key] = flag
    return config


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    outputs: list[str]
    duration_s: float

    def to_json(self) -> str:
        doc = {"schema": MANIFEST_SCHEMA, **self.__dict__}
        return json.dumps(doc, indent=2, sort_keys=True)


def _write_manifest(out_dir: Path, command: str, config: dict,
                    outputs: list[Path], duration: float) -> Path:
    serializable = {k: (v if not isinstance(v, (list, tuple)) else list(v))
                    for k, v in config.items()}
    manifest = RunManifest(command, serializable, int(config["seed"]),
                           __version__, [p.name for p in outputs], duration)
    path = out_dir / "manifest.json"
    path.write_text(manifest.to_json())
    return path


def _load_splits(config: dict, data_dir: Path):
    raw = load_idx(data_dir / "train-images-idx3-ubyte",
                   data_dir / "train-labels-idx1-ubyte")
    ds = make_binary(raw, config["class_a"], config["class_b"],
                     config["num_qubits"], seed=config["data_seed"])
    total = len(ds.samples)
    want = config["train_count"] + config["val_count"] + config["test_count"]
    if want > total:
        raise ValueError(f"requested {want} samples but dataset has {total}")
    if want < total:
        # make_binary already shuffled with the data seed; keep a prefix
        ds = BinaryDataset(ds.samples[:want], ds.class_pair, ds.split_seed)
    fr = (config["train_count"] / want, config["val_count"] / want,
          config["test_count"] / want)
    tr, va, te = split(ds, fr)
    return tr.samples, va.samples, te.samples


def _train_config(config: dict) -> TrainConfig:
    return TrainConfig(
        eta0=config["learning_rate"], gamma=config["decay_rate"],
        decay_steps=config["decay_steps"], beta1=config["beta1"],
        beta2=config["beta2"], epsilon=config["epsilon"],
        batch_size=config["batch_size"], epochs=config["epochs"],
        cost_kind=CostKind(config["cost"].upper()), seed=config["seed"],
    )


def _tni_config(config: dict) -> TniConfig:
    return TniConfig(
        chi=config["bond_dimension"], chi_data=config["data_bond_dimension"],
        iterations=config["tni_iterations"], subset_size=config["subset_size"],
        init_stddev=config["init_stddev"], seed=config["seed"],
        batch_size=config["tni_batch_size"], eta=config["tni_learning_rate"],
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_variance_scan(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    rows = gradient_variance_scan(config["n_min"], config["n_max"],
                                  config["samples_per_n"], config["seed"],
                                  step=config["n_step"],
                                  input_state=config["scan_input"])
    out = out_dir / "variance.csv"
    with open(out, "w", newline="") as f:
        f.write(f"# schema: {VARIANCE_SCHEMA}\n")
        w = csv.writer(f)
        w.writerow(["n", "cost_kind", "variance", "samples"])
        for r in rows:
            w.writerow([r.n, r.cost_kind, f"{r.variance:.12g}", r.samples])
    return [out]


def cmd_train(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    train_set, val_set, test_set = _load_splits(config, data_dir)
    plan, _ = reference_plan() if config["num_qubits"] == 10 else _plan_for(config)
    cfg = _train_config(config)
    history, theta, test_acc = train_study(
        train_set, val_set, test_set, plan, cfg, config["init"],
        _tni_config(config) if config["init"] == "tni" else None)
    metrics = out_dir / "metrics.csv"
    write_metrics_csv(metrics, history)
    ckpt = out_dir / "checkpoint.json"
    save_checkpoint(ckpt, theta, provenance={
        "command": "train", "cost": config["cost"], "init": config["init"],
        "seed": config["seed"], "test_accuracy": test_acc,
    })
    print(f"terminal val accuracy {history[-1].val_acc:.4f}, "
          f"test accuracy {test_acc:.4f}")
    return [metrics, ckpt]


def _plan_for(config: dict):
    from .circuit import build_qcnn

    return build_qcnn(config["num_qubits"], None, tied=True)


def cmd_ablation(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    if config["num_seeds"] < 3:
        raise ValueError("ablation needs num_seeds >= 3")
    train_set, val_set, test_set = _load_splits(config, data_dir)
    plan, _ = reference_plan() if config["num_qubits"] == 10 else _plan_for(config)
    summary = ablation_study(train_set, val_set, test_set, plan,
                             config["num_seeds"], _train_config(config),
                             _tni_config(config))
    out_csv = out_dir / "ablation.csv"
    with open(out_csv, "w", newline="") as f:
        f.write(f"# schema: {ABLATION_SCHEMA}\n")
        w = csv.writer(f)
        w.writerow(["seed", "tni_first_loss", "random_first_loss",
                    "tni_terminal_acc", "random_terminal_acc"])
        for r in summary.rows:
            w.writerow([r.seed, f"{r.tni_first_loss:.12g}",
                        f"{r.random_first_loss:.12g}",
                        f"{r.tni_terminal_acc:.12g}",
                        f"{r.random_terminal_acc:.12g}"])
    out_json = out_dir / "ablation_summary.json"
    out_json.write_text(json.dumps({
        "schema": ABLATION_SCHEMA,
        "median_initial_loss_reduction": summary.median_initial_loss_reduction,
        "random_premature_fraction": summary.random_premature_fraction,
        "num_seeds": config["num_seeds"],
    }, indent=2, sort_keys=True))
    print(f"median initial-loss reduction "
          f"{summary.median_initial_loss_reduction:.3f}; random-init premature "
          f"fraction {summary.random_premature_fraction:.2f}")
    return [out_csv, out_json]


def cmd_noise_sweep(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    if not config["checkpoint"]:
        raise ValueError("noise-sweep requires --checkpoint")
    theta, _, _ = load_checkpoint(config["checkpoint"])
    _, _, test_set = _load_splits(config, data_dir)
    if config["eval_count"] > 0:
        rng = np.random.default_rng(config["seed"])
        idx = rng.choice(len(test_set), size=min(config["eval_count"], len(test_set)),
                         replace=False)
        test_set = [test_set[i] for i in sorted(idx)]
    plan, _ = reference_plan() if config["num_qubits"] == 10 else _plan_for(config)
    rows = noise_sweep(theta, test_set, plan, config["p_list"])
    out = out_dir / "noise.csv"
    with open(out, "w", newline="") as f:
        f.write(f"# schema: {NOISE_SCHEMA}\n")
        w = csv.writer(f)
        w.writerow(["p", "accuracy", "mean_score"])
        for r in rows:
            w.writerow([f"{r.p:.12g}", f"{r.accuracy:.12g}", f"{r.mean_score:.12g}"])
    return [out]


def cmd_tni(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    train_set, _, _ = _load_splits(config, data_dir)
    plan, _ = reference_plan() if config["num_qubits"] == 10 else _plan_for(config)
    cfg = _tni_config(config)
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(len(train_set), size=min(cfg.subset_size, len(train_set)),
                     replace=False)
    theta = tni_pretrain([train_set[i] for i in idx], plan, cfg)
    ckpt = out_dir / "theta_seed.json"
    save_checkpoint(ckpt, theta, provenance={
        "command": "tni", "seed": cfg.seed, "chi": cfg.chi,
        "chi_data": cfg.chi_data, "iterations": cfg.iterations,
        "subset_size": cfg.subset_size, "init_stddev": cfg.init_stddev,
    })
    return [ckpt]


def cmd_make_data(config: dict, out_dir: Path, data_dir: Path | None) -> list[Path]:
    make_synthetic_dir(out_dir, num_per_class=config["num_per_class"],
                       seed=config["seed"])
    return sorted(p for p in out_dir.iterdir() if p.name.endswith("ubyte"))


COMMANDS = {
    "variance-scan": cmd_variance_scan,
    "train": cmd_train,
    "ablation": cmd_ablation,
    "noise-sweep": cmd_noise_sweep,
    "tni": cmd_tni,
    "make-data": cmd_make_data,
}
NEEDS_DATA = {"train", "ablation", "noise-sweep", "tni"}


def run_command(command: str, config: dict, out_dir: Path,
                data_flag: str | None, threads: int | None) -> Path:
    if threads is not None and threads > 0:
        try:
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        except ImportError:
            pass
    out_dir.mkdir(parents=True, exist_ok=True)
    data_dir = resolve_data_dir(data_flag) if command in NEEDS_DATA else None
    start = time.perf_counter()
    outputs = COMMANDS[command](config, out_dir, data_dir)
    duration = time.perf_counter() - start
    manifest = _write_manifest(out_dir, command, config, outputs, duration)
    for p in outputs + [manifest]:
        print(p)
    return manifest


def cmd_replay(manifest_path: str, out: str | None, data_flag: str | None,
               threads: int | None) -> None:
    doc = json.loads(Path(manifest_path).read_text())
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise ConfigError(f"unexpected manifest schema {doc.get('schema')!r}")
    config = {k: default for k, (_, default) in CONFIG_SCHEMA.items()}
    config.update(doc["config"])
    out_dir = Path(out) if out else Path(manifest_path).parent / "replay"
    run_command(doc["command"], config, out_dir, data_flag, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcnnlab",
                                     description="QCNN experiment runner")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--data", default=None,
                       help="IDX data directory (default: $QCNN_MNIST_DIR)")
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("variance-scan", help="gradient variance vs qubit count")
    common(p)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--n-step", dest="n_step", type=int)
    p.add_argument("--samples", dest="samples_per_n", type=int)
    p.add_argument("--scan-input", dest="scan_input",
                   choices=["zero", "random-product"])

    p = sub.add_parser("train", help="train the classifier")
    common(p)
    p.add_argument("--cost", choices=["local", "global"])
    p.add_argument("--init", choices=["tni", "random"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = sub.add_parser("ablation", help="paired TNI-vs-random initialization study")
    common(p)
    p.add_argument("--num-seeds", dest="num_seeds", type=int)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("noise-sweep", help="evaluate a checkpoint under noise")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--p-list", dest="p_list", type=_to_floats)
    p.add_argument("--eval-count", dest="eval_count", type=int)

    p = sub.add_parser("tni", help="tensor-network warm start only")
    common(p)

    p = sub.add_parser("make-data", help="write a synthetic digit corpus")
    common(p)
    p.add_argument("--num-per-class", dest="num_per_class", type=int)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            cmd_replay(args.manifest, args.out, args.data, args.threads)
        else:
            config = resolve_config(args)
            out_dir = Path(args.out) if args.out else Path("runs") / args.command
            run_command(args.command, config, out_dir, args.data, args.threads)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
