"""Experiment orchestration: train -> attack -> drift, from JSON configs.

A config fully determines one experiment: data source, split, training
hyperparameters, a list of attacks, and drift settings. Runs are
deterministic given the config; every CSV the harness writes contains
repr-formatted floats and no timestamps, so identical configs reproduce
identical bytes. Timestamps live only in provenance.json.

Trained models are cached under a key derived from the data/split/train
sections, so sweeps and repeated runs reuse one fixed classifier. The
DRIFTSHADE_CACHE environment variable relocates the cache directory;
DRIFTSHADE_THREADS bounds attack-level parallelism (default 1).
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, run_attack
from .data import (
    CsvFormatError,
    LabeledDataset,
    SplitSpec,
    generate_synthetic,
    load_csv,
    save_csv,
    split_dataset,
)
from .drift import DetectionThresholds, DriftReport, avg_psi, compare_prob_samples
from .mlp import MlpClassifier, ModelFormatError
from .objectives import LossSpec

__all__ = [
    "CONFIG_VERSION",
    "REPORT_COLUMNS",
    "ACCURACY_FLOOR",
    "SweepSpec",
    "AttackRow",
    "ExperimentResult",
    "default_config",
    "normalize_config",
    "load_config",
    "attack_config_from_json",
    "thresholds_from_json",
    "model_cache_key",
    "save_prob_csv",
    "load_prob_csv",
    "run_experiment",
    "run_sweep",
    "sweep_spec_from_json",
    "emit_report",
]

CONFIG_VERSION = 1
ACCURACY_FLOOR = 0.95

REPORT_COLUMNS = (
    "attack_id", "objective", "optimizer", "epsilon", "delta", "iterations",
    "alpha", "kernel", "final_loss", "asr_pct", "jsd", "hellinger",
    "wasserstein", "mmd", "ks", "psi", "avg_psi", "detected_by",
)

SERIES_METRICS = (
    "asr_pct", "avg_psi", "psi", "ks", "jsd", "hellinger", "wasserstein",
    "mmd", "final_loss",
)

SWEEP_PARAMS = {
    "epsilon": "step_size",
    "delta": "budget",
    "iterations": "iterations",
    "alpha": "alpha",
}

_ATTACK_DEFAULTS = {
    "optimizer": "ifgsm",
    "objective": "none",
    "alpha": 0.0,
    "kernel": None,
    "y_target": 0,
    "step_size": 0.01,
    "budget": 0.1,
    "iterations": 100,
    "seed": None,
    "mmd_batch": 256,
    "eps_norm": 1e-8,
}


def default_config() -> dict:
    return {
        "version": CONFIG_VERSION,
        "seed": 0,
        "data": {
            "kind": "synthetic",
            "n_per_class": 2000,
            "n_features": 64,
            "class_separation": 4.0,
            "seed": None,
        },
        "split": {"train": 0.7, "val": 0.15, "test": 0.15, "seed": None},
        "train": {
            "hidden1": 256, "hidden2": 128, "dropout_rate": 0.2,
            "weight_decay": 1e-4, "learning_rate": 1e-3, "beta1": 0.9,
            "beta2": 0.999, "adam_eps": 1e-8, "batch_size": 64,
            "max_epochs": 100, "patience": 10, "random_state": None,
        },
        "attacks": [],
        "drift": {
            "n_bins": 10,
            "bootstrap": 10,
            "bootstrap_seed": None,
            "thresholds": {
                "psi": 0.10, "jsd": None, "hellinger": None,
                "wasserstein": None, "ks_alpha": 0.05, "mmd_alpha": 0.05,
                "mmd_permutations": 200, "seed": None,
            },
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ValueError(f"unknown config key {path + key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def normalize_config(cfg: dict, seed_override: int | None = None) -> dict:
    """Merge over defaults, resolve every derived seed, and validate.

    Sections may omit their seeds; missing ones derive from the global seed
    at fixed offsets, so one --seed value moves the whole pipeline while
    explicitly pinned sub-seeds stay put.
    """
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    cfg = dict(cfg)
    attacks = cfg.pop("attacks", [])
    sweep = cfg.pop("sweep", None)
    out = _merge(default_config(), cfg)
    if out["version"] != CONFIG_VERSION:
        raise ValueError(
            f"config version {out['version']} unsupported; this build reads "
            f"version {CONFIG_VERSION}"
        )
    if seed_override is not None:
        out["seed"] = int(seed_override)
    seed = int(out["seed"])

    if out["data"]["kind"] == "synthetic":
        if out["data"]["seed"] is None:
            out["data"]["seed"] = seed
        out["data"].pop("path", None)
    elif out["data"]["kind"] == "csv":
        if not out["data"].get("path"):
            raise ValueError("csv data source requires a path")
        out["data"] = {"kind": "csv", "path": str(out["data"]["path"])}
    else:
        raise ValueError(f"unknown data kind {out['data']['kind']!r}")
    if out["split"]["seed"] is None:
        out["split"]["seed"] = seed + 1
    if out["train"]["random_state"] is None:
        out["train"]["random_state"] = seed + 2
    if out["drift"]["thresholds"]["seed"] is None:
        out["drift"]["thresholds"]["seed"] = seed + 3
    if out["drift"]["bootstrap_seed"] is None:
        out["drift"]["bootstrap_seed"] = seed + 4

    norm_attacks = []
    seen = set()
    for i, entry in enumerate(attacks):
        merged = dict(_ATTACK_DEFAULTS)
        merged["id"] = f"attack{i}"
        for key, value in entry.items():
            if key != "id" and key not in _ATTACK_DEFAULTS:
                raise ValueError(f"attack {i}: unknown key {key!r}")
            merged[key] = value
        if merged["seed"] is None:
            merged["seed"] = seed + 100 + i
        if merged["id"] in seen:
            raise ValueError(f"duplicate attack id {merged['id']!r}")
        seen.add(merged["id"])
        attack_config_from_json(merged)  # validates eagerly
        norm_attacks.append(merged)
    out["attacks"] = norm_attacks
    if sweep is not None:
        out["sweep"] = dict(sweep)
    return out


def load_config(path, seed_override: int | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    return normalize_config(raw, seed_override)


def attack_config_from_json(entry: dict) -> AttackConfig:
    spec = LossSpec(
        y_target=int(entry.get("y_target", 0)),
        kind=entry["objective"],
        alpha=float(entry["alpha"]),
        kernel=entry["kernel"],
        eps_norm=float(entry["eps_norm"]),
    )
    return AttackConfig(
        optimizer=entry["optimizer"],
        loss=spec,
        step_size=float(entry["step_size"]),
        budget=float(entry["budget"]),
        iterations=int(entry["iterations"]),
        seed=int(entry["seed"]),
        mmd_batch=int(entry["mmd_batch"]),
    )


def thresholds_from_json(entry: dict) -> DetectionThresholds:
    inf = float("inf")
    return DetectionThresholds(
        psi=entry["psi"] if entry["psi"] is not None else inf,
        jsd=entry["jsd"] if entry["jsd"] is not None else inf,
        hellinger=entry["hellinger"] if entry["hellinger"] is not None else inf,
        wasserstein=(entry["wasserstein"]
                     if entry["wasserstein"] is not None else inf),
        ks_alpha=entry["ks_alpha"],
        mmd_alpha=entry["mmd_alpha"],
        mmd_permutations=entry["mmd_permutations"],
        seed=entry["seed"],
    )


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def model_cache_key(cfg: dict) -> str:
    subset = {k: cfg[k] for k in ("data", "split", "train")}
    return hashlib.sha256(_canonical_json(subset).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepSpec:
    """One swept attack parameter over an ascending value list, everything
    else pinned by the base attack entry."""

    param: str
    values: tuple
    base: dict

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(
                f"swept parameter must be one of {sorted(SWEEP_PARAMS)}"
            )
        if len(self.values) == 0:
            raise ValueError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly ascending")


def sweep_spec_from_json(entry: dict) -> SweepSpec:
    return SweepSpec(
        param=entry["param"],
        values=tuple(entry["values"]),
        base=dict(entry.get("base", {})),
    )


@dataclass
class AttackRow:
    attack_id: str
    config: AttackConfig
    asr_pct: float
    final_loss: float
    report: DriftReport
    avg_psi: float
    x_adv: np.ndarray
    p_adv: np.ndarray

    def to_dict(self) -> dict:
        spec = self.config.loss
        rep = self.report
        return {
            "attack_id": self.attack_id,
            "objective": spec.kind,
            "optimizer": self.config.optimizer,
            "epsilon": self.config.step_size,
            "delta": self.config.budget,
            "iterations": self.config.iterations,
            "alpha": spec.alpha,
            "kernel": spec.kernel or "",
            "final_loss": self.final_loss,
            "asr_pct": self.asr_pct,
            "jsd": rep.jsd,
            "hellinger": rep.hellinger,
            "wasserstein": rep.wasserstein,
            "mmd": rep.mmd,
            "ks": rep.ks,
            "psi": rep.psi,
            "avg_psi": self.avg_psi,
            "detected_by": ";".join(rep.detected_by),
        }


@dataclass
class ExperimentResult:
    config: dict
    rows: list
    model: MlpClassifier
    model_hash: str
    model_path: str
    test_accuracy: float
    x_clean: np.ndarray
    p_clean: np.ndarray
    out_dir: Path

    def row(self, attack_id: str) -> AttackRow:
        for row in self.rows:
            if row.attack_id == attack_id:
                return row
        raise KeyError(attack_id)


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    return repr(float(value))


def save_prob_csv(values, path) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    lines = ["prob"] + [repr(float(v)) for v in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_prob_csv(path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or (lineno == 1 and text.lower() == "prob"):
                continue
            try:
                values.append(float(text))
            except ValueError as exc:
                raise CsvFormatError(
                    f"{path} row {lineno}: not a number: {text!r}"
                ) from exc
    if not values:
        raise CsvFormatError(f"{path}: no probability values")
    return np.asarray(values, dtype=np.float64)


def _build_dataset(data_cfg: dict) -> LabeledDataset:
    if data_cfg["kind"] == "synthetic":
        return generate_synthetic(
            data_cfg["n_per_class"], data_cfg["n_features"],
            data_cfg["class_separation"], data_cfg["seed"],
        )
    return load_csv(data_cfg["path"])


def _cache_dir(out_dir: Path, cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get("DRIFTSHADE_CACHE")
    return Path(env) if env else out_dir / "model-cache"


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DRIFTSHADE_THREADS", "1")))
    except ValueError:
        return 1


def get_or_train_model(cfg: dict, train_ds: LabeledDataset,
                       val_ds: LabeledDataset, out_dir: Path, cache_dir=None):
    """Load the cached model for this config's data/split/train sections, or
    train and cache one. Returns (model, cache_key, path)."""
    key = model_cache_key(cfg)
    cache = _cache_dir(out_dir, cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"model-{key}.npz"
    if path.exists():
        try:
            return MlpClassifier.load(path), key, path
        except ModelFormatError:
            path.unlink()
    model = MlpClassifier(**cfg["train"])
    model.fit(train_ds.features, train_ds.labels,
              validation=(val_ds.features, val_ds.labels))
    model.save(path)
    return model, key, path


def _safe_name(attack_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]", "-", attack_id)


def _attack_row(model: MlpClassifier, x_clean: np.ndarray,
                p_clean: np.ndarray, entry: dict, drift_cfg: dict) -> AttackRow:
    acfg = attack_config_from_json(entry)
    result = run_attack(model, x_clean, acfg)
    p_adv = model.predict_proba_std(result.x_adv)[:, 1]
    report = compare_prob_samples(
        p_clean, p_adv, drift_cfg["n_bins"],
        thresholds_from_json(drift_cfg["thresholds"]),
    )
    apsi = avg_psi(p_clean, p_adv, drift_cfg["n_bins"], drift_cfg["bootstrap"],
                   drift_cfg["bootstrap_seed"])
    return AttackRow(
        attack_id=entry["id"],
        config=acfg,
        asr_pct=100.0 * result.asr,
        final_loss=result.final_loss,
        report=report,
        avg_psi=apsi,
        x_adv=result.x_adv,
        p_adv=p_adv,
    )


def run_experiment(cfg: dict, out_dir, model: MlpClassifier | None = None,
                   cache_dir=None) -> ExperimentResult:
    """Run the full pipeline for one normalized config and write artifacts.

    Writes report.csv, p_clean.csv, per-attack xadv_*.csv and probs_*.csv
    (standardized features; probabilities), and provenance.json. An explicit
    model skips training and the cache.
    """
    cfg = normalize_config(cfg)
    if not cfg["attacks"]:
        raise ValueError("config needs at least one attack")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = _build_dataset(cfg["data"])
    split = SplitSpec(cfg["split"]["train"], cfg["split"]["val"],
                      cfg["split"]["test"], cfg["split"]["seed"])
    train_ds, val_ds, test_ds = split_dataset(dataset, split)

    if model is None:
        model, model_hash, model_path = get_or_train_model(
            cfg, train_ds, val_ds, out, cache_dir)
    else:
        model_hash, model_path = "external", ""
    test_metrics = model.evaluate(test_ds.features, test_ds.labels)
    if test_metrics["accuracy"] < ACCURACY_FLOOR:
        warnings.warn(
            f"trained model reaches test accuracy {test_metrics['accuracy']:.3f}, "
            f"below the {ACCURACY_FLOOR:.2f} floor; drift trends may not hold"
        )

    x_clean = model.scaler_.transform(test_ds.malware_rows())
    if x_clean.shape[0] == 0:
        raise ValueError("test split contains no malware rows to attack")
    p_clean = model.predict_proba_std(x_clean)[:, 1]
    save_prob_csv(p_clean, out / "p_clean.csv")

    entries = cfg["attacks"]
    threads = _thread_count()
    if threads > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(
                lambda e: _attack_row(model, x_clean, p_clean, e, cfg["drift"]),
                entries,
            ))
    else:
        rows = [_attack_row(model, x_clean, p_clean, e, cfg["drift"])
                for e in entries]

    for row in rows:
        name = _safe_name(row.attack_id)
        save_csv(
            LabeledDataset(row.x_adv, np.ones(row.x_adv.shape[0], dtype=np.int64)),
            out / f"xadv_{name}.csv",
        )
        save_prob_csv(row.p_adv, out / f"probs_{name}.csv")

    result = ExperimentResult(
        config=cfg, rows=rows, model=model, model_hash=model_hash,
        model_path=str(model_path), test_accuracy=test_metrics["accuracy"],
        x_clean=x_clean, p_clean=p_clean, out_dir=out,
    )
    emit_report(result, "csv")
    _write_provenance(result, test_metrics,
                      {"train": train_ds.n, "val": val_ds.n, "test": test_ds.n,
                       "attacked_malware": int(x_clean.shape[0])})
    return result


def _write_provenance(result: ExperimentResult, test_metrics: dict,
                      counts: dict) -> None:
    payload = {
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "model": {
            "cache_key": result.model_hash,
            "path": result.model_path,
            "test_accuracy": result.test_accuracy,
            "test_metrics": test_metrics,
        },
        "counts": counts,
        "threads": _thread_count(),
        "config": result.config,
        "resolved_attacks": [row.to_dict() | {"x_adv_file": f"xadv_{_safe_name(row.attack_id)}.csv"}
                             for row in result.rows],
    }
    (result.out_dir / "provenance.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def emit_report(result: ExperimentResult, fmt: str = "csv") -> Path:
    """Write the per-attack metric table in the requested format and return
    the written path."""
    rows = [row.to_dict() for row in result.rows]
    if fmt == "csv":
        path = result.out_dir / "report.csv"
        lines = [",".join(REPORT_COLUMNS)]
        for row in rows:
            lines.append(",".join(_format_cell(row[c]) for c in REPORT_COLUMNS))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    if fmt == "markdown":
        path = result.out_dir / "report.md"
        header = "| " + " | ".join(REPORT_COLUMNS) + " |"
        rule = "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|"
        lines = [header, rule]
        for row in rows:
            cells = []
            for col in REPORT_COLUMNS:
                value = row[col]
                if isinstance(value, float):
                    cells.append(f"{value:.6g}")
                else:
                    cells.append(str(value))
            lines.append("| " + " | ".join(cells) + " |")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    if fmt == "json":
        path = result.out_dir / "report.json"
        payload = {
            "version": CONFIG_VERSION,
            "rows": [row | {"detected_by": row["detected_by"].split(";") if row["detected_by"] else []}
                     for row in rows],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path
    raise ValueError(f"unknown report format {fmt!r}")


def run_sweep(cfg: dict, sweep: SweepSpec, out_dir,
              cache_dir=None) -> ExperimentResult:
    """One experiment row per swept value against a single trained model;
    additionally writes per-metric series CSVs and a rendered table."""
    cfg = normalize_config(cfg)
    field = SWEEP_PARAMS[sweep.param]
    attacks = []
    for value in sweep.values:
        entry = dict(sweep.base)
        entry[field] = value
        entry["id"] = f"{sweep.param}-{value:g}"
        attacks.append(entry)
    run_cfg = dict(cfg)
    run_cfg["attacks"] = attacks
    run_cfg.pop("sweep", None)
    result = run_experiment(run_cfg, out_dir, cache_dir=cache_dir)

    out = Path(out_dir)
    series_dir = out / "series"
    series_dir.mkdir(exist_ok=True)
    dicts = [row.to_dict() for row in result.rows]
    for metric in SERIES_METRICS:
        lines = [f"{sweep.param},{metric}"]
        for value, row in zip(sweep.values, dicts):
            lines.append(f"{_format_cell(value)},{_format_cell(row[metric])}")
        (series_dir / f"{metric}.csv").write_text("\n".join(lines) + "\n",
                                                  encoding="utf-8")

    table_cols = ("epsilon", "delta", "iterations", "alpha", "asr_pct", "avg_psi")
    lines = ["| " + " | ".join(table_cols) + " |",
             "|" + "|".join(" --- " for _ in table_cols) + "|"]
    for row in dicts:
        cells = [f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                 for c in table_cols]
        lines.append("| " + " | ".join(cells) + " |")
    (out / "table.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return result
