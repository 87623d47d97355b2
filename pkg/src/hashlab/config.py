"""Experiment configuration: one INI file tying together data paths, the
network recipe, head settings, training hyper-parameters, and metric options.

Validation errors always name the offending ``section.field``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .train import SHARING_MODES, TrainConfig

_HEAD_MODES = ("slice", "matrix", "divide", "fc", "fully-connected")


@dataclass
class MetricOptions:
    relevance: str = "equal"  # equal | share-any
    truncate: int = 0  # 0 = untruncated
    radius: int = 2
    topk: tuple = ()  # () = auto
    ap_denominator: str = "retrieved"  # retrieved | total
    empty_retrieval: str = "zero"  # zero | skip


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/out"
    precision: str = "f64"
    network_path: str = ""
    bits: tuple = (12,)
    head_mode: str = "slice"
    head_beta: float = 1.0
    head_threshold: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    data: dict = field(default_factory=dict)  # split -> path
    metrics: MetricOptions = field(default_factory=MetricOptions)
    source_text: str = ""  # verbatim file contents, for output snapshots


def _get(cp, section, key, cast, default, where):
    if section not in cp or key not in cp[section]:
        return default
    raw = cp[section][key]
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or section}.{key}: bad value {raw!r}") from e


def _bool(raw):
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(raw)


def _int_list(raw):
    return tuple(int(p) for p in raw.replace(" ", "").split(",") if p)


def parse_experiment(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"bad experiment config: {e}") from e

    seed = _get(cp, "experiment", "seed", int, 0, "experiment")
    out = _get(cp, "experiment", "out", str, "runs/out", "experiment")
    precision = _get(cp, "experiment", "precision", str, "f64", "experiment")
    if precision not in ("f32", "f64"):
        raise ConfigError(f"experiment.precision: must be f32 or f64, got {precision!r}")

    network_path = _get(cp, "network", "config", str, "", "network")
    if network_path and not os.path.isabs(network_path):
        network_path = os.path.join(base_dir, network_path)

    bits = _get(cp, "head", "bits", _int_list, (12,), "head")
    if not bits or any(b < 1 for b in bits):
        raise ConfigError("head.bits: need one or more integers >= 1")
    head_mode = _get(cp, "head", "mode", str, "slice", "head")
    if head_mode not in _HEAD_MODES:
        raise ConfigError(f"head.mode: must be one of {_HEAD_MODES}, got {head_mode!r}")
    head_beta = _get(cp, "head", "beta", float, 1.0, "head")
    head_threshold = _get(cp, "head", "threshold", _bool, True, "head")

    sharing = _get(cp, "train", "sharing", str, "shared", "train")
    if sharing not in SHARING_MODES:
        raise ConfigError(f"train.sharing: must be one of {SHARING_MODES}, got {sharing!r}")
    try:
        train = TrainConfig(
            lr=_get(cp, "train", "lr", float, 0.01, "train"),
            lr_decay=_get(cp, "train", "lr_decay", float, 0.1, "train"),
            lr_step=_get(cp, "train", "lr_step", int, 10000, "train"),
            momentum=_get(cp, "train", "momentum", float, 0.9, "train"),
            weight_decay=_get(cp, "train", "weight_decay", float, 0.0005, "train"),
            batch_triplets=_get(cp, "train", "batch_triplets", int, 21, "train"),
            batch_images=_get(cp, "train", "batch_images", int, 0, "train"),
            margin=_get(cp, "train", "margin", float, 1.0, "train"),
            eps_start=_get(cp, "train", "eps_start", float, 0.5, "train"),
            eps_decay=_get(cp, "train", "eps_decay", float, 0.8, "train"),
            eps_step=_get(cp, "train", "eps_step", int, 20000, "train"),
            iterations=_get(cp, "train", "iterations", int, 2000, "train"),
            seed=seed,
            sharing=sharing,
        )
    except ConfigError:
        raise
    data = {}
    if "data" in cp:
        for key in cp["data"]:
            if key not in ("train", "query", "database"):
                raise ConfigError(f"data.{key}: unknown split (use train/query/database)")
            p = cp["data"][key]
            data[key] = p if os.path.isabs(p) else os.path.join(base_dir, p)

    metrics = MetricOptions(
        relevance=_get(cp, "metrics", "relevance", str, "equal", "metrics"),
        truncate=_get(cp, "metrics", "truncate", int, 0, "metrics"),
        radius=_get(cp, "metrics", "radius", int, 2, "metrics"),
        topk=_get(cp, "metrics", "topk", _int_list, (), "metrics"),
        ap_denominator=_get(cp, "metrics", "ap_denominator", str, "retrieved", "metrics"),
        empty_retrieval=_get(cp, "metrics", "empty_retrieval", str, "zero", "metrics"),
    )
    if metrics.relevance not in ("equal", "share-any"):
        raise ConfigError(f"metrics.relevance: must be equal or share-any, got {metrics.relevance!r}")
    if metrics.ap_denominator not in ("retrieved", "total"):
        raise ConfigError(f"metrics.ap_denominator: must be retrieved or total")
    if metrics.empty_retrieval not in ("zero", "skip"):
        raise ConfigError(f"metrics.empty_retrieval: must be zero or skip")
    if metrics.radius < 0:
        raise ConfigError("metrics.radius: must be >= 0")

    return ExperimentConfig(
        seed=seed,
        out=out,
        precision=precision,
        network_path=network_path,
        bits=bits,
        head_mode=head_mode,
        head_beta=head_beta,
        head_threshold=head_threshold,
        train=train,
        data=data,
        metrics=metrics,
        source_text=text,
    )


def load_experiment(path, require=()):
    """Parse an experiment file; ``require`` lists mandatory pieces:
    "network" (a network config path that exists) and/or split names whose
    data paths must exist."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read experiment config {path}: {e}") from e
    cfg = parse_experiment(text, base_dir=os.path.dirname(os.path.abspath(path)))
    for item in require:
        if item == "network":
            if not cfg.network_path:
                raise ConfigError("network.config: missing (this command needs a network recipe)")
            if not os.path.exists(cfg.network_path):
                raise ConfigError(f"network.config: no such file {cfg.network_path}")
        else:
            if item not in cfg.data:
                raise ConfigError(f"data.{item}: missing (this command needs it)")
            if not os.path.exists(cfg.data[item]):
                raise ConfigError(f"data.{item}: no such path {cfg.data[item]}")
    return cfg
