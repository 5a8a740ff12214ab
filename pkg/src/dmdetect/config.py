"""Experiment configuration: flat key=value files, flag overrides, seeding."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from dmdetect.errors import ParameterError

SEED_ENV_VAR = "DMDETECT_SEED"

# Component seeds are master_seed XOR these constants, so each pipeline stage
# can be re-run independently and still reproduce its outputs.
SEED_MODEL1 = 0x5EED0001
SEED_MODEL2 = 0x5EED0002
SEED_POOL = 0x5EED0003
SEED_EVAL = 0x5EED0004
SEED_KFOLD = 0x5EED0005
SEED_MATRIX = 0x5EED0006
SEED_DATASET_BASE = 0x5EED0100  # + attack-kind index


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"  # mnist | cifar10-small
    data_dir: str = "data"
    out_dir: str = "out"
    seed: int = 0

    # dataset file names, relative to data_dir
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"
    cifar_train_files: str = "data_batch_1.bin"  # comma-separated
    cifar_test_files: str = "test_batch.bin"

    # experiment sizes
    pool_size: int = 10000
    eval_sample: int = 500
    folds: int = 10
    val_size: int = 5000
    cifar_subset: int = 10000

    # model training (applies to both models; *_model1 / *_model2 override)
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    momentum: float = 0.0
    weight_decay: float = 0.0
    lr_decay_factor: float = 1.0
    lr_patience: int = 10
    lr_model1: float = -1.0  # negative = inherit the shared value
    lr_model2: float = -1.0
    epochs_model1: int = -1
    epochs_model2: int = -1
    acc_floor_model1: float = 0.96
    acc_floor_model2: float = 0.95

    # attack budget grids
    fgsm_steps: int = 100
    quality_steps: int = 50
    jsma_max_fraction: float = 0.10
    igsm_iters: int = 10
    deepfool_iters: int = 50
    deepfool_overshoot: float = 0.02
    quality_trials: int = 20

    # detector
    svm_c: float = 1.0
    svm_gamma: str = "auto"  # "auto" or a positive float

    def gamma_value(self):
        if self.svm_gamma == "auto":
            return "auto"
        try:
            g = float(self.svm_gamma)
        except ValueError as exc:
            raise ParameterError(f"svm_gamma must be 'auto' or a float") from exc
        if g <= 0:
            raise ParameterError("svm_gamma must be positive")
        return g

    def data_path(self, name: str) -> Path:
        return Path(self.data_dir) / name

    def cifar_train_paths(self) -> list[Path]:
        return [self.data_path(p.strip()) for p in self.cifar_train_files.split(",")]

    def cifar_test_paths(self) -> list[Path]:
        return [self.data_path(p.strip()) for p in self.cifar_test_files.split(",")]

    def train_config(self, model: int):
        from dmdetect.nncore import TrainConfig

        lr = getattr(self, f"lr_model{model}")
        epochs = getattr(self, f"epochs_model{model}")
        return TrainConfig(
            learning_rate=self.lr if lr < 0 else lr,
            batch_size=self.batch_size,
            epochs=self.epochs if epochs < 0 else epochs,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            lr_decay_factor=self.lr_decay_factor,
            lr_patience=self.lr_patience,
            seed=self.seed ^ (SEED_MODEL1 if model == 1 else SEED_MODEL2),
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        lines = "\n".join(f"{k}={v}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(lines.encode()).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ParameterError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config_file(path) -> dict:
    """Flat key=value lines; `#` starts a comment; unknown keys are errors."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}: line {ln}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ParameterError(f"{path}: line {ln}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def load_config(config_path=None, overrides=None) -> ExperimentConfig:
    """Precedence: CLI overrides > config file > environment seed > defaults."""
    values: dict = {}
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError as exc:
            raise ParameterError(f"{SEED_ENV_VAR} must be an integer") from exc
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ParameterError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    cfg = ExperimentConfig(**values)
    if cfg.dataset not in ("mnist", "cifar10-small"):
        raise ParameterError(f"unknown dataset {cfg.dataset!r}")
    if cfg.pool_size <= 0:
        raise ParameterError("pool_size must be positive")
    cfg.gamma_value()
    return cfg
