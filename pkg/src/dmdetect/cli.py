"""Experiment driver CLI.

Subcommands: train-models, build-attack-datasets, evaluate-detectors.
Every config key is overridable with a flag of the same name; the master seed
can also come from the DMDETECT_SEED environment variable.

Exit codes: 0 success, 1 usage/config error, 2 data/format error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from dmdetect import nncore
from dmdetect.attacks import AttackKind, BudgetSchedule, Outcome, minimal_attack
from dmdetect.config import (
    SEED_DATASET_BASE,
    SEED_EVAL,
    SEED_KFOLD,
    SEED_MATRIX,
    SEED_POOL,
    ExperimentConfig,
    load_config,
)
from dmdetect.data import channel_stats, load_cifar10, load_mnist_idx, sample_subset
from dmdetect.detector import (
    build_detection_dataset,
    generalization_matrix,
    kfold_cv,
    load_detection_csv,
    save_detection_csv,
)
from dmdetect.errors import (
    DataError,
    FormatError,
    ModelPairError,
    ParameterError,
    TrainingError,
)

log = logging.getLogger("dmdetect")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _require_files(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise DataError(f"missing input files: {', '.join(missing)}")


def _load_train_test(cfg: ExperimentConfig):
    if cfg.dataset == "mnist":
        paths = [
            cfg.data_path(cfg.train_images),
            cfg.data_path(cfg.train_labels),
            cfg.data_path(cfg.test_images),
            cfg.data_path(cfg.test_labels),
        ]
        _require_files(paths)
        train = load_mnist_idx(paths[0], paths[1])
        test = load_mnist_idx(paths[2], paths[3])
    else:
        _require_files(cfg.cifar_train_paths() + cfg.cifar_test_paths())
        train = load_cifar10(cfg.cifar_train_paths())
        test = load_cifar10(cfg.cifar_test_paths())
    return train, test


def _split_validation(cfg, train):
    """Hold out the last val_size training images for the per-epoch history."""
    if len(train) <= cfg.val_size:
        raise DataError(
            f"training set of {len(train)} too small for val_size={cfg.val_size}"
        )
    main = train.slice(np.arange(0, len(train) - cfg.val_size))
    valid = train.slice(np.arange(len(train) - cfg.val_size, len(train)))
    return main, valid


def _build_models(cfg: ExperimentConfig, train_main):
    if cfg.dataset == "mnist":
        return nncore.mnist_cnn(), nncore.mnist_mlp()
    mean, std = channel_stats(train_main)
    return nncore.cifar_small_cnn_a(mean, std), nncore.cifar_small_cnn_b(mean, std)


def _schedule(cfg: ExperimentConfig, input_shape) -> BudgetSchedule:
    return BudgetSchedule.default(
        input_shape,
        fgsm_steps=cfg.fgsm_steps,
        quality_steps=cfg.quality_steps,
        jsma_max_fraction=cfg.jsma_max_fraction,
        deepfool_iters=cfg.deepfool_iters,
        deepfool_overshoot=cfg.deepfool_overshoot,
        igsm_iters=cfg.igsm_iters,
        quality_trials=cfg.quality_trials,
    )


def _ckpt_paths(cfg):
    out = Path(cfg.out_dir)
    return out / "model1.ckpt", out / "model2.ckpt"


def cmd_train_models(cfg: ExperimentConfig) -> int:
    train, test = _load_train_test(cfg)
    train_main, valid = _split_validation(cfg, train)
    if cfg.dataset == "cifar10-small":
        if cfg.cifar_subset > len(train_main):
            raise ParameterError("cifar_subset exceeds available training images")
        train_main = sample_subset(train_main, cfg.cifar_subset, cfg.seed ^ SEED_POOL)
    m1, m2 = _build_models(cfg, train_main)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for idx, net in ((1, m1), (2, m2)):
        tc = cfg.train_config(idx)
        nncore.init_params(net, tc.seed)
        log.info("training model %d (%d epochs)...", idx, tc.epochs)
        nncore.train_sgd(net, train_main, valid, tc)
        acc = nncore.evaluate_accuracy(net, test.images, test.labels)
        if not np.isfinite(acc):
            raise TrainingError(f"model {idx}: non-finite test accuracy")
        floor = getattr(cfg, f"acc_floor_model{idx}")
        if acc < floor:
            log.warning("model %d accuracy %.4f below floor %.4f", idx, acc, floor)
        rows.append((f"model{idx}", acc))
        log.info("model %d test accuracy: %.4f", idx, acc)
    p1, p2 = _ckpt_paths(cfg)
    nncore.checkpoint_save(m1, p1)
    nncore.checkpoint_save(m2, p2)
    with open(out / "accuracies.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,test_accuracy\n")
        for name, acc in rows:
            fh.write(f"{name},{acc:.9g}\n")
    return EXIT_OK


def cmd_build_attack_datasets(cfg: ExperimentConfig) -> int:
    p1, p2 = _ckpt_paths(cfg)
    _require_files([p1, p2])
    train, test = _load_train_test(cfg)
    train_main, _ = _split_validation(cfg, train)
    if cfg.pool_size > len(train_main):
        raise ParameterError(
            f"pool_size {cfg.pool_size} exceeds available {len(train_main)} images"
        )
    m1 = nncore.checkpoint_load(p1)
    m2 = nncore.checkpoint_load(p2)
    m1.input_shape = tuple(train.images.shape[1:])
    m2.input_shape = m1.input_shape
    schedule = _schedule(cfg, m1.input_shape)
    pool = sample_subset(train_main, cfg.pool_size, cfg.seed ^ SEED_POOL)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for ki, kind in enumerate(AttackKind):
        log.info("building detection dataset for %s", kind.value)
        d = build_detection_dataset(
            m1, m2, pool, kind, schedule, cfg.seed ^ (SEED_DATASET_BASE + ki)
        )
        save_detection_csv(d, out / f"dataset_{kind.value}.csv")

    # Attack-strength summary over a seeded test sample against model 1.
    sample = sample_subset(test, min(cfg.eval_sample, len(test)), cfg.seed ^ SEED_EVAL)
    rows = []
    for ki, kind in enumerate(AttackKind):
        n_correct = n_flip = 0
        mses = []
        for i in range(len(sample)):
            res = minimal_attack(
                m1,
                sample.images[i],
                int(sample.labels[i]),
                kind,
                schedule,
                (cfg.seed ^ SEED_EVAL) + 1000 * ki + i,
            )
            if res.outcome is Outcome.ALREADY_MISCLASSIFIED:
                continue
            n_correct += 1
            if res.outcome is Outcome.FLIPPED:
                n_flip += 1
                mses.append(res.mse)
        rate = n_flip / n_correct if n_correct else 0.0
        mean_mse = float(np.mean(mses)) if mses else 0.0
        rows.append((kind.value, rate, mean_mse, n_correct))
        log.info("%s: success %.3f, mean mse %.3g", kind.value, rate, mean_mse)
    with open(out / "attack_summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,success_rate,mean_mse,n_evaluated\n")
        for kind, rate, mean_mse, n in rows:
            fh.write(f"{kind},{rate:.9g},{mean_mse:.9g},{n}\n")
    return EXIT_OK


def cmd_evaluate_detectors(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    csv_paths = {k: out / f"dataset_{k.value}.csv" for k in AttackKind}
    _require_files(csv_paths.values())
    datasets = {k: load_detection_csv(p) for k, p in csv_paths.items()}
    gamma = cfg.gamma_value()

    table = []
    for kind in AttackKind:
        log.info("cross-validating detector for %s", kind.value)
        t0 = time.time()
        _, mean = kfold_cv(
            datasets[kind], cfg.folds, cfg.svm_c, gamma, cfg.seed ^ SEED_KFOLD
        )
        table.append((kind.value, mean, time.time() - t0))
        log.info(
            "%s: acc %.3f f1 %.3f auc %s", kind.value, mean.accuracy, mean.f1,
            f"{mean.auc:.3f}" if mean.auc is not None else "n/a",
        )
    matrix = generalization_matrix(datasets, cfg.svm_c, gamma, cfg.seed ^ SEED_MATRIX)

    with open(out / "detection.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,accuracy,f1,auc,detection_rate\n")
        for name, m, _secs in table:
            auc = f"{m.auc:.9g}" if m.auc is not None else ""
            dr = f"{m.detection_rate:.9g}" if m.detection_rate is not None else ""
            fh.write(f"{name},{m.accuracy:.9g},{m.f1:.9g},{auc},{dr}\n")
    matrix.save_csv(out / "generalization_matrix.csv")
    doc = {
        "detection": {
            name: {
                "accuracy": m.accuracy,
                "f1": m.f1,
                "auc": m.auc,
                "detection_rate": m.detection_rate,
                "train_seconds": secs,
            }
            for name, m, secs in table
        },
        "generalization_matrix": matrix.to_json_obj(),
    }
    with open(out / "detection.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.as_dict(),
        "inputs": [str(p) for p in csv_paths.values()],
        "outputs": [
            str(out / "detection.csv"),
            str(out / "generalization_matrix.csv"),
            str(out / "detection.json"),
        ],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return EXIT_OK


COMMANDS = {
    "train-models": cmd_train_models,
    "build-attack-datasets": cmd_build_attack_datasets,
    "evaluate-detectors": cmd_evaluate_detectors,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmdetect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for f in fields(ExperimentConfig):
            p.add_argument(f"--{f.name}", default=None, metavar=f.type.upper())
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(ExperimentConfig)
        if getattr(args, f.name) is not None
    }
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, FileNotFoundError, ModelPairError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
