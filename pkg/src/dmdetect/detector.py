"""Decision-mismatch detector: feature extraction, dataset construction,
SVM training wrappers, cross-validation and cross-attack generalization."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from dmdetect.attacks import AttackKind, BudgetSchedule, Outcome, minimal_attack
from dmdetect.data import Dataset
from dmdetect.errors import (
    DataError,
    FormatError,
    ModelPairError,
    ParameterError,
)
from dmdetect.metrics import MetricsReport, evaluate_metrics, mean_report
from dmdetect.nncore.network import forward_batch
from dmdetect.svm import SvmModel, svm_decision, svm_fit

log = logging.getLogger(__name__)

# keep softmax entries strictly inside (0, 1) after the float32 cast
_P_LO = np.float32(1e-12)
_P_HI = np.nextafter(np.float32(1.0), np.float32(0.0))


@dataclass
class DetectionSample:
    features: np.ndarray  # (2K,) float32, two concatenated softmax blocks
    label: int  # 0 clean, 1 attack
    kind: AttackKind | None
    target_model: int | None  # 1 or 2
    source_index: int


@dataclass
class DetectionDataset:
    samples: list[DetectionSample]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def features(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.asarray([s.label for s in self.samples], dtype=np.int64)

    @property
    def attack_fraction(self) -> float:
        return float(self.labels().mean()) if self.samples else 0.0


def _check_pair(m1, m2):
    if m1.num_classes != m2.num_classes:
        raise ModelPairError(
            f"class counts differ: {m1.num_classes} vs {m2.num_classes}"
        )
    if (
        m1.input_shape is not None
        and m2.input_shape is not None
        and tuple(m1.input_shape) != tuple(m2.input_shape)
    ):
        raise ModelPairError(
            f"input shapes differ: {m1.input_shape} vs {m2.input_shape}"
        )


def extract_features_batch(m1, m2, xs) -> np.ndarray:
    """Concatenated softmax outputs of both frozen models, shape (N, 2K)."""
    _check_pair(m1, m2)
    xs = np.asarray(xs, dtype=np.float32)
    _, p1, _ = forward_batch(m1, xs)
    _, p2, _ = forward_batch(m2, xs)
    feats = np.concatenate([p1, p2], axis=1).astype(np.float32)
    return np.clip(feats, _P_LO, _P_HI)


def extract_features(m1, m2, x) -> np.ndarray:
    return extract_features_batch(m1, m2, np.asarray(x)[None])[0]


def build_detection_dataset(
    m1,
    m2,
    pool: Dataset,
    kind: AttackKind,
    schedule: BudgetSchedule,
    seed: int,
    log_every: int = 1000,
) -> DetectionDataset:
    """Balanced clean/attack dataset per the seeded coin-flip protocol.

    Per image: a fair coin decides clean (label 0) vs attack; an attacked
    image targets model 1 or 2 by a second fair coin and runs the
    minimal-budget search. Only a successful flip yields label 1 (features on
    the adversarial image); failed or already-misclassified images fall back
    to label 0 with features on the clean image. Features always come from
    both models.
    """
    if len(pool) == 0:
        raise DataError("empty image pool")
    _check_pair(m1, m2)
    records = []  # (image used for features, label, target or None)
    for i in range(len(pool)):
        rng = np.random.default_rng([seed & (2**63 - 1), i])
        x = pool.images[i]
        y = int(pool.labels[i])
        attack = rng.random() < 0.5
        if not attack:
            records.append((x, 0, None))
            continue
        target = 1 if rng.random() < 0.5 else 2
        net = m1 if target == 1 else m2
        attack_seed = int(rng.integers(0, 2**62))
        res = minimal_attack(net, x, y, kind, schedule, attack_seed)
        if res.outcome is Outcome.FLIPPED:
            records.append((res.x_adv, 1, target))
        else:
            records.append((x, 0, None))
        if log_every and (i + 1) % log_every == 0:
            log.info("%s: attacked %d/%d images", kind.value, i + 1, len(pool))

    feats = []
    batch = 512
    images = np.stack([r[0] for r in records])
    for s in range(0, len(images), batch):
        feats.append(extract_features_batch(m1, m2, images[s : s + batch]))
    feats = np.concatenate(feats)
    samples = [
        DetectionSample(
            features=feats[i],
            label=rec[1],
            kind=kind if rec[1] == 1 else None,
            target_model=rec[2],
            source_index=i,
        )
        for i, rec in enumerate(records)
    ]
    return DetectionDataset(
        samples,
        provenance={"dataset": pool.name, "kind": kind.value, "seed": seed},
    )


# --------------------------------------------------------------------------
# CSV round trip: header `source_index,label,kind,target_model,f0..f{2K-1}`,
# 9 significant digits (value-exact for float32), UTF-8, LF endings.
# --------------------------------------------------------------------------

def save_detection_csv(d: DetectionDataset, path) -> None:
    if not d.samples:
        raise DataError("refusing to write an empty detection dataset")
    width = len(d.samples[0].features)
    header = "source_index,label,kind,target_model," + ",".join(
        f"f{i}" for i in range(width)
    )
    lines = [header]
    for s in d.samples:
        kind = s.kind.value if s.kind is not None else ""
        target = str(s.target_model) if s.target_model is not None else ""
        feats = ",".join(f"{v:.9g}" for v in s.features)
        lines.append(f"{s.source_index},{s.label},{kind},{target},{feats}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_detection_csv(path) -> DetectionDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:4] != ["source_index", "label", "kind", "target_model"]:
        raise FormatError(f"{path}: line 1: unexpected header")
    width = len(header) - 4
    kinds = {k.value: k for k in AttackKind}
    samples = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(
                f"{path}: line {ln}: expected {len(header)} fields, got {len(parts)}"
            )
        try:
            source_index = int(parts[0])
            label = int(parts[1])
            kind = kinds[parts[2]] if parts[2] else None
            target = int(parts[3]) if parts[3] else None
            feats = np.asarray([float(v) for v in parts[4:]], dtype=np.float32)
        except (ValueError, KeyError) as exc:
            raise FormatError(f"{path}: line {ln}: {exc}") from exc
        if label not in (0, 1):
            raise FormatError(f"{path}: line {ln}: label must be 0 or 1")
        if label == 1 and (kind is None or target not in (1, 2)):
            raise FormatError(
                f"{path}: line {ln}: attack rows need kind and target_model"
            )
        samples.append(DetectionSample(feats, label, kind, target, source_index))
    if not samples:
        raise FormatError(f"{path}: no data rows")
    return DetectionDataset(samples, provenance={"path": str(path), "width": width})


# --------------------------------------------------------------------------
# Training / evaluation
# --------------------------------------------------------------------------

def svm_train(d: DetectionDataset, C=1.0, gamma="auto") -> SvmModel:
    return svm_fit(d.features(), d.labels(), C=C, gamma=gamma)


def _stratified_folds(d: DetectionDataset, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint index folds, stratified on the label.

    Assignment is computed on sample ids sorted by source index, so the fold
    split depends only on (set, seed), not on storage order.
    """
    order = np.argsort([s.source_index for s in d.samples], kind="mergesort")
    labels = d.labels()
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        cls_sorted = order[labels[order] == cls]
        cls_idx = cls_sorted[rng.permutation(len(cls_sorted))]
        for pos, sample_idx in enumerate(cls_idx):
            folds[pos % k].append(int(sample_idx))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def kfold_cv(d: DetectionDataset, k, C, gamma, seed):
    """Seeded stratified k-fold CV; returns (per-fold reports, mean report)."""
    if k < 2:
        raise ParameterError("k must be >= 2")
    if k > len(d):
        raise ParameterError(f"k={k} exceeds dataset size {len(d)}")
    feats = d.features()
    labels = d.labels()
    folds = _stratified_folds(d, k, seed)
    reports: list[MetricsReport] = []
    for f in folds:
        mask = np.ones(len(d), dtype=bool)
        mask[f] = False
        model = svm_fit(feats[mask], labels[mask], C=C, gamma=gamma)
        scores = svm_decision(model, feats[f])
        reports.append(evaluate_metrics(scores, labels[f]))
    return reports, mean_report(reports)


@dataclass
class GeneralizationMatrix:
    kinds: list[AttackKind]
    values: np.ndarray  # (n_kinds, n_kinds), rows = train kind, cols = eval kind

    def to_json_obj(self):
        return {
            "kinds": [k.value for k in self.kinds],
            "values": self.values.tolist(),
        }

    def save_csv(self, path):
        names = [k.value for k in self.kinds]
        lines = ["train_kind," + ",".join(names)]
        for name, row in zip(names, self.values):
            lines.append(name + "," + ",".join(f"{v:.9g}" for v in row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def generalization_matrix(
    datasets: dict[AttackKind, DetectionDataset], C, gamma, seed
) -> GeneralizationMatrix:
    """Train on each kind, evaluate accuracy on every kind.

    Off-diagonal cells train on the full row dataset; diagonal cells use a
    seeded stratified 80/20 split so the reported accuracy is held out.
    """
    kinds = list(AttackKind)
    missing = [k.value for k in kinds if k not in datasets]
    if missing:
        raise ParameterError(f"missing detection datasets for: {missing}")
    n = len(kinds)
    values = np.zeros((n, n))
    for r, kr in enumerate(kinds):
        d = datasets[kr]
        feats = d.features()
        labels = d.labels()
        full_model = svm_fit(feats, labels, C=C, gamma=gamma)
        folds = _stratified_folds(d, 5, seed)  # fold 0 = the held-out 20%
        held = folds[0]
        mask = np.ones(len(d), dtype=bool)
        mask[held] = False
        split_model = svm_fit(feats[mask], labels[mask], C=C, gamma=gamma)
        for c, kc in enumerate(kinds):
            if r == c:
                scores = svm_decision(split_model, feats[held])
                values[r, c] = evaluate_metrics(scores, labels[held]).accuracy
            else:
                dc = datasets[kc]
                scores = svm_decision(full_model, dc.features())
                values[r, c] = evaluate_metrics(scores, dc.labels()).accuracy
        log.info("generalization row %s done", kr.value)
    return GeneralizationMatrix(kinds=kinds, values=values)
