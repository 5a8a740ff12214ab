"""White-box attack strategies and the per-image minimal-budget search.

All attacks operate on a frozen (eval-mode) network and on raw pixel images in
[0, 1]; any standardization lives inside the network as a Normalize layer.
Given the same (net, x, y, kind, schedule, seed) the results are deterministic,
and no shared mutable state exists, so attacking many images concurrently
against the same frozen models is safe.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from dmdetect.errors import ParameterError, ShapeError
from dmdetect.nncore.network import (
    backward_batch,
    forward_batch,
    input_gradient,
    output_jacobian,
    predict_batch,
)


class AttackKind(enum.Enum):
    FGSM = "fgsm"
    IGSM = "igsm"
    JSMA = "jsma"
    DEEPFOOL = "deepfool"
    GAUSSIAN_BLUR = "gaussian_blur"
    GAUSSIAN_NOISE = "gaussian_noise"
    SALT_PEPPER = "salt_pepper"


GRADIENT_KINDS = (AttackKind.FGSM, AttackKind.IGSM, AttackKind.JSMA, AttackKind.DEEPFOOL)
QUALITY_KINDS = (
    AttackKind.GAUSSIAN_BLUR,
    AttackKind.GAUSSIAN_NOISE,
    AttackKind.SALT_PEPPER,
)


class Outcome(enum.Enum):
    FLIPPED = "flipped"
    ALREADY_MISCLASSIFIED = "already_misclassified"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class AttackResult:
    x_adv: np.ndarray
    outcome: Outcome
    kind: AttackKind
    level_used: float | None
    mse: float
    adversarial_label: int | None
    target_model: int | None = None


@dataclass
class BudgetSchedule:
    """Ascending budget grid per attack kind.

    Grid semantics: epsilon for FGSM, outer budget for IGSM (step = budget /
    igsm_iters), modified-pixel cap for JSMA, iteration cap for DeepFool
    (single entry), blur sigma / noise sigma / flip fraction for the quality
    attacks.
    """

    levels: dict[AttackKind, np.ndarray]
    igsm_iters: int = 10
    jsma_theta: float = 1.0
    deepfool_overshoot: float = 0.02
    # independent seeded draws per level for the stochastic quality attacks
    # (noise, salt & pepper); a level counts as flipping if any draw flips
    quality_trials: int = 20

    def __post_init__(self):
        for kind, grid in self.levels.items():
            grid = np.asarray(grid, dtype=np.float64)
            if grid.size == 0:
                raise ParameterError(f"empty budget grid for {kind.value}")
            if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
                raise ParameterError(
                    f"budget grid for {kind.value} must be strictly increasing and positive"
                )
            self.levels[kind] = grid
        if self.igsm_iters < 1:
            raise ParameterError("igsm_iters must be >= 1")
        if self.jsma_theta <= 0:
            raise ParameterError("jsma_theta must be positive")
        if self.deepfool_overshoot < 0:
            raise ParameterError("deepfool_overshoot must be nonnegative")
        if self.quality_trials < 1:
            raise ParameterError("quality_trials must be >= 1")

    @classmethod
    def default(
        cls,
        input_shape,
        *,
        fgsm_steps=100,
        quality_steps=50,
        jsma_max_fraction=0.10,
        deepfool_iters=50,
        deepfool_overshoot=0.02,
        igsm_iters=10,
        quality_trials=20,
    ) -> "BudgetSchedule":
        c, h, w = input_shape
        n_pixels = c * h * w
        eps_grid = np.linspace(0, 1, fgsm_steps + 1)[1:]
        jsma_caps = np.unique(
            np.maximum(
                1,
                np.round(
                    np.linspace(0.01, jsma_max_fraction, 10) * n_pixels
                ).astype(int),
            )
        ).astype(np.float64)
        levels = {
            AttackKind.FGSM: eps_grid,
            AttackKind.IGSM: eps_grid.copy(),
            AttackKind.JSMA: jsma_caps,
            AttackKind.DEEPFOOL: np.asarray([float(deepfool_iters)]),
            AttackKind.GAUSSIAN_BLUR: np.linspace(0, w / 4.0, quality_steps + 1)[1:],
            AttackKind.GAUSSIAN_NOISE: np.linspace(0, 1, quality_steps + 1)[1:],
            AttackKind.SALT_PEPPER: np.linspace(0, 1, quality_steps + 1)[1:],
        }
        return cls(
            levels,
            igsm_iters=igsm_iters,
            deepfool_overshoot=deepfool_overshoot,
            quality_trials=quality_trials,
        )


def attack_mse(x, x_adv) -> float:
    x = np.asarray(x)
    x_adv = np.asarray(x_adv)
    if x.shape != x_adv.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_adv.shape}")
    return float(np.mean((x.astype(np.float64) - x_adv.astype(np.float64)) ** 2))


def _predict_one(net, x) -> int:
    _, probs, _ = forward_batch(net, np.asarray(x)[None])
    return int(probs[0].argmax())


def _grad_and_pred(net, x, y):
    """One forward/backward pass: (cross-entropy input gradient, argmax label)."""
    _, probs, trace = forward_batch(net, np.asarray(x)[None], need_trace=True)
    pred = int(probs[0].argmax())
    dlogits = probs.copy()
    dlogits[0, y] -= 1.0
    grad, _ = backward_batch(net, trace, dlogits)
    return grad[0], pred


def fgsm(net, x, y, eps):
    """x + eps * sign(grad_x J(x, y)), clipped to [0, 1]; sign(0) = 0."""
    if eps < 0:
        raise ParameterError("eps must be nonnegative")
    g = input_gradient(net, x, y)
    return np.clip(x + eps * np.sign(g), 0.0, 1.0).astype(np.float32)


def igsm(net, x, y, eps_step, max_iters):
    """Iterated sign steps with per-iteration clipping; stops early on flip."""
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if eps_step < 0:
        raise ParameterError("eps_step must be nonnegative")
    x_cur = np.asarray(x, dtype=np.float32)
    for _ in range(max_iters):
        g, pred = _grad_and_pred(net, x_cur, y)
        if pred != y:
            break
        x_cur = np.clip(x_cur + eps_step * np.sign(g), 0.0, 1.0).astype(np.float32)
    return x_cur


def _jsma_run(net, x, y, theta, max_pixels):
    """Shared JSMA loop; returns (x_adv, modified-pixel count at flip or None).

    The trajectory does not depend on max_pixels, so a run at a larger cap is
    an extension of the run at a smaller one; the minimal-budget search
    exploits this to walk the whole cap grid in one pass.
    """
    x_cur = np.asarray(x, dtype=np.float32).copy()
    flat = x_cur.reshape(-1)
    modified: set[int] = set()
    while len(modified) < max_pixels:
        _, probs, _ = forward_batch(net, x_cur[None])
        p = probs[0]
        if int(p.argmax()) != y:
            return x_cur, len(modified)
        order = np.argsort(p)[::-1]
        target = int(order[1]) if int(order[0]) == y else int(order[0])
        jac = output_jacobian(net, x_cur, space="softmax").reshape(
            net.num_classes, -1
        )
        alpha = jac[target]
        beta = jac.sum(axis=0) - alpha  # sum over the non-target outputs
        score = np.where((alpha > 0) & (beta < 0), alpha * np.abs(beta), -np.inf)
        score[flat >= 1.0] = -np.inf
        p_idx = int(score.argmax())
        if not np.isfinite(score[p_idx]):
            break
        flat[p_idx] = min(1.0, flat[p_idx] + theta)
        modified.add(p_idx)
    _, probs, _ = forward_batch(net, x_cur[None])
    if int(probs[0].argmax()) != y:
        return x_cur, len(modified)
    return x_cur, None


def jsma(net, x, y, theta, max_pixels):
    """Greedy single-pixel saliency attack toward the runner-up class."""
    if theta <= 0:
        raise ParameterError("theta must be positive")
    if max_pixels < 1:
        raise ParameterError("max_pixels must be >= 1")
    x_adv, _ = _jsma_run(net, x, y, theta, max_pixels)
    return x_adv


def deepfool(net, x, max_iters, overshoot):
    """One-vs-all linearized minimal-L2 boundary steps on the logits."""
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if overshoot < 0:
        raise ParameterError("overshoot must be nonnegative")
    x = np.asarray(x, dtype=np.float32)
    y0 = _predict_one(net, x)
    r_tot = np.zeros_like(x, dtype=np.float64)
    for _ in range(max_iters):
        x_ret = np.clip(x + (1.0 + overshoot) * r_tot, 0.0, 1.0).astype(np.float32)
        if _predict_one(net, x_ret) != y0:
            return x_ret
        # Linearize at the in-box iterate so the accumulated step stays
        # meaningful under the [0, 1] pixel constraint.
        x_i = np.clip(x + r_tot, 0.0, 1.0).astype(np.float32)
        logits, _, _ = forward_batch(net, x_i[None])
        logits = logits[0].astype(np.float64)
        jac = output_jacobian(net, x_i, space="logits").reshape(
            net.num_classes, -1
        ).astype(np.float64)
        w = jac - jac[y0]
        f = logits - logits[y0]
        norms = np.linalg.norm(w, axis=1)
        dist = np.full(net.num_classes, np.inf)
        for k in range(net.num_classes):
            if k != y0 and norms[k] > 1e-12:
                dist[k] = abs(f[k]) / norms[k]
        k = int(dist.argmin())
        if not np.isfinite(dist[k]):
            break
        r_i = (abs(f[k]) / norms[k] ** 2) * w[k]
        r_tot += r_i.reshape(x.shape)
    return np.clip(x + (1.0 + overshoot) * r_tot, 0.0, 1.0).astype(np.float32)


def _gaussian_kernel(sigma):
    width = int(np.ceil(4.0 * sigma + 1.0))
    if width % 2 == 0:
        width += 1
    r = width // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t**2) / (2.0 * sigma**2))
    return k / k.sum()


def degrade(kind: AttackKind, x, level, seed):
    """Quality-degradation perturbations: blur, additive noise, salt & pepper."""
    if level < 0:
        raise ParameterError("level must be nonnegative")
    x = np.asarray(x, dtype=np.float32)
    if level == 0:
        return x.copy()
    if kind is AttackKind.GAUSSIAN_BLUR:
        k = _gaussian_kernel(level)
        out = x.astype(np.float64)
        out = correlate1d(out, k, axis=-2, mode="reflect")
        out = correlate1d(out, k, axis=-1, mode="reflect")
        return np.clip(out, 0.0, 1.0).astype(np.float32)
    rng = np.random.default_rng(seed)
    if kind is AttackKind.GAUSSIAN_NOISE:
        noisy = x + rng.normal(0.0, level, size=x.shape)
        return np.clip(noisy, 0.0, 1.0).astype(np.float32)
    if kind is AttackKind.SALT_PEPPER:
        out = x.reshape(-1).copy()
        n_flip = int(round(level * out.size))
        idx = rng.choice(out.size, size=n_flip, replace=False)
        out[idx] = (rng.random(n_flip) < 0.5).astype(np.float32)
        return out.reshape(x.shape)
    raise ParameterError(f"{kind} is not a quality-degradation kind")


def level_seed(seed: int, level_index: int, trial: int = 0) -> int:
    """Stable per-(level, trial) seed so failed levels can be replayed exactly."""
    return int(
        np.random.SeedSequence(
            [seed & (2**63 - 1), level_index, trial]
        ).generate_state(1)[0]
    )


def _first_flip(net, candidates, y):
    preds, _ = predict_batch(net, np.stack(candidates))
    hits = np.nonzero(preds != y)[0]
    return (int(hits[0]), int(preds[hits[0]])) if hits.size else (None, None)


def minimal_attack(net, x, y, kind, schedule: BudgetSchedule, seed) -> AttackResult:
    """Walk the ascending budget grid; return the first level that flips the label."""
    if kind not in schedule.levels:
        raise ParameterError(f"schedule does not cover {kind.value}")
    x = np.asarray(x, dtype=np.float32)
    grid = schedule.levels[kind]

    pred0 = _predict_one(net, x)
    if pred0 != y:
        return AttackResult(
            x_adv=x.copy(),
            outcome=Outcome.ALREADY_MISCLASSIFIED,
            kind=kind,
            level_used=None,
            mse=0.0,
            adversarial_label=pred0,
        )

    def success(x_adv, level):
        lbl = _predict_one(net, x_adv)
        if lbl != y:
            return AttackResult(
                x_adv=x_adv,
                outcome=Outcome.FLIPPED,
                kind=kind,
                level_used=float(level),
                mse=attack_mse(x, x_adv),
                adversarial_label=lbl,
            )
        return None

    if kind is AttackKind.FGSM:
        g = input_gradient(net, x, y)
        sgn = np.sign(g)
        candidates = [
            np.clip(x + eps * sgn, 0.0, 1.0).astype(np.float32) for eps in grid
        ]
        i, lbl = _first_flip(net, candidates, y)
        if i is not None:
            return AttackResult(
                candidates[i], Outcome.FLIPPED, kind, float(grid[i]),
                attack_mse(x, candidates[i]), lbl,
            )
    elif kind is AttackKind.IGSM:
        for level in grid:
            x_adv = igsm(net, x, y, level / schedule.igsm_iters, schedule.igsm_iters)
            res = success(x_adv, level)
            if res:
                return res
    elif kind is AttackKind.JSMA:
        cap = int(grid[-1])
        x_adv, used = _jsma_run(net, x, y, schedule.jsma_theta, cap)
        if used is not None:
            level = float(grid[np.searchsorted(grid, used)])
            return AttackResult(
                x_adv, Outcome.FLIPPED, kind, level, attack_mse(x, x_adv),
                _predict_one(net, x_adv),
            )
    elif kind is AttackKind.DEEPFOOL:
        level = grid[-1]
        x_adv = deepfool(net, x, int(level), schedule.deepfool_overshoot)
        res = success(x_adv, level)
        if res:
            return res
    else:
        # Blur is deterministic; noise and salt & pepper get quality_trials
        # independent seeded draws per level, walked level-major so the first
        # flipping (level, trial) pair is the minimal one.
        trials = 1 if kind is AttackKind.GAUSSIAN_BLUR else schedule.quality_trials
        for i, level in enumerate(grid):
            candidates = [
                degrade(kind, x, level, level_seed(seed, i, t))
                for t in range(trials)
            ]
            t, lbl = _first_flip(net, candidates, y)
            if t is not None:
                return AttackResult(
                    candidates[t], Outcome.FLIPPED, kind, float(level),
                    attack_mse(x, candidates[t]), lbl,
                )

    return AttackResult(
        x_adv=x.copy(),
        outcome=Outcome.BUDGET_EXHAUSTED,
        kind=kind,
        level_used=None,
        mse=0.0,
        adversarial_label=None,
    )
