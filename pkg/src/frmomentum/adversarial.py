"""l-infinity sign-gradient attacks and adversarial training.

A *model* here is anything exposing

* ``input_gradient(w, X, y)``: per-row gradient of each sample's loss with
  respect to its own input, and
* ``predict(w, X)``: class predictions,

which :class:`~frmomentum.objectives.MlpModel` provides. Attacks act on each
sample independently; passing a 2-D batch is just the row-wise map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .objectives import LabeledDataset
from .optimizers import Optimizer, StepDecaySchedule, epoch_batches

__all__ = [
    "AttackConfig",
    "AdversarialExample",
    "FGSM_EPS",
    "fgsm_preset",
    "train_ifgsm10",
    "eval_ifgsm",
    "clip_to_ball",
    "fgsm_attack",
    "ifgsm_attack",
    "adversarial_training_epoch",
    "natural_training_epoch",
    "robust_accuracy",
    "RobustnessRow",
    "robustness_report",
    "write_robustness_csv",
]

FGSM_EPS = 8 / 255


@dataclass(frozen=True)
class AttackConfig:
    """Radius, per-iteration step, iteration count and valid input range."""

    epsilon: float
    step_size: float
    iterations: int = 1
    clip_low: float = 0.0
    clip_high: float = 1.0

    def __post_init__(self):
        if not 0 <= self.step_size <= self.epsilon:
            raise ValueError(f"need 0 <= step_size <= epsilon, got {self.step_size}, {self.epsilon}")
        if not self.clip_low < self.clip_high:
            raise ValueError("clip_low must be below clip_high")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


def fgsm_preset(epsilon: float = FGSM_EPS) -> AttackConfig:
    return AttackConfig(epsilon, epsilon, 1)


def train_ifgsm10(epsilon: float = FGSM_EPS) -> AttackConfig:
    """Inner maximizer used during adversarial training: 10 steps of 2/255."""
    return AttackConfig(epsilon, 2 / 255, 10)


def eval_ifgsm(iterations: int, epsilon: float = FGSM_EPS) -> AttackConfig:
    """Evaluation attack: steps of 1/255, typically 10, 20, 40 or 100 of them."""
    return AttackConfig(epsilon, 1 / 255, iterations)


@dataclass(frozen=True, eq=False)
class AdversarialExample:
    original: np.ndarray
    perturbed: np.ndarray
    label_before: np.ndarray
    label_after: np.ndarray


def clip_to_ball(x_adv, x, cfg: AttackConfig) -> np.ndarray:
    """Project onto the eps-box around x, then onto the valid range.

    Both sets are axis-aligned boxes, so the two projections commute.
    """
    x_adv = np.clip(x_adv, x - cfg.epsilon, x + cfg.epsilon)
    return np.clip(x_adv, cfg.clip_low, cfg.clip_high)


def _signed_gradient(model, w, x, y):
    g = model.input_gradient(w, x, y)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite input gradient")
    return np.sign(g)  # sign(0) == 0


def _as_batch(x, y):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), np.atleast_1d(np.asarray(y, dtype=np.int64)), single


def _example(model, w, x, x_adv, single):
    before = model.predict(w, x)
    after = model.predict(w, x_adv)
    if single:
        return AdversarialExample(x[0], x_adv[0], before[0], after[0])
    return AdversarialExample(x, x_adv, before, after)


def fgsm_attack(model, w, x, y, cfg: AttackConfig) -> AdversarialExample:
    """One full-radius sign-gradient step, clipped to the valid range."""
    xb, yb, single = _as_batch(x, y)
    x_adv = clip_to_ball(xb + cfg.epsilon * _signed_gradient(model, w, xb, yb), xb, cfg)
    return _example(model, w, xb, x_adv, single)


def _ifgsm(model, w, xb, yb, cfg):
    x_adv = xb.copy()
    for _ in range(cfg.iterations):
        x_adv = clip_to_ball(x_adv + cfg.step_size * _signed_gradient(model, w, x_adv, yb), xb, cfg)
    return x_adv


def ifgsm_attack(model, w, x, y, cfg: AttackConfig) -> AdversarialExample:
    """Iterated FGSM from x^(0) = x, projecting after every step."""
    xb, yb, single = _as_batch(x, y)
    return _example(model, w, xb, _ifgsm(model, w, xb, yb, cfg), single)


def adversarial_training_epoch(
    model,
    w,
    data: LabeledDataset,
    inner_cfg: AttackConfig | None,
    outer: Optimizer,
    opt_state,
    schedule: StepDecaySchedule,
    epoch: int,
    rng: np.random.Generator,
    batch_size: int = 32,
):
    """One pass over ``data`` in seeded random mini-batches.

    Each batch is first replaced by its IFGSM examples against the current
    ``w`` (skipped when ``inner_cfg`` is None, which gives natural training),
    then one outer optimizer step is taken on the loss at those inputs.
    Returns ``(w', opt_state', stats)``; ``stats`` holds the mean adversarial
    batch loss, the last momentum coefficient and the learning rate.
    """
    lr = schedule.rate(epoch)
    losses = []
    beta = 0.0
    for batch in epoch_batches(rng, len(data), batch_size):
        X, y = data.inputs[batch], data.labels[batch]
        if inner_cfg is not None:
            X = _ifgsm(model, w, X, y, inner_cfg)

        def grad_fn(v, X=X, y=y):
            loss, g = model.loss_and_gradient(v, X, y)
            losses.append(loss)
            return g

        w, opt_state, beta = outer.step(w, grad_fn, opt_state, lr)
        if not np.all(np.isfinite(w)):
            break
    stats = {"adv_loss": float(np.mean(losses)) if losses else float("nan"), "beta": beta, "lr": lr}
    return w, opt_state, stats


def natural_training_epoch(model, w, data, outer, opt_state, schedule, epoch, rng, batch_size=32):
    return adversarial_training_epoch(model, w, data, None, outer, opt_state, schedule, epoch, rng, batch_size)


def robust_accuracy(model, w, data: LabeledDataset, attack: str = "none", cfg: AttackConfig | None = None) -> float:
    """Fraction of samples still classified correctly after ``attack``."""
    X, y = data.inputs, data.labels
    if attack == "none":
        X_adv = X
    elif attack == "fgsm":
        X_adv = fgsm_attack(model, w, X, y, cfg).perturbed
    elif attack == "ifgsm":
        X_adv = ifgsm_attack(model, w, X, y, cfg).perturbed
    else:
        raise ValueError(f"unknown attack {attack!r}")
    return float(np.mean(model.predict(w, X_adv) == y))


@dataclass(frozen=True)
class RobustnessRow:
    attack_name: str
    epsilon: float
    step: float
    iters: int
    accuracy: float


def robustness_report(model, w, data, attacks) -> list:
    """Evaluate ``[(name, kind, cfg), ...]``; kind is none, fgsm or ifgsm."""
    rows = []
    for name, kind, cfg in attacks:
        acc = robust_accuracy(model, w, data, kind, cfg)
        rows.append(RobustnessRow(
            name,
            cfg.epsilon if cfg else 0.0,
            cfg.step_size if cfg else 0.0,
            cfg.iterations if cfg else 0,
            acc,
        ))
    return rows


def write_robustness_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["attack_name", "epsilon", "step", "iters", "accuracy"])
        for r in rows:
            out.writerow([r.attack_name, format(r.epsilon, ".17g"), format(r.step, ".17g"),
                          r.iters, format(r.accuracy, ".17g")])
