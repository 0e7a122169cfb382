# Training loops for the full method grid, with deterministic seed streams
# and resumable checkpoints.
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import env as env_mod
from . import gradients, shaping
from .evaluation import evaluate_policy
from .policies import SoftmaxPolicy
from .shaping import ConstrainedRewardSpec

OPTIMIZER_ADAM = "adam"
OPTIMIZER_SGA = "sga"

PAPER_LEARNING_RATE = 1e-5  # LLM-scale setting, kept for provenance
TOY_LEARNING_RATE = 5e-2


class TrainingDiverged(RuntimeError):
    """Parameters left the finite range; carries the last finite checkpoints."""

    def __init__(self, message, checkpoints):
        super().__init__(message)
        self.checkpoints = checkpoints


@dataclass(frozen=True)
class TrainConfig:
    spec: ConstrainedRewardSpec
    seed: int = 0
    groups_per_batch: int = 8
    rollouts_per_group: int = 8
    batches_per_epoch: int = 10
    epochs: int = 20
    learning_rate: float = TOY_LEARNING_RATE
    optimizer: str = OPTIMIZER_ADAM
    baseline: str = gradients.BASELINE_GROUP
    normalize_advantages: bool = False

    def __post_init__(self):
        if self.groups_per_batch < 1 or self.rollouts_per_group < 1:
            raise ValueError("batch composition must be positive")
        if self.optimizer not in (OPTIMIZER_ADAM, OPTIMIZER_SGA):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def batch_size(self) -> int:
        return self.groups_per_batch * self.rollouts_per_group


@dataclass
class Checkpoint:
    epoch: int
    logits: np.ndarray
    optimizer_state: dict
    metrics: dict


def method_label(spec: ConstrainedRewardSpec) -> str:
    """Canonical method name; zero-weight relaxation is the plain reward baseline."""
    if spec.mode == shaping.LAGRANGIAN:
        if spec.lagrange_weight == 0.0:
            return shaping.REWARD_ONLY
        return f"lagrangian-{spec.lagrange_weight:g}"
    return spec.mode


class AdamAscent:
    """Adaptive-moment gradient ascent (bias-corrected)."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, state=None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        if state is None:
            self.m = None
            self.v = None
            self.step_count = 0
        else:
            self.m = np.array(state["m"])
            self.v = np.array(state["v"])
            self.step_count = int(state["step_count"])

    def update(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.step_count)
        vhat = self.v / (1.0 - self.beta2 ** self.step_count)
        params += self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self) -> dict:
        if self.m is None:
            return {"m": 0, "v": 0, "step_count": 0}
        return {"m": self.m.copy(), "v": self.v.copy(),
                "step_count": self.step_count}


class SgaAscent:
    """Plain gradient ascent."""

    def __init__(self, lr, state=None):
        self.lr = lr

    def update(self, params: np.ndarray, grad: np.ndarray) -> None:
        params += self.lr * grad

    def state(self) -> dict:
        return {}


def _make_optimizer(config: TrainConfig, state=None):
    if config.optimizer == OPTIMIZER_ADAM:
        if state is not None and state.get("step_count", 0) == 0:
            state = None
        return AdamAscent(config.learning_rate, state=state)
    return SgaAscent(config.learning_rate)


def _sample_batch(mdp, student, teacher, config: TrainConfig,
                  epoch: int, batch: int, phase: int):
    trajectories = []
    groups = []
    for g in range(config.groups_per_batch):
        members = []
        for i in range(config.rollouts_per_group):
            rng = np.random.default_rng(
                [config.seed, phase, epoch, batch, g, i])
            members.append(len(trajectories))
            trajectories.append(
                env_mod.rollout(mdp, student, teacher, config.spec, rng))
        groups.append(members)
    return trajectories, groups


def _log_line(epoch: int, label: str, metrics: dict) -> str:
    return (f"epoch={epoch} method={label}"
            f" mean_return={metrics['task_success_rate']!r}"
            f" mean_kl={metrics['mean_kl']!r}"
            f" cs={metrics['constraint_satisfaction']!r}"
            f" violation={metrics['violation_probability']!r}\n")


def train(mdp, teacher, config: TrainConfig,
          initial_policy: SoftmaxPolicy | None = None,
          start_epoch: int = 0,
          optimizer_state: dict | None = None,
          log_file=None,
          phase: int = 1):
    """Run the configured method; returns (final policy, per-epoch checkpoints).

    The RNG stream of every rollout is derived from
    (seed, phase, epoch, batch, group, rollout), so a run resumed from a
    checkpoint reproduces the original bit-for-bit.
    """
    if initial_policy is None:
        student = SoftmaxPolicy.uniform(mdp.num_states, mdp.vocab_size)
    else:
        student = initial_policy.copy()
    optimizer = _make_optimizer(config, optimizer_state)
    label = method_label(config.spec)
    checkpoints: list[Checkpoint] = []

    for epoch in range(start_epoch, config.epochs):
        for batch in range(config.batches_per_epoch):
            trajs, groups = _sample_batch(mdp, student, teacher, config,
                                          epoch, batch, phase)
            estimate = gradients.total_gradient(
                student, teacher, trajs, config.spec,
                baseline=config.baseline, groups=groups,
                normalize=config.normalize_advantages)
            optimizer.update(student.logits, estimate.table)
            if not np.isfinite(student.logits).all():
                raise TrainingDiverged(
                    f"non-finite parameters at epoch {epoch} batch {batch}"
                    f" (method {label})", checkpoints)
        result = evaluate_policy(mdp, student, teacher, config.spec,
                                 eval_seed=config.seed)
        metrics = {
            "task_success_rate": result.task_success_rate,
            "mean_kl": result.mean_kl,
            "constraint_satisfaction": result.constraint_satisfaction,
            "violation_probability": result.violation_probability,
        }
        checkpoints.append(Checkpoint(epoch, student.logits.copy(),
                                      optimizer.state(), dict(metrics)))
        if log_file is not None:
            log_file.write(_log_line(epoch, label, metrics))
    return student, checkpoints


def resume(mdp, teacher, config: TrainConfig, checkpoint: Checkpoint,
           log_file=None, phase: int = 1):
    """Continue a run from a checkpoint; bit-identical to the original run."""
    policy = SoftmaxPolicy(checkpoint.logits.copy())
    return train(mdp, teacher, config, initial_policy=policy,
                 start_epoch=checkpoint.epoch + 1,
                 optimizer_state=copy.deepcopy(checkpoint.optimizer_state),
                 log_file=log_file, phase=phase)


def warm_start(mdp, teacher, config: TrainConfig, epochs_kl: int = 3,
               initial_policy: SoftmaxPolicy | None = None) -> SoftmaxPolicy:
    """Distillation-only bootstrap: run the pure divergence objective first."""
    if epochs_kl < 0:
        raise ValueError("epochs_kl must be nonnegative")
    if epochs_kl == 0:
        if initial_policy is None:
            return SoftmaxPolicy.uniform(mdp.num_states, mdp.vocab_size)
        return initial_policy.copy()
    warm_config = replace(config, spec=config.spec.with_mode(shaping.KL_ONLY),
                          epochs=epochs_kl)
    policy, _ = train(mdp, teacher, warm_config,
                      initial_policy=initial_policy, phase=0)
    return policy
