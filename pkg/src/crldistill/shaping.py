# Shaped step rewards for the method grid: budget-constrained reward
# reconstruction from history, the state-augmented reference, the fixed-weight
# relaxation, and the distillation-only variants.
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import divergence as dv
from .env import Trajectory

UNAUGMENTED = "unaugmented"
SAUTE = "saute"
LAGRANGIAN = "lagrangian"
REWARD_ONLY = "reward-only"
KL_ONLY = "kl-only"
KL_LONG_HORIZON = "kl-long-horizon"
MODES = (UNAUGMENTED, SAUTE, LAGRANGIAN, REWARD_ONLY, KL_ONLY, KL_LONG_HORIZON)


@dataclass(frozen=True)
class ConstrainedRewardSpec:
    """Knobs shared by every shaping mode.

    budget: cumulative divergence allowed per episode.
    penalty: magnitude of the infeasibility penalty.
    boundary_tol: tolerance band around the budget boundary inside which the
        explicit divergence gradient fires.
    lagrange_weight: fixed multiplier, used only in lagrangian mode.
    """

    budget: float = 0.35
    penalty: float = 20.0
    boundary_tol: float = 1e-3
    cost_kind: str = dv.REVERSE_KL
    penalty_kind: str = dv.REVERSE_KL
    mode: str = UNAUGMENTED
    discount: float = 1.0
    lagrange_weight: float = 0.0

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if self.boundary_tol < 0:
            raise ValueError("boundary_tol must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == LAGRANGIAN and self.lagrange_weight < 0:
            raise ValueError("lagrange_weight must be nonnegative")
        for kind in (self.cost_kind, self.penalty_kind):
            if kind not in dv.KINDS:
                raise ValueError(f"unknown divergence kind {kind!r}")

    def with_mode(self, mode: str, **kw) -> "ConstrainedRewardSpec":
        return replace(self, mode=mode, **kw)


@dataclass
class BudgetLedger:
    """Remaining budget along a trajectory, updated by sequential subtraction."""

    budget: float
    remaining: float = field(default=math.nan)
    cumulative_cost: float = 0.0

    def __post_init__(self):
        if math.isnan(self.remaining):
            self.remaining = self.budget

    def charge(self, cost: float) -> None:
        if cost < 0:
            raise ValueError("costs must be nonnegative")
        self.cumulative_cost += cost
        self.remaining -= cost


def feasible_at(ledger: BudgetLedger) -> bool:
    """True while the budget accumulated over earlier steps is not exhausted."""
    return ledger.remaining >= 0.0


def unaug_reward(traj: Trajectory, spec: ConstrainedRewardSpec,
                 include_divergence_penalty: bool = True) -> list[float]:
    """Constrained reward reconstructed from history, no augmented state.

    Step T pays the task reward while the cost of steps 0..T-1 fits the
    budget, and -(penalty + divergence at the current state) afterwards.
    `include_divergence_penalty=False` drops the divergence term, for parity
    checks against the state-augmented reference.
    """
    ledger = BudgetLedger(spec.budget)
    out = []
    for r, c, p in zip(traj.task_rewards, traj.costs, traj.penalty_divergences):
        if feasible_at(ledger):
            out.append(r)
        elif include_divergence_penalty:
            out.append(-(spec.penalty + p))
        else:
            out.append(-spec.penalty)
        ledger.charge(c)
    return out


def saute_reward(traj: Trajectory, spec: ConstrainedRewardSpec) -> list[float]:
    """State-augmented reference: carry the remaining budget explicitly."""
    z = spec.budget
    out = []
    for r, c in zip(traj.task_rewards, traj.costs):
        out.append(r if z >= 0.0 else -spec.penalty)
        z -= c
    return out


def lagrangian_step_reward(traj: Trajectory,
                           spec: ConstrainedRewardSpec) -> list[float]:
    """Fixed-weight relaxation: task reward minus weighted per-state cost."""
    w = spec.lagrange_weight
    return [r - w * c for r, c in zip(traj.task_rewards, traj.costs)]


def shape_rewards(traj: Trajectory, spec: ConstrainedRewardSpec) -> list[float]:
    """Per-step shaped rewards for the spec's mode."""
    if spec.mode == UNAUGMENTED:
        return unaug_reward(traj, spec)
    if spec.mode == SAUTE:
        return saute_reward(traj, spec)
    if spec.mode == LAGRANGIAN:
        return lagrangian_step_reward(traj, spec)
    if spec.mode == REWARD_ONLY:
        return list(traj.task_rewards)
    if spec.mode in (KL_ONLY, KL_LONG_HORIZON):
        return [-c for c in traj.costs]
    raise ValueError(f"unknown mode {spec.mode!r}")


def boundary_flags(traj: Trajectory, spec: ConstrainedRewardSpec) -> list[bool]:
    """Steps whose remaining budget (before the step's own cost) is within
    the boundary tolerance or already exhausted."""
    ledger = BudgetLedger(spec.budget)
    flags = []
    for c in traj.costs:
        flags.append(ledger.remaining <= spec.boundary_tol)
        ledger.charge(c)
    return flags
