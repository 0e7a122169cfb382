# Finite token MDPs: deterministic transitions over a small vocabulary,
# binary terminal reward, episodic rollout and exhaustive enumeration.
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

ENUMERATION_LEAF_CAP = 10**6


class EnumerationCapExceeded(RuntimeError):
    """Raised when exhaustive enumeration would exceed the leaf cap."""


@dataclass(frozen=True)
class TokenMdp:
    """Episodic MDP whose actions are tokens and whose transitions are deterministic.

    `transition[s, a]` gives the successor state. Episodes start at
    `initial_state`, end on entering a terminal state, and truncate at
    `horizon_cap` steps with zero reward.
    """

    num_states: int
    vocab_size: int
    transition: np.ndarray  # (num_states, vocab_size) int
    initial_state: int
    terminal_states: frozenset[int]
    horizon_cap: int
    task_reward: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_states <= 0 or self.vocab_size <= 0 or self.horizon_cap <= 0:
            raise ValueError("num_states, vocab_size and horizon_cap must be positive")
        t = np.asarray(self.transition, dtype=np.int64)
        if t.shape != (self.num_states, self.vocab_size):
            raise ValueError("transition table must be (num_states, vocab_size)")
        if (t < 0).any() or (t >= self.num_states).any():
            raise ValueError("transition targets out of range")
        object.__setattr__(self, "transition", t)
        for s in self.terminal_states:
            if not 0 <= s < self.num_states:
                raise ValueError(f"terminal state {s} out of range")
            r = self.task_reward.get(s, 0.0)
            if r not in (0.0, 1.0):
                raise ValueError("task rewards must be binary")
        if self.initial_state in self.terminal_states:
            raise ValueError("initial state may not be terminal")

    def is_terminal(self, state: int) -> bool:
        return state in self.terminal_states

    def reward_at(self, state: int) -> float:
        return self.task_reward.get(state, 0.0) if self.is_terminal(state) else 0.0


@dataclass
class Trajectory:
    """One episode: the acting states, chosen tokens, and per-step quantities.

    `costs[t]` is the budget divergence at the state acted from at step t;
    `penalty_divergences[t]` is the divergence used inside the infeasibility
    penalty at the same state. Both are evaluated against the teacher under
    the student policy that generated the episode.
    """

    states: list[int]
    tokens: list[int]
    task_rewards: list[float]
    costs: list[float]
    penalty_divergences: list[float]
    terminated: bool
    truncated: bool

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def total_task_reward(self) -> float:
        return sum(self.task_rewards)

    @property
    def total_cost(self) -> float:
        return sum(self.costs)


def step(mdp: TokenMdp, state: int, token: int) -> tuple[int, float, bool]:
    """Apply one token: returns (next_state, task_reward, is_terminal)."""
    if not 0 <= state < mdp.num_states:
        raise ValueError(f"state {state} out of range")
    if not 0 <= token < mdp.vocab_size:
        raise ValueError(f"token {token} out of range")
    nxt = int(mdp.transition[state, token])
    done = mdp.is_terminal(nxt)
    reward = mdp.reward_at(nxt) if done else 0.0
    return nxt, reward, done


def rollout(mdp, student, teacher, spec, rng: np.random.Generator) -> Trajectory:
    """Sample one episode under the student, recording teacher divergences.

    Costs at each visited state are computed against the teacher with the
    divergence kinds named in `spec`.
    """
    from . import divergence as dv

    states, tokens, rewards, costs, pens = [], [], [], [], []
    s = mdp.initial_state
    terminated = False
    for _ in range(mdp.horizon_cap):
        p = student.action_probs(s)
        a = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")),
                mdp.vocab_size - 1)
        nxt, r, done = step(mdp, s, a)
        states.append(s)
        tokens.append(a)
        rewards.append(r)
        costs.append(dv.per_state_cost(student, teacher, s, spec.cost_kind))
        pens.append(dv.phi(student, teacher, s, spec.penalty_kind))
        s = nxt
        if done:
            terminated = True
            break
    return Trajectory(states, tokens, rewards, costs, pens, terminated, not terminated)


def rollout_many(mdp, student, teacher, spec, rng: np.random.Generator,
                 count: int) -> list[Trajectory]:
    """Vectorized sampling of `count` episodes from a single RNG stream.

    Used for evaluation-scale sampling; training uses per-rollout streams.
    """
    from . import divergence as dv

    probs = np.stack([student.action_probs(s) for s in range(mdp.num_states)])
    cost = np.array([dv.per_state_cost(student, teacher, s, spec.cost_kind)
                     for s in range(mdp.num_states)])
    pen = np.array([dv.phi(student, teacher, s, spec.penalty_kind)
                    for s in range(mdp.num_states)])
    cum = np.cumsum(probs, axis=1)

    state = np.full(count, mdp.initial_state, dtype=np.int64)
    alive = np.ones(count, dtype=bool)
    term_mask = np.zeros(mdp.num_states, dtype=bool)
    for t in mdp.terminal_states:
        term_mask[t] = True
    reward_vec = np.zeros(mdp.num_states)
    for t, r in mdp.task_reward.items():
        reward_vec[t] = r

    paths_s = [[] for _ in range(count)]
    paths_a = [[] for _ in range(count)]
    paths_r = [[] for _ in range(count)]
    done_term = np.zeros(count, dtype=bool)

    for _ in range(mdp.horizon_cap):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        u = rng.random(idx.size)
        toks = (u[:, None] > cum[state[idx]]).sum(axis=1)
        nxt = mdp.transition[state[idx], toks]
        done = term_mask[nxt]
        rew = np.where(done, reward_vec[nxt], 0.0)
        for j, i in enumerate(idx):
            paths_s[i].append(int(state[i]))
            paths_a[i].append(int(toks[j]))
            paths_r[i].append(float(rew[j]))
        state[idx] = nxt
        done_term[idx[done]] = True
        alive[idx[done]] = False

    out = []
    for i in range(count):
        ss = paths_s[i]
        out.append(Trajectory(ss, paths_a[i], paths_r[i],
                              [float(cost[s]) for s in ss],
                              [float(pen[s]) for s in ss],
                              bool(done_term[i]), not bool(done_term[i])))
    return out


def enumerate_trajectories(mdp, student, teacher, spec,
                           leaf_cap: int = ENUMERATION_LEAF_CAP):
    """All trajectories with their exact probabilities under the student.

    Probabilities sum to one (the tree is exhaustive). Raises
    EnumerationCapExceeded when vocab_size ** horizon_cap paths could exceed
    `leaf_cap`.
    """
    from . import divergence as dv

    probs = [student.action_probs(s) for s in range(mdp.num_states)]
    cost = [dv.per_state_cost(student, teacher, s, spec.cost_kind)
            for s in range(mdp.num_states)]
    pen = [dv.phi(student, teacher, s, spec.penalty_kind)
           for s in range(mdp.num_states)]

    results: list[tuple[Trajectory, float]] = []
    budget = [leaf_cap]

    def walk(state, depth, prob, ss, aa, rr):
        if budget[0] <= 0:
            raise EnumerationCapExceeded(
                f"enumeration exceeds cap of {leaf_cap} leaves")
        if depth == mdp.horizon_cap:
            budget[0] -= 1
            results.append((Trajectory(list(ss), list(aa), list(rr),
                                       [cost[s] for s in ss],
                                       [pen[s] for s in ss],
                                       False, True), prob))
            return
        row = probs[state]
        for a in range(mdp.vocab_size):
            pa = prob * row[a]
            nxt, r, done = step(mdp, state, a)
            ss.append(state)
            aa.append(a)
            rr.append(r)
            if done:
                budget[0] -= 1
                results.append((Trajectory(list(ss), list(aa), list(rr),
                                           [cost[s] for s in ss],
                                           [pen[s] for s in ss],
                                           True, False), pa))
            else:
                walk(nxt, depth + 1, pa, ss, aa, rr)
            ss.pop()
            aa.pop()
            rr.pop()

    walk(mdp.initial_state, 0, 1.0, [], [], [])
    return results


# ---------------------------------------------------------------------------
# Built-in task family


def chain(length: int = 3, horizon_cap: int = 8) -> TokenMdp:
    """Straight chain: token 0 advances, token 1 ends in a zero-reward sink.

    States 0..length-1 are on the path, `length` is the rewarded goal and
    `length + 1` the sink.
    """
    goal, sink = length, length + 1
    n = length + 2
    trans = np.empty((n, 2), dtype=np.int64)
    for s in range(length):
        trans[s] = (s + 1, sink)
    trans[goal] = (goal, goal)
    trans[sink] = (sink, sink)
    return TokenMdp(n, 2, trans, 0, frozenset({goal, sink}), horizon_cap,
                    {goal: 1.0, sink: 0.0})


def chain_with_distractors(decision_states: int = 3,
                           horizon_cap: int = 8) -> TokenMdp:
    """Chain of decision states; only advancing through all of them succeeds.

    Tokens: 0 advances along the chain, 1 and 2 both derail toward the
    zero-reward fail state. Two properties shape the budget dynamics:

    * decision states are always followed by at least one more step (a commit
      state), so the cost incurred at each decision state is covered by a
      later budget check;
    * every exit from the chain is an action the teacher itself supports, so
      a policy pushed over the budget is pulled back toward the teacher
      rather than toward some teacher-unlikely escape.
    """
    k = decision_states
    commit_good, commit_bad = k, k + 1
    goal, fail = k + 2, k + 3
    n = k + 4
    trans = np.empty((n, 3), dtype=np.int64)
    for s in range(k):
        nxt = s + 1 if s + 1 < k else commit_good
        trans[s] = (nxt, commit_bad, commit_bad)
    trans[commit_good] = (goal, goal, goal)
    trans[commit_bad] = (fail, fail, fail)
    trans[goal] = (goal, goal, goal)
    trans[fail] = (fail, fail, fail)
    return TokenMdp(n, 3, trans, 0, frozenset({goal, fail}), horizon_cap,
                    {goal: 1.0, fail: 0.0})


def tension_teacher(mdp: TokenMdp, advance: float = 0.86,
                    floor: float = 1e-8):
    """Teacher for chain_with_distractors: mostly advances, keeps hazard mass.

    The leftover hazard mass (split over the derailing tokens) is sized so
    that suppressing it entirely at every decision state costs more
    divergence than the default budget allows, while a small residual hazard
    stays affordable.
    """
    from .policies import TeacherPolicy

    if not 0.0 < advance < 1.0:
        raise ValueError("advance must be in (0, 1)")
    hazard = (1.0 - advance) / 2.0
    probs = np.full((mdp.num_states, mdp.vocab_size), 1.0 / mdp.vocab_size)
    for s in range(mdp.num_states):
        # Decision states are the ones where the token choice matters;
        # commits and terminals map every token to the same successor.
        if len(set(mdp.transition[s])) > 1:
            probs[s] = (advance, hazard, hazard)
    return TeacherPolicy(probs, floor=floor)


# ---------------------------------------------------------------------------
# Task file format (documented in README): YAML mapping with keys
#   num_states, vocab_size, initial_state, horizon_cap,
#   transitions: {"state token": next_state, ...},
#   terminal_rewards: {state: reward}

_TASK_KEYS = {"num_states", "vocab_size", "initial_state", "horizon_cap",
              "transitions", "terminal_rewards"}


def load_task(path) -> TokenMdp:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError("task file must be a mapping")
    unknown = set(raw) - _TASK_KEYS
    if unknown:
        raise ValueError(f"unknown task keys: {sorted(unknown)}")
    missing = _TASK_KEYS - set(raw)
    if missing:
        raise ValueError(f"missing task keys: {sorted(missing)}")
    n, v = int(raw["num_states"]), int(raw["vocab_size"])
    trans = np.full((n, v), -1, dtype=np.int64)
    for key, nxt in raw["transitions"].items():
        s_str, a_str = str(key).split()
        trans[int(s_str), int(a_str)] = int(nxt)
    if (trans < 0).any():
        raise ValueError("transition map must be total over states x tokens")
    rewards = {int(s): float(r) for s, r in raw["terminal_rewards"].items()}
    return TokenMdp(n, v, trans, int(raw["initial_state"]),
                    frozenset(rewards), int(raw["horizon_cap"]), rewards)


def save_task(mdp: TokenMdp, path) -> None:
    doc = {
        "num_states": int(mdp.num_states),
        "vocab_size": int(mdp.vocab_size),
        "initial_state": int(mdp.initial_state),
        "horizon_cap": int(mdp.horizon_cap),
        "transitions": {f"{s} {a}": int(mdp.transition[s, a])
                        for s in range(mdp.num_states)
                        for a in range(mdp.vocab_size)},
        "terminal_rewards": {int(s): float(mdp.task_reward.get(s, 0.0))
                             for s in sorted(mdp.terminal_states)},
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)
