# Per-state f-divergences between student and teacher, evaluated exactly
# over the whole vocabulary, plus their analytic gradients w.r.t. the
# student logits.
from __future__ import annotations

import numpy as np

REVERSE_KL = "reverse_kl"
JENSEN_SHANNON = "js"
KINDS = (REVERSE_KL, JENSEN_SHANNON)


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown divergence kind {kind!r}; expected one of {KINDS}")


def _divergence(p: np.ndarray, q: np.ndarray, kind: str) -> float:
    # clamped at zero: rounding on near-identical rows can otherwise leak
    # tiny negative values into the (nonnegative) budget arithmetic
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == REVERSE_KL:
            terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
            return max(float(terms.sum()), 0.0)
        m = 0.5 * (p + q)
        left = np.where(p > 0, p * (np.log(p) - np.log(m)), 0.0)
        right = np.where(q > 0, q * (np.log(q) - np.log(m)), 0.0)
        return max(float(0.5 * (left.sum() + right.sum())), 0.0)


def per_state_cost(student, teacher, state: int, kind: str = REVERSE_KL) -> float:
    """Budget cost at one state: D_kind(student row || teacher row)."""
    _check_kind(kind)
    return _divergence(student.action_probs(state), teacher.action_probs(state), kind)


def phi(student, teacher, state: int, kind: str = REVERSE_KL) -> float:
    """Divergence added to the infeasibility penalty; same formula as the cost."""
    return per_state_cost(student, teacher, state, kind)


def _grad_wrt_probs(p: np.ndarray, q: np.ndarray, kind: str) -> np.ndarray:
    # dD/dp_a; constants that vanish under the simplex constraint are kept,
    # the chain rule below projects them out.
    if kind == REVERSE_KL:
        return np.log(p) - np.log(q) + 1.0
    m = 0.5 * (p + q)
    return 0.5 * (np.log(p) - np.log(m))


def divergence_gradient(student, teacher, state: int,
                        kind: str = REVERSE_KL) -> np.ndarray:
    """Exact gradient of per_state_cost w.r.t. the student logits.

    For reverse KL this is the score-function expectation
    E_{a~pi}[grad log pi(a|s) (1 + log pi(a|s) - log mu(a|s))], carried
    through the probability floor so it matches finite differences exactly.
    Nonzero only in the row for `state`.
    """
    _check_kind(kind)
    q = student.raw_probs(state)
    p = student.action_probs(state)
    mu = teacher.action_probs(state)
    scale = 1.0 + student.vocab_size * student.floor
    with np.errstate(divide="ignore", invalid="ignore"):
        w = q * _grad_wrt_probs(p, mu, kind)
    row = (w - q * w.sum()) / scale
    g = np.zeros_like(student.logits)
    g[state] = row
    return g


def kl_score_gradient(student, teacher, state: int) -> np.ndarray:
    """Gradient of the reverse-KL cost at `state` (exact vocabulary expectation)."""
    return divergence_gradient(student, teacher, state, REVERSE_KL)


def max_cost_bound(teacher) -> float:
    """Upper bound on any reverse KL against this (floored) teacher."""
    return float(-np.log(teacher.probs.min()))
