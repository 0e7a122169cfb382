import numpy as np
import pytest

from crldistill import divergence as dv
from crldistill import env, gradients, shaping, verification
from crldistill.env import Trajectory
from crldistill.gradients import (BASELINE_GROUP, BASELINE_NONE,
                                  CREDIT_STEP, CREDIT_TO_GO, FD_STEP,
                                  boundary_margin, exact_gradient,
                                  finite_difference_gradient,
                                  likelihood_ratio_term, objective_value,
                                  total_gradient)
from crldistill.policies import SoftmaxPolicy, TeacherPolicy
from crldistill.shaping import ConstrainedRewardSpec


def small_instance(seed=0):
    rng = np.random.default_rng(seed)
    mdp = env.chain_with_distractors(decision_states=2, horizon_cap=6)
    student = SoftmaxPolicy(rng.normal(scale=0.7,
                                       size=(mdp.num_states, mdp.vocab_size)))
    teacher = env.tension_teacher(mdp)
    return mdp, student, teacher


def test_returns_to_go():
    assert gradients._returns_to_go([1.0, 2.0, 3.0], 1.0) == [6.0, 5.0, 3.0]
    assert gradients._returns_to_go([1.0, 2.0], 0.5) == [2.0, 2.0]


def test_split_is_consistent():
    mdp, student, teacher = small_instance()
    spec = ConstrainedRewardSpec(budget=0.2)
    rng = np.random.default_rng(1)
    trajs = [env.rollout(mdp, student, teacher, spec, rng) for _ in range(16)]
    groups = [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]]
    est = total_gradient(student, teacher, trajs, spec,
                         baseline=BASELINE_GROUP, groups=groups)
    np.testing.assert_allclose(est.table, est.term_i + est.term_ii,
                               atol=1e-15)
    assert est.num_trajectories == 16


def test_group_baseline_zeroes_identical_returns():
    # all group members share one return, so every advantage is zero
    mdp, student, teacher = small_instance()
    spec = ConstrainedRewardSpec(mode=shaping.REWARD_ONLY)
    traj = Trajectory([0, 2], [0, 0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0],
                      True, False)
    trajs = [traj, traj, traj]
    shaped = [shaping.shape_rewards(t, spec) for t in trajs]
    term = likelihood_ratio_term(student, trajs, shaped,
                                 baseline=BASELINE_GROUP, groups=[[0, 1, 2]])
    np.testing.assert_allclose(term, 0.0, atol=1e-15)


def test_group_baseline_requires_groups():
    mdp, student, teacher = small_instance()
    spec = ConstrainedRewardSpec()
    traj = env.rollout(mdp, student, teacher, spec, np.random.default_rng(0))
    shaped = [shaping.shape_rewards(traj, spec)]
    with pytest.raises(ValueError):
        likelihood_ratio_term(student, [traj], shaped,
                              baseline=BASELINE_GROUP, groups=None)
    with pytest.raises(ValueError):
        likelihood_ratio_term(student, [traj], shaped,
                              baseline=BASELINE_GROUP, groups=[[0]])
    with pytest.raises(ValueError):
        likelihood_ratio_term(student, [traj], shaped, baseline="median")


def test_sampled_estimate_approaches_exact():
    mdp, student, teacher = small_instance()
    spec = ConstrainedRewardSpec(budget=0.2)
    exact = exact_gradient(mdp, student, teacher, spec)
    rng = np.random.default_rng(2)
    count = 20000
    mean = np.zeros_like(student.logits)
    m2 = np.zeros_like(student.logits)
    for i in range(count):
        traj = env.rollout(mdp, student, teacher, spec, rng)
        sample = total_gradient(student, teacher, [traj], spec,
                                baseline=BASELINE_NONE).table
        delta = sample - mean
        mean += delta / (i + 1)
        m2 += delta * (sample - mean)
    se = np.sqrt(m2 / (count - 1) / count)
    diff = np.abs(mean - exact.table)
    assert np.all(diff <= 4.0 * se + 1e-9)


@pytest.mark.parametrize("mode,kw", [
    (shaping.UNAUGMENTED, {}),
    (shaping.SAUTE, {}),
    (shaping.REWARD_ONLY, {}),
    (shaping.LAGRANGIAN, {"lagrange_weight": 0.5}),
    (shaping.KL_LONG_HORIZON, {}),
])
def test_exact_gradient_matches_finite_differences(mode, kw):
    mdp, student, teacher = small_instance(seed=4)
    spec = ConstrainedRewardSpec(budget=0.2, mode=mode, **kw)
    if mode == shaping.UNAUGMENTED:
        assert boundary_margin(mdp, student, teacher, spec) > 10 * FD_STEP
    analytic = exact_gradient(mdp, student, teacher, spec).table

    def shaped_value(policy):
        total = 0.0
        for traj, p in env.enumerate_trajectories(mdp, policy, teacher, spec):
            shaped = shaping.shape_rewards(traj, spec)
            total += p * sum(shaped)
        return total

    fd = finite_difference_gradient(shaped_value, student)
    denom = max(float(np.linalg.norm(fd)), 1e-6)
    assert float(np.linalg.norm(analytic - fd)) / denom <= 1e-4


def test_kl_only_step_credit_is_pull_term_only():
    # per-step credit gives a likelihood-ratio term whose expectation is an
    # exact zero (the credit at a step does not depend on the token taken),
    # so the whole signal is the analytic divergence pull
    mdp, student, teacher = small_instance(seed=6)
    spec = ConstrainedRewardSpec(budget=0.2, mode=shaping.KL_ONLY)
    est = exact_gradient(mdp, student, teacher, spec)
    np.testing.assert_allclose(est.term_i, 0.0, atol=1e-12)

    expected = np.zeros_like(student.logits)
    for traj, p in env.enumerate_trajectories(mdp, student, teacher, spec):
        for s in traj.states:
            expected -= p * dv.divergence_gradient(student, teacher, s,
                                                   spec.cost_kind)
    np.testing.assert_allclose(est.term_ii, expected, atol=1e-12)


def test_objective_value_matches_policy_value():
    mdp, student, teacher = small_instance(seed=7)
    spec = ConstrainedRewardSpec(budget=0.2)
    v1 = objective_value(mdp, student, teacher, spec)
    v2, _ = verification.policy_value(mdp, student, teacher, spec)
    assert v1 == pytest.approx(v2, abs=1e-14)


def test_boundary_margin_positive_off_boundary():
    mdp, student, teacher = small_instance(seed=8)
    spec = ConstrainedRewardSpec(budget=0.2)
    assert boundary_margin(mdp, student, teacher, spec) > 0.0


def test_credit_modes():
    with pytest.raises(ValueError):
        gradients._credits([[1.0]], 1.0, "uniform")
    assert gradients._credits([[1.0, 2.0]], 1.0, CREDIT_STEP) == [[1.0, 2.0]]
    assert gradients._credits([[1.0, 2.0]], 1.0, CREDIT_TO_GO) == [[3.0, 2.0]]
