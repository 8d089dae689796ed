import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdnac.errors import NumericError
from pdnac.policy import features_from_matrix, linear_softmax, tabular_softmax


def test_zero_theta_gives_uniform():
    policy = tabular_softmax(3, 4)
    probs = policy.all_probs()
    assert np.allclose(probs, 0.25, atol=1e-15)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-12


def test_logit_gap_ten():
    policy = tabular_softmax(1, 2, np.array([10.0, 0.0]))
    p = policy.action_probs(0)
    # Direct softmax evaluation: e^10 / (e^10 + 1) and 1 / (e^10 + 1).
    expected = np.array([math.exp(10), 1.0]) / (math.exp(10) + 1.0)
    assert np.allclose(p, expected, rtol=1e-12)
    assert abs(p[1] - 4.5397868702434395e-05) < 1e-12


def test_overflow_safe_softmax():
    policy = tabular_softmax(1, 2, np.array([800.0, 0.0]))
    p = policy.action_probs(0)
    assert np.isfinite(p).all() and abs(p.sum() - 1.0) < 1e-12


def test_non_finite_theta_rejected():
    with pytest.raises(NumericError):
        tabular_softmax(1, 2, np.array([np.nan, 0.0]))


def test_linear_softmax_with_one_hot_features_matches_tabular():
    rng = np.random.default_rng(0)
    theta = rng.normal(size=6)
    tab = tabular_softmax(3, 2, theta)
    psi = np.eye(6).reshape(3, 2, 6)
    lin = linear_softmax(psi, theta)
    assert np.array_equal(tab.all_probs(), lin.all_probs())
    for s in range(3):
        for a in range(2):
            assert np.array_equal(tab.score(s, a), lin.score(s, a))


def test_uniform_policy_score_structure():
    policy = tabular_softmax(2, 2)
    g = policy.score(0, 0)
    expected = np.array([0.5, -0.5, 0.0, 0.0])
    assert np.allclose(g, expected, atol=1e-15)


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_scores_sum_to_zero_under_policy(seed):
    rng = np.random.default_rng(seed)
    policy = tabular_softmax(3, 3, rng.normal(0, 2, 9))
    probs = policy.all_probs()
    scores = policy.score_table()
    mean = np.einsum("sa,sad->sd", probs, scores)
    assert np.abs(mean).max() < 1e-12


def test_score_matches_finite_differences():
    rng = np.random.default_rng(3)
    policy = tabular_softmax(2, 3, rng.normal(0, 1, 6))
    h = 1e-6
    for s in range(2):
        for a in range(3):
            g = policy.score(s, a)
            fd = np.zeros(6)
            for i in range(6):
                tp = policy.theta.copy()
                tm = policy.theta.copy()
                tp[i] += h
                tm[i] -= h
                fd[i] = (policy.with_theta(tp).log_prob(s, a)
                         - policy.with_theta(tm).log_prob(s, a)) / (2 * h)
            assert np.linalg.norm(fd - g) < 1e-4 * max(1.0, np.linalg.norm(g))


def test_fisher_outer_rank_and_trace():
    rng = np.random.default_rng(5)
    policy = tabular_softmax(3, 2, rng.normal(0, 1, 6))
    f = policy.fisher_outer(1, 0)
    assert f.shape == (6, 6)
    assert np.allclose(f, f.T)
    assert np.linalg.matrix_rank(f, tol=1e-12) <= 1
    assert abs(np.trace(f) - np.linalg.norm(policy.score(1, 0)) ** 2) < 1e-12
    eigs = np.linalg.eigvalsh(f)
    assert eigs.min() > -1e-12


def test_score_bound_holds_on_samples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        policy = tabular_softmax(4, 3, rng.normal(0, 3, 12))
        g1 = policy.score_bound()
        norms = np.linalg.norm(policy.score_table(), axis=2)
        assert norms.max() <= g1 + 1e-12


def test_score_lipschitz_spot_check():
    rng = np.random.default_rng(11)
    policy = tabular_softmax(3, 3)
    g2 = policy.score_lipschitz()
    for _ in range(20):
        t1 = rng.normal(0, 2, 9)
        t2 = t1 + rng.normal(0, 0.5, 9)
        p1 = policy.with_theta(t1)
        p2 = policy.with_theta(t2)
        diff = np.linalg.norm(p1.score_table() - p2.score_table(), axis=2).max()
        assert diff <= g2 * np.linalg.norm(t1 - t2) + 1e-12


def test_features_from_matrix_layout():
    mat = np.arange(12.0).reshape(2, 6)  # d=2, S*A=6
    psi = features_from_matrix(mat, 3, 2)
    assert psi.shape == (3, 2, 2)
    assert np.array_equal(psi[1, 0], mat[:, 2])
