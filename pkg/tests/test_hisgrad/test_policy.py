import numpy as np  # type: ignore
import pytest  # type: ignore
from hisgrad.policy import (LOG_STD_MIN, GaussianPolicy, apply_likelihood_floor,
                            atanh_recover, historical_log_prob,
                            likelihood_floor_grad, likelihood_threshold,
                            sample, sample_reparam)
from hypothesis import given, settings  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import assert_isclose, constant_net, random_states

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def constant_policy(mu, log_std, obs_dim=3):
    """
    A policy that ignores its observations.
    """
    mu = np.atleast_1d(mu)
    log_std = np.atleast_1d(log_std)
    return GaussianPolicy(obs_dim,
                          len(mu),
                          net=constant_net(obs_dim,
                                           np.concatenate([mu, log_std])))


def test_policy_rejects_mismatched_network():
    with pytest.raises(ValueError):
        GaussianPolicy(3, 2, net=constant_net(3, np.zeros(3)))


def test_log_prob_standard_case():
    policy = constant_policy(0.0, 0.0)
    s = sample_reparam(policy, np.zeros(3), None, noise=np.zeros(1))
    assert_isclose(s.pre_squash, [0.0])
    assert_isclose(s.log_prob, -0.918939, rtol=1e-6)
    assert_isclose(historical_log_prob(policy, np.zeros(3), [0.0]),
                   -0.918939,
                   rtol=1e-6)


def test_deterministic_limit():
    policy = constant_policy([0.3, -0.7], [-30.0, -30.0])
    obs = np.zeros((10, 3))
    action, _, _ = sample(policy, obs, 0)
    assert_isclose(action, np.tile(np.tanh([0.3, -0.7]), (10, 1)), atol=1e-7)
    # log σ is clamped.
    assert np.all(policy.head(obs).log_std == LOG_STD_MIN)


def test_actions_inside_open_box():
    policy = constant_policy([50.0, -50.0], [0.0, 0.0])
    action, log_prob, _ = sample(policy, np.zeros((100, 3)), 0)
    assert np.all(np.abs(action) < 1)
    assert np.all(np.isfinite(log_prob))


def test_sample_seeded():
    policy = GaussianPolicy(3, 2, random_state=0)
    obs = np.ones((4, 3))
    a1, l1, _ = sample(policy, obs, 5)
    a2, l2, _ = sample(policy, obs, 5)
    assert np.array_equal(a1, a2) and np.array_equal(l1, l2)


def test_density():
    policy = constant_policy(0.0, 0.0, obs_dim=1)
    random_state = check_random_state(0)
    action, _, _ = sample(policy, np.zeros((200000, 1)), random_state)
    edges = np.linspace(-0.8, 0.8, 17)
    counts, _ = np.histogram(action[:, 0], bins=edges)
    empirical = counts / (len(action) * np.diff(edges))
    centers = (edges[:-1] + edges[1:]) / 2
    density = np.exp(
        historical_log_prob(policy, np.zeros((len(centers), 1)),
                            centers[:, np.newaxis]))
    assert np.max(np.abs(empirical - density)) <= 0.02


@pytest.mark.parametrize("a, expected", [(0.0, 0.0),
                                         (0.5, 0.5 * np.log(3))])
def test_atanh_recover(a, expected):
    assert_isclose(atanh_recover(a), expected, rtol=1e-6, atol=1e-12)


def test_atanh_recover_inverts_tanh():
    x = np.linspace(-5, 5, 101)
    assert_isclose(atanh_recover(np.tanh(x)), x, rtol=0, atol=1e-9)


def test_atanh_recover_saturated():
    assert np.all(np.isfinite(atanh_recover([-1.0, 1.0])))


@given(random_states())
@settings(deadline=None, max_examples=50)
def test_historical_matches_sampling_path(random_state):
    policy = GaussianPolicy(4, 2, hidden_sizes=(8, ), random_state=random_state)
    obs = random_state.normal(size=(32, 4))
    s = sample_reparam(policy, obs, random_state)
    keep = np.all(np.abs(s.pre_squash) <= 4, axis=-1)
    logf = historical_log_prob(policy, obs[keep], s.action[keep])
    assert_isclose(logf, s.log_prob[keep], rtol=0, atol=1e-6)


def test_historical_decreases_with_distance():
    stored = np.array([0.2])
    mus = np.linspace(np.arctanh(0.2), 3, 10)
    logf = [
        historical_log_prob(constant_policy(mu, -0.5), np.zeros(3), stored)
        for mu in mus
    ]
    assert np.all(np.diff(logf) < 0)


def test_historical_factorizes():
    stored = np.array([0.3, -0.6])
    joint = historical_log_prob(constant_policy([0.1, -0.4], [-0.2, 0.3]),
                                np.zeros(3), stored)
    single = historical_log_prob(constant_policy(0.1, -0.2), np.zeros(3),
                                 stored[:1]) + historical_log_prob(
                                     constant_policy(-0.4, 0.3), np.zeros(3),
                                     stored[1:])
    assert_isclose(joint, single, rtol=1e-12)


def test_floor_unchanged_within_beta():
    logf = np.array([-1.0, -3.0, -9.5])
    assert np.array_equal(apply_likelihood_floor(logf, 10.0), logf)


def test_floor_continuous_at_threshold():
    logf = np.array([0.0, -10.0])
    assert_isclose(apply_likelihood_floor(logf, 10.0), logf)


def test_floor_example():
    floored = apply_likelihood_floor(np.array([0.0, -50.0]), 10.0)
    assert_isclose(floored, [0.0, -11.0 + np.exp(-40)])


def test_floor_bounded_below():
    random_state = check_random_state(0)
    logf = random_state.normal(scale=100, size=1000)
    beta = 5.0
    floored = apply_likelihood_floor(logf, beta)
    assert np.all(floored >= np.max(logf) - beta - 1)
    assert np.all(np.diff(floored[np.argsort(logf)]) >= 0)


def test_floor_grad():
    logf = np.array([0.0, -2.0, -20.0])
    t_limit = likelihood_threshold(logf, 5.0)
    h = 1e-6
    numeric = (apply_likelihood_floor(logf + h, 5.0, t_limit)
               - apply_likelihood_floor(logf - h, 5.0, t_limit)) / (2 * h)
    assert_isclose(likelihood_floor_grad(logf, t_limit), numeric, rtol=1e-6)


@pytest.mark.parametrize("logf, beta", [([], 1.0), ([0.0], 0.0)])
def test_threshold_errors(logf, beta):
    with pytest.raises(ValueError):
        likelihood_threshold(logf, beta)
