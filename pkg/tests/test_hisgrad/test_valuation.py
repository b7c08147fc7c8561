import numpy as np  # type: ignore
import pytest  # type: ignore
import scipy.stats as sstats  # type: ignore
from hisgrad.coopgame import Coalition
from hisgrad.valuation import (Temperature, TwinCritics, amc_marginal,
                               critic_loss_and_grads, mask_joint_action,
                               q_min, q_min_action_grad, q_values, shapley_q,
                               shapley_q_exhaustive, td_target,
                               temperature_grad, temperature_step)
from hisgrad.verify import (coalition_frequencies, compare_gradients,
                            numerical_gradient)
from hypothesis import given, settings  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import (assert_isclose, constant_net, linear_critics, noshrinking,
               random_states)


def constant_critics(q1, q2, in_dim, q1_target=None, q2_target=None):
    return TwinCritics(
        in_dim - 2,
        2,
        1,
        nets=dict(q1=constant_net(in_dim, [q1]),
                  q2=constant_net(in_dim, [q2]),
                  q1_target=constant_net(in_dim, [q1 if q1_target is None
                                                  else q1_target]),
                  q2_target=constant_net(in_dim, [q2 if q2_target is None
                                                  else q2_target])))


def test_q_min():
    critics = constant_critics(2.0, 3.0, in_dim=4)
    assert_isclose(q_min(critics, np.zeros((5, 2)), np.zeros((5, 2))),
                   np.full(5, 2.0))
    same = constant_critics(1.5, 1.5, in_dim=4)
    assert_isclose(q_min(same, np.zeros(2), np.zeros(2)), 1.5)


def test_q_values_rejects_wrong_width():
    critics = constant_critics(0.0, 0.0, in_dim=4)
    with pytest.raises(ValueError):
        q_values(critics, np.zeros(2), np.zeros(3))


def test_q_min_action_grad():
    random_state = check_random_state(0)
    critics = TwinCritics(3, 2, 2, hidden_sizes=(6, ), random_state=0)
    state = random_state.normal(size=(1, 3))
    action = random_state.uniform(-1, 1, size=(1, 4))
    _, dq_da = q_min_action_grad(critics, state, action)

    def f(a):
        return float(q_min(critics, state, a[np.newaxis])[0])

    ok, rel = compare_gradients(dq_da[0], numerical_gradient(f, action[0]))
    assert ok, rel


def test_td_target_example():
    critics = constant_critics(0.0, 0.0, in_dim=4, q1_target=2.0,
                               q2_target=3.0)
    temp = Temperature.fixed(0.2)
    y = td_target(critics, temp, 1.0, np.zeros(2), np.zeros(2),
                  np.array([-1.0, -2.0]), 0.99, False)
    assert_isclose(y, 3.574)


def test_td_target_terminal_and_zero_alpha():
    critics = constant_critics(0.0, 0.0, in_dim=4, q1_target=2.0,
                               q2_target=3.0)
    r = np.array([1.0, -0.5])
    log_probs = np.array([[-1.0, -2.0], [0.5, 0.5]])
    y = td_target(critics, Temperature.fixed(0.2), r, np.zeros((2, 2)),
                  np.zeros((2, 2)), log_probs, 0.9, np.array([True, True]))
    assert_isclose(y, r)

    y = td_target(critics, Temperature.fixed(0.0), r, np.zeros((2, 2)),
                  np.zeros((2, 2)), log_probs, 0.9, np.array([False, False]))
    assert_isclose(y, r + 0.9 * 2.0)


def test_td_target_monotone():
    critics = constant_critics(0.0, 0.0, in_dim=4, q1_target=2.0,
                               q2_target=2.0)
    temp = Temperature.fixed(0.2)
    r = np.linspace(-1, 1, 5)
    y = td_target(critics, temp, r, np.zeros((5, 2)), np.zeros((5, 2)),
                  np.zeros((5, 2)), 0.99, np.zeros(5, dtype=bool))
    assert np.all(np.diff(y) > 0)
    higher = constant_critics(0.0, 0.0, in_dim=4, q1_target=3.0,
                              q2_target=3.0)
    assert np.all(
        td_target(higher, temp, r, np.zeros((5, 2)), np.zeros((5, 2)),
                  np.zeros((5, 2)), 0.99, np.zeros(5, dtype=bool)) > y)


def test_critic_loss_zero_at_target():
    critics = constant_critics(1.25, 1.25, in_dim=4)
    loss, (g1, g2), _ = critic_loss_and_grads(critics, np.zeros((3, 2)),
                                              np.zeros((3, 2)),
                                              np.full(3, 1.25))
    assert loss == 0
    assert np.all(g1.flat() == 0) and np.all(g2.flat() == 0)


def test_critic_loss_rejects_non_finite_targets():
    critics = constant_critics(0.0, 0.0, in_dim=4)
    with pytest.raises(FloatingPointError):
        critic_loss_and_grads(critics, np.zeros((2, 2)), np.zeros((2, 2)),
                              [1.0, np.nan])


def test_temperature_fixed_point():
    temp = Temperature(log_alpha=np.log(0.2), auto=True, target_entropy=-1.0)
    log_probs = np.array([[1.0, 1.0], [0.5, 1.5]])
    assert temperature_grad(temp, log_probs) == 0
    assert temperature_step(temp, log_probs, 0.1).log_alpha == temp.log_alpha


def test_temperature_decreases_with_high_entropy():
    temp = Temperature(log_alpha=np.log(0.2), auto=True, target_entropy=-1.0)
    # Entropy estimate 3 > -1.
    new = temperature_step(temp, np.full((4, 2), -3.0), 0.01)
    assert new.alpha < temp.alpha


def test_temperature_fixed_constant():
    temp = Temperature.fixed(0.2)
    for _ in range(10):
        temp = temperature_step(temp, np.full((4, 2), -3.0), 0.01)
    assert_isclose(temp.alpha, 0.2)


def test_coalition_sampler_small():
    _, observed, expected = coalition_frequencies(1, 100, 0)
    assert np.array_equal(observed, [100])

    _, observed, expected = coalition_frequencies(2, 20000, 0)
    assert_isclose(expected, [10000, 10000])
    assert np.all(np.abs(observed - 10000) < 500)


def test_coalition_sampler_distribution():
    _, observed, expected = coalition_frequencies(4, 100000, 0, i=2)
    assert sstats.chisquare(observed, expected).pvalue > 1e-3


def test_mask_joint_action():
    a = np.arange(1.0, 7.0)
    assert np.array_equal(
        mask_joint_action(a, Coalition.grand(3)).action, a)
    assert np.array_equal(
        mask_joint_action(a, Coalition.empty(3)).action, np.zeros(6))
    assert np.array_equal(
        mask_joint_action(a, Coalition.from_members([0, 2], 3)).action,
        [1, 2, 0, 0, 5, 6])
    with pytest.raises(ValueError):
        mask_joint_action(np.ones(5), Coalition.grand(3))


def linear_fixture():
    w = np.array([0.5, -1.0, 2.0, 0.25, -3.0])
    # State dimension 2, three agents with one-dimensional actions.
    critics = linear_critics(w, 2, 3, 1)
    state = np.array([[0.3, -0.2], [1.0, 0.4]])
    action = np.array([[0.1, -0.5, 0.9], [0.7, 0.2, -0.3]])
    return w, critics, state, action


def test_amc_marginal_linear():
    w, critics, state, action = linear_fixture()
    for i in range(3):
        for mask in range(8):
            C = Coalition(mask, 3)
            if i in C:
                continue
            assert_isclose(amc_marginal(critics, state, action, C, i),
                           0.5 * w[2 + i] * action[:, i])


def test_amc_marginal_rejects_member():
    _, critics, state, action = linear_fixture()
    with pytest.raises(ValueError):
        amc_marginal(critics, state, action, Coalition.from_members([1], 3),
                     1)


def test_amc_marginal_empty_coalition():
    critics = TwinCritics(2, 3, 1, hidden_sizes=(5, ), random_state=1)
    state = np.array([0.1, 0.2])
    action = np.array([0.4, -0.3, 0.8])
    expected = 0.5 * (q_min(critics, state, [0.0, -0.3, 0.0])
                      - q_min(critics, state, np.zeros(3)))
    assert_isclose(
        amc_marginal(critics, state, action, Coalition.empty(3), 1),
        expected)


@given(random_states())
@settings(deadline=None, max_examples=20, phases=noshrinking)
def test_shapley_q_linear_any_m(random_state):
    w, critics, state, action = linear_fixture()
    M = random_state.randint(1, 10)
    for i in range(3):
        assert_isclose(shapley_q(critics, state, action, i, M, random_state),
                       0.5 * w[2 + i] * action[:, i])


def test_shapley_q_ignored_agent():
    w = np.array([0.5, -1.0, 2.0, 0.0, -3.0])
    critics = linear_critics(w, 2, 3, 1)
    state = np.array([[0.3, -0.2]])
    action = np.array([[0.1, -0.5, 0.9]])
    for seed in range(5):
        assert_isclose(shapley_q(critics, state, action, 1, 3, seed), 0.0)
    assert_isclose(shapley_q_exhaustive(critics, state, action, 1), 0.0)


def test_shapley_q_rejects_bad_m():
    _, critics, state, action = linear_fixture()
    with pytest.raises(ValueError):
        shapley_q(critics, state, action, 0, 0, 0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exhaustive_efficiency(n):
    random_state = check_random_state(n)
    critics = TwinCritics(3, n, 2, hidden_sizes=(8, 8), random_state=n)
    state = random_state.normal(size=(4, 3))
    action = random_state.uniform(-1, 1, size=(4, 2 * n))
    total = sum(
        shapley_q_exhaustive(critics, state, action, i) for i in range(n))
    expected = 0.5 * (q_min(critics, state, action)
                      - q_min(critics, state, np.zeros_like(action)))
    assert_isclose(total, expected, rtol=0, atol=1e-9)


def test_sampled_converges_to_exhaustive():
    random_state = check_random_state(0)
    critics = TwinCritics(2, 3, 1, hidden_sizes=(8, ), random_state=0)
    state = random_state.normal(size=(2, 2))
    action = random_state.uniform(-1, 1, size=(2, 3))
    for i in range(3):
        sampled = shapley_q(critics, state, action, i, 5000, random_state)
        exact = shapley_q_exhaustive(critics, state, action, i)
        assert_isclose(sampled, exact, rtol=0, atol=0.02)
