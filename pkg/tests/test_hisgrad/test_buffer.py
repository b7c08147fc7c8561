import numpy as np  # type: ignore
import pytest  # type: ignore
from hisgrad.buffer import ReplayBuffer, Transition
from hisgrad.policy import GaussianPolicy
from hisgrad.trainer import n_step_target, sample_next_actions
from hisgrad.valuation import Temperature, TwinCritics, td_target

from . import assert_isclose, constant_net


def transition(k, terminal=False, truncated=False, n=2, D=1):
    return Transition(obs=np.full((n, 3), k),
                      state=np.full(2, k),
                      action=np.full((n, D), 0.1),
                      reward=float(k),
                      next_obs=np.full((n, 3), k + 1),
                      next_state=np.full(2, k + 1),
                      terminal=terminal,
                      truncated=truncated)


def filled(rewards, capacity=10):
    buffer = ReplayBuffer(capacity, 2, 3, 2, 1)
    for r in rewards:
        buffer.push(transition(r))
    return buffer


@pytest.mark.parametrize("action", [1.0, -1.0, 1.5])
def test_transition_rejects_actions_outside_open_box(action):
    with pytest.raises(ValueError):
        Transition(obs=np.zeros((2, 3)),
                   state=np.zeros(2),
                   action=np.array([[0.0], [action]]),
                   reward=0.0,
                   next_obs=np.zeros((2, 3)),
                   next_state=np.zeros(2))


def test_transition_rejects_non_finite():
    with pytest.raises(ValueError):
        Transition(obs=np.zeros((2, 3)),
                   state=np.zeros(2),
                   action=np.zeros((2, 1)),
                   reward=np.nan,
                   next_obs=np.zeros((2, 3)),
                   next_state=np.zeros(2))


def test_fifo_eviction():
    buffer = filled(range(5), capacity=3)
    assert len(buffer) == 3
    assert buffer.n_pushed == 5
    assert [buffer.transition(k).reward for k in range(3)] == [2, 3, 4]
    with pytest.raises(IndexError):
        buffer.transition(3)


def test_warmup_refuses_sampling():
    buffer = ReplayBuffer(10, 2, 3, 2, 1, warmup=4)
    for k in range(3):
        buffer.push(transition(k))
    with pytest.raises(ValueError):
        buffer.sample(2, 0)
    buffer.push(transition(3))
    assert len(buffer.sample(2, 0)) == 2


def test_one_step_sample():
    buffer = filled(range(5))
    batch = buffer.sample(16, 0, n_step=1, gamma=0.9)
    assert_isclose(batch.discount, 0.9)
    assert np.array_equal(batch.steps, np.ones(16))
    # Rewards equal the stored state values.
    assert_isclose(batch.reward, batch.state[:, 0])
    assert_isclose(batch.next_state[:, 0], batch.state[:, 0] + 1)
    assert batch.joint_action.shape == (16, 2)


def test_n_step_segments():
    gamma = 0.9
    buffer = filled([1.0, 2.0, 3.0], capacity=3)
    batch = buffer.sample(64, 0, n_step=3, gamma=gamma)
    full = batch.steps == 3
    assert np.any(full)
    assert_isclose(batch.reward[full], 1 + gamma * 2 + gamma**2 * 3)
    assert_isclose(batch.discount[full], gamma**3)
    assert_isclose(batch.next_state[full, 0], 4.0)
    # Segments stop at the newest transition.
    assert np.all(batch.steps == 4 - batch.state[:, 0])


def test_n_step_stops_at_episode_end():
    gamma = 0.5
    buffer = ReplayBuffer(10, 2, 3, 2, 1)
    buffer.push(transition(1.0))
    buffer.push(transition(2.0, terminal=True))
    buffer.push(transition(3.0))
    buffer.push(transition(4.0, truncated=True))
    buffer.push(transition(5.0))
    batch = buffer.sample(128, 0, n_step=3, gamma=gamma)

    first = batch.state[:, 0] == 1
    assert np.all(batch.steps[first] == 2)
    assert_isclose(batch.reward[first], 1 + gamma * 2)
    assert np.all(batch.terminal[first])

    third = batch.state[:, 0] == 3
    assert np.all(batch.steps[third] == 2)
    # Truncation ends the segment but does not make it terminal.
    assert not np.any(batch.terminal[third])


def test_n_step_target_matches_hand_computation():
    gamma = 0.9
    buffer = filled([1.0, 2.0, 3.0], capacity=3)
    batch = buffer.sample(64, 0, n_step=3, gamma=gamma)
    in_dim = 2 + 2
    critics = TwinCritics(2,
                          2,
                          1,
                          nets=dict(q1=constant_net(in_dim, [0.0]),
                                    q2=constant_net(in_dim, [0.0]),
                                    q1_target=constant_net(in_dim, [2.0]),
                                    q2_target=constant_net(in_dim, [5.0])))
    policies = [GaussianPolicy(3, 1, (4, ), random_state=k) for k in range(2)]
    y = n_step_target(batch, critics, Temperature.fixed(0.0), policies, 0)
    full = batch.steps == 3
    assert_isclose(y[full], 1 + gamma * 2 + gamma**2 * 3 + gamma**3 * 2)


def test_n_step_target_one_step_equals_td_target():
    buffer = filled(range(5))
    batch = buffer.sample(16, 0, n_step=1, gamma=0.95)
    critics = TwinCritics(2, 2, 1, hidden_sizes=(4, ), random_state=0)
    policies = [GaussianPolicy(3, 1, (4, ), random_state=k) for k in range(2)]
    temp = Temperature.fixed(0.3)

    y = n_step_target(batch, critics, temp, policies, 7)

    # Replay the policy samples with the same random stream.
    next_action, next_log_probs = sample_next_actions(policies,
                                                      batch.next_obs, 7)
    expected = td_target(critics, temp, batch.reward, batch.next_state,
                         next_action, next_log_probs, 0.95, batch.terminal)
    assert_isclose(y, expected)
