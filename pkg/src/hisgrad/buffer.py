"""
Transitions and the FIFO replay buffer they are stored in.
"""
from dataclasses import dataclass
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore


@dataclass
class Transition:
    """
    One interaction of all agents with the environment.

    Parameters
    ----------
    obs : array of shape (n, obs_dim)
        Per-agent observations ``o_t^i``.
    state : array of shape (S,)
        Global state ``s_t``.
    action : array of shape (n, D)
        Joint action, components in ``(-1, 1)``.
    reward : float
        Global team reward ``r_t``.
    next_obs : array of shape (n, obs_dim)
    next_state : array of shape (S,)
    terminal : bool
        Whether ``s_{t+1}`` is terminal (no bootstrapping).
    truncated : bool
        Whether the episode ended at ``t + 1`` because of its time limit
        (bootstrapping still applies).
    """
    obs: np.ndarray
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    next_state: np.ndarray
    terminal: bool = False
    truncated: bool = False

    def __post_init__(self):
        for name in ["obs", "state", "action", "next_obs", "next_state"]:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.all(np.abs(self.action) < 1):
            raise ValueError("Action components must lie in (-1, 1)")
        if not all(
                np.all(np.isfinite(a)) for a in [
                    self.obs, self.state, self.action, self.reward,
                    self.next_obs, self.next_state
                ]):
            raise ValueError("Transition contains non-finite values")


@dataclass
class Batch:
    """
    A minibatch of ``N`` transitions, each extended to an ``m``-step segment
    (``1 <= m <= n_step``) for computing multi-step targets.

    ``reward`` is the discounted reward sum over the segment, ``discount``
    is ``γ^m`` and ``next_obs``/``next_state``/``terminal`` describe where the
    segment ends.
    """
    obs: np.ndarray
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    discount: np.ndarray
    next_obs: np.ndarray
    next_state: np.ndarray
    terminal: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return len(self.reward)

    @property
    def joint_action(self):
        """
        Actions flattened to shape (N, n·D).
        """
        return self.action.reshape(len(self), -1)


class ReplayBuffer:
    """
    Ring buffer of transitions with uniform sampling.
    """
    def __init__(self,
                 capacity: int,
                 n_agents: int,
                 obs_dim: int,
                 state_dim: int,
                 action_dim: int,
                 warmup: int = 1):
        """
        Parameters
        ----------
        capacity : int
            Maximum number of stored transitions; the oldest are evicted
            first.
        n_agents, obs_dim, state_dim, action_dim : int
            Shapes of the stored transitions.
        warmup : int
            Sampling is refused while fewer transitions are stored.
        """
        if capacity < 1:
            raise ValueError(f"capacity must be positive but is {capacity}")
        self.capacity = capacity
        self.warmup = max(1, warmup)
        self.obs = np.zeros((capacity, n_agents, obs_dim))
        self.state = np.zeros((capacity, state_dim))
        self.action = np.zeros((capacity, n_agents, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, n_agents, obs_dim))
        self.next_state = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.truncated = np.zeros(capacity, dtype=bool)
        self.ptr = 0
        self.size = 0
        self.n_pushed = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        i = self.ptr
        self.obs[i] = t.obs
        self.state[i] = t.state
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.next_state[i] = t.next_state
        self.terminal[i] = t.terminal
        self.truncated[i] = t.truncated
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.n_pushed += 1

    def oldest(self) -> int:
        return self.ptr if self.size == self.capacity else 0

    def transition(self, k: int) -> Transition:
        """
        The ``k``-th oldest stored transition.
        """
        if not 0 <= k < self.size:
            raise IndexError(f"Buffer holds {self.size} transitions")
        i = (self.oldest() + k) % self.capacity
        return Transition(obs=self.obs[i],
                          state=self.state[i],
                          action=self.action[i],
                          reward=self.reward[i],
                          next_obs=self.next_obs[i],
                          next_state=self.next_state[i],
                          terminal=bool(self.terminal[i]),
                          truncated=bool(self.truncated[i]))

    def sample(self,
               batch_size: int,
               random_state,
               n_step: int = 1,
               gamma: float = 0.99) -> Batch:
        """
        Draw ``batch_size`` transitions uniformly (with replacement) and
        extend each to a segment of at most ``n_step`` transitions that stops
        at the episode's end and at the newest stored transition.
        """
        if self.size < self.warmup:
            raise ValueError(f"Buffer holds {self.size} transitions but "
                             f"sampling requires {self.warmup}")
        if n_step < 1:
            raise ValueError(f"n_step must be positive but is {n_step}")
        random_state = check_random_state(random_state)
        ages = random_state.randint(0, self.size, size=batch_size)
        start = (self.oldest() + ages) % self.capacity

        reward = np.zeros(batch_size)
        discount = np.ones(batch_size)
        last = start.copy()
        steps = np.zeros(batch_size, dtype=int)
        active = np.ones(batch_size, dtype=bool)
        for k in range(n_step):
            active &= ages + k < self.size
            if not np.any(active):
                break
            idx = (start + k) % self.capacity
            reward = np.where(active, reward + discount * self.reward[idx],
                              reward)
            discount = np.where(active, discount * gamma, discount)
            last = np.where(active, idx, last)
            steps += active
            active &= ~(self.terminal[idx] | self.truncated[idx])

        return Batch(obs=self.obs[start],
                     state=self.state[start],
                     action=self.action[start],
                     reward=reward,
                     discount=discount,
                     next_obs=self.next_obs[last],
                     next_state=self.next_state[last],
                     terminal=self.terminal[last],
                     steps=steps)
