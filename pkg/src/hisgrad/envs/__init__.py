"""
Desk-scale cooperative environments.

All environments share a single global team reward, continuous actions in
``[-1, 1]^D`` per agent and a fixed episode length. ``reset`` returns the
per-agent observations (shape ``(n, obs_dim)``) and the global state; ``step``
takes the joint action (shape ``(n, D)``) and additionally returns the team
reward and the terminal and truncation flags (Gymnasium convention).
"""
from dataclasses import asdict, dataclass
from typing import *

import numpy as np  # type: ignore


@dataclass(frozen=True)
class EnvSpec:
    """
    Static description of an environment.

    Parameters
    ----------
    n_agents : int
    obs_dim : int
        Per-agent observation dimensionality.
    state_dim : int
        Dimensionality of the global state.
    action_dim : int
        Per-agent action dimensionality ``D``.
    episode_length : int
        Number of steps ``T`` after which an episode is truncated.
    reward_low, reward_high : float
        Bounds of the per-step team reward.
    """
    n_agents: int
    obs_dim: int
    state_dim: int
    action_dim: int
    episode_length: int
    reward_low: float
    reward_high: float

    def __post_init__(self):
        for name in [
                "n_agents", "obs_dim", "state_dim", "action_dim",
                "episode_length"
        ]:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive but is "
                                 f"{getattr(self, name)}")
        if not self.reward_low <= self.reward_high:
            raise ValueError("Reward bounds are in the wrong order")


class Env:
    """
    Base class of the cooperative environments.

    Subclasses set ``self.spec`` and implement ``_reset``, ``_step`` and
    ``constants``; this class tracks the episode clock and validates actions.
    """
    spec: EnvSpec

    def __init__(self):
        self.t = None

    def reset(self, random_state) -> Tuple[np.ndarray, np.ndarray]:
        self.t = 0
        return self._reset(random_state)

    def step(self, action):
        """
        Parameters
        ----------
        action : array of shape (n, D)

        Returns
        -------
        obs, state, reward, terminal, truncated
        """
        if self.t is None:
            raise ValueError("Environment has to be reset before stepping")
        action = self.check_action(action)
        obs, state, reward, terminal = self._step(action)
        self.t += 1
        truncated = not terminal and self.t >= self.spec.episode_length
        if terminal or truncated:
            self.t = None
        return obs, state, float(reward), bool(terminal), bool(truncated)

    def check_action(self, action):
        action = np.asarray(action, dtype=float)
        shape = (self.spec.n_agents, self.spec.action_dim)
        if action.shape != shape:
            raise ValueError(f"Joint action has shape {action.shape} but "
                             f"environment expects {shape}")
        if not np.all(np.abs(action) <= 1):
            raise ValueError("Action components must lie in [-1, 1]")
        return action

    def optimal_return(self, idle: Sequence[int] = ()) -> Optional[float]:
        """
        Closed-form optimal episode return if known (``None`` otherwise).

        Parameters
        ----------
        idle : sequence of int
            Agents whose actions are fixed to zero.
        """
        return None

    def constants(self) -> Dict[str, Any]:
        return asdict(self.spec)

    def _reset(self, random_state):
        raise NotImplementedError()

    def _step(self, action):
        raise NotImplementedError()


from .dummy import DummyAgentEnv  # noqa: E402
from .quadratic import QuadCoupledEnv  # noqa: E402
from .spread import SpreadMiniEnv  # noqa: E402

environments = {
    "quad_coupled": QuadCoupledEnv,
    "spread_mini": SpreadMiniEnv,
}


def make_env(name: str,
             n_agents: int,
             action_dim: int,
             episode_length: int,
             random_state,
             dummy_agent: int = -1) -> Env:
    """
    Build an environment by its id.

    Parameters
    ----------
    name : str
        One of the keys of ``environments``.
    n_agents, action_dim, episode_length : int
    random_state : int, NumPy (legacy) ``RandomState`` object
        Used for the environment's fixed constants (e.g. coupling matrices).
    dummy_agent : int
        If non-negative, wrap the environment so that this agent's actions
        are discarded.
    """
    try:
        cls = environments[name]
    except KeyError:
        raise ValueError(f"Unknown environment {name!r}, expected one of "
                         f"{sorted(environments)}")
    env = cls(n_agents=n_agents,
              action_dim=action_dim,
              episode_length=episode_length,
              random_state=random_state)
    if dummy_agent >= 0:
        env = DummyAgentEnv(env, dummy_agent)
    return env
