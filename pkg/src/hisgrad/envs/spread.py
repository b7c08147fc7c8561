"""
A small cooperative navigation task: point agents in the arena ``[-1, 1]²``
have to cover all landmarks without bumping into each other.
"""
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import Env, EnvSpec

ARENA = 1.0
AGENT_RADIUS = 0.1
COLLISION_PENALTY = 1.0
MAX_SPEED = 0.1
MAX_AGENTS = 4


def team_reward(positions, landmarks, radius=AGENT_RADIUS,
                collision_penalty=COLLISION_PENALTY) -> float:
    """
    ``-Σ_l min_i ‖p_i - l‖`` minus ``collision_penalty`` for every pair of
    agents closer than ``2 · radius``.

    Parameters
    ----------
    positions : array of shape (n, 2)
    landmarks : array of shape (L, 2)
    """
    positions = np.asarray(positions, dtype=float)
    landmarks = np.asarray(landmarks, dtype=float)
    dist = np.linalg.norm(landmarks[:, np.newaxis] - positions[np.newaxis],
                          axis=-1)
    coverage = np.sum(np.min(dist, axis=1))
    pair = np.linalg.norm(positions[:, np.newaxis] - positions[np.newaxis],
                          axis=-1)
    n_collisions = np.sum(np.triu(pair < 2 * radius, k=1))
    return -float(coverage) - collision_penalty * float(n_collisions)


class SpreadMiniEnv(Env):
    def __init__(self,
                 n_agents: int = 3,
                 action_dim: int = 2,
                 episode_length: int = 25,
                 random_state=None,
                 n_landmarks: int = None):
        """
        Parameters
        ----------
        n_agents : int
            At most 4.
        action_dim : int
            Has to be 2 (velocities in the plane).
        episode_length : int
        random_state : int, NumPy (legacy) ``RandomState`` object
            Unused; positions are drawn in ``reset``.
        n_landmarks : int or None
            Defaults to ``n_agents``.
        """
        super().__init__()
        if not 1 <= n_agents <= MAX_AGENTS:
            raise ValueError(f"spread_mini supports 1 to {MAX_AGENTS} agents "
                             f"but {n_agents} were requested")
        if action_dim != 2:
            raise ValueError("spread_mini requires action_dim = 2")
        self.n_landmarks = n_agents if n_landmarks is None else n_landmarks
        if self.n_landmarks < 1:
            raise ValueError("Need at least one landmark")
        n, L = n_agents, self.n_landmarks
        self.spec = EnvSpec(
            n_agents=n,
            obs_dim=4 + 2 * L + 2 * (n - 1),
            state_dim=4 * n + 2 * L,
            action_dim=2,
            episode_length=episode_length,
            reward_low=-L * 2 * np.sqrt(2) * ARENA - COLLISION_PENALTY * n *
            (n - 1) / 2,
            reward_high=0.0)
        self.positions = None
        self.velocities = None
        self.landmarks = None

    def _observe(self):
        n = self.spec.n_agents
        obs = []
        for i in range(n):
            p = self.positions[i]
            others = np.delete(self.positions, i, axis=0) - p
            obs.append(
                np.concatenate([
                    p, self.velocities[i], (self.landmarks - p).reshape(-1),
                    others.reshape(-1)
                ]))
        state = np.concatenate([
            self.positions.reshape(-1),
            self.velocities.reshape(-1),
            self.landmarks.reshape(-1)
        ])
        return np.array(obs), state

    def _reset(self, random_state):
        random_state = check_random_state(random_state)
        n, L = self.spec.n_agents, self.n_landmarks
        self.positions = random_state.uniform(-ARENA, ARENA, size=(n, 2))
        self.velocities = np.zeros((n, 2))
        self.landmarks = random_state.uniform(-0.8 * ARENA,
                                              0.8 * ARENA,
                                              size=(L, 2))
        return self._observe()

    def _step(self, action):
        self.velocities = MAX_SPEED * action
        self.positions = np.clip(self.positions + self.velocities, -ARENA,
                                 ARENA)
        obs, state = self._observe()
        return obs, state, team_reward(self.positions, self.landmarks), False

    def constants(self):
        return {
            **super().constants(),
            "env": "spread_mini",
            "n_landmarks": self.n_landmarks,
            "arena": ARENA,
            "agent_radius": AGENT_RADIUS,
            "collision_penalty": COLLISION_PENALTY,
            "max_speed": MAX_SPEED,
        }
