"""
A repeated one-shot coordination task with a quadratic team reward.

Agent ``i`` controls ``a^i ∈ [-1, 1]^D``; the team is rewarded with ``c -
‖Σ_i W_i a^i - g‖²`` in every step. Whenever the cross blocks ``W_iᵀ W_j`` are
non-zero, each agent's best action depends on what the others do.
"""
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import Env, EnvSpec


class QuadCoupledEnv(Env):
    def __init__(self,
                 n_agents: int = 3,
                 action_dim: int = 2,
                 episode_length: int = 25,
                 random_state=None,
                 W=None,
                 g=None,
                 c: float = 1.0):
        """
        Parameters
        ----------
        n_agents, action_dim, episode_length : int
        random_state : int, NumPy (legacy) ``RandomState`` object
            Used to draw ``W`` and ``g`` if they are not given.
        W : array of shape (K, n·D) or None
            Coupling matrix; column block ``i`` is agent ``i``'s ``W_i``. If
            ``None``, entries are drawn from ``N(0, 1/n)`` with ``K = D``.
        g : array of shape (K,) or None
            Target. If ``None``, ``g = W a*`` for ``a*`` uniform in ``[-0.5,
            0.5]^{n·D}`` so that the optimum lies inside the action box.
        c : float
            Reward offset; the best possible per-step reward is ``c`` when the
            target is reachable.
        """
        super().__init__()
        random_state = check_random_state(random_state)
        n, D = n_agents, action_dim
        if W is None:
            W = random_state.normal(scale=1 / np.sqrt(n), size=(D, n * D))
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if W.shape[1] != n * D:
            raise ValueError(f"W has {W.shape[1]} columns but {n} agents with "
                             f"{D} action dimensions each need {n * D}")
        if g is None:
            g = W @ random_state.uniform(-0.5, 0.5, size=n * D)
        g = np.atleast_1d(np.asarray(g, dtype=float))
        if g.shape != (W.shape[0], ):
            raise ValueError(f"g has shape {g.shape} but W has {W.shape[0]} "
                             "rows")
        for i in range(n):
            if np.linalg.matrix_rank(self._block(W, i, D)) < min(
                    W.shape[0], D):
                raise ValueError(f"Block W_{i} is rank deficient")

        self.W = W
        self.g = g
        self.c = float(c)

        # ‖W a - g‖ ≤ ‖W‖₂ √(nD) + ‖g‖ on the action box.
        worst = np.linalg.norm(W, 2) * np.sqrt(n * D) + np.linalg.norm(g)
        self.spec = EnvSpec(n_agents=n,
                            obs_dim=len(g),
                            state_dim=len(g),
                            action_dim=D,
                            episode_length=episode_length,
                            reward_low=self.c - worst**2,
                            reward_high=self.c)

    @staticmethod
    def _block(W, i, D):
        return W[:, i * D:(i + 1) * D]

    def reward(self, action) -> float:
        residual = self.W @ np.reshape(action, -1) - self.g
        return self.c - float(residual @ residual)

    def _context(self):
        n = self.spec.n_agents
        return np.tile(self.g, (n, 1)), self.g.copy()

    def _reset(self, random_state):
        return self._context()

    def _step(self, action):
        obs, state = self._context()
        return obs, state, self.reward(action), False

    def optimal_action(self, idle: Sequence[int] = ()):
        """
        Minimum-norm least-squares joint action (shape ``(n, D)``) with the
        agents in ``idle`` fixed to zero. The box constraint is ignored so
        that the resulting return is an upper bound.
        """
        n, D = self.spec.n_agents, self.spec.action_dim
        active = np.repeat([i not in idle for i in range(n)], D)
        a = np.zeros(n * D)
        if np.any(active):
            a[active] = np.linalg.lstsq(self.W[:, active], self.g,
                                        rcond=None)[0]
        return a.reshape(n, D)

    def optimal_return(self, idle: Sequence[int] = ()) -> float:
        return self.spec.episode_length * self.reward(
            self.optimal_action(idle))

    def best_response(self, i: int, action):
        """
        Agent ``i``'s least-squares best action given the others' actions in
        the joint action ``action`` (shape ``(n, D)``).
        """
        action = np.asarray(action, dtype=float)
        D = self.spec.action_dim
        W_i = self._block(self.W, i, D)
        others = self.W @ action.reshape(-1) - W_i @ action[i]
        return np.linalg.lstsq(W_i, self.g - others, rcond=None)[0]

    def coupling(self) -> float:
        """
        Largest absolute entry of the off-diagonal blocks of ``WᵀW``.
        """
        n, D = self.spec.n_agents, self.spec.action_dim
        G = self.W.T @ self.W
        mask = np.kron(1 - np.eye(n), np.ones((D, D))).astype(bool)
        return float(np.max(np.abs(G[mask]))) if n > 1 else 0.0

    def constants(self):
        return {
            **super().constants(),
            "env": "quad_coupled",
            "c": self.c,
            "W": self.W.tolist(),
            "g": self.g.tolist(),
            "optimal_return": self.optimal_return(),
        }
