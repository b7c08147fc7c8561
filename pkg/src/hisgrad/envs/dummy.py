from typing import *

import numpy as np  # type: ignore

from . import Env


class DummyAgentEnv(Env):
    """
    Wrap an environment so that one agent's actions are discarded (replaced
    by zero) before they reach the dynamics; that agent is thus a dummy
    player with zero marginal contribution to every coalition.
    """
    def __init__(self, base: Env, dummy: int):
        super().__init__()
        if not 0 <= dummy < base.spec.n_agents:
            raise ValueError(f"Dummy index {dummy} not in "
                             f"0..{base.spec.n_agents - 1}")
        self.base = base
        self.dummy = dummy
        self.spec = base.spec

    def reset(self, random_state):
        return self.base.reset(random_state)

    def step(self, action):
        action = np.array(self.check_action(action))
        action[self.dummy] = 0.0
        return self.base.step(action)

    def optimal_return(self, idle: Sequence[int] = ()):
        return self.base.optimal_return(idle=(*idle, self.dummy))

    def constants(self):
        return {
            **self.base.constants(),
            "dummy_agent": self.dummy,
            "optimal_return": self.optimal_return(),
        }
