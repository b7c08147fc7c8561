import numpy as np  # type: ignore
from hisgrad import HIS
from hisgrad.config import RunConfig
from hisgrad.envs.quadratic import QuadCoupledEnv

# Three agents with two-dimensional actions whose rewards are coupled through
# a random linear map.
env = QuadCoupledEnv(n_agents=3, action_dim=2, episode_length=25,
                     random_state=0)

# Everything not given here keeps its default.
config = RunConfig(n_agents=3, action_dim=2, episodes=200, seed=0)

# Train (this writes nothing to disk since no output directory is given).
his = HIS(config=config, env=env).fit()

# Per-iteration statistics are kept in memory.
print("Final mean return:", his.metrics_[-1]["ret_mean"])
print("Optimal return:", env.optimal_return())

# Deterministic actions for the first observation of a fresh episode.
obs, _ = env.reset(1)
print("Actions:", his.predict(obs))
print("Best joint action:", env.optimal_action())
