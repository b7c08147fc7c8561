import os

import hypothesis.strategies as st  # type: ignore
import numpy as np  # type: ignore
import pytest  # type: ignore
from hisgrad import nn
from hisgrad.config import RunConfig
from hisgrad.coopgame import generate_convex_game, random_game
from hisgrad.valuation import TwinCritics
from hypothesis import Phase  # type: ignore
from sklearn.utils import check_random_state  # type: ignore


@st.composite
def seeds(draw):
    # Highest possible seed is `2**32 - 1` for NumPy legacy generators.
    return draw(st.integers(min_value=0, max_value=2**32 - 1))


@st.composite
def random_states(draw):
    seed = draw(seeds())
    return check_random_state(seed)


@st.composite
def convex_games(draw, n_min=2, n_max=6):
    n = draw(st.integers(min_value=n_min, max_value=n_max))
    return generate_convex_game(draw(seeds()), n)


@st.composite
def games(draw, n_min=1, n_max=6):
    """
    Games with i.i.d. uniform coalition values (usually neither convex nor
    superadditive).
    """
    n = draw(st.integers(min_value=n_min, max_value=n_max))
    return random_game(draw(seeds()), n)


def tiny_config(**kwargs) -> RunConfig:
    """
    A configuration that trains for a few dozen steps on two agents with
    one-dimensional actions.
    """
    defaults = dict(n_agents=2,
                    action_dim=1,
                    episodes=4,
                    episode_length=5,
                    warmup_steps=10,
                    train_interval=5,
                    updates_per_train=2,
                    batch_size=8,
                    buffer_size=100,
                    hidden_sizes=[8])
    return RunConfig(**{**defaults, **kwargs})


def linear_critics(w, state_dim, n_agents, action_dim, bias=0.0):
    """
    Twin critics (mains and targets) that all compute ``Q(s, a) = w · (s ⊕ a)
    + bias``.
    """
    w = np.asarray(w, dtype=float)
    net = nn.ParamSet([w[np.newaxis]], [np.array([bias])])
    return TwinCritics(state_dim,
                       n_agents,
                       action_dim,
                       nets=dict(q1=net,
                                 q2=net.copy(),
                                 q1_target=net.copy(),
                                 q2_target=net.copy()))


def constant_net(in_dim, values):
    """
    A single-layer network that ignores its input and returns ``values``.
    """
    values = np.asarray(values, dtype=float)
    return nn.ParamSet([np.zeros((len(values), in_dim))], [values])


def assert_isclose(a, b, label="", rtol=1e-5, atol=1e-8):
    s = (f"{label} {a} not close enough to {b} "
         f"(after subtracting atol={atol}, "
         f"distance is still {np.abs(a-b) - atol} "
         f"which corresponds to {(np.abs(a-b) - atol) / np.abs(b)} "
         f" >= {rtol}=rtol)")
    assert np.all(np.isclose(a, b, rtol=rtol, atol=atol)), s


slow = pytest.mark.skipif(
    os.environ.get("HISGRAD_SLOW") != "1",
    reason="long training run; set HISGRAD_SLOW=1 to enable")
"""
The default phases but without shrinking.
"""
noshrinking = ((Phase.explicit, Phase.reuse, Phase.generate, Phase.target))
