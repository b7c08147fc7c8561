"""
The run configuration and its flat TOML file format.
"""
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import *

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib  # type: ignore

ABLATIONS = ("full", "share", "local", "no_bc", "current_action")


class ConfigError(ValueError):
    """
    Invalid configuration; ``line`` is the offending line of the
    configuration file (if known).
    """
    def __init__(self, message, line: Optional[int] = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


@dataclass
class RunConfig:
    """
    Every hyperparameter of a training run.

    Parameters
    ----------
    env : str
        Environment id (``quad_coupled`` or ``spread_mini``).
    n_agents : int
    action_dim : int
        Per-agent action dimensionality ``D``.
    dummy_agent : int
        If non-negative, this agent's actions are discarded by the
        environment.
    episodes : int
        Number of episodes ``K``; the run lasts ``episodes * episode_length``
        environment steps.
    episode_length : int
        Steps per episode ``T``.
    sample_times : int
        Number ``M`` of coalitions sampled per agent and update for the
        Shapley Q-value.
    beta : float
        Log adjustment factor ``β`` of the likelihood floor.
    batch_size : int
        Minibatch size ``B``.
    gamma : float
        Discount factor.
    mini_epochs : int
        Ascent steps ``e`` per agent and update.
    polyak : float
        Weight of the main critics in the target update.
    literal_polyak : bool
        Use ``1 - polyak`` as the weight of the main critics instead.
    n_step : int
        Length of the multi-step critic targets.
    lr_actor, lr_critic, lr_alpha : float
        Adam learning rates.
    linear_lr_decay : bool
        Decay the actor and critic learning rates linearly to zero over the
        run.
    max_grad_norm : float
        Clip gradients to this global norm (``0`` disables clipping).
    auto_alpha : bool
        Adapt the temperature towards ``target_entropy``.
    fixed_alpha : float
        Temperature if ``auto_alpha`` is false, initial temperature
        otherwise.
    target_entropy : float or None
        Desired minimum per-agent entropy; ``None`` means ``-action_dim``.
    warmup_steps : int
        Number of initial steps with uniformly random actions; no updates
        happen before this many transitions are stored.
    train_interval : int
        Environment steps per training iteration.
    updates_per_train : int
        Gradient updates per training iteration.
    exploration_noise : float
        Standard deviation of Gaussian noise added to policy actions during
        collection.
    buffer_size : int
        Replay buffer capacity.
    hidden_sizes : list of int
        Hidden layer widths of all networks.
    lambda_min, lambda_max, lambda_step : float
        Box-Cox power grid.
    ablation : str
        One of ``full``, ``share``, ``local``, ``no_bc``, ``current_action``.
    seed : int
    return_window : int
        Number of most recent episodes that the return statistics are
        computed over.
    threshold_fraction : float
        Fraction of the optimal return that counts as solved.
    checkpoint_interval : int
        Save a checkpoint every this many iterations (``0``: only at the
        end).
    verbose : bool
        Print one line per training iteration.
    """
    env: str = "quad_coupled"
    n_agents: int = 3
    action_dim: int = 2
    dummy_agent: int = -1
    episodes: int = 400
    episode_length: int = 25
    sample_times: int = 2
    beta: float = 10.0
    batch_size: int = 256
    gamma: float = 0.99
    mini_epochs: int = 1
    polyak: float = 0.005
    literal_polyak: bool = False
    n_step: int = 1
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 3e-4
    linear_lr_decay: bool = False
    max_grad_norm: float = 0.0
    auto_alpha: bool = True
    fixed_alpha: float = 0.2
    target_entropy: Optional[float] = None
    warmup_steps: int = 1000
    train_interval: int = 50
    updates_per_train: int = 50
    exploration_noise: float = 0.0
    buffer_size: int = 100000
    hidden_sizes: List[int] = field(default_factory=lambda: [64, 64])
    lambda_min: float = -2.0
    lambda_max: float = 2.0
    lambda_step: float = 0.05
    ablation: str = "full"
    seed: int = 0
    return_window: int = 10
    threshold_fraction: float = 0.9
    checkpoint_interval: int = 0
    verbose: bool = False

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _coerce(f.name, getattr(self, f.name)))

        positive = [
            "n_agents", "action_dim", "episodes", "episode_length",
            "sample_times", "batch_size", "mini_epochs", "n_step",
            "train_interval", "buffer_size", "return_window", "lambda_step",
            "beta"
        ]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive but is "
                                 f"{getattr(self, name)}")
        non_negative = [
            "warmup_steps", "updates_per_train", "exploration_noise",
            "max_grad_norm", "fixed_alpha", "lr_actor", "lr_critic",
            "lr_alpha", "checkpoint_interval"
        ]
        for name in non_negative:
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative but is "
                                 f"{getattr(self, name)}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1] but is {self.gamma}")
        if not 0 <= self.polyak <= 1:
            raise ValueError(
                f"polyak must lie in [0, 1] but is {self.polyak}")
        if not 0 < self.threshold_fraction <= 1:
            raise ValueError("threshold_fraction must lie in (0, 1] but is "
                             f"{self.threshold_fraction}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"Unknown ablation mode {self.ablation!r}, "
                             f"expected one of {list(ABLATIONS)}")
        # The buffer holds at most buffer_size transitions.
        if self.warmup_steps > self.buffer_size:
            raise ValueError(f"warmup_steps must not exceed buffer_size "
                             f"({self.warmup_steps} > {self.buffer_size})")
        if not self.lambda_min < self.lambda_max:
            raise ValueError("lambda_min must be smaller than lambda_max")
        if self.dummy_agent >= self.n_agents:
            raise ValueError(f"dummy_agent {self.dummy_agent} is not one of "
                             f"the {self.n_agents} agents")
        if len(self.hidden_sizes) == 0 or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty list of "
                             "positive widths")
        if self.auto_alpha and self.fixed_alpha <= 0:
            raise ValueError("auto_alpha requires a positive initial "
                             "temperature (fixed_alpha)")

    @property
    def total_steps(self) -> int:
        return self.episodes * self.episode_length

    @property
    def entropy_target(self) -> float:
        if self.target_entropy is None:
            return -float(self.action_dim)
        return self.target_entropy

    def grid(self) -> Dict[str, float]:
        return dict(lambda_min=self.lambda_min,
                    lambda_max=self.lambda_max,
                    lambda_step=self.lambda_step)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_TYPES = {
    "target_entropy": float,
    "hidden_sizes": list,
}


def _field_type(name):
    if name in _TYPES:
        return _TYPES[name]
    default = next(f for f in fields(RunConfig) if f.name == name).default
    return type(default)


def _coerce(name, value):
    """
    Check the type of a configuration value; integers are accepted where
    floats are expected.
    """
    if name == "target_entropy" and value is None:
        return None
    kind = _field_type(name)
    if kind is float and isinstance(value, int) and not isinstance(
            value, bool):
        return float(value)
    if kind is list:
        if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, int) and not isinstance(v, bool)
                for v in value):
            raise ValueError(f"{name} must be a list of integers but is "
                             f"{value!r}")
        return list(value)
    if kind is int and isinstance(value, bool):
        raise ValueError(f"{name} must be an integer but is {value!r}")
    if not isinstance(value, kind):
        raise ValueError(f"{name} must be of type {kind.__name__} but is "
                         f"{value!r}")
    return value


def _key_line(text: str, key: str) -> Optional[int]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line):
            return lineno
    return None


def parse_config(text: str, path=None, **overrides) -> RunConfig:
    """
    Parse flat TOML configuration text; ``overrides`` take precedence over
    the text's values.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys and invalid values (with the offending
        line where possible).
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ConfigError(str(e),
                          line=int(match.group(1)) if match else None,
                          path=path)

    known = {f.name for f in fields(RunConfig)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}",
                              line=_key_line(text, key),
                              path=path)
        try:
            _coerce(key, value)
        except ValueError as e:
            raise ConfigError(str(e), line=_key_line(text, key), path=path)

    data = {**data, **overrides}
    try:
        return RunConfig(**data)
    except ValueError as e:
        # Report the line of the first mentioned key that occurs in the text.
        line = None
        for key in [f.name for f in fields(RunConfig)]:
            if key in str(e) and key in data and key not in overrides:
                line = _key_line(text, key)
                break
        raise ConfigError(str(e), line=line, path=path)


def load_config(path=None, **overrides) -> RunConfig:
    """
    Read a configuration file (``None``: defaults only).
    """
    if path is None:
        text = ""
    else:
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read configuration: {e}", path=path)
    return parse_config(text, path=path, **overrides)


def parse_override(assignment: str) -> Tuple[str, Any]:
    """
    Parse a ``key=value`` override; the value is read as a TOML value and
    falls back to a plain string.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form "
                          "key=value")
    key, value = assignment.split("=", 1)
    key = key.strip()
    if key not in {f.name for f in fields(RunConfig)}:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return key, tomllib.loads(f"value = {value.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        return key, value.strip()


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """
    A copy of ``config`` with the given fields replaced (and validated).
    """
    try:
        return replace(config, **overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    return repr(value)


def dumps_config(config: RunConfig) -> str:
    """
    Render the configuration as flat TOML (``parse_config`` inverts this).
    """
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            lines.append(f"# {key} is unset")
        else:
            lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"
