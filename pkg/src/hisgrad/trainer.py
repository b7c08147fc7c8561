"""
The HIS training loop.

Each training iteration collects a few environment steps and then performs a
number of updates, each of which consists of

1. a soft TD update of both central critics,
2. sequential updates of all agents' policies in a random order, where agent
   ``i`` ascends

   ``Q(s, a^{pred}_{new}, a^i_θ, a^{succ}_{stored}) - α log π^i_θ(a^i_θ)
   + BC(floor(log π^i_θ(a^i_t))) · ShapleyQ_i(s, a_t)``

   (the last term built from the stored, historical action ``a^i_t`` and a
   constant Monte Carlo Shapley Q-value),
3. a temperature update and
4. a Polyak update of the target critics.

The ablation modes drop or replace terms of the policy objective (see
``ablation_objective``).
"""
import json
import os
import time
from dataclasses import dataclass, field
from typing import *

import mlflow  # type: ignore
import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import nn
from .boxcox import (BoxCoxFit, bc_training_transform, bc_transform_grad,
                     estimate_lambda)
from .buffer import Batch, ReplayBuffer, Transition
from .config import ABLATIONS, RunConfig
from .envs import Env, make_env
from .policy import (SQUASH_EPS, GaussianPolicy, apply_likelihood_floor,
                     historical_log_prob_eval, historical_log_prob_grads,
                     likelihood_floor_grad, likelihood_threshold,
                     reparam_log_prob_grads, sample_reparam)
from .utils import known_issue, randseed
from .valuation import (Temperature, TwinCritics, critic_loss_and_grads,
                        q_min_action_grad, shapley_q, td_target,
                        temperature_step)

# Modes whose Shapley term is built from stored (historical) actions.
HISTORICAL_MODES = ("full", "local", "no_bc")


@dataclass
class Rollout:
    """
    Where data collection currently stands.

    Parameters
    ----------
    obs : array of shape (n, obs_dim)
    state : array of shape (S,)
    steps : int
        Total number of environment steps taken so far.
    episode_return : float
        Return of the running episode so far.
    returns : list of float
        Returns of all finished episodes.
    return_steps : list of int
        Step counts at which these episodes finished.
    """
    obs: np.ndarray
    state: np.ndarray
    steps: int = 0
    episode_return: float = 0.0
    returns: List[float] = field(default_factory=list)
    return_steps: List[int] = field(default_factory=list)


def collect(env: Env,
            policies: Sequence[GaussianPolicy],
            buffer: ReplayBuffer,
            steps: int,
            random_state,
            rollout: Optional[Rollout] = None,
            warmup_steps: int = 0,
            exploration_noise: float = 0.0) -> Rollout:
    """
    Interact with the environment for ``steps`` steps and push every
    transition into ``buffer``.

    During the first ``warmup_steps`` steps (counted over the whole run),
    actions are drawn uniformly from ``(-1, 1)^D`` instead of from the
    policies.

    Parameters
    ----------
    env : Env
    policies : sequence of GaussianPolicy
        One per agent.
    buffer : ReplayBuffer
    steps : int
    random_state : int, NumPy (legacy) ``RandomState`` object
    rollout : Rollout or None
        Continue from here; if ``None``, the environment is reset first.
    warmup_steps : int
    exploration_noise : float
        Standard deviation of Gaussian noise added to policy actions.

    Returns
    -------
    Rollout
        ``rollout`` (updated in place) or a new one.
    """
    random_state = check_random_state(random_state)
    if rollout is None:
        rollout = Rollout(*env.reset(random_state))
    n, D = env.spec.n_agents, env.spec.action_dim
    bound = 1 - SQUASH_EPS

    for _ in range(steps):
        if rollout.steps < warmup_steps:
            action = random_state.uniform(-1, 1, size=(n, D))
        else:
            action = np.array([
                sample_reparam(p, rollout.obs[i], random_state).action
                for i, p in enumerate(policies)
            ])
            if exploration_noise > 0:
                action = action + exploration_noise * random_state.normal(
                    size=action.shape)
        action = np.clip(action, -bound, bound)

        obs, state, reward, terminal, truncated = env.step(action)
        buffer.push(
            Transition(obs=rollout.obs,
                       state=rollout.state,
                       action=action,
                       reward=reward,
                       next_obs=obs,
                       next_state=state,
                       terminal=terminal,
                       truncated=truncated))
        rollout.steps += 1
        rollout.episode_return += reward
        if terminal or truncated:
            rollout.returns.append(rollout.episode_return)
            rollout.return_steps.append(rollout.steps)
            rollout.episode_return = 0.0
            obs, state = env.reset(random_state)
        rollout.obs, rollout.state = obs, state

    return rollout


def sample_next_actions(policies: Sequence[GaussianPolicy], next_obs,
                        random_state):
    """
    Sample every agent's action at the segment ends.

    Returns
    -------
    joint_action, log_probs : arrays of shape (N, n·D), (N, n)
    """
    random_state = check_random_state(random_state)
    samples = [
        sample_reparam(p, next_obs[:, i], random_state)
        for i, p in enumerate(policies)
    ]
    joint_action = np.concatenate([s.action for s in samples], axis=-1)
    return joint_action, np.stack([s.log_prob for s in samples], axis=-1)


def n_step_target(batch: Batch, critics: TwinCritics, temp: Temperature,
                  policies: Sequence[GaussianPolicy], random_state):
    """
    Multi-step soft TD targets ``Σ_{k<m} γ^k r_{t+k} + γ^m (min_k
    Q_targ,k(s_{t+m}, a') - α Σ_i log π^i(a'^i))`` for a batch of segments as
    sampled by ``ReplayBuffer.sample`` (which already provides the
    discounted reward sums and ``γ^m``); segments ending in a terminal state
    are not bootstrapped. The entropy correction is only applied at the
    bootstrap step.
    """
    next_action, next_log_probs = sample_next_actions(policies,
                                                      batch.next_obs,
                                                      random_state)
    return td_target(critics,
                     temp,
                     batch.reward,
                     batch.next_state,
                     next_action,
                     next_log_probs,
                     gamma=batch.discount,
                     terminal=batch.terminal)


def ablation_objective(mode: str, q_term: float, entropy_term: float,
                       shapley_term: float) -> float:
    """
    Combine the terms of an agent's policy objective (to be maximised).

    Parameters
    ----------
    mode : str
        ``full`` and ``no_bc`` and ``current_action`` use all three terms
        (the latter two differ in how the Shapley term is built), ``share``
        drops the Shapley term and ``local`` drops the critic term so that
        the Shapley Q-value drives the policy directly.
    q_term : float
        Batch mean of ``min_k Q_k`` at the freshly sampled action.
    entropy_term : float
        Batch mean of ``-α log π``.
    shapley_term : float
        Batch mean of the transformed log-likelihoods weighted by the Shapley
        Q-values.
    """
    if mode not in ABLATIONS:
        raise ValueError(f"Unknown ablation mode {mode!r}, expected one of "
                         f"{list(ABLATIONS)}")
    if mode == "share":
        return q_term + entropy_term
    if mode == "local":
        return entropy_term + shapley_term
    return q_term + entropy_term + shapley_term


@dataclass
class AgentObjective:
    """
    Loss (negative objective) of one agent's policy and its gradient.

    Parameters
    ----------
    loss : float
    grads : ParamSet
        Gradient of ``loss`` with respect to the policy parameters.
    action, log_prob : arrays of shape (N, D), (N,)
        The fresh reparameterised sample.
    shapley_q : array of shape (N,) or None
        Shapley Q-values used as coefficients (``None`` in ``share`` mode).
    transformed : array of shape (N,) or None
        The (floored, transformed) log-likelihoods the Shapley Q-values
        multiply.
    fit : BoxCoxFit or None
    t_limit : float or None
    """
    loss: float
    grads: nn.ParamSet
    action: np.ndarray
    log_prob: np.ndarray
    shapley_q: Optional[np.ndarray] = None
    transformed: Optional[np.ndarray] = None
    fit: Optional[BoxCoxFit] = None
    t_limit: Optional[float] = None


def agent_objective(policy: GaussianPolicy,
                    i: int,
                    critics: TwinCritics,
                    temp: Temperature,
                    batch: Batch,
                    joint_action,
                    mode: str = "full",
                    shapley_coef=None,
                    beta: float = 10.0,
                    sample_times: int = 2,
                    random_state=None,
                    noise=None,
                    fit: Optional[BoxCoxFit] = None,
                    t_limit: Optional[float] = None,
                    grid: Optional[Dict[str, float]] = None) -> AgentObjective:
    """
    Agent ``i``'s policy loss on a batch and its exact gradient.

    Parameters
    ----------
    policy : GaussianPolicy
        Agent ``i``'s current policy.
    i : int
    critics : TwinCritics
    temp : Temperature
    batch : Batch
    joint_action : array of shape (N, n, D)
        Actions of the other agents the critic term is evaluated at (new
        actions of the agents already updated, stored ones of the others);
        block ``i`` is ignored.
    mode : str
        Ablation mode, see ``ablation_objective``.
    shapley_coef : array of shape (N,) or None
        Shapley Q-values to use; if ``None``, they are estimated with
        ``sample_times`` coalitions.
    beta : float
        Log adjustment factor of the likelihood floor.
    sample_times : int
    random_state : int, NumPy (legacy) ``RandomState`` object
    noise : array of shape (N, D) or None
        Fixed reparameterisation noise (drawn if ``None``).
    fit : BoxCoxFit or None
        Box-Cox fit to use instead of estimating one from the batch.
    t_limit : float or None
        Likelihood floor threshold to use instead of computing one.
    grid : dict or None
        Box-Cox power grid bounds.

    Returns
    -------
    AgentObjective
    """
    if mode not in ABLATIONS:
        raise ValueError(f"Unknown ablation mode {mode!r}, expected one of "
                         f"{list(ABLATIONS)}")
    random_state = check_random_state(random_state)
    N = len(batch)
    D = policy.action_dim
    alpha = temp.alpha
    obs = batch.obs[:, i]

    s = sample_reparam(policy, obs, random_state, noise=noise)
    sigma_noise = np.exp(s.head.log_std) * s.noise
    dlogp_mu, dlogp_log_std = reparam_log_prob_grads(s)

    # Gradients of the loss with respect to μ and log σ.
    entropy_term = -alpha * float(np.mean(s.log_prob))
    dmu = alpha * dlogp_mu / N
    dlog_std = alpha * dlogp_log_std / N

    joint = np.array(joint_action, dtype=float)
    joint[:, i] = s.action

    q_term = 0.0
    if mode != "local":
        q, dq_da = q_min_action_grad(critics, batch.state,
                                     joint.reshape(N, -1))
        q_term = float(np.mean(q))
        du = (-dq_da[:, i * D:(i + 1) * D]
              * (1 - np.tanh(s.pre_squash)**2) / N)
        dmu = dmu + du
        dlog_std = dlog_std + du * sigma_noise

    shapley_term = 0.0
    transformed = None
    if mode != "share":
        if shapley_coef is None:
            context = joint if mode == "current_action" else batch.action
            shapley_coef = shapley_q(critics, batch.state,
                                     context.reshape(N, -1), i, sample_times,
                                     random_state)
        shapley_coef = np.broadcast_to(
            np.asarray(shapley_coef, dtype=float), (N, ))

        if mode == "current_action":
            transformed = s.log_prob
            dvalue = -shapley_coef / N
            dmu = dmu + dvalue[:, np.newaxis] * dlogp_mu
            dlog_std = dlog_std + dvalue[:, np.newaxis] * dlogp_log_std
        else:
            h = historical_log_prob_eval(policy, obs, batch.action[:, i])
            if t_limit is None:
                t_limit = likelihood_threshold(h.log_prob, beta)
            floored = apply_likelihood_floor(h.log_prob, beta, t_limit)
            dvalue = (-shapley_coef
                      * likelihood_floor_grad(h.log_prob, t_limit) / N)
            if mode == "no_bc":
                transformed = floored
            else:
                if fit is None:
                    fit = estimate_lambda(floored, **(grid or {}))
                transformed = bc_training_transform(floored, fit)
                dvalue = dvalue * bc_transform_grad(floored, fit)
            # The historical head equals ``s.head``: same network, same
            # observations.
            hmu, hlog_std = historical_log_prob_grads(h)
            dmu = dmu + dvalue[:, np.newaxis] * hmu
            dlog_std = dlog_std + dvalue[:, np.newaxis] * hlog_std
        shapley_term = float(np.mean(shapley_coef * transformed))

    loss = -ablation_objective(mode, q_term, entropy_term, shapley_term)
    if not np.isfinite(loss):
        raise FloatingPointError(f"Non-finite policy loss of agent {i}")
    grads = policy.backward(s.head, dmu, dlog_std)

    return AgentObjective(loss=loss,
                          grads=grads,
                          action=s.action,
                          log_prob=s.log_prob,
                          shapley_q=(None if mode == "share" else
                                     np.array(shapley_coef)),
                          transformed=transformed,
                          fit=fit,
                          t_limit=t_limit)


@dataclass
class PolicyUpdate:
    """
    Outcome of one sequential update of all policies.

    Parameters
    ----------
    policies, opts : lists
        Updated policies and optimizer states (per agent).
    order : array of shape (n,)
        The order in which the agents were updated.
    log_probs : array of shape (N, n)
        Log-probabilities of fresh samples of the updated policies.
    shapley_q : array of shape (n,)
        Per-agent mean Shapley Q-value (``nan`` if not used or aborted).
    bc_loglik : array of shape (n,)
        Per-agent mean transformed log-likelihood (``nan`` likewise).
    aborted : list of int
        Agents whose update was aborted.
    """
    policies: List[GaussianPolicy]
    opts: List[nn.OptimState]
    order: np.ndarray
    log_probs: np.ndarray
    shapley_q: np.ndarray
    bc_loglik: np.ndarray
    aborted: List[int]


def policy_update_sequential(policies: Sequence[GaussianPolicy],
                             opts: Sequence[nn.OptimState],
                             critics: TwinCritics,
                             temp: Temperature,
                             batch: Batch,
                             config: RunConfig,
                             random_state,
                             lr: Optional[float] = None) -> PolicyUpdate:
    """
    Update all agents' policies one after the other in a uniformly random
    order; each agent takes ``config.mini_epochs`` Adam steps on its loss,
    after which its action is re-sampled from its new policy for the agents
    still to come.

    An agent whose loss or gradient turns out non-finite (or whose batch is
    degenerate) keeps its parameters; this is reported via ``known_issue``.
    """
    random_state = check_random_state(random_state)
    n = len(policies)
    N = len(batch)
    policies = list(policies)
    opts = list(opts)
    order = random_state.permutation(n)
    joint = np.array(batch.action, dtype=float)
    log_probs = np.zeros((N, n))
    shapley = np.full(n, np.nan)
    bc_loglik = np.full(n, np.nan)
    aborted = []
    max_grad_norm = config.max_grad_norm or None

    for i in order:
        policy, opt = policies[i], opts[i]
        try:
            coef = None
            if config.ablation in HISTORICAL_MODES:
                coef = shapley_q(critics, batch.state, batch.joint_action, i,
                                 config.sample_times, random_state)
            for _ in range(config.mini_epochs):
                obj = agent_objective(policy,
                                      i,
                                      critics,
                                      temp,
                                      batch,
                                      joint,
                                      mode=config.ablation,
                                      shapley_coef=coef,
                                      beta=config.beta,
                                      sample_times=config.sample_times,
                                      random_state=random_state,
                                      grid=config.grid())
                net, opt = nn.adam_step(policy.net,
                                        obj.grads,
                                        opt,
                                        max_grad_norm=max_grad_norm,
                                        lr=lr)
                policy = policy.with_net(net)
        except (FloatingPointError, ValueError) as e:
            known_issue(f"Update of agent {i} aborted: {e}", {
                "agent": i,
                "ablation": config.ablation,
                "alpha": temp.alpha,
            })
            aborted.append(int(i))
        else:
            policies[i], opts[i] = policy, opt
            if obj.shapley_q is not None:
                shapley[i] = np.mean(obj.shapley_q)
                bc_loglik[i] = np.mean(obj.transformed)

        s = sample_reparam(policies[i], batch.obs[:, i], random_state)
        joint[:, i] = s.action
        log_probs[:, i] = s.log_prob

    return PolicyUpdate(policies=policies,
                        opts=opts,
                        order=order,
                        log_probs=log_probs,
                        shapley_q=shapley,
                        bc_loglik=bc_loglik,
                        aborted=aborted)


def _mean(values) -> float:
    values = [v for v in np.ravel(values) if np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer, )):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x


def metrics_columns(n_agents: int) -> List[str]:
    return ([
        "step", "episodes", "ret_mean", "ret_std", "critic_loss", "alpha"
    ] + [f"shapley_q_mean_agent{i}"
         for i in range(n_agents)] + ["bc_loglik_mean"])


def append_metrics(path, record: Dict[str, float], n_agents: int):
    """
    Append one record to a metrics CSV file (writing the header first if the
    file does not exist yet).
    """
    df = pd.DataFrame([record], columns=metrics_columns(n_agents))
    df.to_csv(path,
              mode="a",
              header=not os.path.exists(path),
              index=False,
              na_rep="nan",
              lineterminator="\n")


@dataclass
class UpdateStats:
    critic_loss: float
    policy: PolicyUpdate


class Trainer:
    """
    Owns all mutable state of a training run: environment, policies,
    critics, temperature, optimizers, replay buffer and random streams.
    """
    def __init__(self, config: RunConfig, env: Env = None, out_dir=None):
        """
        Parameters
        ----------
        config : RunConfig
        env : Env or None
            If ``None``, the environment named by ``config.env`` is built.
        out_dir : path or None
            If given, ``fit`` writes ``metrics.csv``, ``summary.json`` and
            checkpoints into this directory.
        """
        self.config = config
        self.out_dir = out_dir
        c = config

        random_state = check_random_state(c.seed)
        if env is None:
            env = make_env(c.env,
                           n_agents=c.n_agents,
                           action_dim=c.action_dim,
                           episode_length=c.episode_length,
                           random_state=randseed(random_state),
                           dummy_agent=c.dummy_agent)
        elif (env.spec.n_agents, env.spec.action_dim) != (c.n_agents,
                                                           c.action_dim):
            raise ValueError(
                f"Environment has {env.spec.n_agents} agents with "
                f"{env.spec.action_dim}-dimensional actions but the "
                f"configuration asks for {c.n_agents} with {c.action_dim}")
        self.env = env
        spec = env.spec

        self.policies = [
            GaussianPolicy(spec.obs_dim,
                           spec.action_dim,
                           c.hidden_sizes,
                           random_state=randseed(random_state))
            for _ in range(spec.n_agents)
        ]
        self.critics = TwinCritics(spec.state_dim,
                                   spec.n_agents,
                                   spec.action_dim,
                                   c.hidden_sizes,
                                   random_state=randseed(random_state))
        self.policy_opts = [
            nn.adam_init(p.net, c.lr_actor) for p in self.policies
        ]
        self.critic_opts = (nn.adam_init(self.critics.q1, c.lr_critic),
                            nn.adam_init(self.critics.q2, c.lr_critic))
        if c.auto_alpha:
            self.temp = Temperature(log_alpha=float(np.log(c.fixed_alpha)),
                                    auto=True,
                                    target_entropy=c.entropy_target)
        else:
            self.temp = Temperature.fixed(c.fixed_alpha, c.entropy_target)
        self.buffer = ReplayBuffer(c.buffer_size,
                                   spec.n_agents,
                                   spec.obs_dim,
                                   spec.state_dim,
                                   spec.action_dim,
                                   warmup=c.warmup_steps)

        self.collect_random_state = check_random_state(
            randseed(random_state))
        self.update_random_state = check_random_state(randseed(random_state))

        self.rollout: Optional[Rollout] = None
        self.iteration = 0
        self.n_updates = 0
        self.metrics: List[Dict[str, float]] = []

    @property
    def steps(self) -> int:
        return 0 if self.rollout is None else self.rollout.steps

    def learning_rates(self) -> Tuple[float, float]:
        """
        Current actor and critic learning rates.
        """
        c = self.config
        frac = 1.0
        if c.linear_lr_decay:
            frac = max(0.0, 1 - self.steps / c.total_steps)
        return c.lr_actor * frac, c.lr_critic * frac

    def polyak_weight(self) -> float:
        c = self.config
        return 1 - c.polyak if c.literal_polyak else c.polyak

    def update_critics(self, batch: Batch, lr: float) -> float:
        """
        One Adam step of both critics towards the (multi-step) soft TD
        targets; neither critic changes if either gradient is non-finite.
        """
        random_state = self.update_random_state
        y = n_step_target(batch, self.critics, self.temp, self.policies,
                          random_state)
        loss, (g1, g2), _ = critic_loss_and_grads(self.critics, batch.state,
                                                  batch.joint_action, y)
        max_grad_norm = self.config.max_grad_norm or None
        q1, opt1 = nn.adam_step(self.critics.q1,
                                g1,
                                self.critic_opts[0],
                                max_grad_norm=max_grad_norm,
                                lr=lr)
        q2, opt2 = nn.adam_step(self.critics.q2,
                                g2,
                                self.critic_opts[1],
                                max_grad_norm=max_grad_norm,
                                lr=lr)
        self.critics = self.critics.replace(q1=q1, q2=q2)
        self.critic_opts = (opt1, opt2)
        return loss

    def update(self) -> UpdateStats:
        """
        One full update: critics, policies, temperature, target critics.
        """
        c = self.config
        random_state = self.update_random_state
        lr_actor, lr_critic = self.learning_rates()
        batch = self.buffer.sample(c.batch_size,
                                   random_state,
                                   n_step=c.n_step,
                                   gamma=c.gamma)

        try:
            critic_loss = self.update_critics(batch, lr_critic)
        except FloatingPointError as e:
            known_issue(f"Critic update aborted: {e}", {
                "step": self.steps,
                "alpha": self.temp.alpha
            })
            critic_loss = float("nan")

        pu = policy_update_sequential(self.policies,
                                      self.policy_opts,
                                      self.critics,
                                      self.temp,
                                      batch,
                                      c,
                                      random_state,
                                      lr=lr_actor)
        self.policies = pu.policies
        self.policy_opts = pu.opts

        try:
            self.temp = temperature_step(self.temp, pu.log_probs, c.lr_alpha)
        except FloatingPointError as e:
            known_issue(f"Temperature update aborted: {e}",
                        {"log_alpha": self.temp.log_alpha})

        tau = self.polyak_weight()
        self.critics = self.critics.replace(
            q1_target=nn.soft_update(self.critics.q1_target, self.critics.q1,
                                     tau),
            q2_target=nn.soft_update(self.critics.q2_target, self.critics.q2,
                                     tau))
        self.n_updates += 1
        return UpdateStats(critic_loss=critic_loss, policy=pu)

    def train_iteration(self) -> Dict[str, float]:
        """
        Collect ``train_interval`` steps (fewer at the very end of the run)
        and, once the buffer is warm, perform ``updates_per_train`` updates.

        Returns
        -------
        dict
            The metrics record of this iteration.
        """
        c = self.config
        steps = max(0, min(c.train_interval, c.total_steps - self.steps))
        self.rollout = collect(self.env,
                               self.policies,
                               self.buffer,
                               steps,
                               self.collect_random_state,
                               rollout=self.rollout,
                               warmup_steps=c.warmup_steps,
                               exploration_noise=c.exploration_noise)

        stats = []
        if len(self.buffer) >= self.buffer.warmup:
            for _ in range(c.updates_per_train):
                stats.append(self.update())

        record = self._record(stats)
        self.metrics.append(record)
        self.iteration += 1
        self._log(record)
        return record

    def _record(self, stats: List[UpdateStats]) -> Dict[str, float]:
        n = self.env.spec.n_agents
        returns = self.rollout.returns[-self.config.return_window:]
        record = {
            "step": self.steps,
            "episodes": len(self.rollout.returns),
            "ret_mean": float(np.mean(returns)) if returns else float("nan"),
            "ret_std": float(np.std(returns)) if returns else float("nan"),
            "critic_loss": _mean([s.critic_loss for s in stats]),
            "alpha": self.temp.alpha,
        }
        for i in range(n):
            record[f"shapley_q_mean_agent{i}"] = _mean(
                [s.policy.shapley_q[i] for s in stats])
        record["bc_loglik_mean"] = _mean([s.policy.bc_loglik for s in stats])
        return record

    def _log(self, record):
        if self.config.verbose:
            print(f"Iteration {self.iteration}. Step {record['step']}, "
                  f"return {record['ret_mean']:.3f} ± "
                  f"{record['ret_std']:.3f}, critic loss "
                  f"{record['critic_loss']:.3f}, α = {record['alpha']:.3g}")
        if mlflow.active_run() is not None:
            for key, value in record.items():
                if key != "step" and np.isfinite(value):
                    mlflow.log_metric(key, value, step=record["step"])

    def fit(self):
        """
        Train for ``config.total_steps`` environment steps.

        If the trainer has an output directory, one metrics row is appended
        after every iteration (so that a failing run leaves its partial
        metrics behind), checkpoints are saved every
        ``config.checkpoint_interval`` iterations and at the end, and a
        summary is written last.
        """
        c = self.config
        t0 = time.time()
        if self.out_dir is not None:
            os.makedirs(self.checkpoint_dir(), exist_ok=True)
        while self.steps < c.total_steps:
            record = self.train_iteration()
            if self.out_dir is not None:
                append_metrics(self.metrics_path(), record,
                               self.env.spec.n_agents)
                if (c.checkpoint_interval > 0
                        and self.iteration % c.checkpoint_interval == 0):
                    self.save_checkpoint(self.checkpoint_path())
        self.wall_time_ = time.time() - t0
        if self.out_dir is not None:
            self.save_checkpoint(self.checkpoint_path())
            with open(os.path.join(self.out_dir, "summary.json"), "w") as f:
                json.dump(self.summary(), f, indent=2)
        return self

    def metrics_path(self):
        return os.path.join(self.out_dir, "metrics.csv")

    def checkpoint_dir(self):
        return os.path.join(self.out_dir, "checkpoints")

    def checkpoint_path(self):
        return os.path.join(self.checkpoint_dir(), f"step_{self.steps}.npz")

    def networks(self) -> Dict[str, nn.ParamSet]:
        return {
            **{f"policy{i}": p.net
               for i, p in enumerate(self.policies)},
            **self.critics.nets()
        }

    def save_checkpoint(self, path):
        nn.save_checkpoint(path,
                           self.networks(),
                           scalars={
                               "log_alpha": self.temp.log_alpha,
                               "step": self.steps
                           })

    def load_checkpoint(self, path):
        """
        Restore all networks and the temperature from a checkpoint (optimizer
        states and the replay buffer are not part of checkpoints).
        """
        networks, scalars = nn.load_checkpoint(path)
        self.policies = [
            p.with_net(networks[f"policy{i}"])
            for i, p in enumerate(self.policies)
        ]
        self.critics = self.critics.replace(
            **{k: networks[k]
               for k in self.critics.nets()})
        self.temp = Temperature(log_alpha=float(scalars["log_alpha"]),
                                auto=self.temp.auto,
                                target_entropy=self.temp.target_entropy)
        return self

    def predict(self, obs):
        """
        Deterministic joint action ``tanh(μ^i(o^i))`` for per-agent
        observations of shape ``(n, obs_dim)``.
        """
        obs = np.asarray(obs, dtype=float)
        return np.array([p.act(obs[i]) for i, p in enumerate(self.policies)])

    def threshold(self) -> Optional[float]:
        """
        Return that counts as solving the environment (``None`` if the
        environment has no closed-form optimum).
        """
        opt = self.env.optimal_return()
        if opt is None:
            return None
        return opt - (1 - self.config.threshold_fraction) * abs(opt)

    def steps_to_threshold(self) -> Optional[int]:
        """
        First recorded environment step at which the mean return reached
        ``threshold``.
        """
        threshold = self.threshold()
        if threshold is None:
            return None
        for record in self.metrics:
            if record["ret_mean"] >= threshold:
                return int(record["step"])
        return None

    def late_returns(self, fraction: float = 0.5) -> np.ndarray:
        """
        Returns of the episodes that finished during the last ``fraction`` of
        the run's steps.
        """
        if self.rollout is None:
            return np.zeros(0)
        start = (1 - fraction) * self.config.total_steps
        return np.array([
            r for r, s in zip(self.rollout.returns, self.rollout.return_steps)
            if s > start
        ])

    def summary(self) -> Dict[str, Any]:
        late = self.late_returns()
        return _jsonable({
            "status": "completed",
            "seed": self.config.seed,
            "ablation": self.config.ablation,
            "config": self.config.to_dict(),
            "env": self.env.constants(),
            "steps": self.steps,
            "updates": self.n_updates,
            "final": self.metrics[-1] if self.metrics else {},
            "optimal_return": self.env.optimal_return(),
            "threshold": self.threshold(),
            "steps_to_threshold": self.steps_to_threshold(),
            "late_return_mean": _mean(late),
            "late_return_std": float(np.std(late)) if len(late) else None,
            "wall_time": getattr(self, "wall_time_", None),
        })
