"""
Per-agent squashed Gaussian policies.

A policy network maps an observation to the mean ``μ`` and the log standard
deviation ``log σ`` of a diagonal Gaussian over pre-squash actions ``u``;
emitted actions are ``tanh(u)``. Besides sampling (with the reparameterisation
``u = μ + σ ε``), the module provides the likelihood of *stored* actions under
the current policy and the soft floor applied to batches of such
likelihoods before they are Box-Cox transformed.
"""
from dataclasses import dataclass
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import nn
from .utils import softplus

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
# Stored actions are clamped to [-1 + ATANH_EPS, 1 - ATANH_EPS] before atanh.
ATANH_EPS = 1e-6
# Emitted actions are kept strictly inside (-1, 1) even where tanh rounds to 1.
SQUASH_EPS = 1e-7
HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


class GaussianPolicy:
    """
    A squashed diagonal Gaussian policy ``π(· | o)`` over ``(-1, 1)^D``.
    """
    def __init__(self,
                 obs_dim: int,
                 action_dim: int,
                 hidden_sizes=(64, 64),
                 random_state=None,
                 net: nn.ParamSet = None):
        """
        Parameters
        ----------
        obs_dim : int
            Dimensionality of the agent's observations.
        action_dim : int
            Dimensionality ``D`` of the agent's actions.
        hidden_sizes : sequence of int
            Widths of the rectifier hidden layers.
        random_state : int, NumPy (legacy) ``RandomState`` object
            Used for initialising the network.
        net : ParamSet or None
            If given, use these parameters instead of initialising new ones;
            must map ``obs_dim`` inputs to ``2 * action_dim`` outputs.
        """
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.hidden_sizes = tuple(hidden_sizes)
        if net is None:
            net = nn.init_params(
                [obs_dim, *self.hidden_sizes, 2 * action_dim],
                random_state=check_random_state(random_state))
        if net.in_dim != obs_dim or net.out_dim != 2 * action_dim:
            raise ValueError(
                f"Network maps {net.in_dim} → {net.out_dim} but policy needs "
                f"{obs_dim} → {2 * action_dim}")
        self.net = net

    def copy(self):
        return GaussianPolicy(self.obs_dim,
                              self.action_dim,
                              self.hidden_sizes,
                              net=self.net.copy())

    def with_net(self, net: nn.ParamSet):
        return GaussianPolicy(self.obs_dim,
                              self.action_dim,
                              self.hidden_sizes,
                              net=net)

    def head(self, obs) -> "Head":
        out, tape = nn.forward(self.net, obs)
        D = self.action_dim
        mu = out[..., :D]
        raw = out[..., D:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        return Head(mu=mu,
                    log_std=log_std,
                    clipped=(raw < LOG_STD_MIN) | (raw > LOG_STD_MAX),
                    tape=tape)

    def backward(self, head: "Head", dmu, dlog_std) -> nn.ParamSet:
        """
        Gradient with respect to the network parameters given the gradients
        with respect to ``μ`` and (clamped) ``log σ``.
        """
        dlog_std = np.where(head.clipped, 0.0, dlog_std)
        grads, _ = nn.backward(self.net, head.tape,
                               np.concatenate([dmu, dlog_std], axis=-1))
        return grads

    def act(self, obs):
        """
        The deterministic action ``tanh(μ(o))``.
        """
        return np.tanh(self.head(obs).mu)


@dataclass
class Head:
    """
    Policy head outputs for a batch of observations.
    """
    mu: np.ndarray
    log_std: np.ndarray
    clipped: np.ndarray
    tape: nn.Tape


@dataclass
class Sample:
    """
    A reparameterised sample ``action = tanh(μ + σ ε)`` with everything needed
    to differentiate it.
    """
    head: Head
    noise: np.ndarray
    pre_squash: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray


def gaussian_log_density(x, mu, log_std):
    """
    ``log f(x)`` of a diagonal Gaussian, summed over the last axis.
    """
    z = (x - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z**2 - log_std - HALF_LOG_2PI, axis=-1)


def tanh_correction(u):
    """
    ``Σ_j log(1 - tanh²(u_j))`` in the numerically stable softplus form
    ``Σ_j 2 (log 2 - u_j - softplus(-2 u_j))``.
    """
    return np.sum(2 * (np.log(2) - u - softplus(-2 * u)), axis=-1)


def sample_reparam(policy: GaussianPolicy, obs, random_state,
                   noise=None) -> Sample:
    random_state = check_random_state(random_state)
    head = policy.head(obs)
    if noise is None:
        noise = random_state.standard_normal(size=head.mu.shape)
    u = head.mu + np.exp(head.log_std) * noise
    log_prob = (np.sum(-0.5 * noise**2 - head.log_std - HALF_LOG_2PI, axis=-1)
                - tanh_correction(u))
    return Sample(head=head,
                  noise=noise,
                  pre_squash=u,
                  action=np.clip(np.tanh(u), -1 + SQUASH_EPS, 1 - SQUASH_EPS),
                  log_prob=log_prob)


def sample(policy: GaussianPolicy, obs, random_state):
    """
    Draw an action via the reparameterisation trick.

    Parameters
    ----------
    policy : GaussianPolicy
    obs : array of shape (obs_dim,) or (N, obs_dim)
    random_state : int, NumPy (legacy) ``RandomState`` object

    Returns
    -------
    action, log_prob, pre_squash
        Arrays of shape (D,), (), (D,) or the batched equivalents.
    """
    s = sample_reparam(policy, obs, random_state)
    return s.action, s.log_prob, s.pre_squash


def reparam_log_prob_grads(s: Sample):
    """
    Gradient of ``log_prob`` of a reparameterised sample with respect to
    ``μ`` and ``log σ`` (the noise ``ε`` held fixed).

    With ``log_prob = Σ(-ε²/2 - log σ - log √(2π)) - Σ log(1 - tanh² u)`` and
    ``d/du log(1 - tanh² u) = -2 tanh u``.
    """
    du = 2 * np.tanh(s.pre_squash)
    dmu = du
    dlog_std = du * np.exp(s.head.log_std) * s.noise - 1
    return dmu, dlog_std


def atanh_recover(action):
    """
    Map (stored) squashed actions back to pre-squash space; actions are
    clamped to ``[-1 + 1e-6, 1 - 1e-6]`` first so that saturated actions stay
    finite.
    """
    a = np.clip(np.asarray(action, dtype=float), -1 + ATANH_EPS,
                1 - ATANH_EPS)
    return np.arctanh(a)


@dataclass
class HistoricalLogProb:
    head: Head
    pre_squash: np.ndarray
    log_prob: np.ndarray


def historical_log_prob_eval(policy: GaussianPolicy, obs,
                             stored_action) -> HistoricalLogProb:
    head = policy.head(obs)
    u = atanh_recover(stored_action)
    log_prob = (gaussian_log_density(u, head.mu, head.log_std)
                - tanh_correction(u))
    return HistoricalLogProb(head=head, pre_squash=u, log_prob=log_prob)


def historical_log_prob(policy: GaussianPolicy, obs, stored_action):
    """
    Log-likelihood of a stored (squashed) action under the *current* policy.

    Parameters
    ----------
    policy : GaussianPolicy
    obs : array of shape (obs_dim,) or (N, obs_dim)
    stored_action : array of shape (D,) or (N, D)
        Components in ``[-1, 1]``.

    Returns
    -------
    float or array of shape (N,)
    """
    return historical_log_prob_eval(policy, obs, stored_action).log_prob


def historical_log_prob_grads(h: HistoricalLogProb):
    """
    Gradient of the historical log-likelihood with respect to ``μ`` and
    ``log σ``; the stored action is a constant.
    """
    z = (h.pre_squash - h.head.mu) * np.exp(-h.head.log_std)
    dmu = z * np.exp(-h.head.log_std)
    dlog_std = z**2 - 1
    return dmu, dlog_std


def likelihood_threshold(batch_logf, beta: float) -> float:
    """
    ``T_limit = max(batch) - β``.
    """
    batch_logf = np.asarray(batch_logf, dtype=float)
    if batch_logf.size == 0:
        raise ValueError("Likelihood floor needs a non-empty batch")
    if not beta > 0:
        raise ValueError(f"beta must be positive but is {beta}")
    return float(np.max(batch_logf)) - beta


def apply_likelihood_floor(batch_logf, beta: float, t_limit=None):
    """
    Softly floor a batch of log-likelihoods: every value ``v`` below ``T_limit
    = max(batch) - β`` is replaced by ``T_limit + exp(v - T_limit) - 1``;
    the others pass through unchanged.

    Parameters
    ----------
    batch_logf : array of shape (N,)
    beta : float
        Log adjustment factor (``> 0``).
    t_limit : float or None
        Use this threshold instead of computing it from the batch.

    Returns
    -------
    array of shape (N,)
    """
    batch_logf = np.asarray(batch_logf, dtype=float)
    if t_limit is None:
        t_limit = likelihood_threshold(batch_logf, beta)
    below = batch_logf < t_limit
    floored = t_limit + np.expm1(np.minimum(batch_logf - t_limit, 0.0))
    return np.where(below, floored, batch_logf)


def likelihood_floor_grad(batch_logf, t_limit: float):
    """
    Derivative of ``apply_likelihood_floor`` (``T_limit`` held constant).
    """
    batch_logf = np.asarray(batch_logf, dtype=float)
    return np.where(batch_logf < t_limit,
                    np.exp(np.minimum(batch_logf - t_limit, 0.0)), 1.0)
