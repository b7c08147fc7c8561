"""
Centralised twin soft critics, TD targets, temperature adaptation and the
coalition-masked Shapley Q-value.

Critics see the global state and the joint action ``a = (a^0, …, a^{n-1})``
flattened to a vector of length ``n·D`` with agent blocks at fixed positions.
Marginal contributions of agents are approximated by evaluating the critics
on joint actions where all agents outside a coalition are masked to zero.
"""
from dataclasses import dataclass
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import nn
from .coopgame import Coalition, coalition_weight
from .utils import check_finite, randseed


class TwinCritics:
    """
    Two critics ``Q_ψ1``, ``Q_ψ2`` over ``state ⊕ joint action`` and their
    target copies.
    """
    def __init__(self,
                 state_dim: int,
                 n_agents: int,
                 action_dim: int,
                 hidden_sizes=(64, 64),
                 random_state=None,
                 nets: Dict[str, nn.ParamSet] = None):
        """
        Parameters
        ----------
        state_dim : int
        n_agents : int
        action_dim : int
            Per-agent action dimensionality ``D``.
        hidden_sizes : sequence of int
        random_state : int, NumPy (legacy) ``RandomState`` object
        nets : dict or None
            Existing parameters under the keys ``q1``, ``q2``, ``q1_target``,
            ``q2_target``. If ``None``, fresh mains are initialised and the
            targets are set equal to them.
        """
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.action_dim = action_dim
        self.hidden_sizes = tuple(hidden_sizes)
        if nets is None:
            random_state = check_random_state(random_state)
            sizes = [self.in_dim, *self.hidden_sizes, 1]
            q1 = nn.init_params(sizes, randseed(random_state))
            q2 = nn.init_params(sizes, randseed(random_state))
            nets = dict(q1=q1,
                        q2=q2,
                        q1_target=q1.copy(),
                        q2_target=q2.copy())
        for name in ["q1", "q2", "q1_target", "q2_target"]:
            if nets[name].in_dim != self.in_dim or nets[name].out_dim != 1:
                raise ValueError(f"Critic {name} has wrong input/output size")
        self.q1 = nets["q1"]
        self.q2 = nets["q2"]
        self.q1_target = nets["q1_target"]
        self.q2_target = nets["q2_target"]

    @property
    def in_dim(self):
        return self.state_dim + self.n_agents * self.action_dim

    def nets(self) -> Dict[str, nn.ParamSet]:
        return dict(q1=self.q1,
                    q2=self.q2,
                    q1_target=self.q1_target,
                    q2_target=self.q2_target)

    def replace(self, **nets) -> "TwinCritics":
        return TwinCritics(self.state_dim,
                           self.n_agents,
                           self.action_dim,
                           self.hidden_sizes,
                           nets={
                               **self.nets(),
                               **nets
                           })

    def pair(self, target=False) -> Tuple[nn.ParamSet, nn.ParamSet]:
        if target:
            return self.q1_target, self.q2_target
        return self.q1, self.q2


def critic_input(state, joint_action):
    state = np.asarray(state, dtype=float)
    joint_action = np.asarray(joint_action, dtype=float)
    return np.concatenate([state, joint_action], axis=-1)


def q_values(critics: TwinCritics, state, joint_action, target=False):
    """
    Outputs of both (main or target) critics.

    Returns
    -------
    q1, q2, tapes
        ``q1``, ``q2`` of shape () or (N,).
    """
    X = critic_input(state, joint_action)
    if X.shape[-1] != critics.in_dim:
        raise ValueError(f"Critic input has {X.shape[-1]} features but "
                         f"critics expect {critics.in_dim}")
    outs = [nn.forward(q, X) for q in critics.pair(target)]
    (o1, t1), (o2, t2) = outs
    return o1[..., 0], o2[..., 0], (t1, t2)


def q_min(critics: TwinCritics, state, joint_action, target=False):
    """
    ``min_{k=1,2} Q_k(s, a)`` of the main (or target) critics.
    """
    q1, q2, _ = q_values(critics, state, joint_action, target=target)
    return np.minimum(q1, q2)


def q_min_action_grad(critics: TwinCritics, state, joint_action):
    """
    ``min_{k=1,2} Q_k(s, a)`` of the main critics for a batch together with
    its gradient with respect to the joint action (through whichever critic
    attains the minimum for each sample).

    Returns
    -------
    q, dq_da : arrays of shape (N,), (N, n·D)
    """
    q1, q2, (t1, t2) = q_values(critics, state, joint_action)
    use1 = (q1 <= q2).astype(float)
    _, dx1 = nn.backward(critics.q1, t1, use1[..., np.newaxis])
    _, dx2 = nn.backward(critics.q2, t2, (1 - use1)[..., np.newaxis])
    dx = dx1 + dx2
    return np.minimum(q1, q2), dx[..., critics.state_dim:]


@dataclass
class Temperature:
    """
    Entropy temperature ``α = exp(log_alpha)``.

    Parameters
    ----------
    log_alpha : float
    auto : bool
        Whether ``α`` is adapted towards ``target_entropy``.
    target_entropy : float
        Desired minimum expected entropy (nats).
    m, v, step : float, float, int
        Adam moments of ``log_alpha``.
    """
    log_alpha: float
    auto: bool
    target_entropy: float
    m: float = 0.0
    v: float = 0.0
    step: int = 0

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha))

    @classmethod
    def fixed(cls, alpha: float, target_entropy=0.0):
        if not alpha >= 0:
            raise ValueError(f"alpha must be non-negative but is {alpha}")
        # α = 0 is representable only approximately in log space.
        return cls(log_alpha=float(np.log(alpha)) if alpha > 0 else -np.inf,
                   auto=False,
                   target_entropy=target_entropy)


def td_target(critics: TwinCritics, temp: Temperature, r, next_state,
              next_joint_action, next_log_probs, gamma: float, terminal):
    """
    Soft TD target ``y = r + γ (min_k Q_targ,k(s', a') - α Σ_i log π^i(a'^i |
    o'^i))``, or ``y = r`` for terminal transitions.

    Parameters
    ----------
    critics : TwinCritics
    temp : Temperature
    r : float or array of shape (N,)
    next_state : array of shape (S,) or (N, S)
    next_joint_action : array of shape (n·D,) or (N, n·D)
        Sampled from the current policies.
    next_log_probs : array of shape (n,) or (N, n)
    gamma : float
        Discount (``γ^m`` for ``m``-step targets).
    terminal : bool or array of shape (N,)
    """
    q = q_min(critics, next_state, next_joint_action, target=True)
    entropy = temp.alpha * np.sum(next_log_probs, axis=-1)
    bootstrap = r + gamma * (q - entropy)
    return np.where(terminal, r, bootstrap)


def critic_loss_and_grads(critics: TwinCritics, state, joint_action, y):
    """
    ``J_Q(ψ_k) = 1/N Σ_t ½ (y_t - Q_ψk(s_t, a_t))²`` for both main critics.

    Returns
    -------
    loss, (grads_q1, grads_q2), (loss_q1, loss_q2)
        ``loss`` is the mean of both critics' losses.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    check_finite("critic target", y)
    N = len(y)
    if N < 1:
        raise ValueError("Need a batch of at least one transition")
    X = np.atleast_2d(critic_input(state, joint_action))
    losses = []
    grads = []
    for q in critics.pair():
        out, tape = nn.forward(q, X)
        err = out[:, 0] - y
        losses.append(float(0.5 * np.mean(err**2)))
        g, _ = nn.backward(q, tape, (err / N)[:, np.newaxis])
        grads.append(g)
    return float(np.mean(losses)), tuple(grads), tuple(losses)


def temperature_grad(temp: Temperature, batch_log_probs) -> float:
    """
    Derivative of ``J(α) = E[-α log π - α H̄]`` with respect to ``log α``.
    """
    return temp.alpha * (-float(np.mean(batch_log_probs)) - temp.target_entropy)


def temperature_step(temp: Temperature, batch_log_probs,
                     lr: float) -> Temperature:
    """
    One Adam descent step on ``J(α)`` with respect to ``log α``; the
    temperature is returned unchanged if it is not adapted automatically.
    """
    if not temp.auto:
        return temp
    g = temperature_grad(temp, batch_log_probs)
    if not np.isfinite(g):
        raise FloatingPointError("Non-finite temperature gradient")
    step = temp.step + 1
    log_alpha, m, v = nn.adam_update(temp.log_alpha, g, temp.m, temp.v, step,
                                     lr)
    return Temperature(log_alpha=float(log_alpha),
                       auto=True,
                       target_entropy=temp.target_entropy,
                       m=float(m),
                       v=float(v),
                       step=step)


def sample_coalition(random_state, n: int, i: int) -> Coalition:
    """
    The agents preceding ``i`` in a uniformly random ordering of all ``n``
    agents; ``C`` is thus drawn with probability ``|C|! (n - |C| - 1)! / n!``.
    """
    if not 0 <= i < n:
        raise ValueError(f"Agent index {i} not in 0..{n - 1}")
    random_state = check_random_state(random_state)
    order = random_state.permutation(n)
    position = int(np.flatnonzero(order == i)[0])
    return Coalition.from_members(order[:position].tolist(), n)


@dataclass
class MaskedJointAction:
    """
    A joint action in which all agent blocks outside ``coalition`` are zero.
    """
    action: np.ndarray
    coalition: Coalition


def mask_joint_action(joint_action, coalition: Coalition) -> MaskedJointAction:
    """
    Zero the action blocks of all agents not in ``coalition`` (agent blocks
    stay at their positions).

    Parameters
    ----------
    joint_action : array of shape (n·D,) or (N, n·D)
    coalition : Coalition
    """
    joint_action = np.asarray(joint_action, dtype=float)
    n = coalition.n
    if joint_action.shape[-1] % n != 0:
        raise ValueError(f"Joint action of length {joint_action.shape[-1]} "
                         f"cannot be split into {n} agent blocks")
    D = joint_action.shape[-1] // n
    keep = np.repeat([i in coalition for i in range(n)], D)
    return MaskedJointAction(action=np.where(keep, joint_action, 0.0),
                             coalition=coalition)


def amc_marginal(critics: TwinCritics, state, joint_action,
                 coalition: Coalition, i: int):
    """
    Approximate marginal contribution of agent ``i`` to ``coalition``: half
    the difference of ``min_k Q_k`` between the joint actions masked to ``C ∪
    {i}`` and to ``C``.
    """
    if i in coalition:
        raise ValueError(f"Agent {i} is already a member of {coalition}")
    with_i = mask_joint_action(joint_action, coalition.add(i)).action
    without_i = mask_joint_action(joint_action, coalition).action
    return 0.5 * (q_min(critics, state, with_i)
                  - q_min(critics, state, without_i))


def shapley_q(critics: TwinCritics, state, joint_action, i: int, M: int,
              random_state):
    """
    Monte Carlo Shapley Q-value of agent ``i``: the mean of ``amc_marginal``
    over ``M`` coalitions drawn with ``sample_coalition`` (one set of
    coalitions shared by the whole batch).

    The result is a plain array; callers use it as a constant coefficient.
    """
    if M < 1:
        raise ValueError(f"M must be positive but is {M}")
    random_state = check_random_state(random_state)
    total = 0.0
    for _ in range(M):
        C = sample_coalition(random_state, critics.n_agents, i)
        total = total + amc_marginal(critics, state, joint_action, C, i)
    return total / M


def shapley_q_exhaustive(critics: TwinCritics, state, joint_action, i: int):
    """
    The expectation that ``shapley_q`` estimates, computed exactly by
    enumerating all coalitions without ``i``.
    """
    n = critics.n_agents
    total = 0.0
    for mask in range(2**n):
        if mask >> i & 1:
            continue
        C = Coalition(mask, n)
        total = total + coalition_weight(len(C), n) * amc_marginal(
            critics, state, joint_action, C, i)
    return total
