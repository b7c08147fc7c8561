"""
Batch checks of the guarantees the algorithm rests on.

Every suite returns a JSON-serialisable report with a ``passed`` flag; if a
check fails, the report's ``failure`` entry holds the failing fixture so
that it can be replayed.
"""
from typing import *

import numpy as np  # type: ignore
import scipy.stats as sstats  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from . import nn
from .boxcox import BoxCoxFit, estimate_lambda
from .buffer import Batch
from .coopgame import (coalition_weight, find_core_violation,
                       generate_convex_game, hybrid_allocation, is_efficient,
                       random_game, shapley_values)
from .policy import (GaussianPolicy, apply_likelihood_floor,
                     historical_log_prob, likelihood_threshold)
from .trainer import agent_objective
from .utils import popcount, randseed
from .valuation import (Temperature, TwinCritics, critic_loss_and_grads,
                        sample_coalition, temperature_grad)


def verify_theorems(count: int = 200, seed: int = 0, n_min=2,
                    n_max=6) -> Dict[str, Any]:
    """
    On ``count`` seeded convex games (and as many unconstrained games for the
    efficiency check), check that

    - the Shapley values lie in the Core,
    - the hybrid allocation is efficient (on both kinds of games) and
    - the hybrid allocation lies in the Core.
    """
    if count < 1:
        raise ValueError(f"count must be positive but is {count}")
    random_state = check_random_state(seed)
    report = {
        "suite": "theorems",
        "seed": seed,
        "count": count,
        "checked": 0,
        "passed": True,
        "failure": None,
    }

    def fail(check, game, x, coalition=None):
        report["passed"] = False
        report["failure"] = {
            "check": check,
            "game": game.to_dict(),
            "allocation": x.payoffs.tolist(),
            "coalition": None if coalition is None else coalition.key(),
        }

    for _ in range(count):
        n = random_state.randint(n_min, n_max + 1)
        convex = generate_convex_game(randseed(random_state), n)
        other = random_game(randseed(random_state), n)

        phi = shapley_values(convex)
        blocking = find_core_violation(convex, phi)
        if blocking is not None:
            fail("shapley_in_core", convex, phi, blocking)
            break

        for game in [convex, other]:
            x = hybrid_allocation(game)
            if not is_efficient(game, x):
                fail("hybrid_efficient", game, x)
                break
        if not report["passed"]:
            break

        x = hybrid_allocation(convex)
        blocking = find_core_violation(convex, x)
        if blocking is not None:
            fail("hybrid_in_core", convex, x, blocking)
            break

        report["checked"] += 1

    return report


def coalition_frequencies(n: int, draws: int, random_state, i: int = 0):
    """
    Observed and expected counts of the coalitions (of the agents other than
    ``i``) returned by ``sample_coalition``.

    Returns
    -------
    masks, observed, expected : arrays of shape (2**(n-1),)
    """
    random_state = check_random_state(random_state)
    masks = np.array([m for m in range(2**n) if not m >> i & 1])
    index = {m: k for k, m in enumerate(masks)}
    observed = np.zeros(len(masks))
    for _ in range(draws):
        observed[index[sample_coalition(random_state, n, i).mask]] += 1
    expected = draws * coalition_weight(popcount(masks), n)
    return masks, observed, expected


def verify_distributions(seed: int = 0,
                         draws: int = 100000,
                         ns: Sequence[int] = (2, 3, 4, 5),
                         p_min: float = 1e-3) -> Dict[str, Any]:
    """
    Chi-square goodness of fit of the coalition sampler against the
    probabilities ``|C|! (n - |C| - 1)! / n!``.
    """
    random_state = check_random_state(seed)
    report = {
        "suite": "distributions",
        "seed": seed,
        "draws": draws,
        "p_values": {},
        "passed": True,
        "failure": None,
    }
    for n in ns:
        masks, observed, expected = coalition_frequencies(
            n, draws, randseed(random_state))
        if len(masks) == 1:
            p = 1.0
        else:
            p = float(sstats.chisquare(observed, expected).pvalue)
        report["p_values"][str(n)] = p
        if not p > p_min and report["passed"]:
            report["passed"] = False
            report["failure"] = {
                "n": n,
                "masks": masks.tolist(),
                "observed": observed.tolist(),
                "expected": expected.tolist(),
                "p_value": p,
            }
    return report


def numerical_gradient(f: Callable[[np.ndarray], float],
                       theta,
                       h: float = 1e-5) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        grad[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return grad


def compare_gradients(analytic, numeric, rtol=1e-4, atol=1e-6):
    """
    Whether ``|analytic - numeric| <= atol + rtol |numeric|`` everywhere, and
    the maximum relative error (relative to ``max(|numeric|, atol)``).
    """
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    err = np.abs(analytic - numeric)
    ok = bool(np.all(err <= atol + rtol * np.abs(numeric)))
    rel = float(np.max(err / np.maximum(np.abs(numeric), atol), initial=0.0))
    return ok, rel


def gradient_fixture(random_state, n=2, D=1, N=4, obs_dim=3, state_dim=2,
                     hidden_sizes=(5, 5)):
    """
    Tiny policies, critics and a batch for finite-difference checks.
    """
    random_state = check_random_state(random_state)
    policies = [
        GaussianPolicy(obs_dim, D, hidden_sizes,
                       random_state=randseed(random_state)) for _ in range(n)
    ]
    critics = TwinCritics(state_dim, n, D, hidden_sizes,
                          random_state=randseed(random_state))
    batch = Batch(obs=random_state.normal(size=(N, n, obs_dim)),
                  state=random_state.normal(size=(N, state_dim)),
                  action=random_state.uniform(-0.9, 0.9, size=(N, n, D)),
                  reward=random_state.normal(size=N),
                  discount=np.full(N, 0.99),
                  next_obs=random_state.normal(size=(N, n, obs_dim)),
                  next_state=random_state.normal(size=(N, state_dim)),
                  terminal=np.zeros(N, dtype=bool),
                  steps=np.ones(N, dtype=int))
    return policies, critics, batch


def _check_network(random_state):
    net = nn.init_params([3, 4, 4, 2], randseed(random_state))
    X = random_state.normal(size=(5, 3))
    G = random_state.normal(size=(5, 2))

    def f(theta):
        return float(np.sum(nn.forward(net.with_flat(theta), X)[0] * G))

    _, tape = nn.forward(net, X)
    grads, _ = nn.backward(net, tape, G)
    return grads.flat(), numerical_gradient(f, net.flat())


def _check_critic(random_state):
    _, critics, batch = gradient_fixture(random_state)
    y = random_state.normal(size=len(batch))
    _, (g1, _), _ = critic_loss_and_grads(critics, batch.state,
                                          batch.joint_action, y)

    def f(theta):
        c = critics.replace(q1=critics.q1.with_flat(theta))
        return critic_loss_and_grads(c, batch.state, batch.joint_action,
                                     y)[2][0]

    return g1.flat(), numerical_gradient(f, critics.q1.flat())


def _check_policy(random_state, mode):
    """
    Finite-difference check of ``agent_objective``'s gradient.

    The Box-Cox power is the one ``estimate_lambda`` picks for the batch but
    the shift is widened from ``default_shift`` (about ``1e-4``) to ``0.1``.
    Central differences with step ``1e-5`` move the batch minimum by a
    similar amount, which with the default shift leaves the transform's
    domain or lands where ``z^(λ - 1)`` varies by orders of magnitude within
    one step. The derivative itself does not depend on the shift's size;
    ``bc_transform_grad`` is checked separately at the default shift.
    """
    policies, critics, batch = gradient_fixture(random_state)
    N, n, D = batch.action.shape
    i = 0
    policy = policies[i]
    temp = Temperature.fixed(0.2, target_entropy=-D)
    noise = random_state.normal(size=(N, D))
    coef = random_state.normal(size=N)
    logf = historical_log_prob(policy, batch.obs[:, i], batch.action[:, i])
    beta = 1.0
    t_limit = likelihood_threshold(logf, beta)
    floored = apply_likelihood_floor(logf, beta, t_limit)
    fit = estimate_lambda(floored)
    fit = BoxCoxFit(lambda_=fit.lambda_, x_min=fit.x_min, shift=0.1)

    def objective(p):
        return agent_objective(p,
                               i,
                               critics,
                               temp,
                               batch,
                               batch.action,
                               mode=mode,
                               shapley_coef=coef,
                               beta=beta,
                               noise=noise,
                               fit=fit,
                               t_limit=t_limit)

    analytic = objective(policy).grads.flat()

    def f(theta):
        return objective(policy.with_net(policy.net.with_flat(theta))).loss

    return analytic, numerical_gradient(f, policy.net.flat())


def _check_temperature(random_state):
    log_probs = random_state.normal(size=(8, 2))
    temp = Temperature(log_alpha=float(random_state.normal()),
                       auto=True,
                       target_entropy=-1.0)

    def f(log_alpha):
        alpha = np.exp(log_alpha[0])
        return alpha * (-np.mean(log_probs) - temp.target_entropy)

    return np.array([temperature_grad(temp, log_probs)
                     ]), numerical_gradient(f, np.array([temp.log_alpha]))


def verify_gradients(seed: int = 0, rtol=1e-4, atol=1e-6) -> Dict[str, Any]:
    """
    Compare the analytic gradients of every trained objective with central
    finite differences on tiny networks.
    """
    random_state = check_random_state(seed)
    checks = {
        "network": _check_network,
        "critic_loss": _check_critic,
        "policy_share": lambda rs: _check_policy(rs, "share"),
        "policy_full": lambda rs: _check_policy(rs, "full"),
        "policy_local": lambda rs: _check_policy(rs, "local"),
        "policy_no_bc": lambda rs: _check_policy(rs, "no_bc"),
        "policy_current_action":
        lambda rs: _check_policy(rs, "current_action"),
        "temperature": _check_temperature,
    }
    report = {
        "suite": "gradients",
        "seed": seed,
        "max_relative_error": {},
        "passed": True,
        "failure": None,
    }
    for name, check in checks.items():
        rs = check_random_state(randseed(random_state))
        analytic, numeric = check(rs)
        ok, rel = compare_gradients(analytic, numeric, rtol=rtol, atol=atol)
        report["max_relative_error"][name] = rel
        if not ok and report["passed"]:
            report["passed"] = False
            report["failure"] = {
                "check": name,
                "analytic": analytic.tolist(),
                "numeric": numeric.tolist(),
            }
    return report


suites = {
    "theorems": verify_theorems,
    "distributions": verify_distributions,
    "gradients": verify_gradients,
}
