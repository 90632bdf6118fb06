"""Direct-method policy value on an empirical model.

Two equivalent routes are provided: an exact linear solve on the blended
model tables, and fixed-point Q-evaluation iterated from the prior-implied
Q-function.  Their agreement is a built-in cross-check used by the tests.
"""

from __future__ import annotations

import numpy as np

from .empirical import EmpiricalModel
from .errors import SolverError, ValidationError
from .mdp import Policy
from . import solvers


def _check_dims(model: EmpiricalModel, policy: Policy) -> None:
    if policy.probs.shape != (model.num_states, model.num_actions):
        raise ValidationError(
            f"policy shape {policy.probs.shape} does not match model "
            f"({model.num_states} states, {model.num_actions} actions)"
        )


def dm_value(model: EmpiricalModel, policy: Policy) -> float:
    """Normalized value of the policy in the empirical MDP (linear solve)."""
    _check_dims(model, policy)
    return solvers.policy_value(
        model.mean_reward, model.transitions, model.initial_dist, policy.probs, model.discount
    )


def dm_q(model: EmpiricalModel, policy: Policy) -> np.ndarray:
    """Q-function of the policy under the empirical MDP."""
    _check_dims(model, policy)
    return solvers.q_table(model.mean_reward, model.transitions, policy.probs, model.discount)


def empirical_on_policy_distribution(model: EmpiricalModel, policy: Policy) -> np.ndarray:
    """Discounted on-policy state-action distribution in the empirical MDP."""
    _check_dims(model, policy)
    return solvers.on_policy_distribution_table(
        model.transitions, model.initial_dist, policy.probs, model.discount
    )


def prior_q_table(model: EmpiricalModel, policy: Policy) -> np.ndarray:
    """Q-function of the policy under the pure-prior model.

    This is the natural initialization for Q-evaluation: it makes the prior
    semantics of unvisited pairs explicit instead of leaving them to whatever
    the iteration started from.
    """
    _check_dims(model, policy)
    prior_reward, prior_trans = model.priors.resolve(model.num_states, model.num_actions)
    return solvers.q_table(prior_reward, prior_trans, policy.probs, model.discount)


def qe_fixed_point(
    model: EmpiricalModel,
    policy: Policy,
    tolerance: float = 1e-12,
    max_iters: int | None = None,
) -> tuple:
    """Iterate the tabular backup to its fixed point.

    Returns (q_table, iterations) where ``iterations`` counts backups
    performed until the sup-norm change dropped to ``tolerance``.
    """
    if tolerance <= 0:
        raise ValidationError("tolerance must be > 0")
    _check_dims(model, policy)
    S, A = model.num_states, model.num_actions
    rbar = model.mean_reward.reshape(S * A)
    flat_t = model.transitions.reshape(S * A, S)
    gamma = model.discount
    q = prior_q_table(model, policy).reshape(S * A)
    if max_iters is None:
        max_iters = max(
            1000, solvers._contraction_iteration_cap(gamma, tolerance, float(np.abs(rbar).max()))
        )
    for iteration in range(1, max_iters + 1):
        v = (policy.probs * q.reshape(S, A)).sum(axis=1)
        q_next = rbar + gamma * (flat_t @ v)
        delta = np.abs(q_next - q).max()
        q = q_next
        if delta <= tolerance:
            return q.reshape(S, A), iteration
    raise SolverError(
        f"Q-evaluation did not converge to {tolerance:.1e} within {max_iters} backups"
    )


def dm_value_via_qe(
    model: EmpiricalModel,
    policy: Policy,
    tolerance: float = 1e-12,
    max_iters: int | None = None,
) -> float:
    """Direct-method value via Q-evaluation instead of a linear solve."""
    q, _ = qe_fixed_point(model, policy, tolerance, max_iters)
    p0 = solvers.initial_state_action(model.initial_dist, policy.probs)
    return float((1.0 - model.discount) * (p0 @ q.reshape(-1)))
