"""Linear-solve and fixed-point evaluation of a policy on tabular model tables.

Everything here operates on raw arrays (mean rewards, transition rows, an
initial state distribution, policy rows, and a discount) so the same code
serves both ground-truth MDPs and empirical models.  The policy value uses
the (1-discount)-normalized convention throughout:

    value = (1-g) * rbar^T (I - g*M)^{-1} p0,

where M[(s,a),(s',a')] = T(s'|s,a) * pi(a'|s') and p0[(s,a)] = mu0(s)*pi(a|s).
Systems up to ``DENSE_SIZE_LIMIT`` unknowns solve by dense LU with an explicit
residual check; larger systems fall back to fixed-point iteration, which is a
discount-rate contraction and cannot diverge.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SolverError

DENSE_SIZE_LIMIT = 4096

_RESIDUAL_TOL = 1e-10


def forward_matrix(transitions: np.ndarray, policy_probs: np.ndarray) -> np.ndarray:
    """State-action transition operator M[(s,a),(s',a')] = T(s'|s,a)*pi(a'|s')."""
    num_states, num_actions = policy_probs.shape
    flat_t = transitions.reshape(num_states * num_actions, num_states)
    m = flat_t[:, :, None] * policy_probs[None, :, :]
    return m.reshape(num_states * num_actions, num_states * num_actions)


def initial_state_action(initial_dist: np.ndarray, policy_probs: np.ndarray) -> np.ndarray:
    """Flat initial state-action distribution p0[(s,a)] = mu0(s)*pi(a|s)."""
    return (initial_dist[:, None] * policy_probs).reshape(-1)


def _solve_checked(a_mat: np.ndarray, b: np.ndarray, residual_tol: float) -> np.ndarray:
    x = np.linalg.solve(a_mat, b)
    residual = np.abs(a_mat @ x - b).max()
    scale = max(np.abs(b).max(), 1.0)
    if residual > residual_tol * scale:
        raise SolverError(
            f"linear solve residual {residual:.3e} exceeds {residual_tol:.1e} * {scale:.3e}"
        )
    return x


def _iterate_q(
    rbar_flat: np.ndarray,
    transitions: np.ndarray,
    policy_probs: np.ndarray,
    discount: float,
    tol: float,
) -> np.ndarray:
    num_states, num_actions = policy_probs.shape
    flat_t = transitions.reshape(num_states * num_actions, num_states)
    q = np.zeros_like(rbar_flat)
    max_iters = _contraction_iteration_cap(discount, tol, np.abs(rbar_flat).max())
    for _ in range(max_iters):
        v = (policy_probs * q.reshape(num_states, num_actions)).sum(axis=1)
        q_next = rbar_flat + discount * (flat_t @ v)
        delta = np.abs(q_next - q).max()
        q = q_next
        if delta <= tol:
            return q
    raise SolverError(f"fixed-point iteration did not reach {tol:.1e} in {max_iters} steps")


def _contraction_iteration_cap(discount: float, tol: float, reward_scale: float) -> int:
    if discount == 0.0:
        return 2
    scale = max(reward_scale, 1.0) / (1.0 - discount)
    return int(math.ceil(math.log(max(tol, 1e-300) / (2.0 * scale)) / math.log(discount))) + 2


def q_table(
    mean_rewards: np.ndarray,
    transitions: np.ndarray,
    policy_probs: np.ndarray,
    discount: float,
    *,
    residual_tol: float = _RESIDUAL_TOL,
    dense_limit: int | None = None,
) -> np.ndarray:
    """Q(s,a) = rbar(s,a) + g*E[Q(s',a')], the un-normalized fixed point."""
    num_states, num_actions = policy_probs.shape
    size = num_states * num_actions
    rbar_flat = np.asarray(mean_rewards, dtype=np.float64).reshape(size)
    limit = DENSE_SIZE_LIMIT if dense_limit is None else dense_limit
    if size <= limit:
        a_mat = np.eye(size) - discount * forward_matrix(transitions, policy_probs)
        q = _solve_checked(a_mat, rbar_flat, residual_tol)
    else:
        q = _iterate_q(rbar_flat, transitions, policy_probs, discount, tol=1e-13)
    return q.reshape(num_states, num_actions)


def on_policy_distribution_table(
    transitions: np.ndarray,
    initial_dist: np.ndarray,
    policy_probs: np.ndarray,
    discount: float,
    *,
    residual_tol: float = _RESIDUAL_TOL,
    dense_limit: int | None = None,
) -> np.ndarray:
    """Discounted state-action visitation d(s,a), normalized to sum to 1."""
    num_states, num_actions = policy_probs.shape
    size = num_states * num_actions
    p0 = initial_state_action(initial_dist, policy_probs)
    limit = DENSE_SIZE_LIMIT if dense_limit is None else dense_limit
    if size <= limit:
        a_mat = np.eye(size) - discount * forward_matrix(transitions, policy_probs).T
        d = _solve_checked(a_mat, (1.0 - discount) * p0, residual_tol)
    else:
        d = _iterate_distribution(transitions, p0, policy_probs, discount, tol=1e-15)
    # LU round-off can leave entries at -1e-17; the result is a distribution.
    return np.maximum(d, 0.0).reshape(num_states, num_actions)


def _iterate_distribution(
    transitions: np.ndarray,
    p0: np.ndarray,
    policy_probs: np.ndarray,
    discount: float,
    tol: float,
) -> np.ndarray:
    num_states, num_actions = policy_probs.shape
    flat_t = transitions.reshape(num_states * num_actions, num_states)
    total = np.zeros_like(p0)
    pulse = p0.copy()
    weight = 1.0 - discount
    max_iters = _contraction_iteration_cap(discount, tol, 1.0)
    for _ in range(max_iters):
        total += weight * pulse
        if weight * pulse.max() <= tol:
            return total
        next_state_mass = flat_t.T @ pulse
        pulse = (next_state_mass[:, None] * policy_probs).reshape(-1)
        weight *= discount
    raise SolverError(f"distribution iteration did not reach {tol:.1e}")


def state_values(q: np.ndarray, policy_probs: np.ndarray) -> np.ndarray:
    """V(s) = E_{a~pi(s)}[Q(s,a)]."""
    return (policy_probs * q).sum(axis=1)


def policy_value(
    mean_rewards: np.ndarray,
    transitions: np.ndarray,
    initial_dist: np.ndarray,
    policy_probs: np.ndarray,
    discount: float,
    *,
    residual_tol: float = _RESIDUAL_TOL,
    dense_limit: int | None = None,
) -> float:
    """(1-discount)-normalized expected discounted reward of the policy."""
    q = q_table(
        mean_rewards,
        transitions,
        policy_probs,
        discount,
        residual_tol=residual_tol,
        dense_limit=dense_limit,
    )
    p0 = initial_state_action(initial_dist, policy_probs)
    return float((1.0 - discount) * (p0 @ q.reshape(-1)))
