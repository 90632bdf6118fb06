"""Logged-data containers and empirical model construction.

A logged tuple is (s0, s, a, r, s') where s0 is the start state of the
episode the tuple came from.  The empirical model blends observed frequencies
with prior distributions using a pseudo-mass ``kappa``: with total data mass
normalized to 1, the blended mean reward at (s, a) is

    (observed reward mass + kappa * prior_mean) / (pair mass + kappa),

and transition rows blend the same way.  ``kappa`` therefore means the same
thing at any dataset size.  With kappa=0 an unvisited pair falls back to the
priors bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mdp import EpisodeSet
from .seeding import as_generator


@dataclass(frozen=True, eq=False)
class TupleDataset:
    """Column-oriented multiset of (s0, s, a, r, s') tuples."""

    s0: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    sp: np.ndarray
    num_states: int
    num_actions: int

    def __post_init__(self):
        for name in ("s0", "s", "a", "sp"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        r = np.ascontiguousarray(self.r, dtype=np.float64)
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        if self.n < 1:
            raise ValidationError("dataset must contain at least one tuple")
        if (
            self.s0.min() < 0
            or self.s0.max() >= self.num_states
            or self.s.min() < 0
            or self.s.max() >= self.num_states
            or self.sp.min() < 0
            or self.sp.max() >= self.num_states
        ):
            raise ValidationError("state index outside [0, num_states)")
        if self.a.min() < 0 or self.a.max() >= self.num_actions:
            raise ValidationError("action index outside [0, num_actions)")

    @property
    def n(self) -> int:
        return len(self.r)

    @classmethod
    def from_tuples(cls, tuples, num_states: int, num_actions: int) -> "TupleDataset":
        cols = list(zip(*tuples))
        if len(cols) != 5:
            raise ValidationError("each record must be a 5-tuple (s0, s, a, r, s')")
        s0, s, a, r, sp = cols
        return cls(
            np.array(s0), np.array(s), np.array(a), np.array(r, dtype=np.float64),
            np.array(sp), num_states, num_actions,
        )

    def tuple_at(self, i: int) -> tuple:
        return (
            int(self.s0[i]), int(self.s[i]), int(self.a[i]), float(self.r[i]), int(self.sp[i]),
        )


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """A dataset tripled with +/- noise_scale reward perturbations.

    ``view`` materializes the 3n tuples (original block, +noise block,
    -noise block).  Never persisted; always derived from its base.
    """

    base: TupleDataset
    noise_scale: float
    view: TupleDataset

    @property
    def n(self) -> int:
        return self.base.n


@dataclass(frozen=True)
class PriorSpec:
    """Fallback reward/transition model for unvisited state-action pairs.

    The reward prior enters every downstream computation only through its
    mean, so it is stored as a mean table (scalar broadcasts); a point mass
    at 0 is the default.  The transition prior defaults to absorb-in-place
    rows: an unvisited pair keeps paying its prior reward from the same
    state forever, which with the zero reward prior contributes nothing to
    the value.  This matches what zero-initialized Q-evaluation does with
    pairs the data never updates.  (A uniform row prior is available via
    ``uniform_transition_prior``, but on goal-seeking domains it acts as a
    teleporter out of absorbing states and badly inflates values.)
    """

    reward_mean: float | np.ndarray = 0.0
    transition_probs: np.ndarray | None = None

    def resolve(self, num_states: int, num_actions: int) -> tuple:
        reward = np.broadcast_to(
            np.asarray(self.reward_mean, dtype=np.float64), (num_states, num_actions)
        )
        if self.transition_probs is None:
            trans = np.zeros((num_states, num_actions, num_states))
            trans[np.arange(num_states), :, np.arange(num_states)] = 1.0
        else:
            trans = np.asarray(self.transition_probs, dtype=np.float64)
            if trans.shape != (num_states, num_actions, num_states):
                raise ValidationError(
                    f"transition prior shape {trans.shape} != {(num_states, num_actions, num_states)}"
                )
            row_sums = trans.sum(axis=2)
            if np.abs(row_sums - 1.0).max() > 1e-12:
                raise ValidationError("transition prior rows must sum to 1")
        return np.asarray(reward), trans


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """Empirical MDP view of a dataset: counts plus kappa-blended tables."""

    num_states: int
    num_actions: int
    discount: float
    kappa: float
    priors: PriorSpec
    counts: np.ndarray  # (S, A) summed tuple weights per pair
    reward_sums: np.ndarray  # (S, A) weighted reward sums
    transition_counts: np.ndarray  # (S, A, S)
    initial_counts: np.ndarray  # (S,)
    total_weight: float
    mean_reward: np.ndarray  # (S, A) blended
    transitions: np.ndarray  # (S, A, S) blended rows
    initial_dist: np.ndarray  # (S,) empirical start-state frequencies

    def pair_mass(self) -> np.ndarray:
        """Empirical state-action mass d(s, a), summing to 1."""
        return self.counts / self.total_weight


def uniform_transition_prior(num_states: int, num_actions: int) -> np.ndarray:
    """Uniform next-state rows, for callers that want maximum-entropy fallback."""
    return np.full((num_states, num_actions, num_states), 1.0 / num_states)


def tuples_from_episodes(episodes: EpisodeSet) -> TupleDataset:
    """Flatten episodes to tuples; each tuple's s0 is its episode's start."""
    s0, s, a, r, sp = [], [], [], [], []
    for ep in episodes.episodes:
        for step in ep.steps:
            s0.append(ep.initial_state)
            s.append(step.state)
            a.append(step.action)
            r.append(step.reward)
            sp.append(step.next_state)
    if not s:
        raise ValidationError("episode set contains no steps")
    return TupleDataset(
        np.array(s0), np.array(s), np.array(a), np.array(r), np.array(sp),
        episodes.num_states, episodes.num_actions,
    )


def _materialized(data) -> TupleDataset:
    return data.view if isinstance(data, AugmentedDataset) else data


def build_empirical_model(
    data,
    priors: PriorSpec | None = None,
    kappa: float = 0.0,
    *,
    discount: float,
    weights: np.ndarray | None = None,
) -> EmpiricalModel:
    """Aggregate a (possibly weighted) dataset into an empirical model.

    ``weights`` assigns a nonnegative mass to each tuple (default 1 each),
    which lets callers evaluate exact distribution mixtures rather than
    resampled approximations.
    """
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    if not 0.0 <= discount < 1.0:
        raise ValidationError("discount must lie in [0, 1)")
    data = _materialized(data)
    priors = priors or PriorSpec()
    S, A = data.num_states, data.num_actions
    prior_reward, prior_trans = priors.resolve(S, A)

    if weights is None:
        w = np.ones(data.n)
    else:
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.shape != (data.n,):
            raise ValidationError(f"weights shape {w.shape} != ({data.n},)")
        if (w < 0).any() or w.sum() <= 0:
            raise ValidationError("weights must be nonnegative with positive sum")
    total = float(w.sum())

    sa = data.s * A + data.a
    counts = np.bincount(sa, weights=w, minlength=S * A).reshape(S, A)
    reward_sums = np.bincount(sa, weights=w * data.r, minlength=S * A).reshape(S, A)
    transition_counts = np.bincount(
        sa * S + data.sp, weights=w, minlength=S * A * S
    ).reshape(S, A, S)
    initial_counts = np.bincount(data.s0, weights=w, minlength=S)

    # Count-form blend: numerators/denominators scaled by total mass so the
    # kappa pseudo-mass is dataset-size independent.
    pseudo = kappa * total
    denom = counts + pseudo
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_reward = np.where(
            denom > 0, (reward_sums + pseudo * prior_reward) / np.where(denom > 0, denom, 1.0),
            prior_reward,
        )
        transitions = np.where(
            denom[:, :, None] > 0,
            (transition_counts + pseudo * prior_trans)
            / np.where(denom[:, :, None] > 0, denom[:, :, None], 1.0),
            prior_trans,
        )
    return EmpiricalModel(
        num_states=S,
        num_actions=A,
        discount=float(discount),
        kappa=float(kappa),
        priors=priors,
        counts=counts,
        reward_sums=reward_sums,
        transition_counts=transition_counts,
        initial_counts=initial_counts,
        total_weight=total,
        mean_reward=mean_reward,
        transitions=transitions,
        initial_dist=initial_counts / total,
    )


def augment_noisy_rewards(data: TupleDataset, noise_scale: float) -> AugmentedDataset:
    """Triple the dataset with rewards shifted by +/- noise_scale.

    The population reward variance of the result is exactly
    (2/3)*noise_scale**2 plus the base variance.
    """
    if noise_scale < 0:
        raise ValidationError("noise_scale must be >= 0")
    view = TupleDataset(
        np.tile(data.s0, 3),
        np.tile(data.s, 3),
        np.tile(data.a, 3),
        np.concatenate([data.r, data.r + noise_scale, data.r - noise_scale]),
        np.tile(data.sp, 3),
        data.num_states,
        data.num_actions,
    )
    return AugmentedDataset(base=data, noise_scale=float(noise_scale), view=view)


def default_noise_scale(data: TupleDataset) -> float:
    """Quarter of the reward standard deviation (population convention)."""
    return 0.25 * float(np.std(data.r))


def sufficient_noise_scale(r_max: float, discount: float) -> float:
    """Noise scale large enough to offset bootstrap under-coverage entirely."""
    if not 0.0 <= discount < 1.0:
        raise ValidationError("discount must lie in [0, 1)")
    return math.sqrt(1.5) * r_max / (1.0 - discount)


def resample_tuples(data, rng_seed) -> TupleDataset:
    """Uniform with-replacement resample of n tuples.

    For an AugmentedDataset the pool is the 3n materialized view but the
    output size stays at the base n.
    """
    rng = as_generator(rng_seed)
    pool = _materialized(data)
    out_n = data.n if isinstance(data, AugmentedDataset) else pool.n
    idx = rng.integers(0, pool.n, size=out_n)
    return TupleDataset(
        pool.s0[idx], pool.s[idx], pool.a[idx], pool.r[idx], pool.sp[idx],
        pool.num_states, pool.num_actions,
    )


def resample_episodes(episodes: EpisodeSet, rng_seed) -> EpisodeSet:
    """Uniform with-replacement resample at episode granularity."""
    rng = as_generator(rng_seed)
    n = len(episodes.episodes)
    idx = rng.integers(0, n, size=n)
    return EpisodeSet(
        tuple(episodes.episodes[i] for i in idx), episodes.num_states, episodes.num_actions
    )


def sample_tuples(mdp, count: int, rng_seed, state_action_dist: np.ndarray | None = None) -> TupleDataset:
    """Draw tuples from the generative data model: s0 from the initial
    distribution, (s, a) from ``state_action_dist`` (uniform by default),
    r from the reward distribution, s' from the transitions."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = as_generator(rng_seed)
    S, A = mdp.num_states, mdp.num_actions
    if state_action_dist is None:
        sa_probs = np.full(S * A, 1.0 / (S * A))
    else:
        sa_probs = np.asarray(state_action_dist, dtype=np.float64).reshape(S * A)
    s0 = rng.choice(S, size=count, p=mdp.initial_dist)
    sa = rng.choice(S * A, size=count, p=sa_probs / sa_probs.sum())
    s, a = sa // A, sa % A
    r = np.empty(count)
    sp = np.empty(count, dtype=np.int64)
    trans_cum = np.cumsum(mdp.transitions, axis=2)
    for i in range(count):
        si, ai = int(s[i]), int(a[i])
        support = mdp.rewards[si][ai]
        u = rng.random()
        acc = 0.0
        r[i] = support[-1][0]
        for value, prob in support:
            acc += prob
            if u < acc:
                r[i] = value
                break
        sp[i] = min(
            int(np.searchsorted(trans_cum[si, ai], rng.random(), side="right")), S - 1
        )
    return TupleDataset(s0, s, a, r, sp, S, A)
