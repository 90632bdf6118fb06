"""Influence functional, finite-difference agreement, and the blow-up probe."""

import numpy as np
import pytest

from opeci import (
    PriorSpec,
    TupleDataset,
    UnvisitedPairError,
    build_empirical_model,
    check_gradients,
    counterexample_blowup_probe,
    dm_value,
    finite_difference_influence,
    influence,
    make_random_mdp,
    make_random_policy,
    uniform_policy,
)
from opeci.dm import empirical_on_policy_distribution
from opeci.empirical import sample_tuples
from opeci.errors import ValidationError


def full_support_case(seed, num_states=4, num_actions=2, gamma=0.8):
    mdp = make_random_mdp(num_states, num_actions, gamma, rng_seed=seed)
    policy = make_random_policy(num_states, num_actions, rng_seed=seed + 1)
    extra = sample_tuples(mdp, 12 * num_states * num_actions, rng_seed=seed + 2)
    s = np.repeat(np.arange(num_states), num_actions)
    a = np.tile(np.arange(num_actions), num_states)
    data = TupleDataset(
        np.append(extra.s0, np.zeros(len(s), dtype=int)),
        np.append(extra.s, s),
        np.append(extra.a, a),
        np.append(extra.r, np.zeros(len(s))),
        np.append(extra.sp, np.zeros(len(s), dtype=int)),
        num_states,
        num_actions,
    )
    return mdp, policy, data


class TestInfluence:
    def test_all_rewards_one_stationary_tuple(self):
        # exhaustive all-ones model: V is 1/(1-g) everywhere, so a consistent
        # tuple (r*=1) is a stationarity direction and every term vanishes
        data = TupleDataset.from_tuples(
            [(s0, s, 0, 1.0, sp) for s0 in range(2) for s in range(2) for sp in range(2)], 2, 1
        )
        model = build_empirical_model(data, discount=0.6)
        policy = uniform_policy(2, 1)
        breakdown = influence(model, policy, (0, 1, 0, 1.0, 0))
        assert breakdown.reward_term == pytest.approx(0.0, abs=1e-12)
        assert breakdown.initial_state_term == pytest.approx(0.0, abs=1e-12)
        assert breakdown.next_state_term == pytest.approx(0.0, abs=1e-12)
        assert breakdown.total == pytest.approx(0.0, abs=1e-12)

    def test_total_is_sum_of_terms(self):
        _, policy, data = full_support_case(100)
        model = build_empirical_model(data, discount=0.8)
        breakdown = influence(model, policy, (0, 1, 1, 0.4, 2))
        assert breakdown.total == pytest.approx(
            breakdown.reward_term + breakdown.initial_state_term + breakdown.next_state_term,
            abs=1e-12,
        )

    def test_matches_finite_difference(self):
        _, policy, data = full_support_case(200)
        model = build_empirical_model(data, discount=0.8)
        rng = np.random.default_rng(0)
        for _ in range(20):
            tup = (
                int(rng.integers(4)), int(rng.integers(4)), int(rng.integers(2)),
                float(rng.uniform(-1, 1)), int(rng.integers(4)),
            )
            closed = influence(model, policy, tup).total
            fd = finite_difference_influence(data, policy, tup, 1e-6, 0.0, discount=0.8)
            assert abs(closed - fd) < 1e-4 * max(abs(closed), abs(fd), 0.01)

    def test_unvisited_pair_kappa_zero_raises(self):
        data = TupleDataset.from_tuples([(0, 0, 0, 1.0, 1)], 3, 2)
        model = build_empirical_model(data, kappa=0.0, discount=0.5)
        with pytest.raises(UnvisitedPairError):
            influence(model, uniform_policy(3, 2), (0, 2, 1, 0.0, 0))

    def test_kappa_positive_handles_unvisited(self):
        data = TupleDataset.from_tuples([(0, 0, 0, 1.0, 1)], 3, 2)
        model = build_empirical_model(data, kappa=0.5, discount=0.5)
        policy = uniform_policy(3, 2)
        tup = (0, 2, 1, 0.3, 0)
        closed = influence(model, policy, tup).total
        fd = finite_difference_influence(data, policy, tup, 1e-7, 0.5, discount=0.5)
        assert abs(closed - fd) < 1e-4 * max(abs(closed), abs(fd), 0.01)

    def test_zero_mean_over_data_distribution(self):
        for kappa in (0.0, 0.3):
            _, policy, data = full_support_case(300)
            model = build_empirical_model(data, kappa=kappa, discount=0.8)
            total = sum(
                influence(model, policy, data.tuple_at(i)).total for i in range(data.n)
            )
            assert abs(total / data.n) < 1e-9

    def test_weight_ratio_sup_agreement(self):
        _, policy, data = full_support_case(400)
        model = build_empirical_model(data, discount=0.8)
        sup_from_tuples = max(
            influence(model, policy, data.tuple_at(i)).weight_ratio for i in range(data.n)
        )
        dpi = empirical_on_policy_distribution(model, policy)
        mass = model.pair_mass()
        visited = mass > 0
        sup_direct = float((dpi[visited] / mass[visited]).max())
        assert sup_from_tuples == pytest.approx(sup_direct, rel=1e-12)


class TestFiniteDifference:
    def test_t_one_single_tuple_self_mixture(self):
        data = TupleDataset.from_tuples([(0, 0, 0, 1.0, 0)], 1, 1)
        fd = finite_difference_influence(
            data, uniform_policy(1, 1), (0, 0, 0, 1.0, 0), 1.0, 0.0, discount=0.5
        )
        assert fd == pytest.approx(0.0, abs=1e-12)

    def test_richardson_linearity(self):
        _, policy, data = full_support_case(500)
        tup = (0, 2, 1, 0.7, 3)
        coarse = finite_difference_influence(data, policy, tup, 1e-4, 0.0, discount=0.8)
        fine = finite_difference_influence(data, policy, tup, 1e-6, 0.0, discount=0.8)
        assert abs(coarse - fine) < 1e-2 * max(1.0, abs(fine))

    def test_invalid_t_rejected(self):
        data = TupleDataset.from_tuples([(0, 0, 0, 1.0, 0)], 1, 1)
        with pytest.raises(ValidationError):
            finite_difference_influence(
                data, uniform_policy(1, 1), (0, 0, 0, 1.0, 0), 0.0, 0.0, discount=0.5
            )


class TestCheckGradients:
    def test_full_support_suite_passes(self):
        report = check_gradients(cases=8, tuples_per_case=25, tol=1e-3, rng_seed=1)
        assert report.passed
        assert report.max_rel_error < 1e-3

    def test_sparse_kappa_zero_reports_breach(self):
        report = check_gradients(
            cases=4, tuples_per_case=25, tol=1e-3, rng_seed=2, full_support=False
        )
        assert not report.passed
        assert any(c.error is not None for c in report.cases)

    def test_sparse_with_kappa_passes(self):
        report = check_gradients(
            cases=6, tuples_per_case=25, tol=1e-3, kappa=0.1, rng_seed=3, full_support=False
        )
        assert report.passed


class TestBlowupProbe:
    def test_kappa_zero_quotients_grow_inverse_epsilon(self):
        points = counterexample_blowup_probe(50, 0.0, (0.1, 0.01, 0.001))
        quotients = [abs(q) for _, q in points]
        assert quotients[2] / quotients[0] >= 50

    def test_kappa_one_quotients_converge(self):
        points = counterexample_blowup_probe(50, 1.0, (0.1, 0.01, 0.001, 0.0001))
        quotients = [q for _, q in points]
        assert abs(quotients[-1] - quotients[-2]) < 0.01 * abs(quotients[-1])
        # successive gaps shrink toward the limit
        gaps = [abs(b - a) for a, b in zip(quotients, quotients[1:])]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_limit_direction_is_flat_at_kappa_zero(self):
        points = counterexample_blowup_probe(
            50, 0.0, (0.1, 0.01, 0.001), include_unvisited_mass=False
        )
        assert all(abs(q) < 1e-12 for _, q in points)

    def test_base_value_shift_matches_prior_mass(self):
        # the re-assigned branch leaves the model value above the true 1/4 by
        # exactly the on-policy mass of the emptied pair (reward prior is 1)
        from opeci import on_policy_distribution
        from opeci.sensitivity import _chain_tuple_distribution, _point_transition_prior

        n = 50
        mdp, policy, data, weights = _chain_tuple_distribution(n, 0.5)
        probe_prior = PriorSpec(
            reward_mean=1.0,
            transition_probs=_point_transition_prior(mdp.num_states, 1, mdp.num_states - 1),
        )
        model = build_empirical_model(
            data, probe_prior, kappa=0.0, discount=0.5, weights=weights
        )
        moved = on_policy_distribution(mdp, policy)[n, 0]
        assert dm_value(model, policy) == pytest.approx(0.25 + moved, abs=1e-12)

    def test_step_validation(self):
        with pytest.raises(ValidationError):
            counterexample_blowup_probe(10, 0.0, (0.01, 0.1))
        with pytest.raises(ValidationError):
            counterexample_blowup_probe(10, 0.0, (1.5, 0.1))
