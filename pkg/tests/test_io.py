"""File-format round trips for MDPs, policies, episodes, and tuples."""

import json

import numpy as np
import pytest

from opeci import (
    ValidationError,
    exact_policy_value,
    make_frozen_lake,
    make_random_mdp,
    make_random_policy,
    optimal_policy,
    sample_episodes,
    tuples_from_episodes,
)
from opeci.io import (
    load_episodes,
    load_mdp,
    load_policy,
    load_tuples,
    save_episodes,
    save_mdp,
    save_policy,
    save_tuples,
)


class TestMdpFiles:
    def test_round_trip_preserves_evaluation(self, tmp_path):
        mdp = make_random_mdp(4, 3, 0.9, rng_seed=1)
        policy = make_random_policy(4, 3, rng_seed=2)
        path = tmp_path / "mdp.json"
        save_mdp(mdp, path)
        loaded = load_mdp(path)
        assert loaded.num_states == 4
        assert np.array_equal(loaded.transitions, mdp.transitions)
        assert loaded.rewards == mdp.rewards
        assert exact_policy_value(loaded, policy) == exact_policy_value(mdp, policy)

    def test_grid_spec_loads_as_lake(self, tmp_path):
        path = tmp_path / "lake.json"
        path.write_text(json.dumps({"map": ["SF", "FG"], "slip_prob": 0.0, "discount": 0.9}))
        mdp = load_mdp(path)
        assert mdp.num_states == 5  # 4 cells + sink
        assert mdp.discount == 0.9

    def test_terminal_states_survive(self, tmp_path):
        mdp = make_frozen_lake()
        path = tmp_path / "lake_full.json"
        save_mdp(mdp, path)
        assert load_mdp(path).terminal_states == mdp.terminal_states

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError):
            load_mdp(path)
        path.write_text(json.dumps({"num_states": 2}))
        with pytest.raises(ValidationError):
            load_mdp(path)
        with pytest.raises(ValidationError):
            load_mdp(tmp_path / "missing.json")


class TestPolicyFiles:
    def test_round_trip(self, tmp_path):
        policy = make_random_policy(5, 2, rng_seed=3)
        path = tmp_path / "policy.json"
        save_policy(policy, path)
        assert np.array_equal(load_policy(path).probs, policy.probs)

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"wrong": 1}))
        with pytest.raises(ValidationError):
            load_policy(path)


class TestEpisodeFiles:
    def test_round_trip_exact(self, tmp_path):
        mdp = make_frozen_lake()
        behavior = optimal_policy(mdp)
        episodes = sample_episodes(mdp, behavior, 12, 60, rng_seed=4)
        path = tmp_path / "episodes.jsonl"
        save_episodes(episodes, path, discount=mdp.discount)
        loaded, discount = load_episodes(path)
        assert loaded == episodes
        assert discount == mdp.discount

    def test_one_json_line_per_episode_plus_header(self, tmp_path):
        mdp = make_frozen_lake()
        episodes = sample_episodes(mdp, optimal_policy(mdp), 5, 60, rng_seed=5)
        path = tmp_path / "episodes.jsonl"
        save_episodes(episodes, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 6
        assert "meta" in json.loads(lines[0])
        for line in lines[1:]:
            json.loads(line)

    def test_empty_or_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("")
        with pytest.raises(ValidationError):
            load_episodes(path)
        path.write_text('{"meta": {"num_states": 1}}\n{"oops": 1}\n')
        with pytest.raises(ValidationError):
            load_episodes(path)


class TestTupleFiles:
    def test_round_trip(self, tmp_path):
        mdp = make_frozen_lake()
        behavior = optimal_policy(mdp)
        data = tuples_from_episodes(sample_episodes(mdp, behavior, 10, 60, rng_seed=6))
        path = tmp_path / "tuples.jsonl"
        save_tuples(data, path)
        loaded = load_tuples(path, num_states=mdp.num_states, num_actions=mdp.num_actions)
        assert loaded.n == data.n
        assert np.array_equal(loaded.r, data.r)
        assert np.array_equal(loaded.s, data.s)

    def test_five_field_records(self, tmp_path):
        data = tuples_from_episodes(
            sample_episodes(make_frozen_lake(), optimal_policy(make_frozen_lake()), 2, 30, 7)
        )
        path = tmp_path / "tuples.jsonl"
        save_tuples(data, path)
        for line in path.read_text().strip().splitlines():
            assert set(json.loads(line)) == {"s0", "s", "a", "r", "sp"}

    def test_size_inference(self, tmp_path):
        path = tmp_path / "tuples.jsonl"
        path.write_text('{"s0": 0, "s": 3, "a": 1, "r": 0.5, "sp": 2}\n')
        loaded = load_tuples(path)
        assert loaded.num_states == 4 and loaded.num_actions == 2
