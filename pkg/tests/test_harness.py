import csv
from dataclasses import replace

import numpy as np
import pytest

from infoflow import harness, nn
from infoflow.ddpg import DdpgConfig
from infoflow.env import ConfigError
from infoflow.harness import ExperimentConfig, make_validation_set, run_curiosity
from infoflow.worldmodel import make_forward_model

from conftest import Constant, TrueStep

SMALL = ExperimentConfig(n_episodes=30, validation_size=2000, emp_episodes=5,
                         h1_grid_resolution=11, grid_resolution=9, eval_rollouts=50)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestBookkeeping:
    def test_single_episode(self):
        run = run_curiosity(replace(SMALL, n_episodes=1), 3.0, 0)
        assert run.buffer_size == 10
        assert run.stats.count == 10
        assert len(run.episodes) == 1

    def test_metrics_rows_match_episodes(self, tmp_path):
        run_curiosity(SMALL, 7.0, 1, out_dir=tmp_path)
        rows = read_csv(tmp_path / "metrics.csv")
        assert rows[0] == ["episode", "mean_raw_ig", "mean_norm_reward", "reached_top"]
        assert len(rows) - 1 == SMALL.n_episodes
        assert [int(r[0]) for r in rows[1:]] == list(range(SMALL.n_episodes))

    def test_same_seed_bitwise_identical(self, tmp_path):
        run_curiosity(SMALL, 7.0, 4, out_dir=tmp_path / "a")
        run_curiosity(SMALL, 7.0, 4, out_dir=tmp_path / "b")
        for name in ("metrics.csv", "f.model", "k.model", "actor.model", "critic.model"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        a = run_curiosity(SMALL, 7.0, 4)
        b = run_curiosity(SMALL, 7.0, 5)
        assert not np.array_equal(a.f.net.params, b.f.net.params)

    def test_stats_match_logged_raw_values(self):
        run = run_curiosity(replace(SMALL, n_episodes=3), 2.0, 0)
        assert run.stats.count == 30
        assert run.stats.mean == pytest.approx(np.mean([e.mean_raw_ig for e in run.episodes]),
                                               rel=1e-12)

    def test_random_policy_trains_only_forward_model(self):
        run = run_curiosity(SMALL, 0.0, 0, policy="random")
        assert run.k is None and run.agent is None
        assert run.buffer_size == 300

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            run_curiosity(SMALL, 0.0, 0, policy="greedy")

    def test_alpha_zero_ignores_extended_model(self):
        # with alpha = 0 the k term is multiplied away, so how k is trained cannot matter
        a = run_curiosity(replace(SMALL, k_next_action="policy"), 0.0, 3)
        b = run_curiosity(replace(SMALL, k_next_action="logged"), 0.0, 3)
        assert not np.array_equal(a.k.net.params, b.k.net.params)
        assert np.array_equal(a.f.net.params, b.f.net.params)
        assert np.array_equal(a.agent.actor.params, b.agent.actor.params)
        assert [e.mean_raw_ig for e in a.episodes] == [e.mean_raw_ig for e in b.episodes]

    @pytest.mark.parametrize("mode", ["collect", "sample"])
    def test_normalization_modes_run(self, mode):
        run = run_curiosity(replace(SMALL, normalize_at=mode, n_episodes=5), 3.0, 0)
        assert all(np.isfinite(e.mean_norm_reward) for e in run.episodes)

    def test_first_episode_rewards_are_raw(self):
        # stats start at mean 0 / std 1, so normalized equals raw during episode 0
        run = run_curiosity(replace(SMALL, n_episodes=2), 3.0, 0)
        assert run.episodes[0].mean_norm_reward == pytest.approx(run.episodes[0].mean_raw_ig)


    def test_extra_model_updates(self):
        base = run_curiosity(SMALL, 3.0, 2, policy="random")
        more = run_curiosity(replace(SMALL, model_updates_per_step=3), 3.0, 2, policy="random")
        again = run_curiosity(replace(SMALL, model_updates_per_step=3), 3.0, 2, policy="random")
        assert not np.array_equal(base.f.net.params, more.f.net.params)
        assert np.array_equal(more.f.net.params, again.f.net.params)

    def test_separate_model_batch_draws_its_own_sample(self):
        # an explicit batch size, even equal to the DDPG one, is a second draw
        shared = run_curiosity(SMALL, 3.0, 2)
        own = run_curiosity(replace(SMALL, model_batch_size=SMALL.ddpg.batch_size), 3.0, 2)
        assert not np.array_equal(shared.f.net.params, own.f.net.params)

class TestTopRoomCount:
    def test_stationary_policy_in_bottom_room_counts_zero(self):
        # frozen near-zero actor, no exploration, start mid-bottom-room
        cfg = replace(SMALL, ddpg=DdpgConfig(actor_lr=0.0), reset="fixed:20,5")
        run = run_curiosity(cfg, 7.0, 0, epsilon=0.0)
        assert run.top_room_count == 0
        assert all(e.reached_top == 0 for e in run.episodes)

    def test_start_in_top_room_counts_every_episode(self):
        cfg = replace(SMALL, ddpg=DdpgConfig(actor_lr=0.0), reset="fixed:20,35")
        assert run_curiosity(cfg, 0.0, 0, epsilon=0.0).top_room_count == SMALL.n_episodes
        step_cfg = replace(cfg, top_count_mode="step")
        assert run_curiosity(step_cfg, 0.0, 0, epsilon=0.0).top_room_count == SMALL.n_episodes * 10

    def test_episode_count_bounded_by_episodes(self):
        run = run_curiosity(replace(SMALL, reset="bottom"), 7.0, 0, epsilon=1.0)
        assert 0 <= run.top_room_count <= SMALL.n_episodes
        assert run.top_room_count == sum(e.reached_top for e in run.episodes)


class TestValidation:
    def test_set_is_deterministic_and_valid(self, world):
        a = make_validation_set(world, 1000)
        b = make_validation_set(world, 1000)
        assert a.s.tobytes() == b.s.tobytes()
        assert world.is_valid_many(a.s).all()
        np.testing.assert_array_equal(world.step_many(a.s, a.a), a.s_next)
        assert np.abs(a.a).max() <= 10

    def test_empty_set_rejected(self, world):
        with pytest.raises(ConfigError):
            make_validation_set(world, 0)

    def test_oracle_model_scores_zero(self, world):
        val = make_validation_set(world, 20_000)
        assert harness.evaluate_forward_mse(TrueStep(world), val) == 0.0

    def test_constant_center_matches_monte_carlo(self, world):
        # oracle: uniform box states (the wall lines have measure zero), uniform actions
        rng = np.random.default_rng(777)
        S = rng.uniform(0, 40, size=(1_000_000, 2))
        A = rng.uniform(-10, 10, size=(1_000_000, 2))
        expected = np.mean(np.sum((world.step_many(S, A) - 20.0) ** 2, axis=1))
        val = make_validation_set(world, 100_000)
        got = harness.evaluate_forward_mse(Constant([20.0, 20.0]), val)
        assert got == pytest.approx(expected, rel=0.01)

    def test_chunking_does_not_change_result(self, world, rng):
        f = make_forward_model(rng)
        val = make_validation_set(world, 5000)
        assert harness.evaluate_forward_mse(f, val, chunk=777) == pytest.approx(
            harness.evaluate_forward_mse(f, val), rel=1e-12)

    def test_training_improves_on_initialization(self, world):
        cfg = replace(SMALL, n_episodes=300)
        untrained = make_forward_model(harness._streams(0)[0])
        run = run_curiosity(cfg, 7.0, 0)
        val = make_validation_set(world, 20_000)
        assert (harness.evaluate_forward_mse(run.f, val)
                < harness.evaluate_forward_mse(untrained, val))


class TestExperimentTables:
    def test_experiment_1_schema(self, tmp_path):
        cfg = replace(SMALL, n_episodes=3, alphas=(0.0, 7.0), seeds=(0, 1), validation_size=500)
        rows = harness.run_experiment_1(cfg, tmp_path, extra_epsilons=(0.9,))
        table = read_csv(tmp_path / "experiment1.csv")
        assert table[0] == ["alpha", "seed", "episodes", "epsilon", "mse"]
        assert len(table) - 1 == len(rows) == 2 * 2 + 2 + 2
        assert {r[0] for r in table[1:]} == {"0.0", "7.0", "random"}
        assert all(float(r[4]) >= 0 for r in table[1:])
        assert [r for r in table[1:] if r[0] == "random"][0][3] == "1.0"

    def test_experiment_2_schema(self, tmp_path):
        cfg = replace(SMALL, n_episodes=3, alphas=(0.0,), seeds=(0,))
        rows = harness.run_experiment_2(cfg, tmp_path)
        table = read_csv(tmp_path / "experiment2.csv")
        assert table[0] == ["alpha", "seed", "top_room_count"]
        assert len(rows) == 2
        assert all(int(r[2]) >= 0 for r in table[1:])

    def test_parallel_matches_serial(self):
        cfg = replace(SMALL, n_episodes=3, alphas=(0.0, 3.0), seeds=(0,), validation_size=500)
        serial = harness.run_experiment_1(cfg, include_random=False)
        parallel = harness.run_experiment_1(replace(cfg, parallel_runs=2), include_random=False)
        assert serial == parallel

    def test_random_baseline(self):
        mse, count = harness.run_random_baseline(replace(SMALL, reset="bottom"), 0)
        assert mse > 0 and 0 <= count <= SMALL.n_episodes


class TestExports:
    def test_grid_count(self, world):
        for res in (4, 7, 41):
            xs = np.linspace(0, 40, res)
            on_wall = sum(1 for x in xs for y in xs
                          if (abs(y - 40 / 3) < 1e-9 and not 8 < x < 12)
                          or (abs(y - 80 / 3) < 1e-9 and not 28 < x < 32))
            assert len(harness.grid_states(world, res)) == res * res - on_wall

    def test_constant_actor_gives_uniform_field(self, world):
        rows = harness.export_policy_field(lambda S: np.tile([1.5, -2.0], (len(S), 1)), world, 11)
        arr = np.asarray(rows)
        assert np.all(arr[:, 2] == 1.5) and np.all(arr[:, 3] == -2.0)

    def test_field_is_deterministic(self, world, rng):
        from infoflow.ddpg import make_agent

        agent = make_agent(rng, DdpgConfig())
        assert (harness.export_policy_field(agent, world, 21)
                == harness.export_policy_field(agent, world, 21))

    def test_heatmap_reward_column(self, world):
        h1 = harness.empowerment_h1(SMALL, TrueStep(world), world, 0)
        rows = harness.export_heatmap(world, TrueStep(world), None, h1, 9)
        arr = np.asarray(rows)
        np.testing.assert_array_equal(arr[:, 3], 0.0)  # zero action with the exact model
        np.testing.assert_array_equal(arr[:, 4], arr[:, 2])

    def test_region_means(self):
        rows = [(0.0, 0.0, 0, 0, 1.0), (10.0, 0.0, 0, 0, 3.0), (30.0, 30.0, 0, 0, 100.0)]
        assert harness.region_means(rows, [[0, 0], [10, 1]], 3.0) == 2.0
        with pytest.raises(ValueError):
            harness.region_means(rows, [[20, 20]], 1.0)


class TestEmpowerment:
    def test_constant_model_terminates(self, tmp_path):
        run = harness.run_empowerment(SMALL, Constant([20.0, 20.0]), 0, out_dir=tmp_path)
        assert len(run.episode_returns) == SMALL.emp_episodes
        assert all(np.isfinite(run.episode_returns))
        for name in ("heatmap.csv", "policy_field.csv", "actor.model", "critic.model"):
            assert (tmp_path / name).is_file()
        h1 = np.asarray(run.heatmap)[:, 2]
        np.testing.assert_array_equal(h1, 0.0)

    def test_missing_model(self):
        with pytest.raises(ConfigError):
            harness.run_empowerment(SMALL, None)

    def test_missing_snapshot(self, tmp_path):
        with pytest.raises(ConfigError):
            harness.load_forward_model(tmp_path / "f.model")

    def test_exact_cache_flag(self, world):
        f = TrueStep(world)
        exact = harness.empowerment_h1(replace(SMALL, h1_cache=False), f, world, 0)
        cached = harness.empowerment_h1(SMALL, f, world, 0)
        pts = np.array([[20.0, 5.0], [20.0, 35.0]])
        assert exact(pts).shape == cached(pts).shape == (2,)

    def test_snapshot_round_trip(self, tmp_path, rng):
        f = make_forward_model(rng)
        nn.save_params(f.net, tmp_path / "f.model")
        g = harness.load_forward_model(tmp_path / "f.model")
        S = rng.uniform(0, 40, (10, 2))
        A = rng.uniform(-10, 10, (10, 2))
        assert f(S, A).tobytes() == g(S, A).tobytes()

    def test_door_proximity_of_door_seeking_policy(self, world):
        doors = world.geometry.door_centers

        class Seeker:
            def policy(self, S):
                d = doors[np.argmin(np.linalg.norm(S[:, None] - doors[None], axis=2), axis=1)] - S
                return np.clip(d, -10, 10)

        d_pi, d_rand = harness.door_proximity_gain(world, Seeker(), 500, 10)
        assert d_pi < d_rand


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(n_episodes=0), dict(validation_size=0),
                                    dict(epsilon=2.0), dict(alphas=(-1.0,)),
                                    dict(normalize_at="never"), dict(reset="sky"),
                                    dict(model_updates_per_step=0), dict(model_batch_size=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_paper_scale(self):
        cfg = harness.paper_scale(ExperimentConfig())
        assert cfg.n_episodes == 150_000 and cfg.validation_size == 10**7
        assert cfg.alphas == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)

    def test_env_seed(self, monkeypatch):
        monkeypatch.delenv("INFOFLOW_SEED", raising=False)
        assert harness.env_seed(3) == 3
        monkeypatch.setenv("INFOFLOW_SEED", "17")
        assert harness.env_seed() == 17
