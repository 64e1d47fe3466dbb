"""Training loops and experiment drivers.

``run_curiosity`` is the curiosity agent's training loop: act, step, score
the transition, store it, sample a minibatch, train f, k and DDPG on it, and
refresh the reward statistics at every episode end. The experiment drivers
sweep it over alphas and seeds and write CSV tables.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from infoflow import intrinsic, nn
from infoflow.ddpg import (Agent, DdpgConfig, ReplayBuffer, Transition, make_agent,
                           select_action, train_step)
from infoflow.env import ConfigError, ResetMode, World, WorldGeometry
from infoflow.worldmodel import (ForwardModel, STATE_SCALE, ACTION_SCALE, make_extended_model,
                                 make_forward_model, train_models)

logger = logging.getLogger(__name__)

VALIDATION_SEED = 20180101


@dataclass
class ExperimentConfig:
    n_episodes: int = 20_000
    steps_per_episode: int = 10
    alphas: tuple[float, ...] = (0.0, 3.0, 7.0)
    epsilon: float = 0.5
    reset: str = "anywhere"
    seeds: tuple[int, ...] = (0, 1, 2)
    validation_size: int = 100_000
    validation_seed: int = VALIDATION_SEED
    geometry: str | None = None
    action_norm: str = "box"
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    model_hidden: tuple[int, ...] = (64, 64)
    model_activation: str = "relu"
    model_lr: float = 1e-3
    model_batch_size: int | None = None   # None: reuse the DDPG minibatch
    model_updates_per_step: int = 1
    normalize_at: str = "sample"       # or "collect"
    k_next_action: str = "policy"      # or "logged"
    top_count_mode: str = "episode"    # or "step"
    # empowerment agent
    emp_episodes: int = 4_000
    emp_epsilon: float = 0.5
    n_action_samples: int = 32
    h1_cache: bool = True
    h1_grid_resolution: int = 81
    eval_rollouts: int = 1_000
    grid_resolution: int = 41
    parallel_runs: int = 1

    def __post_init__(self):
        if self.n_episodes < 1 or self.steps_per_episode < 1:
            raise ConfigError("n_episodes and steps_per_episode must be positive")
        if self.model_updates_per_step < 1 or (self.model_batch_size is not None
                                                and self.model_batch_size < 1):
            raise ConfigError("model_updates_per_step and model_batch_size must be positive")
        if self.validation_size < 1:
            raise ConfigError("validation_size must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if any(a < 0 for a in self.alphas):
            raise ConfigError("alphas must be >= 0")
        for name, allowed in (("normalize_at", ("sample", "collect")),
                              ("k_next_action", ("policy", "logged")),
                              ("top_count_mode", ("episode", "step"))):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        ResetMode.parse(self.reset)

    def world(self) -> World:
        geom = WorldGeometry.load(self.geometry) if self.geometry else None
        return World(geom, action_norm=self.action_norm)


@dataclass
class EpisodeRecord:
    episode: int
    mean_raw_ig: float
    mean_norm_reward: float
    reached_top: int


@dataclass(eq=False)
class CuriosityRun:
    alpha: float
    seed: int
    epsilon: float
    policy: str
    episodes: list[EpisodeRecord]
    f: ForwardModel
    k: object
    agent: Agent | None
    stats: intrinsic.RewardStats
    buffer_size: int
    top_room_count: int


@dataclass
class ValidationSet:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return len(self.s)


def make_validation_set(world: World, n: int, seed: int = VALIDATION_SEED) -> ValidationSet:
    """Uniform valid states, uniform box actions, true next states.

    Drawn from its own seed so it never shares a stream with training.
    """
    if n < 1:
        raise ConfigError("validation set must be non-empty")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A11D]))
    s = world.sample_valid_states(rng, n)
    a = world.sample_actions(rng, n)
    return ValidationSet(s, a, world.step_many(s, a))


def evaluate_forward_mse(f, val: ValidationSet, chunk: int = 65_536) -> float:
    """Mean over the set of ||s' - f(s, a)||^2."""
    if len(val) == 0:
        raise ConfigError("empty validation set")
    total = 0.0
    for i in range(0, len(val), chunk):
        d = val.s_next[i:i + chunk] - f(val.s[i:i + chunk], val.a[i:i + chunk])
        total += float(np.sum(d * d))
    return total / len(val)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(4)]  # init, env, act, replay


def run_curiosity(cfg: ExperimentConfig, alpha: float, seed: int, epsilon: float | None = None,
                  reset: str | None = None, policy: str = "ddpg",
                  out_dir=None) -> CuriosityRun:
    """Train the curiosity agent (or the uniform-random baseline) and its world models.

    ``policy="random"`` replaces pi by uniform actions everywhere and trains
    only f; rewards are then not computed.
    """
    if policy not in ("ddpg", "random"):
        raise ConfigError(f"unknown policy {policy!r}")
    eps = cfg.epsilon if epsilon is None else epsilon
    mode = ResetMode.parse(reset or cfg.reset)
    world = cfg.world()
    rng_init, rng_env, rng_act, rng_replay = _streams(seed)

    f = make_forward_model(rng_init, cfg.model_hidden, cfg.model_activation, cfg.model_lr)
    learning = policy == "ddpg"
    k = make_extended_model(rng_init, cfg.model_hidden, cfg.model_activation,
                            cfg.model_lr) if learning else None
    agent = make_agent(rng_init, cfg.ddpg) if learning else None
    cur_cfg = intrinsic.CuriosityConfig(alpha)
    stats = intrinsic.RewardStats()
    buffer = ReplayBuffer(min(cfg.ddpg.buffer_capacity, cfg.n_episodes * cfg.steps_per_episode))
    top = world.geometry.room_id("top")
    K = cfg.steps_per_episode
    B = cfg.ddpg.batch_size

    if cfg.normalize_at == "sample":
        def reward_fn(mb):
            return intrinsic.normalize(mb.raw_reward, stats)
    else:
        def reward_fn(mb):
            return mb.raw_reward

    records: list[EpisodeRecord] = []
    top_count = 0
    for ep in range(cfg.n_episodes):
        s = world.reset(mode, rng_env)
        raws = np.zeros(K)
        norms = np.zeros(K)
        reached = 0
        try:
            for t in range(K):
                if learning:
                    a = world.clip_action(select_action(agent, s, eps, rng_act))
                else:
                    a = world.sample_actions(rng_act)
                s2 = world.step(s, a)
                if learning:
                    a2 = agent.policy(s2)
                    raw = intrinsic.curiosity_raw(s, a, s2, a2, f, k, cur_cfg)
                    norm = intrinsic.normalize(raw, stats)
                else:
                    a2, raw, norm = None, 0.0, 0.0
                raws[t], norms[t] = raw, norm
                stored = norm if cfg.normalize_at == "collect" else raw
                buffer.store(Transition(s, a, s2, stored, t == K - 1, a2))
                if world.room_of(s2) == top:
                    if cfg.top_count_mode == "step":
                        top_count += 1
                    reached = 1
                mb = buffer.sample(B, rng_replay)
                for u in range(cfg.model_updates_per_step):
                    mmb = mb if u == 0 and cfg.model_batch_size is None else \
                        buffer.sample(cfg.model_batch_size or B, rng_replay)
                    train_models(f, k, mmb, agent.policy if learning else None, cfg.k_next_action)
                if learning:
                    train_step(agent, mb, reward_fn, cfg.ddpg)
                s = s2
        except nn.NumericError as exc:
            raise nn.NumericError(f"episode {ep}, step {t}: {exc}") from exc
        if cfg.top_count_mode == "episode":
            top_count += reached
        if learning:
            stats = intrinsic.update_stats(stats, raws)
        records.append(EpisodeRecord(ep, float(raws.mean()), float(norms.mean()), reached))

    run = CuriosityRun(alpha, seed, eps, policy, records, f, k, agent, stats, len(buffer),
                       top_count)
    if out_dir is not None:
        save_run(run, out_dir)
    return run


def save_run(run: CuriosityRun, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "metrics.csv", ("episode", "mean_raw_ig", "mean_norm_reward", "reached_top"),
              [(r.episode, r.mean_raw_ig, r.mean_norm_reward, r.reached_top) for r in run.episodes])
    nn.save_params(run.f.net, out / "f.model")
    if run.k is not None:
        nn.save_params(run.k.net, out / "k.model")
    if run.agent is not None:
        nn.save_params(run.agent.actor, out / "actor.model")
        nn.save_params(run.agent.critic, out / "critic.model")
    (out / "stats.txt").write_text(
        f"mean={run.stats.mean!r}\nstd={run.stats.std!r}\ncount={run.stats.count}\n"
        f"top_room_count={run.top_room_count}\n")


def load_forward_model(path) -> ForwardModel:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"forward model snapshot {path} not found")
    net = nn.load_params(path)
    if net.n_inputs != 4 or net.n_outputs != 2:
        raise ConfigError(f"{path}: not a forward model (layers {net.layer_sizes})")
    return ForwardModel(net, nn.Adam.for_net(net, 0.0), STATE_SCALE, ACTION_SCALE)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _map(fn, jobs, parallel: int):
    if parallel <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _exp1_job(cfg, alpha, seed, epsilon, policy):
    world = cfg.world()
    run = run_curiosity(cfg, alpha, seed, epsilon=epsilon, policy=policy)
    val = make_validation_set(world, cfg.validation_size, cfg.validation_seed)
    return evaluate_forward_mse(run.f, val)


def run_experiment_1(cfg: ExperimentConfig, out_dir=None, extra_epsilons=(),
                     include_random: bool = True) -> list[tuple]:
    """Validation MSE per (alpha, seed); rows ``(alpha, seed, episodes, epsilon, mse)``.

    ``extra_epsilons`` adds runs at the largest alpha with other exploration
    rates; the random baseline is reported with alpha ``"random"``.
    """
    jobs = [(cfg, a, s, cfg.epsilon, "ddpg") for a in cfg.alphas for s in cfg.seeds]
    top_alpha = max(cfg.alphas)
    jobs += [(cfg, top_alpha, s, e, "ddpg") for e in extra_epsilons for s in cfg.seeds]
    if include_random:
        jobs += [(cfg, 0.0, s, 1.0, "random") for s in cfg.seeds]
    mses = _map(_exp1_job, jobs, cfg.parallel_runs)
    rows = [("random" if j[4] == "random" else j[1], j[2], cfg.n_episodes, j[3], m)
            for j, m in zip(jobs, mses)]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / "experiment1.csv",
                  ("alpha", "seed", "episodes", "epsilon", "mse"), rows)
    return rows


def _exp2_job(cfg, alpha, seed, policy):
    return run_curiosity(cfg, alpha, seed, reset="bottom", policy=policy).top_room_count


def run_experiment_2(cfg: ExperimentConfig, out_dir=None, include_random: bool = True) -> list[tuple]:
    """Top-room counts per (alpha, seed) with bottom-room resets; rows ``(alpha, seed, count)``."""
    jobs = [(cfg, a, s, "ddpg") for a in cfg.alphas for s in cfg.seeds]
    if include_random:
        jobs += [(cfg, 0.0, s, "random") for s in cfg.seeds]
    counts = _map(_exp2_job, jobs, cfg.parallel_runs)
    rows = [("random" if j[3] == "random" else j[1], j[2], c) for j, c in zip(jobs, counts)]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / "experiment2.csv", ("alpha", "seed", "top_room_count"), rows)
    return rows


def run_random_baseline(cfg: ExperimentConfig, seed: int, reset: str | None = None,
                        val: ValidationSet | None = None) -> tuple[float, int]:
    """(validation MSE, top-room count) for uniform-random acting with f trained identically."""
    run = run_curiosity(cfg, 0.0, seed, reset=reset, policy="random")
    if val is None:
        val = make_validation_set(cfg.world(), cfg.validation_size, cfg.validation_seed)
    return evaluate_forward_mse(run.f, val), run.top_room_count


# --- empowerment -----------------------------------------------------------

@dataclass(eq=False)
class EmpowermentRun:
    agent: Agent
    heatmap: list[tuple]
    policy_field: list[tuple]
    episode_returns: list[float]


def empowerment_h1(cfg: ExperimentConfig, f, world: World, seed: int):
    """H1 as a function of state: cached grid (default) or exact resampling."""
    ecfg = intrinsic.EmpowermentConfig(cfg.n_action_samples, -world.action_bound,
                                       world.action_bound)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE1]))
    if cfg.h1_cache:
        return intrinsic.H1Grid(f, ecfg, rng, world.width, world.height, cfg.h1_grid_resolution)
    return lambda S: intrinsic.h1_spread_many(S, f, ecfg, rng)


def run_empowerment(cfg: ExperimentConfig, f, seed: int = 0, out_dir=None) -> EmpowermentRun:
    """Train a DDPG agent on the stationary empowerment reward of a frozen forward model.

    The reward of transition (s, a, s') is H1(s) - ||s' - f(s, a)||, with
    a the executed action (equal to pi(s) whenever the agent acts greedily).
    """
    if f is None:
        raise ConfigError("empowerment needs a pretrained forward model")
    world = cfg.world()
    rng_init, rng_env, rng_act, rng_replay = _streams(seed)
    h1 = empowerment_h1(cfg, f, world, seed)
    agent = make_agent(rng_init, cfg.ddpg)
    K = cfg.steps_per_episode
    buffer = ReplayBuffer(min(cfg.ddpg.buffer_capacity, cfg.emp_episodes * K))
    mode = ResetMode.parse("anywhere")
    returns = []
    for ep in range(cfg.emp_episodes):
        s = world.reset(mode, rng_env)
        ret = 0.0
        for t in range(K):
            a = world.clip_action(select_action(agent, s, cfg.emp_epsilon, rng_act))
            s2 = world.step(s, a)
            r = float(h1(s[None, :])[0]) - float(intrinsic.h2_error(s, s2, a, f))
            ret += r
            buffer.store(Transition(s, a, s2, r, t == K - 1))
            mb = buffer.sample(cfg.ddpg.batch_size, rng_replay)
            train_step(agent, mb, lambda m: m.raw_reward, cfg.ddpg)
            s = s2
        returns.append(ret)
    heat = export_heatmap(world, f, agent, h1, cfg.grid_resolution)
    field_rows = export_policy_field(agent, world, cfg.grid_resolution)
    run = EmpowermentRun(agent, heat, field_rows, returns)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "heatmap.csv", ("x", "y", "h1", "h2", "reward"), heat)
        write_csv(out / "policy_field.csv", ("x", "y", "ax", "ay"), field_rows)
        nn.save_params(agent.actor, out / "actor.model")
        nn.save_params(agent.critic, out / "critic.model")
    return run


def grid_states(world: World, resolution: int) -> np.ndarray:
    """Regular resolution x resolution grid over the arena minus points on walls."""
    xs = np.linspace(0.0, world.width, resolution)
    ys = np.linspace(0.0, world.height, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[world.is_valid_many(pts)]


def export_heatmap(world: World, f, agent: Agent | None, h1, resolution: int) -> list[tuple]:
    """Rows (x, y, h1, h2, reward); h2 uses the greedy action (or a zero action without an agent)."""
    pts = grid_states(world, resolution)
    h1v = h1(pts)
    acts = agent.policy(pts) if agent is not None else np.zeros_like(pts)
    acts = world.clip_action(acts)
    nxt = world.step_many(pts, acts)
    h2v = intrinsic.h2_error(pts, nxt, acts, f)
    return [(x, y, a, b, a - b) for (x, y), a, b in zip(pts, h1v, h2v)]


def export_policy_field(actor, world: World, resolution: int) -> list[tuple]:
    """Rows (x, y, ax, ay) of the deterministic policy on the valid grid."""
    pts = grid_states(world, resolution)
    acts = actor.policy(pts) if hasattr(actor, "policy") else np.asarray(actor(pts))
    return [(x, y, ax, ay) for (x, y), (ax, ay) in zip(pts, acts)]


def rollout_final_states(world: World, policy, n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Final positions of ``n`` K-step rollouts from uniform starts.

    ``policy`` maps a (n, 2) state batch to actions, or is ``None`` for
    uniform-random actions.
    """
    S = world.sample_valid_states(rng, n)
    for _ in range(K):
        A = world.sample_actions(rng, n) if policy is None else policy(S)
        S = world.step_many(S, A)
    return S


def door_proximity_gain(world: World, agent: Agent, n: int, K: int, seed: int = 0) -> tuple[float, float]:
    """Mean final distance to the nearest door for the greedy policy and for random acting."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD00]))
    d_pi = world.door_distance_many(rollout_final_states(world, agent.policy, n, K, rng)).mean()
    d_rand = world.door_distance_many(rollout_final_states(world, None, n, K, rng)).mean()
    return float(d_pi), float(d_rand)


def region_means(rows, centers, radius: float) -> float:
    """Mean reward over heat-map cells within ``radius`` of any of ``centers``."""
    arr = np.asarray([r[:2] + (r[4],) for r in rows], dtype=np.float64)
    d = np.min(np.linalg.norm(arr[:, None, :2] - np.asarray(centers)[None], axis=2), axis=1)
    sel = d <= radius
    if not sel.any():
        raise ValueError("no heat-map cells inside the region")
    return float(arr[sel, 2].mean())


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, n_episodes=150_000, validation_size=10_000_000,
                   alphas=tuple(float(a) for a in range(8)))


def env_seed(default: int = 0) -> int:
    return int(os.environ.get("INFOFLOW_SEED", default))
