"""Curiosity with homeostatic regulation and one-step approximated empowerment.

Curiosity (per transition)::

    IG_alpha = ||s' - f(s, a)|| - alpha * ||s' - k(s, a, a')||
    R        = (IG_alpha - mean) / std        # stats over every raw value so far

Empowerment (per state)::

    H1 = mean_i ||f(s, a_i) - mean_j f(s, a_j)||,   a_i ~ U(action box)
    H2 = ||s' - f(s, pi(s))||
    R  = H1 - H2

``f`` and ``k`` are any callables on batched inputs; the trained models from
:mod:`infoflow.worldmodel` qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


def _l2(d: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(d * d, axis=-1))


@dataclass
class CuriosityConfig:
    alpha: float = 0.0

    def __post_init__(self):
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def forward_error(s, a, s_next, f) -> np.ndarray:
    """||s' - f(s, a)||, the plain prediction-error curiosity signal."""
    return _l2(np.asarray(s_next, dtype=np.float64) - f(s, a))


def curiosity_raw(s, a, s_next, a_next, f, k, cfg: CuriosityConfig):
    """Raw homeostatic curiosity for one transition or a batch of them."""
    e_f = forward_error(s, a, s_next, f)
    e_k = _l2(np.asarray(s_next, dtype=np.float64) - k(s, a, a_next))
    out = e_f - cfg.alpha * e_k
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class RewardStats:
    """Running mean / population std of raw curiosity values.

    ``std`` is the raw statistic; :attr:`scale` is the divisor actually used,
    with degenerate spreads replaced by 1. The initial state (mean 0, std 1)
    leaves rewards untouched until the first episode ends.
    """
    mean: float = 0.0
    std: float = 1.0
    count: int = 0
    _m2: float = 0.0

    @property
    def scale(self) -> float:
        return self.std if self.std >= STD_FLOOR else 1.0


def update_stats(stats: RewardStats, new_values) -> RewardStats:
    """Fold the raw values collected since the last update into ``stats``.

    Uses the pairwise (Chan et al.) merge of count/mean/M2, so the result
    matches a batch mean/std over every value seen since the run started.
    """
    x = np.asarray(new_values, dtype=np.float64).ravel()
    if x.size == 0:
        return stats
    n_b = x.size
    mean_b = float(np.mean(x))
    m2_b = float(np.sum((x - mean_b) ** 2))
    n_a = stats.count
    if n_a == 0:
        mean, m2, n = mean_b, m2_b, n_b
    else:
        n = n_a + n_b
        delta = mean_b - stats.mean
        mean = stats.mean + delta * n_b / n
        m2 = stats._m2 + m2_b + delta * delta * n_a * n_b / n
    return RewardStats(mean=mean, std=float(np.sqrt(max(m2, 0.0) / n)), count=n, _m2=m2)


def normalize(raw, stats: RewardStats):
    return (raw - stats.mean) / stats.scale


@dataclass
class EmpowermentConfig:
    n_action_samples: int = 32
    action_low: float = -10.0
    action_high: float = 10.0

    def __post_init__(self):
        if self.n_action_samples < 2:
            raise ValueError("n_action_samples must be >= 2")
        if not self.action_low < self.action_high:
            raise ValueError("action_low must be < action_high")


def h1_spread_many(S, f, cfg: EmpowermentConfig, rng: np.random.Generator) -> np.ndarray:
    """Spread of predicted next states under uniform actions, for each row of ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    n, N = len(S), cfg.n_action_samples
    A = rng.uniform(cfg.action_low, cfg.action_high, size=(n, N, 2))
    pred = np.asarray(f(np.repeat(S, N, axis=0), A.reshape(n * N, 2))).reshape(n, N, 2)
    centre = pred.mean(axis=1, keepdims=True)
    return _l2(pred - centre).mean(axis=1)


def h1_spread(s, f, cfg: EmpowermentConfig, rng: np.random.Generator) -> float:
    return float(h1_spread_many(np.asarray(s)[None, :], f, cfg, rng)[0])


def h2_error(s, s_next, policy_action, f):
    return forward_error(s, policy_action, s_next, f)


def empowerment_reward(s, s_next, policy_action, f, cfg: EmpowermentConfig,
                       rng: np.random.Generator) -> float:
    return h1_spread(s, f, cfg, rng) - float(h2_error(s, s_next, policy_action, f))


class H1Grid:
    """H1 precomputed on a regular grid, bilinearly interpolated.

    The forward model is frozen while the empowerment agent trains, so the
    spread term is a fixed function of the state.
    """

    def __init__(self, f, cfg: EmpowermentConfig, rng: np.random.Generator,
                 width: float = 40.0, height: float = 40.0, resolution: int = 81):
        self.xs = np.linspace(0.0, width, resolution)
        self.ys = np.linspace(0.0, height, resolution)
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        self.values = h1_spread_many(pts, f, cfg, rng).reshape(resolution, resolution)

    def __call__(self, S) -> np.ndarray:
        S = np.atleast_2d(np.asarray(S, dtype=np.float64))
        fx = np.interp(S[:, 0], self.xs, np.arange(len(self.xs)))
        fy = np.interp(S[:, 1], self.ys, np.arange(len(self.ys)))
        i = np.minimum(fx.astype(int), len(self.xs) - 2)
        j = np.minimum(fy.astype(int), len(self.ys) - 2)
        tx, ty = fx - i, fy - j
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])
