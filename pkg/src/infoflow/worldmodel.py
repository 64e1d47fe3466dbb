"""Forward model f(s, a) -> s' and extended forward model k(s, a, a') -> s'.

Both nets see states divided by 40 and actions divided by 10 and predict the
next state in the same scaled space; callers always get arena coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infoflow.nn import (Adam, MlpNet, NumericError, backward, forward, forward_cached,
                         init_mlp, optimizer_step)

STATE_SCALE = 40.0
ACTION_SCALE = 10.0


@dataclass(eq=False)
class ForwardModel:
    net: MlpNet
    opt: Adam
    state_scale: float = STATE_SCALE
    action_scale: float = ACTION_SCALE
    name: str = "f"

    def inputs(self, s, a) -> np.ndarray:
        return np.concatenate([np.asarray(s, dtype=np.float64) / self.state_scale,
                               np.asarray(a, dtype=np.float64) / self.action_scale], axis=-1)

    def __call__(self, s, a) -> np.ndarray:
        return forward(self.net, self.inputs(s, a)) * self.state_scale


@dataclass(eq=False)
class ExtendedForwardModel(ForwardModel):
    name: str = "k"

    def inputs(self, s, a, a_next) -> np.ndarray:
        return np.concatenate([np.asarray(s, dtype=np.float64) / self.state_scale,
                               np.asarray(a, dtype=np.float64) / self.action_scale,
                               np.asarray(a_next, dtype=np.float64) / self.action_scale], axis=-1)

    def __call__(self, s, a, a_next) -> np.ndarray:
        return forward(self.net, self.inputs(s, a, a_next)) * self.state_scale


def make_forward_model(rng: np.random.Generator, hidden=(64, 64), activation: str = "relu",
                       lr: float = 1e-3) -> ForwardModel:
    net = init_mlp((4, *hidden, 2), rng, activation)
    return ForwardModel(net, Adam.for_net(net, lr))


def make_extended_model(rng: np.random.Generator, hidden=(64, 64), activation: str = "relu",
                        lr: float = 1e-3) -> ExtendedForwardModel:
    net = init_mlp((6, *hidden, 2), rng, activation)
    return ExtendedForwardModel(net, Adam.for_net(net, lr))


def predict_forward(m: ForwardModel, s, a) -> np.ndarray:
    return m(s, a)


def predict_extended(m: ExtendedForwardModel, s, a, a_next) -> np.ndarray:
    return m(s, a, a_next)


def fit_step(m: ForwardModel, x: np.ndarray, target: np.ndarray) -> float:
    """One Adam step on mean squared error; returns the pre-step loss in arena units."""
    pred, cache = forward_cached(m.net, x)
    err = pred - target / m.state_scale
    loss = float(np.mean(np.sum(err * err, axis=1))) * m.state_scale ** 2
    if not np.isfinite(loss):
        raise NumericError(f"model {m.name}: non-finite loss")
    g, _ = backward(m.net, cache, 2.0 * err / len(x))
    optimizer_step(m.net, g, m.opt)
    return loss


def train_models(f: ForwardModel, k: ExtendedForwardModel, batch, policy,
                 next_action: str = "policy") -> tuple[float, float]:
    """One optimizer step on each model over a minibatch.

    ``policy`` maps a (B, 2) batch of states to actions; with
    ``next_action="policy"`` k is fed a' = policy(s') recomputed now, with
    ``"logged"`` the a' stored at collection time. Gradients never reach the
    policy either way.
    """
    if len(batch.s) == 0:
        raise ValueError("empty minibatch")
    loss_f = fit_step(f, f.inputs(batch.s, batch.a), batch.s_next)
    if k is None:
        return loss_f, float("nan")
    if next_action == "policy":
        a_next = policy(batch.s_next)
    elif next_action == "logged":
        a_next = batch.a_next
    else:
        raise ValueError(f"unknown next_action mode {next_action!r}")
    loss_k = fit_step(k, k.inputs(batch.s, batch.a, a_next), batch.s_next)
    return loss_f, loss_k
