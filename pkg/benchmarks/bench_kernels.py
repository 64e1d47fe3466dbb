"""Compare the compiled MLP kernels with the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 2000]

Each row times one call on the 4-64-64-2 forward-model net (relu hidden
units) at batch 1 and batch 64, plus a whole curiosity training episode.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from infoflow import _kernels_py, nn

try:
    from infoflow import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None


def kernel_cases(rng):
    net = nn.init_mlp((4, 64, 64, 2), rng, "relu")
    cases = {}
    for batch in (1, 64):
        x = rng.normal(size=(batch, 4))
        d = rng.normal(size=(batch, 2))
        _, cache = nn.forward_cached(net, x)
        opt = nn.Adam.for_net(net, 1e-3)

        def fit(x=x, d=d):
            _, c = nn.forward_cached(net, x)
            g, _ = nn.backward(net, c, d)
            nn.optimizer_step(net, g, opt)

        cases[f"forward      B={batch:<3d}"] = lambda x=x: nn.forward(net, x)
        cases[f"backward     B={batch:<3d}"] = lambda c=cache, d=d: nn.backward(net, c, d)
        cases[f"fwd+bwd+adam B={batch:<3d}"] = fit
    target = net.copy()
    cases["polyak             "] = lambda: nn.polyak_update(target, net, 0.005)
    return cases


def episode_case():
    from dataclasses import replace

    from infoflow.harness import ExperimentConfig, run_curiosity

    cfg = replace(ExperimentConfig(), n_episodes=20)
    return lambda: run_curiosity(cfg, 7.0, 0)


def time_backend(module, repeat: int) -> dict[str, float]:
    saved = nn.kernels
    nn.kernels = module
    try:
        out = {}
        for name, fn in kernel_cases(np.random.default_rng(0)).items():
            fn()
            out[name] = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat
        ep = episode_case()
        ep()
        out["20 episodes        "] = min(timeit.repeat(ep, number=1, repeat=3))
        return out
    finally:
        nn.kernels = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()

    py = time_backend(_kernels_py, args.repeat)
    if _compiled is None:
        print("compiled extension not built; python backend only")
        for name, t in py.items():
            print(f"{name}  {t * 1e6:10.1f} us")
        return
    cc = time_backend(_compiled, args.repeat)
    print(f"{'case':<20} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for name in py:
        print(f"{name:<20} {py[name] * 1e6:10.1f}us {cc[name] * 1e6:10.1f}us "
              f"{py[name] / cc[name]:7.2f}x")


if __name__ == "__main__":
    main()
