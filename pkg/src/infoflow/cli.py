"""Command-line entry point: ``infoflow <subcommand> [flags]``.

Settings come from defaults, then an optional ``--config`` file, then flags.
The config file is INI-style key=value text with an ``[experiment]`` section
for the harness settings and a ``[ddpg]`` section for the learner::

    [experiment]
    n_episodes = 5000
    alphas = 0, 3, 7

    [ddpg]
    tau = 0.01

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
failures during a run.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from infoflow import harness, nn
from infoflow.ddpg import DdpgConfig, make_agent
from infoflow.env import ConfigError, WorldGeometry

log = logging.getLogger("infoflow")


class UsageError(Exception):
    pass


# --- config file ------------------------------------------------------------

def _coerce(text: str, default, name: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {text!r}") from None
    return text or None


def _apply(obj, values: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(obj) if f.name != "ddpg"}
    changes = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        changes[key] = _coerce(raw, getattr(obj, key), f"{section}.{key}")
    try:
        return dataclasses.replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_config(path) -> harness.ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(parser.sections()) - {"experiment", "ddpg"}
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    cfg = harness.ExperimentConfig()
    if parser.has_section("ddpg"):
        cfg = dataclasses.replace(cfg, ddpg=_apply(DdpgConfig(), dict(parser["ddpg"]), "ddpg"))
    if parser.has_section("experiment"):
        cfg = _apply(cfg, dict(parser["experiment"]), "experiment")
    return cfg


# --- argument parsing -------------------------------------------------------

def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value config file ([experiment] and [ddpg] sections)")
    common.add_argument("--geometry", help="world geometry file (default: built-in three rooms)")
    common.add_argument("-v", "--verbose", action="store_true")

    run = _Parser(add_help=False)
    run.add_argument("--episodes", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--paper-scale", action="store_true",
                     help="150000 episodes, 10^7 validation samples, alphas 0..7")
    run.add_argument("--out", required=True, help="output directory; all files go here")

    p = _Parser(prog="infoflow", description="Curiosity and empowerment agents in a three-room world.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train-curiosity", parents=[common, run], help="one curiosity run")
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--reset", help="anywhere | bottom | fixed:x,y")
    s.add_argument("--validation-size", type=int)

    s = sub.add_parser("random-baseline", parents=[common, run], help="uniform-random acting")
    s.add_argument("--seed", type=int)
    s.add_argument("--reset")
    s.add_argument("--validation-size", type=int)

    s = sub.add_parser("train-empowerment", parents=[common], help="empowerment agent on a frozen f")
    s.add_argument("--forward-model", required=True)
    s.add_argument("--episodes", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--grid-resolution", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("experiment-1", parents=[common, run], help="alpha sweep, validation MSE")
    s.add_argument("--alphas", type=_floats)
    s.add_argument("--seeds", type=_seeds)
    s.add_argument("--extra-epsilons", type=_floats, default=())
    s.add_argument("--validation-size", type=int)
    s.add_argument("--parallel-runs", type=int)

    s = sub.add_parser("experiment-2", parents=[common, run], help="alpha sweep, top-room counts")
    s.add_argument("--alphas", type=_floats)
    s.add_argument("--seeds", type=_seeds)
    s.add_argument("--parallel-runs", type=int)

    s = sub.add_parser("eval", parents=[common], help="validation MSE of a forward-model snapshot")
    s.add_argument("--model", "--forward-model", dest="model", required=True)
    s.add_argument("--validation-size", type=int)

    s = sub.add_parser("export-policy-field", parents=[common], help="policy arrows on a grid")
    s.add_argument("--actor", required=True)
    s.add_argument("--grid-resolution", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("export-heatmap", parents=[common], help="empowerment reward on a grid")
    s.add_argument("--forward-model", required=True)
    s.add_argument("--actor", help="greedy actions for the H2 term (zero action if omitted)")
    s.add_argument("--grid-resolution", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    sub.add_parser("validate-geometry", parents=[common], help="parse and summarize a geometry file")
    return p


def resolve_config(args) -> harness.ExperimentConfig:
    cfg = load_config(args.config) if args.config else harness.ExperimentConfig()
    if getattr(args, "paper_scale", False):
        cfg = harness.paper_scale(cfg)
    overrides = {}
    for flag, key in (("episodes", "n_episodes"), ("epsilon", "epsilon"),
                      ("validation_size", "validation_size"), ("alphas", "alphas"),
                      ("seeds", "seeds"), ("grid_resolution", "grid_resolution"),
                      ("parallel_runs", "parallel_runs"), ("geometry", "geometry"),
                      ("reset", "reset")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.command == "train-empowerment":
        overrides.pop("n_episodes", None)
        overrides.pop("epsilon", None)
        if args.episodes is not None:
            overrides["emp_episodes"] = args.episodes
        if args.epsilon is not None:
            overrides["emp_epsilon"] = args.epsilon
    try:
        return dataclasses.replace(cfg, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _seed(args) -> int:
    return args.seed if getattr(args, "seed", None) is not None else harness.env_seed()


def _load_actor(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"actor snapshot {path} not found")
    net = nn.load_params(path)
    agent = make_agent(np.random.default_rng(0), DdpgConfig(), net.n_inputs, net.n_outputs)
    agent.actor = net
    return agent


# --- commands ---------------------------------------------------------------

def cmd_train_curiosity(args, cfg, policy="ddpg"):
    out = Path(args.out)
    run = harness.run_curiosity(cfg, args.alpha if policy == "ddpg" else 0.0, _seed(args),
                                policy=policy, out_dir=out)
    val = harness.make_validation_set(cfg.world(), cfg.validation_size, cfg.validation_seed)
    mse = harness.evaluate_forward_mse(run.f, val)
    (out / "summary.txt").write_text(f"mse={mse!r}\ntop_room_count={run.top_room_count}\n")
    print(f"mse {mse:.6f}  top_room_count {run.top_room_count}")


def cmd_random_baseline(args, cfg):
    cmd_train_curiosity(args, cfg, policy="random")


def cmd_train_empowerment(args, cfg):
    f = harness.load_forward_model(args.forward_model)
    run = harness.run_empowerment(cfg, f, _seed(args), out_dir=args.out)
    world = cfg.world()
    d_pi, d_rand = harness.door_proximity_gain(world, run.agent, cfg.eval_rollouts,
                                               cfg.steps_per_episode, _seed(args))
    print(f"door distance: policy {d_pi:.3f}  random {d_rand:.3f}")


def cmd_experiment_1(args, cfg):
    rows = harness.run_experiment_1(cfg, args.out, extra_epsilons=args.extra_epsilons)
    for row in rows:
        print(*row)


def cmd_experiment_2(args, cfg):
    rows = harness.run_experiment_2(cfg, args.out)
    for row in rows:
        print(*row)


def cmd_eval(args, cfg):
    f = harness.load_forward_model(args.model)
    val = harness.make_validation_set(cfg.world(), cfg.validation_size, cfg.validation_seed)
    print(np.format_float_positional(harness.evaluate_forward_mse(f, val), trim="-"))


def cmd_export_policy_field(args, cfg):
    agent = _load_actor(args.actor)
    rows = harness.export_policy_field(agent, cfg.world(), cfg.grid_resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(out / "policy_field.csv", ("x", "y", "ax", "ay"), rows)


def cmd_export_heatmap(args, cfg):
    f = harness.load_forward_model(args.forward_model)
    agent = _load_actor(args.actor) if args.actor else None
    world = cfg.world()
    h1 = harness.empowerment_h1(cfg, f, world, _seed(args))
    rows = harness.export_heatmap(world, f, agent, h1, cfg.grid_resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(out / "heatmap.csv", ("x", "y", "h1", "h2", "reward"), rows)


def cmd_validate_geometry(args, cfg):
    geom = WorldGeometry.load(args.geometry) if args.geometry else cfg.world().geometry
    print(f"arena {geom.width:g} x {geom.height:g}: {len(geom.walls)} walls, "
          f"{len(geom.doors)} doors, rooms {', '.join(r.name for r in geom.rooms)}")


COMMANDS = {
    "train-curiosity": cmd_train_curiosity,
    "random-baseline": cmd_random_baseline,
    "train-empowerment": cmd_train_empowerment,
    "experiment-1": cmd_experiment_1,
    "experiment-2": cmd_experiment_2,
    "eval": cmd_eval,
    "export-policy-field": cmd_export_policy_field,
    "export-heatmap": cmd_export_heatmap,
    "validate-geometry": cmd_validate_geometry,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"infoflow {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("failure", exc_info=True)
        print(f"infoflow {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
