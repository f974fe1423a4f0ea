"""Command-line entry point: ``steam-mapf {gen,run,bench,report}``."""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from typing import List, Optional

from .bench import (
    ConfigError,
    RunConfig,
    infrastructure_failures,
    load_config,
    run_benchmark,
    to_csv,
    to_json,
)
from .errors import PolicyError, SteamMapfError
from .executor import infrastructure_failure, run_episode
from .grid import load_scenario, save_scenario, validate_scenario
from .policy import PolicyConfig
from .scengen import FAMILIES, GenSpec, episode_seed, generate
from .steam import SteamConfig

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFRA = 0, 1, 2, 3
JOBS_ENV = "STEAM_MAPF_JOBS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV)
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise UsageError(f"{JOBS_ENV}={raw!r} is not an integer") from None
    if jobs < 1:
        raise UsageError(f"{JOBS_ENV} must be >= 1")
    return jobs


def _add_gen_flags(p: argparse.ArgumentParser, required: bool = False):
    p.add_argument("--family", choices=FAMILIES, default="random" if not required else None, required=required)
    p.add_argument("--size", type=int, help="square map side (overrides --width/--height)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--density", type=float, help="obstacle density in [0, 1)")
    p.add_argument("--agents", type=int)
    p.add_argument("--max-steps", type=int)


def _gen_spec(args, base: Optional[GenSpec] = None, seed: Optional[int] = None) -> GenSpec:
    d = base.to_dict() if base is not None else GenSpec(family=args.family or "random").to_dict()
    if args.family is not None and args.family != d["family"]:
        d["family"], d["width"], d["height"] = args.family, None, None
    if args.size is not None:
        d["width"] = d["height"] = args.size
    if args.width is not None:
        d["width"] = args.width
    if args.height is not None:
        d["height"] = args.height
    if args.density is not None:
        d["obstacle_density"] = args.density
    if args.agents is not None:
        d["agent_count"] = args.agents
    if args.max_steps is not None:
        d["max_steps"] = args.max_steps
    if seed is not None:
        d["seed"] = seed
    try:
        return GenSpec(**d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(path: Optional[str], text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --- gen ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = _gen_spec(args, seed=args.seed)
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    out = args.out
    os.makedirs(os.path.join(out, "maps"), exist_ok=True)
    for e in range(args.episodes):
        s = generate(GenSpec(**{**spec.to_dict(), "seed": episode_seed(args.seed, e)}))
        stem = f"{spec.family}_{e:04d}"
        map_rel = os.path.join("maps", stem + ".map")
        with open(os.path.join(out, map_rel), "w", encoding="utf-8") as fh:
            fh.write(s.map.to_text())
        save_scenario(s, os.path.join(out, stem + ".json"), map_rel)
    print(f"wrote {args.episodes} scenarios to {out}", file=sys.stderr)
    return EXIT_OK


# --- run ----------------------------------------------------------------------

def _policy_and_steam(args, cfg: Optional[RunConfig]):
    policy = cfg.policy if cfg is not None else PolicyConfig()
    if args.policy_command is not None:
        policy = PolicyConfig(**{**policy.to_dict(), "kind": "external", "command": shlex.split(args.policy_command)})
    steam = cfg.steam if cfg is not None and cfg.steam is not None else SteamConfig()
    return policy, steam


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else None
    policy, steam = _policy_and_steam(args, cfg)
    if args.scenario:
        if not os.path.exists(args.scenario):
            raise FileNotFoundError(f"scenario file not found: {args.scenario}")
        scenario = load_scenario(args.scenario)
    else:
        base = cfg.gen if cfg is not None and cfg.gen is not None else None
        scenario = generate(_gen_spec(args, base, seed=args.seed))
    validate_scenario(scenario)
    steam_cfg = steam if args.steam == "on" else None
    seed = scenario.seed if args.seed is None else args.seed
    radius = cfg.density_radius if cfg is not None else None
    try:
        report = run_episode(scenario, policy, steam_cfg, seed, trace=args.trace,
                             record_trajectories=args.trace, density_radius=radius)
    except PolicyError as exc:
        report = infrastructure_failure(scenario, policy, steam_cfg, seed, exc, radius)
    _write(args.out, json.dumps(report.to_dict("full"), indent=1, sort_keys=True) + "\n")
    if report.status == "infrastructure_error":
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_INFRA
    return EXIT_OK


# --- bench --------------------------------------------------------------------

def _bench_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        doc = cfg.to_dict()
    else:
        doc = RunConfig().to_dict()
    if any(getattr(args, k) is not None for k in ("family", "size", "width", "height", "density", "agents", "max_steps")):
        base = GenSpec(**doc["gen"]) if doc["gen"] is not None else None
        doc["gen"] = _gen_spec(args, base).to_dict()
        doc["scenario_files"] = None
    if args.scenarios:
        doc["scenario_files"] = list(args.scenarios)
    if args.episodes is not None:
        doc["episodes"] = args.episodes
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["output"] = args.out
    if args.format is not None:
        doc["format"] = args.format
    if args.steam is not None:
        doc["arms"] = {"on": ["on"], "off": ["off"], "both": ["off", "on"]}[args.steam]
        if args.steam != "off" and doc["steam"] is None:
            doc["steam"] = SteamConfig().to_dict()
    if args.policy_command is not None:
        doc["policy"] = {**doc["policy"], "kind": "external", "command": shlex.split(args.policy_command)}
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    elif os.environ.get(JOBS_ENV) or not args.config:
        doc["jobs"] = _default_jobs()
    try:
        return RunConfig.from_dict(doc)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    report = run_benchmark(cfg)
    text = to_json(report) if cfg.format == "json" else to_csv(report)
    _write(cfg.output, text)
    if cfg.format == "json" and args.csv:
        _write(args.csv, to_csv(report))
    n_infra = infrastructure_failures(report)
    if n_infra:
        print(f"error: {n_infra} episode(s) failed in the external policy", file=sys.stderr)
        return EXIT_INFRA
    return EXIT_OK


# --- report -------------------------------------------------------------------

def _table(report: dict) -> str:
    from .bench import report_rows

    cols = ["arm", "episodes", "successes", "success_rate", "makespan", "sum_of_costs", "density", "runtime_ms"]
    rows = report_rows(report)
    cells = [[c for c in cols]]
    for r in rows:
        line = []
        for c in cols:
            v = r[c]
            if isinstance(v, float):
                ci = r.get(c + "_ci95")
                v = f"{v:.3f}" if ci is None else f"{v:.3f}±{ci:.3f}"
            line.append(str(v))
        cells.append(line)
    widths = [max(len(row[k]) for row in cells) for k in range(len(cols))]
    return "".join("  ".join(x.ljust(wd) for x, wd in zip(row, widths)).rstrip() + "\n" for row in cells)


def cmd_report(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.input}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(report, dict) or "arms" not in report:
        raise UsageError(f"{args.input}: not a benchmark report")
    text = to_csv(report) if args.format == "csv" else _table(report)
    _write(args.out, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="steam-mapf", description="Decentralized MAPF execution with congestion mitigation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate scenario files")
    _add_gen_flags(g)
    g.add_argument("--episodes", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="scenarios")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("--scenario", help="scenario JSON file")
    r.add_argument("--config", help="run configuration JSON")
    _add_gen_flags(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--steam", choices=("on", "off"), default="on")
    r.add_argument("--trace", action="store_true", help="emit trajectories and per-step logit deltas")
    r.add_argument("--policy-command", help="external policy command line")
    r.add_argument("--out", help="report path (stdout if omitted)")
    r.set_defaults(func=cmd_run, family=None)

    b = sub.add_parser("bench", help="paired A/B benchmark")
    b.add_argument("--config", help="run configuration JSON")
    _add_gen_flags(b)
    b.set_defaults(family=None)
    b.add_argument("--scenarios", nargs="+", help="scenario files or directories")
    b.add_argument("--episodes", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--steam", choices=("on", "off", "both"))
    b.add_argument("--policy-command")
    b.add_argument("--jobs", type=int, help=f"parallel episodes (default ${JOBS_ENV} or 1)")
    b.add_argument("--out", help="report path")
    b.add_argument("--format", choices=("json", "csv"))
    b.add_argument("--csv", help="also write the CSV summary here")
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser("report", help="render a benchmark report")
    rp.add_argument("input")
    rp.add_argument("--format", choices=("table", "csv"), default="table")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"steam-mapf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"steam-mapf: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        name = getattr(exc, "filename", None)
        msg = f"{exc.strerror}: {name}" if name else str(exc)
        print(f"steam-mapf: I/O error: {msg}", file=sys.stderr)
        return EXIT_IO
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"steam-mapf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PolicyError as exc:
        print(f"steam-mapf: policy error: {exc}", file=sys.stderr)
        return EXIT_INFRA
    except SteamMapfError as exc:
        print(f"steam-mapf: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
