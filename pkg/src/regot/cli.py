"""Command-line entry points.

  regot run --config <path> [--resume <dir>] [--set section.key=value]...
  regot validate-graph <path>
  regot eval-reward <program> --env <id> --n <int> --seed <int>
  regot report <dir> [--plot-data]

Exit codes: 0 success, 1 runtime or validation failure, 2 bad arguments or config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .critics import CriticError
from .dsl import DSLParseError, check_program, parse_program
from .envs import ENVIRONMENTS, EnvError, make_env
from .evolution import (ArtifactError, ConfigError, EvolutionConfig,
                        GraphConstructionFailed, RunReport, resume, run_evolution,
                        summary_csv)
from .graph import GraphParseError, parse_graph, validate
from .rng import derive_seed
from .trainer import collect_stats, random_rollout

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RUN_KEYS = ("env", "run_dir", "task", "initial_program", "initial_program_file", "iterations",
            "rollouts", "eval_episodes", "prompt_mode", "master_seed", "max_repair")


class UsageError(Exception):
    pass


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set {key}: {p} is not a section")
        node[parts[-1]] = _parse_value(value.strip())
    return doc


def load_config(path: str, overrides: list[str] = ()) -> tuple[EvolutionConfig, Path]:
    """Read a TOML run config; relative file references resolve against its directory."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    doc = apply_overrides(doc, list(overrides))
    base = p.parent.resolve()
    run = dict(doc.get("run", {}))
    unknown = set(run) - set(RUN_KEYS)
    if unknown:
        raise UsageError(f"{path}: unknown [run] keys {sorted(unknown)}")
    if "env" not in run or "run_dir" not in run:
        raise UsageError(f"{path}: [run] needs env and run_dir")
    if "initial_program_file" in run:
        prog = base / run.pop("initial_program_file")
        if not prog.is_file():
            raise UsageError(f"initial program file not found: {prog}")
        run["initial_program"] = prog.read_text()
    critics = {}
    for purpose, c in doc.get("critics", {}).items():
        c = dict(c)
        if c.get("session") and not Path(c["session"]).is_absolute():
            c["session"] = str(base / c["session"])
        critics[purpose] = c
    d = {k: v for k, v in run.items() if k not in ("run_dir", "task")}
    d["task_path"] = run.get("task")
    d["trainer"] = doc.get("trainer", {})
    d["critics"] = critics
    try:
        return EvolutionConfig.from_dict(d, run["run_dir"]), base
    except (ConfigError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _progress(run_dir: Path):
    def hook(i: int) -> None:
        m = json.loads((run_dir / f"iter_{i}" / "metrics.json").read_text())
        extra = f" ({m['reason']})" if m["status"] != "completed" else ""
        print(f"iteration {i}: {m['status']} success_rate={m['success_rate']:.4f} "
              f"mean_episode_length={m['mean_episode_length']:.2f}{extra}", flush=True)
    return hook


def print_table(report: RunReport) -> None:
    print(f"{'iteration':>9}  {'success_rate':>12}  {'mean_episode_length':>19}")
    for row in report.summary:
        print(f"{row['iteration']:>9}  {row['success_rate']:>12.4f}  "
              f"{row['mean_episode_length']:>19.2f}")
    if report.best is not None:
        print(f"best iteration: {report.best}")


def cmd_run(args) -> int:
    config, base = load_config(args.config, args.set or [])
    if args.resume:
        run_dir = Path(args.resume)
        report = resume(run_dir, config=config, after_iteration=_progress(run_dir),
                        base_dir=base)
    else:
        report = run_evolution(config, after_iteration=_progress(Path(config.run_dir)),
                               base_dir=base)
    print_table(report)
    return EXIT_OK


def cmd_validate_graph(args) -> int:
    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.path}: {exc.strerror}") from None
    try:
        graph = parse_graph(text)
    except GraphParseError as exc:
        for e in exc.errors:
            print(f"parse error: {e}")
        return EXIT_USAGE
    problems = validate(graph)
    for v in problems:
        print(f"{v.rule} {v.location}: {v.message}")
    if problems:
        return EXIT_FAIL
    print("valid")
    return EXIT_OK


def cmd_eval_reward(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be a positive number of rollouts")
    if args.env not in ENVIRONMENTS:
        raise UsageError(f"unknown environment {args.env!r}; known: {sorted(ENVIRONMENTS)}")
    try:
        text = Path(args.program).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.program}: {exc.strerror}") from None
    env = make_env(args.env)
    try:
        program = parse_program(text)
    except DSLParseError as exc:
        for e in exc.errors:
            print(f"parse error: {e}")
        return EXIT_FAIL
    errors = check_program(program, env.catalog, len(env.action_spec))
    if errors:
        for e in errors:
            print(f"check error [{e.identifier}]: {e}")
        return EXIT_FAIL
    lo, hi = env.task.seed_space
    seeds = [lo + derive_seed(args.seed, 4, j) % (hi - lo + 1) for j in range(args.n)]
    trajs = [random_rollout(env, s, program) for s in seeds]
    print(collect_stats(trajs).render())
    rate = sum(t.success for t in trajs) / len(trajs)
    print(f"success_rate: {rate:.4f} ({sum(t.success for t in trajs)}/{len(trajs)})")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.dir)
    path = run_dir / "report.json"
    if not path.is_file():
        print(f"no report.json in {run_dir}", file=sys.stderr)
        return EXIT_FAIL
    try:
        report = RunReport.from_json(path.read_text())
    except (ValueError, KeyError) as exc:
        print(f"corrupt report {path}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print_table(report)
    if not (run_dir / "summary.csv").exists():
        (run_dir / "summary.csv").write_text(summary_csv(report.summary))
    if args.plot_data:
        for name, key in (("success_rate", "success_rate"),
                          ("episode_length", "mean_episode_length")):
            out = run_dir / f"plot_{name}.dat"
            out.write_text("# iteration " + key + "\n" + "".join(
                f"{row['iteration']} {row[key]!r}\n" for row in report.summary))
            print(f"wrote {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regot", description="Reward evolution with task graphs and critics.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run (or resume) an evolution")
    run.add_argument("--config", required=True)
    run.add_argument("--resume", metavar="DIR")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config value, e.g. run.iterations=2")
    run.set_defaults(func=cmd_run)

    vg = sub.add_parser("validate-graph", help="check a task graph file against R1-R6")
    vg.add_argument("path")
    vg.set_defaults(func=cmd_validate_graph)

    ev = sub.add_parser("eval-reward", help="reward statistics under a random policy")
    ev.add_argument("program")
    ev.add_argument("--env", required=True)
    ev.add_argument("--n", type=int, required=True)
    ev.add_argument("--seed", type=int, required=True)
    ev.set_defaults(func=cmd_eval_reward)

    rp = sub.add_parser("report", help="print a run's iteration table")
    rp.add_argument("dir")
    rp.add_argument("--plot-data", action="store_true")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArtifactError, GraphConstructionFailed, CriticError, EnvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
