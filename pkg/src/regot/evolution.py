"""The evolution loop: build the task graph once, then train, roll out, judge, refine.

Every iteration is written to ``iter_<i>/`` through a temporary directory and
an atomic rename, so a crash never leaves a half-written iteration behind and
``resume`` can continue from the first missing one.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import shutil
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

from . import __version__
from .critics import (CriticBackend, CriticError, Feedback, Problem, RemoteCritic,
                      RetryPolicy, RolloutTranscript, ScriptedCritic, construct_graph,
                      evaluate_rollouts, refine_reward)
from .critics.remote import atomic_write_text
from .dsl import (DSLParseError, ProgramCheckFailed, RewardProgram, check_program,
                  diff_programs, parse_program)
from .envs import Environment, load_task, make_env
from .graph import TaskGraph, parse_graph, render_prompt_block
from .rng import derive_seed
from .trainer import (ComponentStats, NonFiniteReturn, Policy, TrainerConfig,
                      TrainingLog, collect_stats, evaluate_policy, rollout, train)

log = logging.getLogger(__name__)

SNAPSHOT = "config.snapshot"
PURPOSES = ("graph", "evaluator", "refiner")
BACKEND_KINDS = ("scripted", "remote")
# execution details that may differ between otherwise identical runs
_TRANSPORT_KEYS = ("mode", "session")


class ConfigError(ValueError):
    pass


class ArtifactError(RuntimeError):
    """Corrupt, missing or version-mismatched run artifacts."""


class GraphConstructionFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"
    rule_set: str | None = None
    faults: Mapping[str, str] = field(default_factory=dict)
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    mode: str = "live"
    session: str | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ConfigError("remote backends need endpoint and model")
        if self.kind == "scripted" and (self.endpoint or self.model):
            raise ConfigError("a scripted backend takes no endpoint or model")

    def to_dict(self, with_transport: bool = True) -> dict:
        d = {"kind": self.kind}
        if self.kind == "scripted":
            d.update(rule_set=self.rule_set, faults=dict(sorted(self.faults.items())))
        else:
            d.update(endpoint=self.endpoint, model=self.model, temperature=self.temperature,
                     mode=self.mode, session=self.session)
            if not with_transport:
                for k in _TRANSPORT_KEYS:
                    d.pop(k)
        return d


@dataclass(frozen=True)
class EvolutionConfig:
    env: str
    run_dir: str
    task_path: str | None = None
    initial_program: str | None = None
    iterations: int = 8
    rollouts: int = 5
    eval_episodes: int = 50
    trainer: TrainerConfig = TrainerConfig()
    critics: Mapping[str, BackendConfig] = field(default_factory=dict)
    prompt_mode: str = "zero_shot"
    master_seed: int = 0
    max_repair: int = 3

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.rollouts < 1:
            raise ConfigError("rollouts must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.prompt_mode not in ("zero_shot", "few_shot"):
            raise ConfigError(f"prompt_mode must be zero_shot or few_shot, got {self.prompt_mode!r}")
        unknown = set(self.critics) - set(PURPOSES)
        if unknown:
            raise ConfigError(f"unknown critic roles {sorted(unknown)}; expected {PURPOSES}")

    def backend(self, purpose: str) -> BackendConfig:
        return self.critics.get(purpose) or BackendConfig("scripted", self.env)

    def to_dict(self, with_transport: bool = True) -> dict:
        return {
            "env": self.env,
            "task_path": self.task_path,
            "initial_program": self.initial_program,
            "iterations": self.iterations,
            "rollouts": self.rollouts,
            "eval_episodes": self.eval_episodes,
            "trainer": asdict(self.trainer),
            "critics": {p: self.backend(p).to_dict(with_transport) for p in PURPOSES},
            "prompt_mode": self.prompt_mode,
            "master_seed": self.master_seed,
            "max_repair": self.max_repair,
        }

    @classmethod
    def from_dict(cls, d: Mapping, run_dir: str | os.PathLike) -> "EvolutionConfig":
        d = dict(d)
        try:
            trainer = TrainerConfig(**d.pop("trainer", {}))
            critics = {p: BackendConfig(**{k: v for k, v in c.items()})
                       for p, c in d.pop("critics", {}).items()}
            return cls(run_dir=str(run_dir), trainer=trainer, critics=critics, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def checksum(config: EvolutionConfig) -> str:
    body = json.dumps(config.to_dict(with_transport=False), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(body.encode()).hexdigest()


@dataclass
class IterationRecord:
    index: int
    status: str  # completed | failed
    program: str
    diff: str
    success_rate: float = 0.0
    mean_episode_length: float = 0.0
    reason: str = ""
    training_log: TrainingLog | None = None
    stats: ComponentStats | None = None
    transcripts: list[RolloutTranscript] = field(default_factory=list)
    feedback: Feedback | None = None
    refined: str = ""
    no_change: bool = False
    policy: Policy | None = field(default=None, repr=False, compare=False)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def metrics(self) -> dict:
        return {"iteration": self.index, "status": self.status, "reason": self.reason,
                "success_rate": self.success_rate,
                "mean_episode_length": self.mean_episode_length,
                "no_change": self.no_change}

    def to_dict(self) -> dict:
        return {**self.metrics(), "program": self.program, "diff": self.diff,
                "training_log": self.training_log.to_dict(with_timing=False)
                if self.training_log else None,
                "stats": self.stats.to_dict() if self.stats else None,
                "feedback": self.feedback.to_dict() if self.feedback else None,
                "transcript_seeds": [t.seed for t in self.transcripts],
                "refined": self.refined}


def select_best(records: list[IterationRecord]) -> int:
    """1-based index of the best completed iteration.

    Highest success rate, then shorter mean episode length, then earlier.
    """
    done = [r for r in records if r.completed]
    if not done:
        raise ValueError("no completed iterations to choose from")
    best = min(done, key=lambda r: (-r.success_rate, r.mean_episode_length, r.index))
    return best.index


@dataclass
class RunReport:
    config: dict
    graph: dict
    iterations: list[dict]
    best: int | None
    summary: list[dict]

    def to_json(self) -> str:
        return json.dumps({"code_version": __version__, "config": self.config,
                           "graph": self.graph, "iterations": self.iterations,
                           "best": self.best, "summary": self.summary},
                          indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(d["config"], d["graph"], d["iterations"], d["best"], d["summary"])

    @property
    def success_rates(self) -> list[float]:
        return [row["success_rate"] for row in self.summary]


def summary_csv(summary: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "success_rate", "mean_episode_length"])
    for row in summary:
        w.writerow([row["iteration"], repr(row["success_rate"]), repr(row["mean_episode_length"])])
    return buf.getvalue()


def make_backend(cfg: BackendConfig, purpose: str, run_dir: Path, default_rule_set: str,
                 base_dir: Path | None = None) -> CriticBackend:
    if cfg.kind == "scripted":
        return ScriptedCritic(cfg.rule_set or default_rule_set, dict(cfg.faults))
    session = None
    if cfg.session:
        session = Path(cfg.session)
        if not session.is_absolute() and base_dir is not None:
            session = base_dir / session
    return RemoteCritic(cfg.endpoint, cfg.model, cfg.temperature, cfg.mode, session,
                        log_path=run_dir / f"critic_{purpose}.jsonl", retry=RetryPolicy())


class _Run:
    def __init__(self, config: EvolutionConfig, backends: Mapping[str, CriticBackend] | None,
                 base_dir: Path | None):
        self.config = config
        self.dir = Path(config.run_dir)
        self.base_dir = base_dir
        task = load_task(self._resolve(config.task_path)) if config.task_path else None
        self.env: Environment = make_env(config.env, task)
        self._backends = dict(backends or {})

    def _resolve(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def backend(self, purpose: str) -> CriticBackend:
        if purpose not in self._backends:
            self._backends[purpose] = make_backend(self.config.backend(purpose), purpose,
                                                   self.dir, self.config.env, self.base_dir)
        return self._backends[purpose]

    # seeds -------------------------------------------------------------
    def _seed(self, *path: int) -> int:
        lo, hi = self.env.task.seed_space
        return lo + derive_seed(self.config.master_seed, *path) % (hi - lo + 1)

    def trainer_config(self) -> TrainerConfig:
        # same training seed every iteration: differences come from the reward only
        return replace(self.config.trainer, seed=derive_seed(self.config.master_seed, 1))

    def rollout_seeds(self, i: int) -> list[int]:
        return [self._seed(2, i, j) for j in range(self.config.rollouts)]

    def eval_seed_base(self) -> int:
        lo, hi = self.env.task.seed_space
        span = max(hi - lo + 1 - self.config.eval_episodes, 1)
        return lo + derive_seed(self.config.master_seed, 3) % span

    # graph and initial program -------------------------------------------
    def graph(self) -> TaskGraph:
        path = self.dir / "graph.json"
        if path.exists():
            try:
                return parse_graph(path.read_text())
            except ValueError as exc:
                raise ArtifactError(f"{path}: {exc}") from None
        try:
            graph = construct_graph(self.backend("graph"), self.env.task, self.env.catalog,
                                    mode=self.config.prompt_mode,
                                    max_repair=self.config.max_repair)
        except CriticError as exc:
            raise GraphConstructionFailed(f"task graph construction failed: {exc}") from exc
        atomic_write_text(self.dir / "graph.txt", render_prompt_block(graph))
        atomic_write_text(path, graph.to_json() + "\n")
        return graph

    def initial_program(self, graph: TaskGraph) -> str:
        if self.config.initial_program:
            return self.config.initial_program
        path = self.dir / "initial.reward"
        if path.exists():
            return path.read_text()
        ref = refine_reward(self.backend("refiner"), graph, None, None, None, self.env.catalog,
                            self.env.task, len(self.env.action_spec),
                            max_repair=self.config.max_repair)
        atomic_write_text(path, ref.program.source_text)
        return ref.program.source_text

    # one iteration -------------------------------------------------------
    def iterate(self, i: int, program_text: str, previous: str | None, last_good: str | None,
                graph: TaskGraph) -> IterationRecord:
        env = self.env
        diff = ""
        try:
            program = parse_program(program_text)
            errors = check_program(program, env.catalog, len(env.action_spec))
            if errors:
                raise ProgramCheckFailed(errors)
            if previous is not None:
                diff = diff_programs(parse_program(previous), program).render()
            policy, tlog = train(env, program, self.trainer_config())
        except (DSLParseError, ProgramCheckFailed, NonFiniteReturn) as exc:
            tag = "non-finite-reward" if isinstance(exc, NonFiniteReturn) else None
            reason = f"{type(exc).__name__}: {exc}"
            fb = Feedback(f"iteration {i} failed before evaluation: {reason}",
                          (Problem(reason, tag),),
                          ("bound every component so returns stay finite",) if tag else
                          ("write a program that parses and uses only listed functions",))
            rec = IterationRecord(i, "failed", program_text, diff, reason=reason, feedback=fb)
            base = last_good
            if base is None and tag:
                # nothing good yet; a non-finite program still checks, so repair it
                base = program_text
            rec.refined, rec.no_change = self.refine_after_failure(graph, base, fb)
            return rec

        trajs = [rollout(policy, env, s, program=program) for s in self.rollout_seeds(i)]
        stats = collect_stats(trajs)
        transcripts = [RolloutTranscript.from_trajectory(t, env, stats) for t in trajs]
        sr, length = evaluate_policy(policy, env, self.config.eval_episodes, self.eval_seed_base())
        fb = evaluate_rollouts(self.backend("evaluator"), transcripts, stats, env.task, graph,
                               max_repair=self.config.max_repair)
        rec = IterationRecord(i, "completed", program_text, diff, sr, length,
                              training_log=tlog, stats=stats, transcripts=transcripts,
                              feedback=fb)
        try:
            ref = refine_reward(self.backend("refiner"), graph, program, fb, stats, env.catalog,
                                env.task, len(env.action_spec), max_repair=self.config.max_repair)
            rec.refined, rec.no_change = ref.program.source_text, ref.no_change
        except CriticError as exc:
            log.warning("iteration %d: refinement failed, keeping the program: %s", i, exc)
            rec.reason = f"refinement failed: {exc}"
            rec.refined, rec.no_change = program_text, True
        rec.policy = policy
        return rec

    def refine_after_failure(self, graph, base: str | None, fb: Feedback) -> tuple[str, bool]:
        env = self.env
        program = parse_program(base) if base is not None else None
        try:
            ref = refine_reward(self.backend("refiner"), graph, program, fb, None, env.catalog,
                                env.task, len(env.action_spec), max_repair=self.config.max_repair)
            return ref.program.source_text, ref.no_change
        except CriticError as exc:
            log.warning("refinement after failure did not succeed: %s", exc)
            if base is None:
                raise
            return base, True

    # persistence -----------------------------------------------------------
    def persist(self, rec: IterationRecord) -> None:
        final = self.dir / f"iter_{rec.index}"
        tmp = self.dir / f".iter_{rec.index}.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        (tmp / "program.reward").write_text(rec.program)
        (tmp / "diff.txt").write_text(rec.diff)
        if rec.training_log is not None:
            (tmp / "training_log.json").write_text(json.dumps(rec.training_log.to_dict(), indent=2))
            if rec.policy is not None:
                (tmp / "policy.json").write_text(json.dumps(rec.policy.to_dict(), indent=2))
        if rec.stats is not None:
            (tmp / "stats.json").write_text(json.dumps(rec.stats.to_dict(), indent=2))
        if rec.transcripts:
            (tmp / "transcripts").mkdir()
            for j, t in enumerate(rec.transcripts):
                (tmp / "transcripts" / f"rollout_{j}.json").write_text(t.to_json())
        if rec.feedback is not None:
            (tmp / "feedback.json").write_text(rec.feedback.to_json())
        (tmp / "refined.reward").write_text(rec.refined)
        # metrics last: its presence marks the iteration complete
        (tmp / "metrics.json").write_text(json.dumps(rec.metrics(), indent=2))
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)

    def load(self, i: int) -> IterationRecord | None:
        d = self.dir / f"iter_{i}"
        if not (d / "metrics.json").exists():
            return None
        try:
            m = json.loads((d / "metrics.json").read_text())
            rec = IterationRecord(
                i, m["status"], (d / "program.reward").read_text(), (d / "diff.txt").read_text(),
                m["success_rate"], m["mean_episode_length"], m["reason"],
                refined=(d / "refined.reward").read_text(), no_change=m["no_change"])
            if (d / "training_log.json").exists():
                rec.training_log = TrainingLog.from_dict(
                    json.loads((d / "training_log.json").read_text()))
            if (d / "stats.json").exists():
                rec.stats = ComponentStats.from_dict(json.loads((d / "stats.json").read_text()))
            if (d / "feedback.json").exists():
                rec.feedback = Feedback.from_dict(json.loads((d / "feedback.json").read_text()))
            tdir = d / "transcripts"
            if tdir.exists():
                rec.transcripts = [RolloutTranscript.from_dict(json.loads(
                    (tdir / f"rollout_{j}.json").read_text())) for j in range(len(list(tdir.iterdir())))]
        except (OSError, KeyError, ValueError) as exc:
            raise ArtifactError(f"corrupt iteration artifacts in {d}: {exc}") from None
        if m["iteration"] != i:
            raise ArtifactError(f"{d}/metrics.json claims iteration {m['iteration']}")
        return rec

    def report(self, graph: TaskGraph, records: list[IterationRecord]) -> RunReport:
        done = [r for r in records if r.completed]
        summary = [{"iteration": r.index, "success_rate": r.success_rate,
                    "mean_episode_length": r.mean_episode_length} for r in done]
        best = select_best(records) if done else None
        return RunReport(self.config.to_dict(with_transport=False), graph.to_dict(),
                         [r.to_dict() for r in records], best, summary)

    def execute(self, after_iteration: Callable[[int], None] | None = None) -> RunReport:
        graph = self.graph()
        records: list[IterationRecord] = []
        program = self.initial_program(graph)
        previous, last_good = None, None
        for i in range(1, self.config.iterations + 1):
            rec = self.load(i)
            if rec is None:
                rec = self.iterate(i, program, previous, last_good, graph)
                self.persist(rec)
                log.info("iteration %d: %s success_rate=%.3f mean_length=%.2f", i, rec.status,
                         rec.success_rate, rec.mean_episode_length)
                if after_iteration is not None:
                    after_iteration(i)
            elif rec.program != program:
                raise ArtifactError(f"iter_{i}/program.reward does not follow from iteration "
                                    f"{i - 1}; the run directory is inconsistent")
            records.append(rec)
            if rec.completed:
                last_good = rec.program
            previous, program = rec.program, rec.refined
        report = self.report(graph, records)
        atomic_write_text(self.dir / "report.json", report.to_json())
        atomic_write_text(self.dir / "summary.csv", summary_csv(report.summary))
        return report


def _write_snapshot(config: EvolutionConfig) -> None:
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snap = {"code_version": __version__, "checksum": checksum(config),
            "config": config.to_dict()}
    atomic_write_text(run_dir / SNAPSHOT, json.dumps(snap, indent=2, sort_keys=True) + "\n")


def read_snapshot(run_dir: str | os.PathLike) -> EvolutionConfig:
    path = Path(run_dir) / SNAPSHOT
    if not path.exists():
        raise ArtifactError(f"{path} not found; not a run directory")
    try:
        snap = json.loads(path.read_text())
        config = EvolutionConfig.from_dict(snap["config"], run_dir)
        stored = snap["checksum"]
        version = snap["code_version"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ArtifactError(f"{path} is corrupt: {exc}") from None
    if version != __version__:
        raise ArtifactError(f"run was made with code version {version}, this is {__version__}")
    if checksum(config) != stored:
        raise ArtifactError(f"{path} does not match its checksum; the snapshot was modified")
    return config


def run_evolution(config: EvolutionConfig, backends: Mapping[str, CriticBackend] | None = None,
                  after_iteration: Callable[[int], None] | None = None,
                  base_dir: str | os.PathLike | None = None) -> RunReport:
    """Start a fresh run in ``config.run_dir`` (which must not hold another run)."""
    run_dir = Path(config.run_dir)
    if (run_dir / SNAPSHOT).exists():
        raise ArtifactError(f"{run_dir} already holds a run; use resume")
    run = _Run(config, backends, Path(base_dir) if base_dir else None)
    _write_snapshot(config)
    return run.execute(after_iteration)


def resume(run_dir: str | os.PathLike, backends: Mapping[str, CriticBackend] | None = None,
           config: EvolutionConfig | None = None,
           after_iteration: Callable[[int], None] | None = None,
           base_dir: str | os.PathLike | None = None) -> RunReport:
    """Continue a run from its first missing iteration; finished runs make no critic calls."""
    stored = read_snapshot(run_dir)
    if config is not None and checksum(config) != checksum(stored):
        raise ArtifactError("the given config differs from the run's config.snapshot")
    if config is not None:
        # keep transport details (e.g. replay instead of record) from the caller
        stored = replace(config, run_dir=str(run_dir))
    run = _Run(stored, backends, Path(base_dir) if base_dir else None)
    return run.execute(after_iteration)
