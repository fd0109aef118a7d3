"""Desk-scale policy search under a reward program.

A linear controller (action = W @ features(state) + b, plus optional
Gaussian noise) is optimized with the cross-entropy method. The policy
objective is the mean discounted return over a fixed set of training seeds,
so a run is a deterministic function of (env, program, config).

Evaluation uses noise-free execution. Episodes end early on success, so a
shorter mean episode length means a faster policy.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsl import RewardBreakdown, RewardProgram, compile_program
from .envs import Environment, EnvState
from .rng import derive_seed, stream

log = logging.getLogger(__name__)


class NonFiniteReturn(ArithmeticError):
    """A candidate's return was NaN or infinite; the reward program is pathological."""


@dataclass
class Policy:
    weights: np.ndarray  # (n_actions, n_features)
    bias: np.ndarray  # (n_actions,)
    feature_map: str
    noise: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (n_actions, n_features) and bias (n_actions,)")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")

    @classmethod
    def zeros(cls, env: Environment, noise: float = 0.0) -> "Policy":
        n_a = len(env.action_spec)
        return cls(np.zeros((n_a, env.feature_dim)), np.zeros(n_a), env.id, noise)

    @classmethod
    def from_params(cls, params, env: Environment, noise: float = 0.0) -> "Policy":
        n_a, n_f = len(env.action_spec), env.feature_dim
        params = np.asarray(params, dtype=float)
        if params.shape != (n_a * (n_f + 1),):
            raise ValueError(f"{env.id} policies have {n_a * (n_f + 1)} parameters, "
                             f"got {params.shape}")
        return cls(params[: n_a * n_f].reshape(n_a, n_f), params[n_a * n_f:], env.id, noise)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def act(self, env: Environment, state: EnvState, rng: np.random.Generator | None = None):
        a = self.weights @ env.features(state) + self.bias
        if self.noise > 0 and rng is not None:
            a = a + self.noise * rng.standard_normal(a.shape)
        return env._clip_action(a)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist(),
                "feature_map": self.feature_map, "noise": self.noise}


@dataclass(frozen=True)
class TrainerConfig:
    population: int = 64
    elite_frac: float = 0.125
    iterations: int = 30
    horizon: int | None = None
    gamma: float = 0.99
    seed: int = 0
    train_episodes: int = 8
    init_std: float = 1.0
    min_std: float = 0.01
    retain_elites: bool = True
    plateau_patience: int | None = None

    def __post_init__(self):
        if not 0 < self.elite_frac <= 1:
            raise ValueError("elite_frac must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        for name in ("population", "iterations", "train_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.population * self.elite_frac)))


@dataclass
class Step:
    state: EnvState
    action: tuple[float, ...]
    reward: RewardBreakdown | None


@dataclass
class Trajectory:
    steps: list[Step]
    success: int
    seed: int
    final_state: EnvState

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def totals(self) -> list[float]:
        return [s.reward.total if s.reward is not None else 0.0 for s in self.steps]


def discounted_return(traj: Trajectory | list[float], gamma: float) -> float:
    """Sum of gamma**t * total_t over the trajectory's per-step totals."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    totals = traj.totals if isinstance(traj, Trajectory) else traj
    out, g = 0.0, 1.0
    for r in totals:
        out += g * r
        g *= gamma
    return out


def rollout(policy: Policy, env: Environment, seed: int, T: int | None = None,
            program: RewardProgram | None = None) -> Trajectory:
    """Run one episode from the seeded initial state until success or T steps."""
    T = env.horizon if T is None else min(T, env.horizon)
    reward_fn = compile_program(program, env) if program is not None else None
    rng = stream(seed, 0x5EED) if policy.noise > 0 else None
    state = env.initial_state(seed)
    steps: list[Step] = []
    success = env.success(state)
    while not success and state.t < T:
        action = tuple(policy.act(env, state, rng))
        steps.append(Step(state, action, reward_fn(state, action) if reward_fn else None))
        state = env.step(state, action)
        success = env.success(state)
    return Trajectory(steps, success, seed, state)


def random_rollout(env: Environment, seed: int, program: RewardProgram | None = None,
                   T: int | None = None) -> Trajectory:
    """Episode under uniformly random actions drawn from the action bounds."""
    T = env.horizon if T is None else min(T, env.horizon)
    reward_fn = compile_program(program, env) if program is not None else None
    rng = stream(seed, 0xA11)
    lo, hi = env.action_spec.low, env.action_spec.high
    state = env.initial_state(seed)
    steps: list[Step] = []
    success = env.success(state)
    while not success and state.t < T:
        action = tuple(float(x) for x in rng.uniform(lo, hi))
        steps.append(Step(state, action, reward_fn(state, action) if reward_fn else None))
        state = env.step(state, action)
        success = env.success(state)
    return Trajectory(steps, success, seed, state)


def evaluate_policy(policy: Policy, env: Environment, n_episodes: int, seed_base: int,
                    T: int | None = None) -> tuple[float, float]:
    """(success rate, mean episode length) over seeds seed_base..seed_base+n-1, noise-free."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    quiet = Policy(policy.weights, policy.bias, policy.feature_map, 0.0)
    trajs = [rollout(quiet, env, seed_base + i, T) for i in range(n_episodes)]
    return (sum(t.success for t in trajs) / n_episodes,
            sum(t.length for t in trajs) / n_episodes)


@dataclass(frozen=True)
class ComponentStat:
    mean: float
    min: float
    max: float
    std: float


@dataclass(frozen=True)
class ComponentStats:
    components: dict[str, ComponentStat]
    n_steps: int = 0

    def to_dict(self) -> dict:
        return {"n_steps": self.n_steps,
                "components": {k: asdict(v) for k, v in self.components.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentStats":
        return cls({k: ComponentStat(**v) for k, v in d["components"].items()}, d["n_steps"])

    def render(self) -> str:
        if not self.components:
            return "(no reward components)"
        rows = [f"{'component':<24}{'mean':>14}{'min':>14}{'max':>14}{'std':>14}"]
        for name, s in self.components.items():
            rows.append(f"{name:<24}{s.mean:>14.6g}{s.min:>14.6g}{s.max:>14.6g}{s.std:>14.6g}")
        return "\n".join(rows)


def _stats_from_columns(names, columns: list[np.ndarray]) -> ComponentStats:
    out = {}
    n = 0
    for name, col in zip(names, columns):
        n = col.size
        if n == 0:
            out[name] = ComponentStat(math.nan, math.nan, math.nan, math.nan)
            continue
        out[name] = ComponentStat(float(col.mean()), float(col.min()), float(col.max()),
                                  float(col.std()))
    return ComponentStats(out, n)


def collect_stats(trajectories: list[Trajectory]) -> ComponentStats:
    """Mean, min, max and population std of each component over all steps."""
    if not trajectories:
        raise ValueError("collect_stats needs at least one trajectory")
    names = None
    for t in trajectories:
        for s in t.steps:
            keys = tuple(s.reward.values) if s.reward is not None else ()
            if names is None:
                names = keys
            elif keys != names:
                raise ValueError(f"mismatched component sets: {names} vs {keys}")
    names = names or ()
    cols = [np.array([s.reward.values[n] for t in trajectories for s in t.steps]) for n in names]
    return _stats_from_columns(names, cols)


@dataclass
class TrainingLog:
    seed: int
    iterations: list[dict] = field(default_factory=list)
    final_stats: ComponentStats | None = None
    warnings: list[str] = field(default_factory=list)
    early_stopped: bool = False
    wall_clock: float = field(default=0.0, compare=False)

    def to_dict(self, with_timing: bool = True) -> dict:
        d = {"seed": self.seed, "iterations": self.iterations,
             "final_stats": self.final_stats.to_dict() if self.final_stats else None,
             "warnings": self.warnings, "early_stopped": self.early_stopped}
        if with_timing:
            d["wall_clock"] = self.wall_clock
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingLog":
        fs = d.get("final_stats")
        return cls(d["seed"], d["iterations"], ComponentStats.from_dict(fs) if fs else None,
                   d.get("warnings", []), d.get("early_stopped", False), d.get("wall_clock", 0.0))


def train_seeds(env: Environment, config: TrainerConfig) -> list[int]:
    lo, hi = env.task.seed_space
    return [lo + derive_seed(config.seed, 1, j) % (hi - lo + 1) for j in range(config.train_episodes)]


def train(env: Environment, program: RewardProgram,
          config: TrainerConfig = TrainerConfig()) -> tuple[Policy, TrainingLog]:
    """Cross-entropy search for the policy maximizing mean discounted return.

    Raises NonFiniteReturn if any candidate's return is not finite.
    """
    started = time.perf_counter()
    reward_fn = compile_program(program, env)  # raises on unchecked programs
    seeds = train_seeds(env, config)
    n_params = len(env.action_spec) * (env.feature_dim + 1)
    rng = stream(config.seed, 0)
    mu = np.zeros(n_params)
    sigma = np.full(n_params, config.init_std)
    names = reward_fn.names
    columns: list[list[float]] = [[] for _ in names]
    log_ = TrainingLog(seed=config.seed)
    if not names:
        log_.warnings.append("degenerate reward: program has no components, every return is 0")

    def score(params) -> tuple[float, float]:
        policy = Policy.from_params(params, env)
        rets, wins = [], 0
        for s in seeds:
            traj = rollout(policy, env, s, config.horizon, program)
            for st in traj.steps:
                for col, v in zip(columns, st.reward.values.values()):
                    col.append(v)
            rets.append(discounted_return(traj, config.gamma))
            wins += traj.success
        ret = sum(rets) / len(rets)
        if not math.isfinite(ret):
            raise NonFiniteReturn(f"candidate return {ret} is not finite under program:\n"
                                  f"{program.source_text}")
        return ret, wins / len(seeds)

    retained: list[tuple[np.ndarray, float, float]] = []
    best = None
    plateau = 0
    for it in range(config.iterations):
        fresh = mu + sigma * rng.standard_normal((config.population - len(retained), n_params))
        scored = list(retained) + [(p, *score(p)) for p in fresh]
        order = sorted(range(len(scored)), key=lambda i: -scored[i][1])
        elites = [scored[i] for i in order[: config.n_elite]]
        elite_params = np.array([e[0] for e in elites])
        mu = elite_params.mean(axis=0)
        sigma = np.maximum(elite_params.std(axis=0), config.min_std)
        retained = elites if config.retain_elites else []
        best = elites[0]
        returns = [s[1] for s in scored]
        log_.iterations.append({"iteration": it + 1, "best_return": best[1],
                                "mean_return": float(np.mean(returns)),
                                "best_train_success": best[2]})
        if config.plateau_patience is not None:
            plateau = plateau + 1 if best[2] == 1.0 else 0
            if plateau >= config.plateau_patience:
                log_.early_stopped = it + 1 < config.iterations
                break
    if log_.warnings and not names:
        log.warning("%s", log_.warnings[0])
    log_.final_stats = _stats_from_columns(names, [np.array(c) for c in columns])
    log_.wall_clock = time.perf_counter() - started
    return Policy.from_params(best[0], env), log_
