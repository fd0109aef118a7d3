"""Environment abstraction shared by every toy task.

States are immutable values; ``step`` and ``execute_primitive`` return new
states, so rollouts on different state values never interfere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

TASK_SCHEMA_VERSION = 1

SCALAR = "scalar"
VEC2 = "vec2"
NAME = "name"
INDICATOR = "indicator"


class EnvError(Exception):
    pass


class UnknownEnvironment(EnvError, KeyError):
    def __str__(self) -> str:
        return f"unknown environment id: {self.args[0]!r}"


class UnknownApi(EnvError, KeyError):
    """Raised for API names absent from the catalog."""

    def __str__(self) -> str:
        return f"unknown API: {self.args[0]!r}"


@dataclass(frozen=True)
class Dim:
    name: str
    low: float
    high: float
    unit: str = ""


def _check_dims(dims: Sequence[Dim], kind: str) -> None:
    names = [d.name for d in dims]
    if len(set(names)) != len(names):
        raise ValueError(f"{kind} dimension names must be unique: {names}")
    for d in dims:
        if not (math.isfinite(d.low) and math.isfinite(d.high)):
            raise ValueError(f"{kind} dimension {d.name!r} has non-finite bounds")
        if not d.low < d.high:
            raise ValueError(f"{kind} dimension {d.name!r} needs low < high")


@dataclass(frozen=True)
class ObservationSpec:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        _check_dims(self.dims, "observation")

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @cached_property
    def low(self) -> np.ndarray:
        return np.array([d.low for d in self.dims])

    @cached_property
    def high(self) -> np.ndarray:
        return np.array([d.high for d in self.dims])


@dataclass(frozen=True)
class ActionSpec:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        _check_dims(self.dims, "action")

    def __len__(self) -> int:
        return len(self.dims)

    @cached_property
    def low(self) -> np.ndarray:
        return np.array([d.low for d in self.dims])

    @cached_property
    def high(self) -> np.ndarray:
        return np.array([d.high for d in self.dims])


@dataclass(frozen=True)
class ApiSignature:
    """One callable query exposed to reward programs and critic prompts.

    ``params`` holds ``(name, semantic_type)`` pairs. Parameters of type
    ``name`` only accept the string literals listed in ``choices``.
    """

    name: str
    params: tuple[tuple[str, str], ...]
    returns: str
    doc: str
    choices: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.doc.strip():
            raise ValueError(f"API {self.name!r} needs a nonempty doc")

    def render(self) -> str:
        args = ", ".join(f"{p}: {t}" for p, t in self.params)
        line = f"{self.name}({args}) -> {self.returns}  # {self.doc}"
        if self.choices:
            line += f" [valid names: {', '.join(self.choices)}]"
        return line


class EnvApiCatalog(Mapping):
    """Name -> ApiSignature, in declaration order."""

    def __init__(self, entries: Iterable[ApiSignature]):
        self._entries: dict[str, ApiSignature] = {}
        for e in entries:
            if e.name in self._entries:
                raise ValueError(f"duplicate API name {e.name!r}")
            self._entries[e.name] = e

    def __getitem__(self, name: str) -> ApiSignature:
        try:
            return self._entries[name]
        except KeyError:
            raise UnknownApi(name) from None

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def render(self) -> str:
        return "\n".join(e.render() for e in self._entries.values())


MANDATORY_APIS = ("ee_position", "object_position", "joint_value",
                  "joint_target", "is_grasped", "distance")


def standard_catalog(objects: Sequence[str] = (), joints: Sequence[str] = (),
                     graspable: Sequence[str] = ()) -> EnvApiCatalog:
    objects, joints, graspable = tuple(objects), tuple(joints), tuple(graspable)
    return EnvApiCatalog([
        ApiSignature("ee_position", (), VEC2, "planar end-effector position in meters"),
        ApiSignature("object_position", (("name", NAME),), VEC2,
                     "planar position of a named object in meters", objects),
        ApiSignature("joint_value", (("name", NAME),), SCALAR,
                     "current angle of a named joint in radians", joints),
        ApiSignature("joint_target", (("name", NAME),), SCALAR,
                     "fully actuated angle of a named joint in radians", joints),
        ApiSignature("is_grasped", (("name", NAME),), INDICATOR,
                     "1 if the named object is held by the gripper, else 0", graspable),
        ApiSignature("distance", (("a", VEC2), ("b", VEC2)), SCALAR,
                     "euclidean distance between two planar points in meters"),
        ApiSignature("collision", (), INDICATOR,
                     "1 if the robot is in collision with the scene, else 0"),
    ])


SUBSTEP_KINDS = ("primitive", "reward")


@dataclass(frozen=True)
class Substep:
    index: int
    description: str
    kind: str

    def __post_init__(self):
        if self.kind not in SUBSTEP_KINDS:
            raise ValueError(f"substep kind must be one of {SUBSTEP_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    goal_description: str
    substeps: tuple[Substep, ...]
    success_predicate_id: str
    horizon: int
    seed_space: tuple[int, int] = (0, 2**31 - 1)
    env: str | None = None
    objects: tuple[str, ...] = ()

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not any(s.kind == "reward" for s in self.substeps):
            raise ValueError(f"task {self.name!r} needs at least one reward substep")
        lo, hi = self.seed_space
        if lo > hi:
            raise ValueError("empty seed space")

    @property
    def reward_substeps(self) -> tuple[Substep, ...]:
        return tuple(s for s in self.substeps if s.kind == "reward")

    def to_dict(self) -> dict:
        return {
            "schema_version": TASK_SCHEMA_VERSION,
            "name": self.name,
            "env": self.env,
            "goal_description": self.goal_description,
            "objects": list(self.objects),
            "substeps": [{"index": s.index, "description": s.description, "kind": s.kind}
                         for s in self.substeps],
            "success_predicate": self.success_predicate_id,
            "horizon": self.horizon,
            "seed_space": list(self.seed_space),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskSpec":
        version = d.get("schema_version")
        if version != TASK_SCHEMA_VERSION:
            raise ValueError(f"unsupported task schema_version {version!r}")
        return cls(
            name=d["name"],
            goal_description=d["goal_description"],
            substeps=tuple(Substep(int(s["index"]), s["description"], s["kind"])
                           for s in d["substeps"]),
            success_predicate_id=d["success_predicate"],
            horizon=int(d["horizon"]),
            seed_space=tuple(d.get("seed_space", (0, 2**31 - 1))),
            env=d.get("env"),
            objects=tuple(d.get("objects", ())),
        )


def load_task(path: str | Path) -> TaskSpec:
    return TaskSpec.from_dict(json.loads(Path(path).read_text()))


@lru_cache(maxsize=None)
def _index(names: tuple[str, ...]) -> dict[str, int]:
    return {n: i for i, n in enumerate(names)}


@dataclass(frozen=True)
class EnvState:
    names: tuple[str, ...]
    values: tuple[float, ...]
    t: int = 0

    def __getitem__(self, name: str) -> float:
        return self.values[_index(self.names)[name]]

    def replace(self, **updates: float) -> "EnvState":
        vals = list(self.values)
        for k, v in updates.items():
            vals[self.names.index(k)] = float(v)
        return replace(self, values=tuple(vals))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class Environment:
    """Base class: subclasses define specs, dynamics, APIs and primitives.

    Subclasses set ``observation_spec``, ``action_spec``, ``catalog`` and
    ``success_predicates`` and implement ``_initial_values``, ``_integrate``,
    ``_api_impls``, ``_primitives``, ``_success`` and ``features``.
    """

    id: str = ""
    observation_spec: ObservationSpec
    action_spec: ActionSpec
    catalog: EnvApiCatalog
    success_predicates: tuple[str, ...] = ()
    feature_dim: int = 0

    def __init__(self, task: TaskSpec):
        if task.success_predicate_id not in self.success_predicates:
            raise EnvError(f"{self.id} cannot resolve success predicate "
                           f"{task.success_predicate_id!r}")
        self.task = task
        self._impls: dict[str, Callable] = self._api_impls()
        missing = set(self.catalog) - set(self._impls)
        if missing:
            raise EnvError(f"{self.id} lacks implementations for {sorted(missing)}")

    @property
    def horizon(self) -> int:
        return self.task.horizon

    def make_state(self, t: int = 0, **values: float) -> EnvState:
        """Build a state from named values; unspecified dimensions get their low bound."""
        spec = self.observation_spec
        unknown = set(values) - set(spec.names)
        if unknown:
            raise KeyError(f"unknown state dimensions {sorted(unknown)}")
        vals = [float(values.get(d.name, d.low)) for d in spec.dims]
        return self._clamped(vals, t)

    def _clamped(self, vals, t: int) -> EnvState:
        spec = self.observation_spec
        out = tuple(min(max(float(v), d.low), d.high) for v, d in zip(vals, spec.dims))
        return EnvState(spec.names, out, t)

    def _clip_action(self, a) -> list[float]:
        return [min(max(float(x), d.low), d.high) for x, d in zip(a, self.action_spec.dims)]

    def reset(self, seed: int) -> EnvState:
        lo, hi = self.task.seed_space
        if not lo <= seed <= hi:
            raise ValueError(f"seed {seed} outside task seed space [{lo}, {hi}]")
        return self._clamped(self._initial_values(int(seed)), 0)

    def step(self, state: EnvState, action) -> EnvState:
        a = np.asarray(action, dtype=float).reshape(-1)
        if a.shape[0] != len(self.action_spec):
            raise ValueError(f"{self.id} expects {len(self.action_spec)} action dims, "
                             f"got {a.shape[0]}")
        if state.t >= self.horizon:
            raise EnvError(f"cannot step beyond horizon {self.horizon}")
        vals = self._integrate(state.as_dict(), self._clip_action(a))
        return self._clamped([vals[n] for n in self.observation_spec.names], state.t + 1)

    def api_call(self, state: EnvState, name: str, *args):
        sig = self.catalog[name]
        if len(args) != len(sig.params):
            raise TypeError(f"{name} takes {len(sig.params)} arguments, got {len(args)}")
        for (pname, ptype), arg in zip(sig.params, args):
            if ptype == NAME and arg not in sig.choices:
                raise ValueError(f"{name}: invalid {pname} {arg!r}; valid: {sig.choices}")
        return self._impls[name](state, *args)

    def api_function(self, name: str) -> Callable:
        """Unchecked implementation, for interpreters that validated calls up front."""
        self.catalog[name]
        return self._impls[name]

    def execute_primitive(self, state: EnvState, substep: Substep) -> EnvState:
        if substep.kind != "primitive":
            raise ValueError(f"substep {substep.index} is a reward substep, not a primitive")
        key = " ".join(substep.description.lower().split())
        prims = self._primitives()
        if key not in prims:
            raise EnvError(f"{self.id} has no scripted primitive {substep.description!r}; "
                           f"known: {sorted(prims)}")
        vals = prims[key](state.as_dict())
        return self._clamped([vals[n] for n in self.observation_spec.names], state.t)

    def initial_state(self, seed: int) -> EnvState:
        """Reset, then run the task's leading primitive substeps."""
        state = self.reset(seed)
        for sub in self.task.substeps:
            if sub.kind != "primitive":
                break
            state = self.execute_primitive(state, sub)
        return state

    def success(self, state: EnvState) -> int:
        return int(bool(self._success(state)))

    def snapshot(self, state: EnvState) -> dict:
        """API-observable view of a state for rollout transcripts."""
        snap: dict[str, Any] = {"ee": list(self.api_call(state, "ee_position"))}
        for key, api in (("objects", "object_position"), ("joints", "joint_value"),
                         ("grasped", "is_grasped")):
            snap[key] = {n: (list(v) if isinstance(v, tuple) else v)
                         for n in self.catalog[api].choices
                         for v in [self.api_call(state, api, n)]}
        return snap

    # subclass hooks
    def _initial_values(self, seed: int) -> list[float]:
        raise NotImplementedError

    def _integrate(self, s: dict[str, float], a: list[float]) -> dict[str, float]:
        raise NotImplementedError

    def _api_impls(self) -> dict[str, Callable]:
        raise NotImplementedError

    def _primitives(self) -> dict[str, Callable[[dict], dict]]:
        return {}

    def _success(self, state: EnvState) -> bool:
        raise NotImplementedError

    def features(self, state: EnvState) -> np.ndarray:
        raise NotImplementedError


def distance(a, b) -> float:
    return _dist(a, b)
