"""Environment registry and toy tasks."""

from __future__ import annotations

import json
from importlib import resources

from .core import (MANDATORY_APIS, ActionSpec, ApiSignature, Dim, EnvApiCatalog,
                   EnvError, EnvState, Environment, ObservationSpec, Substep,
                   TaskSpec, UnknownApi, UnknownEnvironment, load_task)
from .toys import HINGE_SUCCESS, THETA_MAX, Fetch2D, Hinge1D, Reach2D

ENVIRONMENTS: dict[str, type[Environment]] = {
    cls.id: cls for cls in (Hinge1D, Reach2D, Fetch2D)
}


def default_task(env_id: str) -> TaskSpec:
    if env_id not in ENVIRONMENTS:
        raise UnknownEnvironment(env_id)
    text = resources.files("regot.data.tasks").joinpath(f"{env_id}.json").read_text()
    return TaskSpec.from_dict(json.loads(text))


def bundled_task(name: str) -> TaskSpec:
    """Load a task shipped with the package by file stem (e.g. ``press_start_button``)."""
    text = resources.files("regot.data.tasks").joinpath(f"{name}.json").read_text()
    return TaskSpec.from_dict(json.loads(text))


def make_env(env_id: str, task: TaskSpec | None = None, **kwargs) -> Environment:
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise UnknownEnvironment(env_id) from None
    return cls(task if task is not None else default_task(env_id), **kwargs)


__all__ = [
    "ENVIRONMENTS", "MANDATORY_APIS", "ActionSpec", "ApiSignature", "Dim",
    "EnvApiCatalog", "EnvError", "EnvState", "Environment", "Fetch2D",
    "HINGE_SUCCESS", "Hinge1D", "ObservationSpec", "Reach2D", "Substep",
    "THETA_MAX", "TaskSpec", "UnknownApi", "UnknownEnvironment",
    "bundled_task", "default_task", "load_task", "make_env",
]
