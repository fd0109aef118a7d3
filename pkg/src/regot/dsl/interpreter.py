"""Compiled evaluation of checked reward programs.

Each expression tree is compiled once into nested closures over an
environment's API implementations. Evaluation never raises for checked
programs: division by a near-zero denominator yields ``DIVISION_GUARD`` and
exponential overflow yields ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

from ..envs.core import Environment, EnvState
from .ast import BinOp, Call, Compare, Neg, Node, Num, RewardProgram, Str
from .checker import BUILTINS, check_program

DIVISION_EPS = 1e-12
DIVISION_GUARD = 0.0


@dataclass(frozen=True)
class RewardBreakdown:
    values: dict[str, float]
    total: float

    def to_dict(self) -> dict:
        return {"values": dict(self.values), "total": self.total}


class ProgramCheckFailed(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(map(str, self.errors)))


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _div(a: float, b: float) -> float:
    return DIVISION_GUARD if abs(b) < DIVISION_EPS else a / b


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


_FUNCS: dict[str, Callable] = {
    "abs": abs, "exp": _exp, "tanh": math.tanh, "min": min, "max": max,
    "clamp": _clamp, "dist": lambda a, b: math.hypot(a[0] - b[0], a[1] - b[1]),
    "vec": lambda x, y: (x, y),
}

_BIN = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
}

_CMP = {
    "<": lambda a, b: 1.0 if a < b else 0.0,
    "<=": lambda a, b: 1.0 if a <= b else 0.0,
    ">": lambda a, b: 1.0 if a > b else 0.0,
    ">=": lambda a, b: 1.0 if a >= b else 0.0,
}

Fn = Callable[[EnvState, tuple], object]


def _compile(node: Node, env: Environment) -> Fn:
    if isinstance(node, Num):
        v = float(node.value)
        return lambda s, a: v
    if isinstance(node, Str):
        v = node.value
        return lambda s, a: v
    if isinstance(node, Neg):
        f = _compile(node.operand, env)
        return lambda s, a: -f(s, a)
    if isinstance(node, (BinOp, Compare)):
        op = (_BIN if isinstance(node, BinOp) else _CMP)[node.op]
        lf, rf = _compile(node.left, env), _compile(node.right, env)
        return lambda s, a: op(lf(s, a), rf(s, a))
    if isinstance(node, Call):
        if node.name == "action":
            i = int(node.args[0].value)
            return lambda s, a: a[i]
        argf = [_compile(x, env) for x in node.args]
        if node.name not in BUILTINS:
            return _api_call(env.api_function(node.name), argf)
        fn = _FUNCS[node.name]
        if len(argf) == 1:
            f0 = argf[0]
            return lambda s, a: fn(f0(s, a))
        if len(argf) == 2:
            f0, f1 = argf
            return lambda s, a: fn(f0(s, a), f1(s, a))
        return lambda s, a: fn(*[f(s, a) for f in argf])
    raise TypeError(f"cannot compile {node!r}")


def _api_call(impl: Callable, argf: list[Fn]) -> Fn:
    # catalog implementations take the state first
    if not argf:
        return lambda s, a: impl(s)
    if len(argf) == 1:
        f0 = argf[0]
        return lambda s, a: impl(s, f0(s, a))
    return lambda s, a: impl(s, *[f(s, a) for f in argf])


class CompiledProgram:
    """A reward program bound to one environment."""

    def __init__(self, program: RewardProgram, env: Environment):
        errors = check_program(program, env.catalog, len(env.action_spec))
        if errors:
            raise ProgramCheckFailed(errors)
        self.program = program
        self.env = env
        self.names = program.names
        self._weights = tuple(c.weight for c in program.components)
        self._fns = tuple(_compile(c.expr, env) for c in program.components)

    def values(self, state: EnvState, action) -> list[float]:
        a = tuple(float(x) for x in action)
        return [float(f(state, a)) for f in self._fns]

    def __call__(self, state: EnvState, action) -> RewardBreakdown:
        vals = self.values(state, action)
        total = 0.0
        for w, v in zip(self._weights, vals):
            total += w * v
        return RewardBreakdown(dict(zip(self.names, vals)), total)


@lru_cache(maxsize=128)
def compile_program(program: RewardProgram, env: Environment) -> CompiledProgram:
    return CompiledProgram(program, env)


def evaluate(program: RewardProgram, env: Environment, state: EnvState, action) -> RewardBreakdown:
    """Per-component values and weighted total for one (state, action) pair."""
    return compile_program(program, env)(state, action)
