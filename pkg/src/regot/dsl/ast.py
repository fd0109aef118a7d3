"""Expression trees for reward programs.

Source positions are carried for error messages but excluded from equality,
so ``parse(print(p)) == p`` holds structurally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: float
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Str(Node):
    value: str
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Node, ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # + - * /
    left: Node
    right: Node
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Compare(Node):
    op: str  # < <= > >=
    left: Node
    right: Node
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


def walk(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, Call):
        for a in node.args:
            yield from walk(a)
    elif isinstance(node, (BinOp, Compare)):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Neg):
        yield from walk(node.operand)


@dataclass(frozen=True)
class Component:
    name: str
    weight: float
    expr: Node
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RewardProgram:
    components: tuple[Component, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        names = [c.name for c in self.components]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate component names: {sorted(dup)}")
        for c in self.components:
            if not math.isfinite(c.weight):
                raise ValueError(f"component {c.name!r} has non-finite weight {c.weight}")
        if not self.source_text:
            from .printer import print_program
            object.__setattr__(self, "source_text", print_program(self))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.components)

    @property
    def weights(self) -> dict[str, float]:
        return {c.name: c.weight for c in self.components}

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)


def set_weights(program: RewardProgram, weights: Mapping[str, float]) -> RewardProgram:
    """Return a copy with some weights replaced; expressions are untouched."""
    unknown = set(weights) - set(program.names)
    if unknown:
        raise KeyError(f"unknown component(s) {sorted(unknown)}")
    for k, v in weights.items():
        if not math.isfinite(float(v)):
            raise ValueError(f"weight for {k!r} is not finite: {v}")
    if not weights:
        return program
    comps = tuple(replace(c, weight=float(weights[c.name])) if c.name in weights else c
                  for c in program.components)
    return RewardProgram(comps)


@dataclass(frozen=True)
class ProgramDiff:
    entries: tuple[tuple[str, str], ...]  # (component name, change kind)

    def of_kind(self, kind: str) -> list[str]:
        return [n for n, k in self.entries if k == kind]

    @property
    def changed(self) -> bool:
        return any(k != "unchanged" for _, k in self.entries)

    def render(self) -> str:
        return "".join(f"{kind}\t{name}\n" for name, kind in self.entries)


def diff_programs(old: RewardProgram, new: RewardProgram) -> ProgramDiff:
    """Classify each component as added, removed, modified, reweighted or unchanged.

    A component whose expression changed is ``modified`` even if its
    weight changed too.
    """
    entries = []
    new_names = set(new.names)
    for c in old.components:
        if c.name not in new_names:
            entries.append((c.name, "removed"))
            continue
        n = new.component(c.name)
        if n.expr != c.expr:
            entries.append((c.name, "modified"))
        elif n.weight != c.weight:
            entries.append((c.name, "reweighted"))
        else:
            entries.append((c.name, "unchanged"))
    old_names = set(old.names)
    entries.extend((c.name, "added") for c in new.components if c.name not in old_names)
    return ProgramDiff(tuple(entries))
