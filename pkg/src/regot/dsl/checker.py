"""Static checks against an environment's API catalog.

Every call must name a builtin or a catalog entry, with the right arity and
argument types; each component must produce a scalar. Unknown names are
how hallucinated APIs show up, so errors always carry the identifier.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..envs.core import INDICATOR, NAME, SCALAR, VEC2, EnvApiCatalog
from .ast import BinOp, Call, Compare, Neg, Node, Num, RewardProgram, Str, walk

# name -> (parameter types, return type); None means "two or more scalars"
BUILTINS: dict[str, tuple[tuple[str, ...] | None, str]] = {
    "abs": ((SCALAR,), SCALAR),
    "exp": ((SCALAR,), SCALAR),
    "tanh": ((SCALAR,), SCALAR),
    "min": (None, SCALAR),
    "max": (None, SCALAR),
    "clamp": ((SCALAR, SCALAR, SCALAR), SCALAR),
    "dist": ((VEC2, VEC2), SCALAR),
    "vec": ((SCALAR, SCALAR), VEC2),
    "action": ((SCALAR,), SCALAR),
}


@dataclass(frozen=True)
class CheckError:
    identifier: str
    message: str
    component: str = ""
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        where = f"line {self.line} column {self.col}" if self.line else "program"
        comp = f" in component {self.component!r}" if self.component else ""
        return f"{where}{comp}: {self.message}"


def _norm(t: str) -> str:
    return SCALAR if t == INDICATOR else t


class _Checker:
    def __init__(self, catalog: EnvApiCatalog, n_actions: int | None, component: str):
        self.catalog = catalog
        self.n_actions = n_actions
        self.component = component
        self.errors: list[CheckError] = []

    def err(self, ident: str, node: Node, message: str) -> None:
        self.errors.append(CheckError(ident, message, self.component,
                                      getattr(node, "line", 0), getattr(node, "col", 0)))

    def expect(self, node: Node, want: str, ctx: str, owner: str) -> None:
        got = self.type_of(node)
        if got is not None and got != want:
            ident = node.name if isinstance(node, Call) else owner
            self.err(ident, node, f"{ctx} expects {want}, got {got}")

    def type_of(self, node: Node) -> str | None:
        """Inferred type, or None if an error was already reported below."""
        if isinstance(node, Num):
            return SCALAR
        if isinstance(node, Str):
            return NAME
        if isinstance(node, Neg):
            self.expect(node.operand, SCALAR, "unary -", "-")
            return SCALAR
        if isinstance(node, (BinOp, Compare)):
            self.expect(node.left, SCALAR, f"operator {node.op}", node.op)
            self.expect(node.right, SCALAR, f"operator {node.op}", node.op)
            return SCALAR
        if isinstance(node, Call):
            return self.call(node)
        raise TypeError(node)

    def call(self, node: Call) -> str | None:
        if node.name in BUILTINS:
            params, ret = BUILTINS[node.name]
            if params is None:
                if len(node.args) < 2:
                    self.err(node.name, node, f"{node.name} takes at least 2 arguments, "
                                              f"got {len(node.args)}")
                    return None
                params = (SCALAR,) * len(node.args)
            if len(node.args) != len(params):
                self.err(node.name, node, f"{node.name} takes {len(params)} argument(s), "
                                          f"got {len(node.args)}")
                return None
            if node.name == "action":
                return self.action_ref(node)
            for i, (arg, want) in enumerate(zip(node.args, params)):
                self.expect(arg, want, f"argument {i + 1} of {node.name}", node.name)
            return ret

        if node.name not in self.catalog:
            self.err(node.name, node, f"unknown identifier {node.name!r}: not a builtin "
                                      "and not in the environment API catalog")
            for a in node.args:
                self.type_of(a)
            return None
        sig = self.catalog[node.name]
        if len(node.args) != len(sig.params):
            self.err(node.name, node, f"{node.name} takes {len(sig.params)} argument(s), "
                                      f"got {len(node.args)}")
            return None
        for (pname, ptype), arg in zip(sig.params, node.args):
            if ptype == NAME:
                if not isinstance(arg, Str):
                    self.err(node.name, arg, f"{node.name}: {pname} must be a string literal")
                elif arg.value not in sig.choices:
                    valid = ", ".join(sig.choices) or "none in this environment"
                    self.err(arg.value, arg, f"{node.name}: unknown {pname} {arg.value!r} "
                                             f"(valid: {valid})")
            else:
                self.expect(arg, _norm(ptype), f"{pname} of {node.name}", node.name)
        return _norm(sig.returns)

    def action_ref(self, node: Call) -> str:
        (arg,) = node.args
        if not isinstance(arg, Num) or arg.value != int(arg.value):
            self.err("action", node, "action takes an integer channel literal")
        elif self.n_actions is not None and not 0 <= int(arg.value) < self.n_actions:
            self.err("action", node, f"action channel {int(arg.value)} out of range "
                                     f"[0, {self.n_actions - 1}]")
        return SCALAR


def check_program(program: RewardProgram, catalog: EnvApiCatalog,
                  n_actions: int | None = None) -> list[CheckError]:
    """Return every problem found; an empty list means the program is safe to run.

    Stray string literals (outside a name-typed API argument) are type errors.
    """
    errors: list[CheckError] = []
    for comp in program.components:
        ck = _Checker(catalog, n_actions, comp.name)
        t = ck.type_of(comp.expr)
        if t is not None and t != SCALAR:
            ck.err(comp.name, comp.expr, f"component {comp.name!r} must be scalar, got {t}")
        errors.extend(ck.errors)
    return errors


def division_sites(program: RewardProgram) -> list[tuple[str, int, int]]:
    """Divisions that the interpreter guards at runtime: (component, line, col)."""
    return [(c.name, n.line, n.col) for c in program.components
            for n in walk(c.expr) if isinstance(n, BinOp) and n.op == "/"]
