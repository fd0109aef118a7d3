from __future__ import annotations

import json

from .ast import BinOp, Call, Compare, Neg, Node, Num, Str

_PREC = {"cmp": 1, "+": 2, "-": 2, "*": 3, "/": 3, "neg": 4, "atom": 5}


def _prec(node: Node) -> int:
    if isinstance(node, Compare):
        return _PREC["cmp"]
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def print_expr(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Str):
        return json.dumps(node.value)
    if isinstance(node, Call):
        if node.name == "action" and len(node.args) == 1 and isinstance(node.args[0], Num) \
                and float(node.args[0].value).is_integer():
            return f"action({int(node.args[0].value)})"
        return f"{node.name}({', '.join(print_expr(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = print_expr(node.operand)
        return f"-{inner}" if _prec(node.operand) >= _PREC["neg"] else f"-({inner})"
    if isinstance(node, (BinOp, Compare)):
        p = _prec(node)
        left, right = print_expr(node.left), print_expr(node.right)
        if _prec(node.left) < p or (isinstance(node, Compare) and _prec(node.left) == p):
            left = f"({left})"
        # right operand at equal precedence needs parens to keep the tree shape
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def print_program(program) -> str:
    return "".join(f"component {c.name} weight {float(c.weight)!r} := {print_expr(c.expr)}\n"
                   for c in program.components)
