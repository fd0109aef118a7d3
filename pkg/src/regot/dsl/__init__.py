"""Reward program language: parse, check, evaluate, reweight, diff."""

from .ast import (BinOp, Call, Compare, Component, Neg, Num, ProgramDiff,
                  RewardProgram, Str, diff_programs, set_weights, walk)
from .checker import BUILTINS, CheckError, check_program, division_sites
from .interpreter import (DIVISION_EPS, DIVISION_GUARD, CompiledProgram,
                          ProgramCheckFailed, RewardBreakdown, compile_program,
                          evaluate)
from .parser import DSLParseError, ParseIssue, parse_program
from .printer import print_expr, print_program

__all__ = [
    "BUILTINS", "BinOp", "Call", "CheckError", "Compare", "CompiledProgram",
    "Component", "DIVISION_EPS", "DIVISION_GUARD", "DSLParseError", "Neg", "Num",
    "ParseIssue", "ProgramCheckFailed", "ProgramDiff", "RewardBreakdown",
    "RewardProgram", "Str", "check_program", "compile_program", "diff_programs",
    "division_sites", "evaluate", "parse_program", "print_expr", "print_program",
    "set_weights", "walk",
]
