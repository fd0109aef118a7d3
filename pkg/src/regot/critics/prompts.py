"""Versioned prompt templates for graph construction, evaluation and refinement.

Templates use ``{placeholder}`` slots from a fixed vocabulary. Literal braces
(JSON examples) are left alone because only known slot names are replaced.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

PLACEHOLDERS = ("task_description", "api_catalog", "substeps", "graph_block",
                "current_program", "stats", "feedback", "examples")
MODES = ("zero_shot", "few_shot")
NO_CHANGE = "NO_CHANGE"

_SLOT = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


class UnresolvedPlaceholder(KeyError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: int
    system: str
    user: str
    mode: str = "zero_shot"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"prompt mode must be one of {MODES}, got {self.mode!r}")

    @property
    def slots(self) -> set[str]:
        return set(_SLOT.findall(self.system)) | set(_SLOT.findall(self.user))

    def with_mode(self, mode: str) -> "PromptTemplate":
        return PromptTemplate(self.name, self.version, self.system, self.user, mode)

    def render(self, **values: str) -> tuple[dict, ...]:
        """Fill every slot; a slot without a value is an error, never sent as-is."""
        values = dict(values)
        values["examples"] = few_shot_block() if self.mode == "few_shot" else ""
        missing = sorted(self.slots - set(values))
        if missing:
            raise UnresolvedPlaceholder(f"template {self.name!r} missing values for {missing}")

        def fill(text: str) -> str:
            return _SLOT.sub(lambda m: str(values[m.group(1)]), text)

        return ({"role": "system", "content": fill(self.system)},
                {"role": "user", "content": fill(self.user)})


@lru_cache(maxsize=1)
def few_shot_examples() -> tuple[dict, ...]:
    text = resources.files("regot.data").joinpath("fewshot.json").read_text()
    return tuple(json.loads(text)["examples"])


def few_shot_block() -> str:
    parts = ["Examples of tasks and their graphs:"]
    for i, ex in enumerate(few_shot_examples(), 1):
        parts.append(f"Example {i} task: {ex['task']}")
        parts.append("```json\n" + json.dumps(ex["graph"], indent=2) + "\n```")
    return "\n".join(parts) + "\n\n"


GRAPH_RULES = """Rules the graph must satisfy:
R1 exactly one node has stage 0 (the initial state).
R2 every stage index from 0 to n_stages-1 has at least one node.
R3 every edge goes from a stage i node to a stage i+1 node; no skipping, no going back.
R4 a node at the final stage is reachable from the stage 0 node.
R5 every status and behavior text is nonempty.
R6 every node is reachable from the stage 0 node."""

GRAPH_TEMPLATE = PromptTemplate(
    name="construct_graph",
    version=1,
    system=(
        "You plan robot manipulation tasks as a graph of thoughts. Nodes are task "
        "stages described by robot, object and environment status. Edges are the "
        "robot behaviors that move the task from one stage to the next. Add a failure "
        "node at a stage when a behavior can plausibly go wrong.\n\n" + GRAPH_RULES
    ),
    user=(
        "{examples}Task: {task_description}\n\n"
        "Environment functions available to the robot:\n{api_catalog}\n"
        "Substeps:\n{substeps}\n\n"
        "Answer with one JSON object in a ```json block with keys n_stages, "
        "nodes (id, stage, robot_status, object_status, environment_status) and "
        "edges (src, dst, behavior)."
    ),
)

EVALUATE_TEMPLATE = PromptTemplate(
    name="evaluate_rollouts",
    version=1,
    system=(
        "You review rollouts of a trained robot policy and judge whether the task "
        "was done. Each rollout is a transcript of what the robot and objects did "
        "over time. Judge behavior only."
    ),
    user=(
        "Task: {task_description}\n\n{graph_block}\n"
        "Rollouts:\n{feedback}\n\n"
        "Reward component statistics during training:\n{stats}\n\n"
        "Answer with one JSON object in a ```json block with keys video_description "
        "(string), potential_problems (list of {\"text\": ..., \"tag\": ...}) and "
        "possible_improvements (list of strings). Allowed tags: no-progress, overshoot, "
        "wrong-object, non-finite-reward, stalled-at-stage(<i>), or null."
    ),
)

DSL_GUIDE = """Reward programs are lines of the form
  component <name> weight <number> := <expression>
The total reward is the weighted sum of the components. Expressions use numbers,
+ - * /, comparisons (< <= > >= == != give 1 or 0), parentheses, the builtins
abs, exp, tanh, min, max, clamp(x, lo, hi), dist(p, q), vec(x, y), action(i),
and the environment functions listed below with string-literal object names.
Division by a value within 1e-12 of zero yields 0. Any other identifier is rejected."""

REFINE_TEMPLATE = PromptTemplate(
    name="refine_reward",
    version=1,
    system=(
        "You write and improve reward functions for reinforcement learning. You may "
        "add constraints, remove redundant ones, change a component's form, or "
        "change weights.\n\n" + DSL_GUIDE
    ),
    user=(
        "Task: {task_description}\n\n{graph_block}\n"
        "Environment functions:\n{api_catalog}\n"
        "Current reward program:\n{current_program}\n"
        "Reward component statistics during training:\n{stats}\n\n"
        "Feedback on the trained policy:\n{feedback}\n\n"
        "Reply with the complete new reward program in a ```reward block. If the "
        f"program should stay as it is, reply with the single word {NO_CHANGE}."
    ),
)

TEMPLATES = {t.name: t for t in (GRAPH_TEMPLATE, EVALUATE_TEMPLATE, REFINE_TEMPLATE)}


def render_substeps(task) -> str:
    return "\n".join(f"{s.index}. [{s.kind}] {s.description}" for s in task.substeps)
