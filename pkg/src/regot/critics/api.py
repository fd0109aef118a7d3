"""The three critic operations: build the task graph, judge rollouts, rewrite the reward.

Each call goes through ``call_with_repair`` so that unusable output is sent
back with its error list at most ``max_repair`` times.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from ..dsl import (ProgramDiff, RewardProgram, check_program, diff_programs,
                   parse_program)
from ..envs import EnvApiCatalog, TaskSpec
from ..envs.core import standard_catalog
from ..graph import TaskGraph, parse_graph, render_prompt_block, validate
from ..trainer import ComponentStats
from .base import (MAX_REPAIR, CriticBackend, CriticRequest, Feedback,
                   call_with_repair, parse_feedback)
from .prompts import (EVALUATE_TEMPLATE, GRAPH_TEMPLATE, NO_CHANGE, REFINE_TEMPLATE,
                      PromptTemplate, render_substeps)
from .transcripts import RolloutTranscript


class OutputRejected(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _template(template: PromptTemplate, mode: str | None) -> PromptTemplate:
    return template if mode is None or mode == template.mode else template.with_mode(mode)


def construct_graph(backend: CriticBackend, task: TaskSpec,
                    catalog: EnvApiCatalog | None = None,
                    template: PromptTemplate = GRAPH_TEMPLATE, mode: str | None = None,
                    max_repair: int = MAX_REPAIR) -> TaskGraph:
    """One graph-construction call plus bounded repairs; the result passes validate()."""
    catalog = catalog if catalog is not None else standard_catalog(task.objects)
    messages = _template(template, mode).render(
        task_description=task.goal_description, api_catalog=catalog.render(),
        substeps=render_substeps(task))
    request = CriticRequest("graph", messages, {"task": task.to_dict()})

    def parse(text: str) -> TaskGraph:
        graph = parse_graph(text)
        problems = validate(graph)
        if problems:
            raise OutputRejected([str(v) for v in problems])
        return replace(graph, task=graph.task or task.name)

    graph, _ = call_with_repair(backend, request, parse, max_repair)
    return graph


def evaluate_rollouts(backend: CriticBackend, transcripts: list[RolloutTranscript],
                      stats: ComponentStats, task: TaskSpec, graph: TaskGraph | None = None,
                      template: PromptTemplate = EVALUATE_TEMPLATE,
                      max_repair: int = MAX_REPAIR) -> Feedback:
    if not transcripts:
        raise ValueError("evaluate_rollouts needs at least one transcript")
    messages = template.render(
        task_description=task.goal_description,
        graph_block=render_prompt_block(graph) if graph is not None else "",
        feedback="\n\n".join(t.render() for t in transcripts),
        stats=stats.render())
    request = CriticRequest("evaluate", messages,
                            {"transcripts": [t.to_dict() for t in transcripts],
                             "stats": stats.to_dict()})
    feedback, _ = call_with_repair(backend, request, parse_feedback, max_repair)
    return feedback


@dataclass(frozen=True)
class Refinement:
    program: RewardProgram
    no_change: bool
    diff: ProgramDiff


_BLOCK = re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.S)


def extract_program_text(text: str) -> str:
    m = _BLOCK.search(text)
    return m.group(1) if m else text


def refine_reward(backend: CriticBackend, graph: TaskGraph | None,
                  program: RewardProgram | None, feedback: Feedback | None,
                  stats: ComponentStats | None, catalog: EnvApiCatalog, task: TaskSpec,
                  n_actions: int | None = None, template: PromptTemplate = REFINE_TEMPLATE,
                  max_repair: int = MAX_REPAIR) -> Refinement:
    """Ask for a new program; it is parsed and checked before it is returned.

    With ``program=None`` this asks for an initial program, and NO_CHANGE is
    not an acceptable answer.
    """
    messages = template.render(
        task_description=task.goal_description,
        graph_block=render_prompt_block(graph) if graph is not None else "",
        api_catalog=catalog.render(),
        current_program=program.source_text if program is not None else "(none yet; write one)\n",
        stats=stats.render() if stats is not None else "(not trained yet)",
        feedback=feedback.render() if feedback is not None else "(none yet)")
    payload = {"program": program.source_text if program is not None else None,
               "feedback": feedback.to_dict() if feedback is not None else {},
               "stats": stats.to_dict() if stats is not None else None,
               "n_actions": n_actions}
    request = CriticRequest("refine", messages, payload)

    def parse(text: str) -> Refinement:
        if text.strip() == NO_CHANGE:
            if program is None:
                raise OutputRejected([f"there is no current program, so {NO_CHANGE} is not "
                                      "allowed; write a complete program"])
            return Refinement(program, True, diff_programs(program, program))
        new = parse_program(extract_program_text(text))
        errors = check_program(new, catalog, n_actions)
        if errors:
            raise OutputRejected([str(e) for e in errors])
        if not new.components:
            raise OutputRejected(["the program has no components"])
        if program is None:
            return Refinement(new, False, diff_programs(RewardProgram(()), new))
        diff = diff_programs(program, new)
        if not diff.changed:
            raise OutputRejected([f"the program is identical to the current one; reply "
                                  f"{NO_CHANGE} if it should stay as it is"])
        return Refinement(new, False, diff)

    refinement, _ = call_with_repair(backend, request, parse, max_repair)
    return refinement
