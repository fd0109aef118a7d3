"""Text-attributed task graphs: stage nodes joined by behavior edges.

Wire format (JSON)::

    {"task": "press_start_button", "n_stages": 4,
     "nodes": [{"id": "s0", "stage": 0, "robot_status": "...",
                "object_status": "...", "environment_status": "..."}, ...],
     "edges": [{"src": "s0", "dst": "s1", "behavior": "..."}, ...]}

``n_stages`` may be omitted (inferred from the highest stage). Edge ``id``
defaults to ``"<src>-><dst>"``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

GRAPH_SCHEMA_VERSION = 1
DEFAULT_PATH_CAP = 256

RULES = {
    "R1": "exactly one stage-0 (initial) node",
    "R2": "every stage index in [0, n_stages-1] is populated",
    "R3": "every edge advances the stage index by exactly 1",
    "R4": "some goal-stage node is reachable from the initial node",
    "R5": "all node and edge text attributes are nonempty",
    "R6": "every node is reachable from the initial node",
}


@dataclass(frozen=True)
class StageNode:
    id: str
    stage: int
    robot_status: str
    object_status: str
    environment_status: str


@dataclass(frozen=True)
class BehaviorEdge:
    src: str
    dst: str
    behavior: str
    id: str = ""

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", f"{self.src}->{self.dst}")


@dataclass(frozen=True)
class TaskGraph:
    nodes: tuple[StageNode, ...]
    edges: tuple[BehaviorEdge, ...]
    n_stages: int
    task: str = ""

    def __post_init__(self):
        # canonical ordering makes equality independent of input order
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: (n.stage, n.id))))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: (e.src, e.dst, e.id))))

    def node(self, node_id: str) -> StageNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def stage_nodes(self, stage: int) -> list[StageNode]:
        return [n for n in self.nodes if n.stage == stage]

    @property
    def goal_stage(self) -> int:
        return max((n.stage for n in self.nodes), default=0)

    def successors(self) -> dict[str, list[BehaviorEdge]]:
        out: dict[str, list[BehaviorEdge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            out.setdefault(e.src, []).append(e)
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": GRAPH_SCHEMA_VERSION,
            "task": self.task,
            "n_stages": self.n_stages,
            "nodes": [{"id": n.id, "stage": n.stage, "robot_status": n.robot_status,
                       "object_status": n.object_status,
                       "environment_status": n.environment_status} for n in self.nodes],
            "edges": [{"id": e.id, "src": e.src, "dst": e.dst, "behavior": e.behavior}
                      for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class Violation:
    rule: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.rule} at {self.location}: {self.message}"


class GraphParseError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class PathLimitError(ValueError):
    pass


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)

NODE_FIELDS = ("id", "stage", "robot_status", "object_status", "environment_status")


def _extract_json(text: str) -> str:
    m = _FENCE.search(text)
    if m:
        return m.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start and text[:start].strip():
        return text[start:end + 1]
    return text


def parse_graph(serialized: str) -> TaskGraph:
    """Deserialize critic output into a TaskGraph.

    Raises GraphParseError listing every located problem found, so the
    list can be handed back to the critic verbatim.
    """
    try:
        doc = json.loads(_extract_json(serialized))
    except json.JSONDecodeError as exc:
        raise GraphParseError([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(doc, dict):
        raise GraphParseError(["document: expected a JSON object with 'nodes' and 'edges'"])

    errors: list[str] = []
    raw_nodes = doc.get("nodes")
    raw_edges = doc.get("edges", [])
    if not isinstance(raw_nodes, list) or not raw_nodes:
        errors.append("nodes: must be a nonempty list")
        raw_nodes = []
    if not isinstance(raw_edges, list):
        errors.append("edges: must be a list")
        raw_edges = []

    nodes: list[StageNode] = []
    seen: set[str] = set()
    for i, rn in enumerate(raw_nodes):
        if not isinstance(rn, dict):
            errors.append(f"nodes[{i}]: expected an object")
            continue
        missing = [f for f in NODE_FIELDS if f not in rn]
        if missing:
            errors.append(f"nodes[{i}]: missing required field(s) {', '.join(missing)}")
            continue
        if not isinstance(rn["stage"], int) or isinstance(rn["stage"], bool) or rn["stage"] < 0:
            errors.append(f"nodes[{i}] ({rn['id']!r}): stage must be a nonnegative integer")
            continue
        if not all(isinstance(rn[f], str) for f in NODE_FIELDS if f != "stage"):
            errors.append(f"nodes[{i}]: id and status fields must be strings")
            continue
        if rn["id"] in seen:
            errors.append(f"nodes[{i}]: duplicate node id {rn['id']!r}")
            continue
        seen.add(rn["id"])
        nodes.append(StageNode(rn["id"], rn["stage"], rn["robot_status"],
                               rn["object_status"], rn["environment_status"]))

    n_stages = doc.get("n_stages")
    if n_stages is None:
        n_stages = max((n.stage for n in nodes), default=-1) + 1
    elif not isinstance(n_stages, int) or isinstance(n_stages, bool) or n_stages < 1:
        errors.append("n_stages: must be a positive integer")
        n_stages = max((n.stage for n in nodes), default=-1) + 1
    for n in nodes:
        if n.stage >= n_stages:
            errors.append(f"node {n.id!r}: stage {n.stage} outside [0, {n_stages - 1}]")

    edges: list[BehaviorEdge] = []
    edge_ids: set[str] = set()
    for i, re_ in enumerate(raw_edges):
        if not isinstance(re_, dict):
            errors.append(f"edges[{i}]: expected an object")
            continue
        missing = [f for f in ("src", "dst", "behavior") if f not in re_]
        if missing:
            errors.append(f"edges[{i}]: missing required field(s) {', '.join(missing)}")
            continue
        if not all(isinstance(re_[f], str) for f in ("src", "dst", "behavior")):
            errors.append(f"edges[{i}]: src, dst and behavior must be strings")
            continue
        edge = BehaviorEdge(re_["src"], re_["dst"], re_["behavior"], str(re_.get("id") or ""))
        for end in ("src", "dst"):
            ref = getattr(edge, end)
            if ref not in seen:
                errors.append(f"edges[{i}] ({edge.id!r}): {end} {ref!r} is not a node id")
        if edge.id in edge_ids:
            errors.append(f"edges[{i}]: duplicate edge id {edge.id!r}")
        edge_ids.add(edge.id)
        edges.append(edge)

    if errors:
        raise GraphParseError(errors)
    return TaskGraph(tuple(nodes), tuple(edges), n_stages, str(doc.get("task", "")))


def _reachable(graph: TaskGraph, roots: Iterable[str]) -> set[str]:
    succ = graph.successors()
    seen = set(roots)
    stack = list(seen)
    while stack:
        for e in succ.get(stack.pop(), []):
            if e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return seen


def validate(graph: TaskGraph) -> list[Violation]:
    """Check the structural heuristics R1-R6; an empty list means valid.

    When no goal node is reachable, unreachable goal-stage nodes are
    reported once under R4 rather than again under R6.
    """
    out: list[Violation] = []
    initial = graph.stage_nodes(0)
    if len(initial) != 1:
        out.append(Violation("R1", "stage 0",
                             f"expected exactly one initial node, found {len(initial)}"))
    for s in range(graph.n_stages):
        if not graph.stage_nodes(s):
            out.append(Violation("R2", f"stage {s}", "no node at this stage"))

    by_id = {n.id: n for n in graph.nodes}
    for e in graph.edges:
        if e.src in by_id and e.dst in by_id and by_id[e.dst].stage != by_id[e.src].stage + 1:
            out.append(Violation("R3", f"edge {e.id}",
                                 f"goes from stage {by_id[e.src].stage} to {by_id[e.dst].stage}"))

    # traverse only legal forward edges so R3 offenders cannot mask reachability issues
    legal = TaskGraph(graph.nodes, tuple(e for e in graph.edges if e.src in by_id and e.dst in by_id
                                         and by_id[e.dst].stage == by_id[e.src].stage + 1),
                      graph.n_stages, graph.task)
    reach = _reachable(legal, [n.id for n in initial])
    goal = graph.goal_stage
    goals = graph.stage_nodes(goal)
    goal_reached = goal > 0 and any(n.id in reach for n in goals)
    if not goal_reached:
        where = ", ".join(n.id for n in goals) or "none"
        msg = ("graph has no stage beyond the initial one" if goal == 0
               else "no goal-stage node is reachable from the initial node")
        out.append(Violation("R4", f"stage {goal} ({where})", msg))

    for n in graph.nodes:
        for f in ("robot_status", "object_status", "environment_status"):
            if not getattr(n, f).strip():
                out.append(Violation("R5", f"node {n.id}", f"{f} is empty"))
    for e in graph.edges:
        if not e.behavior.strip():
            out.append(Violation("R5", f"edge {e.id}", "behavior is empty"))

    for n in graph.nodes:
        if n.id in reach:
            continue
        if n.stage == goal and not goal_reached:
            continue
        out.append(Violation("R6", f"node {n.id}", "unreachable from the initial node"))
    return out


def enumerate_paths(graph: TaskGraph, cap: int = DEFAULT_PATH_CAP) -> list[tuple[str, ...]]:
    """All initial-to-goal paths as alternating node/edge id sequences, sorted."""
    initial = graph.stage_nodes(0)
    if len(initial) != 1:
        raise ValueError("enumerate_paths needs a graph with a single initial node")
    goal = graph.goal_stage
    succ = graph.successors()
    stage = {n.id: n.stage for n in graph.nodes}
    paths: list[tuple[str, ...]] = []

    def walk(node_id: str, prefix: tuple[str, ...]) -> None:
        if stage[node_id] == goal:
            paths.append(prefix)
            if len(paths) > cap:
                raise PathLimitError(
                    f"more than {cap} initial-to-goal paths; simplify the graph "
                    "(fewer alternative nodes per stage) or raise the cap")
            return
        for e in succ[node_id]:
            if stage[e.dst] == stage[node_id] + 1:
                walk(e.dst, prefix + (e.id, e.dst))

    walk(initial[0].id, (initial[0].id,))
    return sorted(paths)


def render_prompt_block(graph: TaskGraph) -> str:
    """Stable, human-readable rendering for critic prompts."""
    problems = validate(graph)
    if problems:
        raise ValueError("refusing to render an invalid graph: " + "; ".join(map(str, problems)))
    lines = [f"TASK GRAPH ({graph.task or 'task'}): {graph.n_stages} stages, "
             f"{len(graph.nodes)} nodes, {len(graph.edges)} transitions"]
    succ = graph.successors()
    for s in range(graph.n_stages):
        lines.append(f"Stage S{s}:")
        for n in graph.stage_nodes(s):
            lines.append(f"  [{n.id}] robot: {n.robot_status}")
            lines.append(f"  [{n.id}] objects: {n.object_status}")
            lines.append(f"  [{n.id}] environment: {n.environment_status}")
        for n in graph.stage_nodes(s):
            for e in succ[n.id]:
                lines.append(f"  {e.src} -> {e.dst}: {e.behavior}")
    return "\n".join(lines) + "\n"
