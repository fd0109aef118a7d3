"""Deterministic rule-based critic.

Outputs depend only on the request payload and attempt number, so runs that
use it are reproducible bit for bit. Rule sets are keyed by environment id
(plus ``press_start_button`` for graph-only use). Fault modes make it emit
bad output on purpose to exercise the repair loop.
"""

from __future__ import annotations

import json
import math

from ..dsl import Call, Num, RewardProgram, parse_program, print_program, set_weights
from ..dsl.ast import Component
from .base import CriticError, CriticRequest, stalled_stage
from .prompts import NO_CHANGE

FAULTS = ("malformed-always", "malformed-once", "stage-skip-once", "hallucinate-once")


def _node(id_, stage, robot, obj, env):
    return {"id": id_, "stage": stage, "robot_status": robot, "object_status": obj,
            "environment_status": env}


def _edge(src, dst, behavior):
    return {"src": src, "dst": dst, "behavior": behavior}


GRAPHS = {
    "hinge1d": {
        "n_stages": 3,
        "nodes": [
            _node("approach", 0, "gripper at home pose", "lid closed at 0 rad", "dispenser idle"),
            _node("at_handle", 1, "gripper holding the lid handle", "lid closed at 0 rad",
                  "dispenser idle"),
            _node("opened", 2, "gripper holding the lid handle",
                  "lid rotated to at least 90% of its range", "dispenser open"),
        ],
        "edges": [
            _edge("approach", "at_handle", "move to the handle and grip it"),
            _edge("at_handle", "opened", "rotate the lid about its hinge until it is open"),
        ],
    },
    "reach2d": {
        "n_stages": 2,
        "nodes": [
            _node("start", 0, "end-effector at its start position", "target marker on the table",
                  "table clear"),
            _node("at_target", 1, "end-effector within 5 cm of the target",
                  "target marker on the table", "table clear"),
        ],
        "edges": [_edge("start", "at_target", "move straight toward the target and stop on it")],
    },
    "fetch2d": {
        "n_stages": 3,
        "nodes": [
            _node("start", 0, "gripper open at its start position", "item on the table",
                  "storage zone empty"),
            _node("holding", 1, "gripper closed on the item", "item lifted", "storage zone empty"),
            _node("missed", 1, "gripper closed on nothing next to the item",
                  "item still on the table", "storage zone empty"),
            _node("stored", 2, "gripper holding the item over the zone", "item inside the zone",
                  "storage zone occupied"),
        ],
        "edges": [
            _edge("start", "holding", "reach the item and close the gripper on it"),
            _edge("start", "missed", "close the gripper before reaching the item"),
            _edge("holding", "stored", "carry the item to the storage zone"),
        ],
    },
    "press_start_button": {
        "n_stages": 4,
        "nodes": [
            _node("idle", 0, "gripper at home pose", "start button up", "machine off"),
            _node("above_button", 1, "gripper hovering above the start button", "start button up",
                  "machine off"),
            _node("touching", 2, "gripper tip resting on the start button", "start button up",
                  "machine off"),
            _node("slipped", 2, "gripper tip beside the button on the panel", "start button up",
                  "machine off"),
            _node("pressed", 3, "gripper pressing down", "start button held down", "machine on"),
        ],
        "edges": [
            _edge("idle", "above_button", "move above the start button"),
            _edge("above_button", "touching", "lower the gripper onto the button"),
            _edge("above_button", "slipped", "lower the gripper off-center"),
            _edge("touching", "pressed", "push the button down until the machine turns on"),
        ],
    },
}

DEFAULT_PROGRAMS = {
    "hinge1d": (
        'component progress weight 1.0 := joint_value("lid") - joint_target("lid")\n'
        "component effort weight 1.0 := 0 - 20 * action(0) * action(0)\n"
    ),
    "reach2d": 'component near weight 1.0 := 0 - distance(ee_position(), object_position("target"))\n',
    "fetch2d": (
        'component reach weight 1.0 := 0 - distance(ee_position(), object_position("item")) '
        '* (1 - is_grasped("item"))\n'
        'component grasp weight 0.5 := is_grasped("item")\n'
        'component transport weight 1.0 := 0 - distance(object_position("item"), '
        'object_position("target")) * is_grasped("item")\n'
    ),
}

# stage a rollout stalls at -> component the refiner strengthens
STAGE_COMPONENT = {
    "hinge1d": {0: "progress", 1: "progress"},
    "reach2d": {0: "near"},
    "fetch2d": {0: "reach", 1: "transport"},
}

NO_PROGRESS_LID = 0.3
OVERSHOOT_NEAR = 0.1
OVERSHOOT_BACKOFF = 0.05


def _d(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def furthest_stage(rule_set: str, tr: dict) -> int:
    recs = tr["records"]
    if rule_set == "hinge1d":
        if tr["success"]:
            return 2
        return 1 if any(r["grasped"].get("handle") for r in recs) else 0
    if rule_set == "reach2d":
        return 1 if tr["success"] else 0
    if rule_set == "fetch2d":
        if tr["success"]:
            return 2
        return 1 if any(r["grasped"].get("item") for r in recs) else 0
    raise CriticError(f"scripted critic has no evaluation rules for {rule_set!r}")


def _no_progress(rule_set: str, tr: dict) -> bool:
    recs = tr["records"]
    if rule_set == "hinge1d":
        return max(r["joints"]["lid"] for r in recs) <= NO_PROGRESS_LID
    if rule_set == "reach2d":
        key = "target"
    else:
        if any(r["grasped"].get("item") for r in recs):
            return False
        key = "item"
    first, last = recs[0], recs[-1]
    return _d(last["ee"], last["objects"][key]) >= _d(first["ee"], first["objects"][key]) - 0.01


def _overshoot(rule_set: str, tr: dict) -> bool:
    recs = tr["records"]
    if rule_set == "reach2d":
        ds = [_d(r["ee"], r["objects"]["target"]) for r in recs]
    elif rule_set == "fetch2d":
        ds = [_d(r["objects"]["item"], r["objects"]["target"]) for r in recs
              if r["grasped"].get("item")]
    else:
        return False
    return bool(ds) and min(ds) < OVERSHOOT_NEAR and ds[-1] > min(ds) + OVERSHOOT_BACKOFF


def evaluate(rule_set: str, transcripts: list[dict]) -> dict:
    """Mechanical rollout judgment, returned as a feedback dict."""
    n = len(transcripts)
    wins = sum(1 for t in transcripts if t["success"])
    failing = [t for t in transcripts if not t["success"]]
    lengths = ", ".join(str(t["length"]) for t in transcripts)
    if wins == n:
        desc = f"all {n} rollouts completed the task (episode lengths {lengths})"
    elif wins == 0:
        desc = f"none of the {n} rollouts completed the task (episode lengths {lengths})"
    else:
        desc = f"partial success {wins}/{n}: some rollouts completed the task (episode lengths {lengths})"
    problems, improvements = [], []
    if failing:
        if all(_no_progress(rule_set, t) for t in failing):
            problems.append({"text": "the robot barely moves toward the goal in the failing rollouts",
                             "tag": "no-progress"})
            improvements.append("make the progress term more dominant relative to penalties")
        elif any(_overshoot(rule_set, t) for t in failing):
            problems.append({"text": "the robot gets close to the goal and then moves past it",
                             "tag": "overshoot"})
            improvements.append("penalize large motions so the robot settles near the goal")
        else:
            stage = max(furthest_stage(rule_set, t) for t in failing)
            problems.append({"text": f"failing rollouts stop making progress at stage {stage}",
                             "tag": f"stalled-at-stage({stage})"})
            improvements.append(f"strengthen the reward for leaving stage {stage}")
    return {"video_description": desc, "potential_problems": problems,
            "possible_improvements": improvements}


def _clamp_wrapped(c: Component) -> bool:
    return isinstance(c.expr, Call) and c.expr.name == "clamp"


def _boost_target(rule_set: str, program: RewardProgram, stage: int | None) -> str:
    name = STAGE_COMPONENT.get(rule_set, {}).get(stage if stage is not None else 0)
    if name in program.names:
        return name
    for n in program.names:
        if n.startswith("progress"):
            return n
    for c in program.components:
        if c.weight > 0:
            return c.name
    if not program.components:
        raise CriticError("cannot reweight an empty program")
    return program.components[0].name


def refine(rule_set: str, program: RewardProgram | None, feedback: dict,
           n_actions: int = 1) -> RewardProgram | None:
    """Next program, or None for no change."""
    if program is None:
        if rule_set not in DEFAULT_PROGRAMS:
            raise CriticError(f"scripted critic has no default program for {rule_set!r}")
        return parse_program(DEFAULT_PROGRAMS[rule_set])
    tags = [p.get("tag") for p in feedback.get("potential_problems", [])]
    if not tags:
        return None
    if "non-finite-reward" in tags:
        comps = tuple(c if _clamp_wrapped(c) else
                      Component(c.name, c.weight, Call("clamp", (c.expr, Num(-10.0), Num(10.0))))
                      for c in program.components)
        if all(_clamp_wrapped(c) for c in program.components):
            comps = tuple(Component(c.name, c.weight / 2, c.expr) for c in program.components)
        return RewardProgram(comps)
    if "overshoot" in tags:
        if "overshoot_penalty" in program.names:
            w = program.component("overshoot_penalty").weight
            return set_weights(program, {"overshoot_penalty": 2 * w})
        chans = " + ".join(f"abs(action({i}))" for i in range(min(n_actions, 2)))
        extra = parse_program(f"component overshoot_penalty weight 1.0 := 0 - clamp({chans}, 0, 1)\n")
        return RewardProgram(program.components + extra.components)
    stage = None
    for t in tags:
        if stalled_stage(t) is not None:
            stage = stalled_stage(t)
    target = _boost_target(rule_set, program, stage)
    return set_weights(program, {target: 2 * program.component(target).weight})


def _stage_skip(graph: dict) -> dict:
    g = json.loads(json.dumps(graph))
    first, last = g["nodes"][0]["id"], [n for n in g["nodes"] if n["stage"] == g["n_stages"] - 1][0]
    g["edges"].append(_edge(first, last["id"], "jump straight to the goal"))
    return g


class ScriptedCritic:
    name = "scripted"

    def __init__(self, rule_set: str, faults: dict[str, str] | None = None):
        if rule_set not in GRAPHS:
            raise ValueError(f"unknown scripted rule set {rule_set!r}; known: {sorted(GRAPHS)}")
        faults = dict(faults or {})
        for purpose, fault in faults.items():
            if fault not in FAULTS:
                raise ValueError(f"unknown fault {fault!r} for {purpose}; known: {FAULTS}")
        self.rule_set = rule_set
        self.faults = faults
        self.calls: list[CriticRequest] = []

    def complete(self, request: CriticRequest) -> str:
        self.calls.append(request)
        fault = self.faults.get(request.purpose)
        if fault == "malformed-always" or (fault == "malformed-once" and request.attempt == 0):
            return "I think the answer is { not quite json"
        p = request.payload
        if request.purpose == "graph":
            graph = GRAPHS[self.rule_set]
            if fault == "stage-skip-once" and request.attempt == 0:
                graph = _stage_skip(graph)
            return "```json\n" + json.dumps(graph, indent=2) + "\n```"
        if request.purpose == "evaluate":
            return "```json\n" + json.dumps(evaluate(self.rule_set, p["transcripts"]), indent=2) + "\n```"
        if request.purpose == "refine":
            if fault == "hallucinate-once" and request.attempt == 0:
                return ("```reward\ncomponent progress weight 1.0 := lid_angle_bonus(\"lid\")\n```")
            current = parse_program(p["program"]) if p.get("program") else None
            new = refine(self.rule_set, current, p.get("feedback", {}), p.get("n_actions", 1))
            if new is None:
                return NO_CHANGE
            return "```reward\n" + print_program(new) + "```"
        raise CriticError(f"unknown request purpose {request.purpose!r}")
