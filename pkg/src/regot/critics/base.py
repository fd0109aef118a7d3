"""Critic request/response types and the bounded repair loop."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, TypeVar

MAX_REPAIR = 3

PROBLEM_TAGS = ("no-progress", "overshoot", "wrong-object", "non-finite-reward")
_STALLED = re.compile(r"^stalled-at-stage\((\d+)\)$")


def valid_tag(tag: str | None) -> bool:
    return tag is None or tag in PROBLEM_TAGS or bool(_STALLED.match(tag))


def stalled_stage(tag: str | None) -> int | None:
    m = _STALLED.match(tag or "")
    return int(m.group(1)) if m else None


class CriticError(RuntimeError):
    pass


class CriticTransportError(CriticError):
    pass


class IrreparableOutput(CriticError):
    """The critic kept producing unusable output; ``transcript`` holds every exchange."""

    def __init__(self, message: str, transcript: list[dict]):
        super().__init__(message)
        self.transcript = transcript


@dataclass(frozen=True)
class Problem:
    text: str
    tag: str | None = None

    def __post_init__(self):
        if not valid_tag(self.tag):
            raise ValueError(f"unknown problem tag {self.tag!r}")


@dataclass(frozen=True)
class Feedback:
    video_description: str
    potential_problems: tuple[Problem, ...] = ()
    possible_improvements: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.video_description.strip():
            raise ValueError("feedback needs a nonempty video_description")

    @property
    def tags(self) -> list[str]:
        return [p.tag for p in self.potential_problems if p.tag]

    def to_dict(self) -> dict:
        return {
            "video_description": self.video_description,
            "potential_problems": [{"text": p.text, "tag": p.tag} for p in self.potential_problems],
            "possible_improvements": list(self.possible_improvements),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Feedback":
        return cls(d["video_description"],
                   tuple(Problem(p["text"], p.get("tag")) for p in d["potential_problems"]),
                   tuple(d["possible_improvements"]))

    def render(self) -> str:
        lines = [f"Video description: {self.video_description}", "Potential problems:"]
        lines += [f"  - {p.text}" + (f" [{p.tag}]" if p.tag else "")
                  for p in self.potential_problems] or ["  (none)"]
        lines.append("Possible improvements:")
        lines += [f"  - {s}" for s in self.possible_improvements] or ["  (none)"]
        return "\n".join(lines)


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def parse_feedback(text: str) -> Feedback:
    """Parse critic feedback JSON; raises ValueError listing every missing piece."""
    m = _FENCE.search(text)
    body = m.group(1) if m else text
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ValueError(f"feedback is not valid JSON: line {exc.lineno} column {exc.colno}: "
                         f"{exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValueError("feedback must be a JSON object")
    errors = []
    desc = doc.get("video_description")
    if not isinstance(desc, str) or not desc.strip():
        errors.append("missing section: video_description (nonempty string)")
    problems = doc.get("potential_problems")
    parsed: list[Problem] = []
    if not isinstance(problems, list):
        errors.append("missing section: potential_problems (list)")
    else:
        for i, p in enumerate(problems):
            if isinstance(p, str):
                parsed.append(Problem(p))
            elif isinstance(p, dict) and isinstance(p.get("text"), str):
                tag = p.get("tag")
                if not valid_tag(tag):
                    errors.append(f"potential_problems[{i}]: unknown tag {tag!r}; allowed: "
                                  f"{', '.join(PROBLEM_TAGS)}, stalled-at-stage(<i>)")
                else:
                    parsed.append(Problem(p["text"], tag))
            else:
                errors.append(f"potential_problems[{i}]: expected a string or "
                              "{\"text\": ..., \"tag\": ...}")
    improvements = doc.get("possible_improvements")
    if not isinstance(improvements, list) or not all(isinstance(s, str) for s in improvements):
        errors.append("missing section: possible_improvements (list of strings)")
    if errors:
        raise ValueError("; ".join(errors))
    return Feedback(desc, tuple(parsed), tuple(improvements))


@dataclass(frozen=True)
class CriticRequest:
    """One logical call. ``messages`` is the chat prompt; ``payload`` carries the
    same information in structured form for backends that do not read prose."""

    purpose: str  # graph | evaluate | refine
    messages: tuple[dict, ...]
    payload: dict = field(default_factory=dict, compare=False, hash=False)
    attempt: int = 0

    def with_repair(self, prior_output: str, errors: list[str]) -> "CriticRequest":
        listing = "\n".join(f"- {e}" for e in errors)
        follow_up = (
            {"role": "assistant", "content": prior_output},
            {"role": "user", "content": "Your previous answer could not be used. Errors:\n"
                                        f"{listing}\nReturn a corrected answer in the required "
                                        "format only."},
        )
        payload = dict(self.payload)
        payload["repair"] = {"prior_output": prior_output, "errors": list(errors)}
        return CriticRequest(self.purpose, self.messages + follow_up, payload, self.attempt + 1)


class CriticBackend(Protocol):
    name: str
    calls: list

    def complete(self, request: CriticRequest) -> str: ...


def repair(backend: CriticBackend, request: CriticRequest, prior_output: str,
           errors: list[str], max_repair: int = MAX_REPAIR) -> str:
    """Issue one follow-up call carrying the errors verbatim."""
    if request.attempt >= max_repair:
        raise IrreparableOutput(f"repair budget of {max_repair} exhausted", [])
    return backend.complete(request.with_repair(prior_output, errors))


T = TypeVar("T")


def call_with_repair(backend: CriticBackend, request: CriticRequest,
                     parse: Callable[[str], T], max_repair: int = MAX_REPAIR) -> tuple[T, list[dict]]:
    """Call, parse, and on failure repair up to ``max_repair`` times.

    ``parse`` raises with a message (or an ``errors`` list attribute) when the
    output is unusable. At most ``1 + max_repair`` backend calls are made.
    """
    transcript: list[dict] = []
    output = backend.complete(request)
    while True:
        try:
            result = parse(output)
        except Exception as exc:  # parse failures become repair input
            errors = [str(e) for e in getattr(exc, "errors", None) or [exc]]
            transcript.append({"attempt": request.attempt, "output": output, "errors": errors})
            if request.attempt >= max_repair:
                raise IrreparableOutput(
                    f"{request.purpose}: output still invalid after {max_repair} repairs: "
                    + "; ".join(errors), transcript) from None
            request = request.with_repair(output, errors)
            output = backend.complete(request)
            continue
        transcript.append({"attempt": request.attempt, "output": output, "errors": []})
        return result, transcript


def describe(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
