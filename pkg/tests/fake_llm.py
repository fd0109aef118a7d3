"""A chat-completion server stand-in that answers by reading the prompt text.

It sees only what a real model would see (the messages), which makes it a
fair exercise of the remote backend: prompts must carry enough information
for a text-only critic to act on.
"""

from __future__ import annotations

import json
import re

import httpx

from regot.critics.scripted import GRAPHS


def _graph_for(task_text: str) -> dict:
    t = task_text.lower()
    if "start button" in t:
        return GRAPHS["press_start_button"]
    if "lid" in t:
        return GRAPHS["hinge1d"]
    if "item" in t:
        return GRAPHS["fetch2d"]
    return GRAPHS["reach2d"]


def answer(messages: list[dict]) -> str:
    system, user = messages[0]["content"], messages[1]["content"]
    if "graph of thoughts" in system:
        task = re.search(r"Task: (.*)", user).group(1)
        return "Here is the task graph.\n```json\n" + json.dumps(_graph_for(task)) + "\n```"
    if "review rollouts" in system:
        flags = re.findall(r"success=(True|False)", user)
        wins, n = flags.count("True"), len(flags)
        problems = [] if wins == n else [{"text": f"{n - wins} rollouts stop short of the goal",
                                          "tag": "no-progress"}]
        return json.dumps({"video_description": f"{wins} of {n} rollouts finished the task",
                           "potential_problems": problems,
                           "possible_improvements": [] if wins == n else ["push harder"]})
    if "write and improve reward functions" in system:
        current = user.split("Current reward program:\n", 1)[1].split(
            "\nReward component statistics", 1)[0]
        if "Potential problems:\n  (none)" in user:
            return "NO_CHANGE"
        lines = current.strip().splitlines()
        m = re.match(r"component (\w+) weight (\S+) := (.*)", lines[0])
        lines[0] = f"component {m.group(1)} weight {2 * float(m.group(2))!r} := {m.group(3)}"
        return "Doubling the main term.\n```reward\n" + "\n".join(lines) + "\n```"
    raise AssertionError("unrecognized prompt")


class FakeServer:
    def __init__(self, fail_first: int = 0, status: int = 503):
        self.requests: list[dict] = []
        self.fail_first = fail_first
        self.status = status

    def __call__(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        self.requests.append({"body": body, "auth": request.headers.get("authorization")})
        if len(self.requests) <= self.fail_first:
            return httpx.Response(self.status, json={"error": "busy"})
        content = answer(body["messages"])
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant",
                                                                  "content": content}}]})

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self)
