"""Regenerate the recorded critic sessions in fixtures/sessions/.

The sessions are recorded against the prompt-reading fake server in
tests/fake_llm.py, so no network access or credentials are needed:

    python fixtures/make_sessions.py
"""

import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent / "tests"))

from fake_llm import FakeServer  # noqa: E402

from regot.cli import load_config  # noqa: E402
from regot.critics import RemoteCritic, construct_graph  # noqa: E402
from regot.envs import bundled_task  # noqa: E402
from regot.evolution import run_evolution  # noqa: E402

ENDPOINT = "https://llm.example.invalid/v1/chat/completions"
MODEL = "example-chat-model"


def main():
    os.environ.setdefault("REGOT_API_KEY", "sk-fixture-not-a-real-key")
    out = HERE / "sessions"
    for name in ("press_start_button.json", "hinge1d_remote.json"):
        (out / name).unlink(missing_ok=True)

    critic = RemoteCritic(ENDPOINT, MODEL, mode="record", session=out / "press_start_button.json",
                          transport=FakeServer().transport())
    construct_graph(critic, bundled_task("press_start_button"))

    config, base = load_config(str(HERE / "hinge1d_replay.toml"))
    server = FakeServer()
    backends = {p: RemoteCritic(ENDPOINT, MODEL, mode="record",
                                session=out / "hinge1d_remote.json", transport=server.transport())
                for p in ("graph", "evaluator", "refiner")}
    tmp = Path(tempfile.mkdtemp())
    try:
        report = run_evolution(replace(config, run_dir=str(tmp / "run")), backends=backends,
                               base_dir=base)
        print("recorded success rates:", report.success_rates)
    finally:
        shutil.rmtree(tmp)


if __name__ == "__main__":
    main()
