# %% [markdown]
# Replaying a recorded chat-completion session.
#
# fixtures/sessions/hinge1d_remote.json holds every request and response of a
# remote-critic run. Replay answers from that file alone: no API key, no HTTP
# client. Regenerate it with fixtures/make_sessions.py.

# %%
import tempfile
from dataclasses import replace
from pathlib import Path

from regot.cli import load_config, print_table
from regot.critics import RemoteCritic, construct_graph
from regot.envs import bundled_task
from regot.evolution import run_evolution

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

critic = RemoteCritic("https://llm.example.invalid/v1/chat/completions", "example-chat-model",
                      mode="replay", session=FIXTURES / "sessions" / "press_start_button.json")
graph = construct_graph(critic, bundled_task("press_start_button"))
print(graph.n_stages, "stages;", critic.http_requests, "HTTP requests")

# %%
config, base = load_config(str(FIXTURES / "hinge1d_replay.toml"))
run_dir = Path(tempfile.mkdtemp()) / "replay"
report = run_evolution(replace(config, run_dir=str(run_dir)), base_dir=base)
print_table(report)
