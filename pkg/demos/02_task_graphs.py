# %% [markdown]
# Task graphs: have a critic describe the stages of a task, then check the result.

# %%
import json
from dataclasses import replace

from regot.critics import ScriptedCritic, construct_graph
from regot.envs import bundled_task, make_env
from regot.graph import BehaviorEdge, enumerate_paths, render_prompt_block, validate

env = make_env("fetch2d")
critic = ScriptedCritic("fetch2d")
graph = construct_graph(critic, env.task, env.catalog)
print(render_prompt_block(graph))

# %%
# the "missed" branch is a dead end, so only one path reaches the goal
print(enumerate_paths(graph))

# %%
# an edge that skips a stage breaks the graph; the validator names the rule
skip = replace(graph, edges=graph.edges + (BehaviorEdge("start", "stored", "teleport"),))
for v in validate(skip):
    print(v)

# %%
# a critic that sends a stage skip first is asked to fix it, with the error list attached
critic = ScriptedCritic("fetch2d", {"graph": "stage-skip-once"})
construct_graph(critic, env.task, env.catalog)
print(len(critic.calls), "calls")
print(critic.calls[1].messages[-1]["content"])

# %%
# graphs also exist for tasks with no simulator behind them
psb = construct_graph(ScriptedCritic("press_start_button"), bundled_task("press_start_button"))
print(json.dumps(psb.to_dict(), indent=1)[:600])
