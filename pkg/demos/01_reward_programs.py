# %% [markdown]
# Reward programs: write one, evaluate it, and watch the checker reject a bad one.

# %%
from regot.dsl import check_program, evaluate, parse_program, set_weights
from regot.envs import make_env
from regot.trainer import collect_stats, random_rollout

env = make_env("reach2d")
print(env.catalog.render())

# %%
# one line per component; the total is the weighted sum
program = parse_program("""
component near weight 1.0 := 0 - distance(ee_position(), object_position("target"))
component effort weight 0.1 := 0 - abs(action(0)) - abs(action(1))
""")
state = env.initial_state(seed=3)
r = evaluate(program, env, state, [0.05, -0.02])
print(r.values, r.total)

# %%
# weights enter linearly, so doubling them doubles the total
print(evaluate(set_weights(program, {"near": 2.0, "effort": 0.2}), env, state, [0.05, -0.02]).total)

# %%
# a program using an API the environment does not have never reaches the trainer
bad = parse_program('component open weight 1.0 := lid_angle("lid")\n')
for err in check_program(bad, env.catalog, len(env.action_spec)):
    print(err.identifier, "->", err)

# %%
# per-component statistics under a uniformly random policy
trajs = [random_rollout(env, seed, program) for seed in range(20)]
print(collect_stats(trajs).render())
