import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import direct_stats
from regot.dsl import RewardBreakdown, parse_program
from regot.envs import make_env
from regot.trainer import (ComponentStats, NonFiniteReturn, Policy, Step, TrainerConfig,
                           Trajectory, TrainingLog, collect_stats, discounted_return,
                           evaluate_policy, random_rollout, rollout, train)

REACH = make_env("reach2d")
NEAR = parse_program('component near weight 1.0 := 0 - distance(ee_position(), '
                     'object_position("target"))\n')


def _traj(rows, names=("a",)):
    steps = [Step(None, (), RewardBreakdown(dict(zip(names, r)), float(sum(r)))) for r in rows]
    return Trajectory(steps, 0, 0, None)


def test_discounted_return_fixtures():
    assert discounted_return([1.0, 1.0, 1.0], 0.5) == 1.75
    assert discounted_return([1.0, 2.0, 3.0], 1.0) == 6.0
    assert discounted_return([4.2], 0.3) == 4.2
    assert discounted_return([], 0.9) == 0.0
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.5)


def test_stats_fixture_population_std():
    s = collect_stats([_traj([[1.0], [2.0]]), _traj([[3.0], [4.0]])])
    a = s.components["a"]
    assert (a.mean, a.min, a.max) == (2.5, 1.0, 4.0)
    assert a.std == pytest.approx(math.sqrt(1.25), rel=1e-12)
    assert s.n_steps == 4


def test_stats_errors():
    with pytest.raises(ValueError):
        collect_stats([])
    with pytest.raises(ValueError):
        collect_stats([_traj([[1.0]], ("a",)), _traj([[1.0]], ("b",))])


@settings(max_examples=100, deadline=None)
@given(data=st.lists(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2), min_size=1,
                     max_size=40))
def test_stats_match_direct_formula(data):
    s = collect_stats([_traj(data, ("x", "y"))])
    for j, name in enumerate(("x", "y")):
        col = [row[j] for row in data]
        mean, lo, hi, std = direct_stats(col)
        c = s.components[name]
        assert c.min == lo and c.max == hi
        assert math.isclose(c.mean, mean, rel_tol=1e-9, abs_tol=1e-6)
        assert math.isclose(c.std, std, rel_tol=1e-9, abs_tol=1e-6)


def test_stats_round_trip():
    s = collect_stats([_traj([[1.0], [5.0]])])
    assert ComponentStats.from_dict(s.to_dict()) == s
    assert "a" in s.render()


def test_rollout_ends_early_on_success():
    env = make_env("reach2d", target_box=((0.1, 0.12), (0.1, 0.12)))
    pol = Policy(np.eye(2) * 10, np.zeros(2), env.id)
    t = rollout(pol, env, 5, program=NEAR)
    assert t.success == 1 and t.length < env.horizon
    assert env.success(t.final_state)


def test_policy_params_round_trip_and_shape_check():
    p = Policy.from_params(np.arange(6.0), REACH)
    assert np.array_equal(p.params, np.arange(6.0))
    with pytest.raises(ValueError):
        Policy.from_params(np.zeros(5), REACH)


def test_noise_is_seeded():
    pol = Policy(np.zeros((2, 2)), np.zeros(2), REACH.id, noise=0.02)
    a, b = rollout(pol, REACH, 9), rollout(pol, REACH, 9)
    assert [s.action for s in a.steps] == [s.action for s in b.steps]


def test_train_is_deterministic_and_solves_reach():
    cfg = TrainerConfig(iterations=8, population=32)
    p1, log1 = train(REACH, NEAR, cfg)
    p2, log2 = train(REACH, NEAR, cfg)
    assert np.array_equal(p1.params, p2.params)
    assert log1 == log2
    assert TrainingLog.from_dict(log1.to_dict()) == log1
    rate, length = evaluate_policy(p1, REACH, 20, 500_000)
    assert rate >= 0.9 and length < REACH.horizon


def test_train_flags_non_finite_returns():
    prog = parse_program("component boom weight 1.0 := exp(1000 * (1 + action(0)))\n")
    with pytest.raises(NonFiniteReturn):
        train(REACH, prog, TrainerConfig(iterations=1, population=4, train_episodes=1))


def test_train_warns_on_empty_program():
    _, log = train(REACH, parse_program(""), TrainerConfig(iterations=1, population=4,
                                                           train_episodes=1))
    assert log.warnings and "degenerate" in log.warnings[0]


def test_config_validation():
    for bad in ({"elite_frac": 0}, {"gamma": 1.1}, {"population": 0}, {"horizon": 0}):
        with pytest.raises(ValueError):
            TrainerConfig(**bad)


def test_random_rollout_deterministic():
    a, b = random_rollout(REACH, 4, NEAR), random_rollout(REACH, 4, NEAR)
    assert a.totals == b.totals and a.length == REACH.horizon


def test_rollout_respects_short_horizon():
    t = rollout(Policy.zeros(REACH), REACH, 0, T=3)
    assert t.length == 3
    rng = random.Random(0)
    assert evaluate_policy(Policy.zeros(REACH), REACH, 3, rng.randrange(1000), T=2) == (0.0, 2.0)
