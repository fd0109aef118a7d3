import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regot.envs import (ENVIRONMENTS, MANDATORY_APIS, THETA_MAX, EnvError, Substep,
                        TaskSpec, UnknownApi, UnknownEnvironment, bundled_task,
                        default_task, make_env)
from regot.envs.core import ActionSpec, Dim, ObservationSpec


@pytest.fixture(params=sorted(ENVIRONMENTS))
def env(request):
    return make_env(request.param)


def test_registry_and_unknown_env():
    assert set(ENVIRONMENTS) == {"hinge1d", "reach2d", "fetch2d"}
    with pytest.raises(UnknownEnvironment):
        make_env("cabinet3d")


def test_catalog_has_mandatory_apis(env):
    for name in MANDATORY_APIS:
        assert name in env.catalog
    with pytest.raises(UnknownApi):
        env.catalog["lid_angle"]


def test_reset_is_deterministic_per_seed(env):
    assert env.reset(7) == env.reset(7)
    assert env.reset(7) != env.reset(8)


def test_seed_outside_space_rejected(env):
    with pytest.raises(ValueError):
        env.reset(-1)


def test_step_clips_action_and_stays_in_bounds(env):
    s = env.initial_state(3)
    big = [1e6] * len(env.action_spec)
    for _ in range(5):
        s = env.step(s, big)
        low, high = env.observation_spec.low, env.observation_spec.high
        assert np.all(np.array(s.values) >= low) and np.all(np.array(s.values) <= high)
    assert s.t == 5


def test_step_rejects_wrong_action_size_and_horizon(env):
    s = env.initial_state(0)
    with pytest.raises(ValueError):
        env.step(s, [0.0] * (len(env.action_spec) + 1))
    late = env.make_state(t=env.horizon)
    with pytest.raises(EnvError):
        env.step(late, [0.0] * len(env.action_spec))


def test_api_call_checks_names(env):
    s = env.initial_state(0)
    with pytest.raises(ValueError):
        env.api_call(s, "object_position", "unicorn")
    with pytest.raises(TypeError):
        env.api_call(s, "ee_position", "extra")


def test_hinge_friction_eats_velocity():
    env = make_env("hinge1d")
    s = env.make_state(lid=0.5, lid_friction=0.05)
    assert env.step(s, [0.2])["lid"] == pytest.approx(0.65)
    assert env.step(s, [-0.2])["lid"] == pytest.approx(0.35)
    assert env.step(s, [0.03])["lid"] == pytest.approx(0.5)


def test_hinge_primitive_moves_to_handle_and_success_threshold():
    env = make_env("hinge1d")
    s = env.initial_state(11)
    assert env.api_call(s, "ee_position") == env.api_call(s, "object_position", "handle")
    assert env.api_call(s, "is_grasped", "handle") == 1.0
    assert env.success(env.make_state(lid=0.9 * THETA_MAX)) == 1
    assert env.success(env.make_state(lid=0.89 * THETA_MAX)) == 0


def test_primitive_substep_kind_checked():
    env = make_env("hinge1d")
    with pytest.raises(ValueError):
        env.execute_primitive(env.reset(0), Substep(1, "rotate the lid open", "reward"))
    with pytest.raises(EnvError):
        env.execute_primitive(env.reset(0), Substep(0, "teleport", "primitive"))


def test_reach_success_tolerance():
    env = make_env("reach2d")
    assert env.success(env.make_state(ee_x=0.5, ee_y=0.5, target_x=0.54, target_y=0.5))
    assert not env.success(env.make_state(ee_x=0.5, ee_y=0.5, target_x=0.56, target_y=0.5))


def test_fetch_grasp_latches_and_carries():
    env = make_env("fetch2d")
    s = env.make_state(ee_x=0.3, ee_y=0.5, item_x=0.31, item_y=0.5, target_x=0.7, target_y=0.2)
    s = env.step(s, [0.0, 0.0, 1.0])
    assert s["grasped"] == 1.0
    s2 = env.step(s, [0.05, -0.05, 0.0])
    assert s2["item_x"] == pytest.approx(0.36) and s2["item_y"] == pytest.approx(0.45)
    far = env.make_state(ee_x=0.0, ee_y=0.0, item_x=0.5, item_y=0.5)
    assert env.step(far, [0, 0, 1])["grasped"] == 0.0


def test_task_round_trip_and_bundled():
    t = default_task("hinge1d")
    assert TaskSpec.from_dict(t.to_dict()) == t
    assert [s.kind for s in t.substeps] == ["primitive", "reward"]
    psb = bundled_task("press_start_button")
    assert psb.env is None and len(psb.substeps) == 2


def test_task_rejects_bad_version_and_no_reward_substep():
    d = default_task("reach2d").to_dict()
    with pytest.raises(ValueError):
        TaskSpec.from_dict({**d, "schema_version": 99})
    with pytest.raises(ValueError):
        TaskSpec("x", "g", (Substep(0, "move", "primitive"),), "at_target", 10)


def test_env_rejects_unknown_predicate():
    t = default_task("reach2d")
    bad = TaskSpec(t.name, t.goal_description, t.substeps, "lid_open", t.horizon)
    with pytest.raises(EnvError):
        make_env("reach2d", bad)


def test_spec_validation():
    with pytest.raises(ValueError):
        ObservationSpec((Dim("a", 0, 1), Dim("a", 0, 1)))
    with pytest.raises(ValueError):
        ActionSpec((Dim("a", 1, 0),))
    with pytest.raises(ValueError):
        ActionSpec((Dim("a", 0, math.inf),))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 1_000_000), steps=st.lists(st.floats(-1, 1), max_size=10))
def test_trajectories_replay_identically(seed, steps):
    env = make_env("hinge1d")

    def run():
        s = env.initial_state(seed)
        out = [s]
        for a in steps:
            s = env.step(s, [a])
            out.append(s)
        return out

    assert run() == run()
