"""Desk-scale manipulation stand-ins: a hinge, a planar reach, and fetch-and-place.

Placement boxes and friction ranges are invented; they only need to make
initial states vary with the seed.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import stream
from .core import (ActionSpec, Dim, Environment, ObservationSpec, _dist,
                   standard_catalog)

THETA_MAX = 1.5708
HINGE_SUCCESS = 0.9 * THETA_MAX
REACH_TOL = 0.05
GRASP_RADIUS = 0.05


def _uniform(rng: np.random.Generator, box) -> list[float]:
    return [float(rng.uniform(lo, hi)) for lo, hi in box]


class Hinge1D(Environment):
    """One revolute joint ("lid") opened by a velocity command.

    Each seed draws a handle position and a joint friction that eats into
    the commanded velocity, so weak policies open some lids but not others.
    """

    id = "hinge1d"
    handle_box = ((0.3, 0.7), (0.3, 0.7))
    friction_range = (0.0, 0.08)
    observation_spec = ObservationSpec((
        Dim("ee_x", -1.0, 1.0, "m"), Dim("ee_y", -1.0, 1.0, "m"),
        Dim("handle_x", -1.0, 1.0, "m"), Dim("handle_y", -1.0, 1.0, "m"),
        Dim("lid", 0.0, THETA_MAX, "rad"),
        Dim("lid_friction", 0.0, 0.1, "rad/step"),
    ))
    action_spec = ActionSpec((Dim("lid_velocity", -0.2, 0.2, "rad/step"),))
    catalog = standard_catalog(objects=("handle",), joints=("lid",), graspable=("handle",))
    success_predicates = ("lid_open",)
    feature_dim = 2

    def _initial_values(self, seed):
        rng = stream(seed, 1)
        hx, hy = _uniform(rng, self.handle_box)
        friction = float(rng.uniform(*self.friction_range))
        return [0.0, 0.0, hx, hy, 0.0, friction]

    def _integrate(self, s, a):
        v = a[0]
        eff = math.copysign(max(abs(v) - s["lid_friction"], 0.0), v)
        s["lid"] = min(max(s["lid"] + eff, 0.0), THETA_MAX)
        return s

    def _api_impls(self):
        def ee(st):
            return (st["ee_x"], st["ee_y"])

        def handle(st):
            return (st["handle_x"], st["handle_y"])

        return {
            "ee_position": ee,
            "object_position": lambda st, name: handle(st),
            "joint_value": lambda st, name: st["lid"],
            "joint_target": lambda st, name: THETA_MAX,
            "is_grasped": lambda st, name: float(_dist(ee(st), handle(st)) <= GRASP_RADIUS),
            "distance": lambda st, a, b: _dist(a, b),
            "collision": lambda st: 0.0,
        }

    def _primitives(self):
        def to_handle(s):
            s["ee_x"], s["ee_y"] = s["handle_x"], s["handle_y"]
            return s
        return {"move to handle": to_handle}

    def _success(self, state):
        return state["lid"] >= HINGE_SUCCESS

    def features(self, state):
        return np.array([1.0, state["lid"] / THETA_MAX])


class Reach2D(Environment):
    """Point end-effector driven by planar velocity toward a target."""

    id = "reach2d"
    start_box = ((0.0, 0.1), (0.0, 0.1))
    target_box = ((0.3, 0.9), (0.3, 0.9))
    observation_spec = ObservationSpec((
        Dim("ee_x", 0.0, 1.0, "m"), Dim("ee_y", 0.0, 1.0, "m"),
        Dim("target_x", 0.0, 1.0, "m"), Dim("target_y", 0.0, 1.0, "m"),
    ))
    action_spec = ActionSpec((Dim("vx", -0.05, 0.05, "m/step"),
                              Dim("vy", -0.05, 0.05, "m/step")))
    catalog = standard_catalog(objects=("target",))
    success_predicates = ("at_target",)
    feature_dim = 2

    def __init__(self, task, start_box=None, target_box=None):
        if start_box is not None:
            self.start_box = start_box
        if target_box is not None:
            self.target_box = target_box
        super().__init__(task)

    def _initial_values(self, seed):
        rng = stream(seed, 2)
        return _uniform(rng, self.start_box) + _uniform(rng, self.target_box)

    def _integrate(self, s, a):
        s["ee_x"] += a[0]
        s["ee_y"] += a[1]
        return s

    def _api_impls(self):
        def ee(st):
            return (st["ee_x"], st["ee_y"])

        return {
            "ee_position": ee,
            "object_position": lambda st, name: (st["target_x"], st["target_y"]),
            "joint_value": lambda st, name: 0.0,
            "joint_target": lambda st, name: 0.0,
            "is_grasped": lambda st, name: 0.0,
            "distance": lambda st, a, b: _dist(a, b),
            "collision": lambda st: 0.0,
        }

    def _primitives(self):
        def to_target(s):
            s["ee_x"], s["ee_y"] = s["target_x"], s["target_y"]
            return s
        return {"move to target": to_target}

    def _success(self, state):
        return _dist((state["ee_x"], state["ee_y"]),
                     (state["target_x"], state["target_y"])) <= REACH_TOL

    def features(self, state):
        return np.array([state["target_x"] - state["ee_x"], state["target_y"] - state["ee_y"]])


class Fetch2D(Environment):
    """Reach an item, latch a grasp, carry it into a storage zone."""

    id = "fetch2d"
    start_box = ((0.0, 0.1), (0.0, 0.1))
    item_box = ((0.25, 0.55), (0.45, 0.9))
    target_box = ((0.6, 0.95), (0.05, 0.4))
    observation_spec = ObservationSpec((
        Dim("ee_x", 0.0, 1.0, "m"), Dim("ee_y", 0.0, 1.0, "m"),
        Dim("item_x", 0.0, 1.0, "m"), Dim("item_y", 0.0, 1.0, "m"),
        Dim("target_x", 0.0, 1.0, "m"), Dim("target_y", 0.0, 1.0, "m"),
        Dim("grasped", 0.0, 1.0),
    ))
    action_spec = ActionSpec((Dim("vx", -0.05, 0.05, "m/step"),
                              Dim("vy", -0.05, 0.05, "m/step"),
                              Dim("grasp", 0.0, 1.0)))
    catalog = standard_catalog(objects=("item", "target"), graspable=("item",))
    success_predicates = ("item_in_zone",)
    feature_dim = 4

    def _initial_values(self, seed):
        rng = stream(seed, 3)
        return (_uniform(rng, self.start_box) + _uniform(rng, self.item_box)
                + _uniform(rng, self.target_box) + [0.0])

    def _integrate(self, s, a):
        x0, y0 = s["ee_x"], s["ee_y"]
        s["ee_x"] = min(max(x0 + a[0], 0.0), 1.0)
        s["ee_y"] = min(max(y0 + a[1], 0.0), 1.0)
        if s["grasped"] >= 0.5:
            s["item_x"] += s["ee_x"] - x0
            s["item_y"] += s["ee_y"] - y0
        elif a[2] > 0.5 and _dist((s["ee_x"], s["ee_y"]),
                                  (s["item_x"], s["item_y"])) <= GRASP_RADIUS:
            s["grasped"] = 1.0
        return s

    def _api_impls(self):
        def ee(st):
            return (st["ee_x"], st["ee_y"])

        def obj(st, name):
            return (st[f"{name}_x"], st[f"{name}_y"])

        return {
            "ee_position": ee,
            "object_position": obj,
            "joint_value": lambda st, name: 0.0,
            "joint_target": lambda st, name: 0.0,
            "is_grasped": lambda st, name: float(st["grasped"] >= 0.5),
            "distance": lambda st, a, b: _dist(a, b),
            "collision": lambda st: 0.0,
        }

    def _primitives(self):
        def approach(s):
            s["ee_x"], s["ee_y"] = s["item_x"], s["item_y"]
            return s
        return {"approach item": approach}

    def _success(self, state):
        return state["grasped"] >= 0.5 and _dist(
            (state["item_x"], state["item_y"]),
            (state["target_x"], state["target_y"])) <= REACH_TOL

    def features(self, state):
        g = 1.0 if state["grasped"] >= 0.5 else 0.0
        return np.array([
            (1 - g) * (state["item_x"] - state["ee_x"]),
            (1 - g) * (state["item_y"] - state["ee_y"]),
            g * (state["target_x"] - state["item_x"]),
            g * (state["target_y"] - state["item_y"]),
        ])
