"""Rollout transcripts: the text stand-in for rollout videos.

A transcript keeps only what the environment APIs expose (end-effector,
object positions, joints, grasp flags) at every step, never reward totals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..envs import Environment
from ..trainer import ComponentStats, Trajectory


@dataclass(frozen=True)
class RolloutTranscript:
    task: str
    records: tuple[dict, ...]  # {"step": t, **snapshot}
    success: int
    length: int
    seed: int
    stats: dict  # component -> {mean, min, max, std}

    @classmethod
    def from_trajectory(cls, traj: Trajectory, env: Environment,
                        stats: ComponentStats | None = None) -> "RolloutTranscript":
        states = [s.state for s in traj.steps] + [traj.final_state]
        records = tuple({"step": st.t, **env.snapshot(st)} for st in states)
        return cls(env.task.name, records, int(traj.success), traj.length, traj.seed,
                   stats.to_dict()["components"] if stats else {})

    def to_dict(self) -> dict:
        return {"task": self.task, "seed": self.seed, "success": self.success,
                "length": self.length, "stats": self.stats, "records": list(self.records)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "RolloutTranscript":
        return cls(d["task"], tuple(d["records"]), d["success"], d["length"], d["seed"],
                   d.get("stats", {}))

    def render(self, max_records: int = 12) -> str:
        """Compact text for prompts: evenly spaced records, always including the last."""
        n = len(self.records)
        if n <= max_records:
            picked = list(range(n))
        else:
            stride = (n - 1) / (max_records - 1)
            picked = sorted({round(i * stride) for i in range(max_records)})
        head = (f"rollout seed={self.seed} success={bool(self.success)} "
                f"length={self.length}")
        lines = [head]
        for i in picked:
            r = self.records[i]
            parts = [f"t={r['step']}", f"ee=({r['ee'][0]:.3f}, {r['ee'][1]:.3f})"]
            parts += [f"{k}=({v[0]:.3f}, {v[1]:.3f})" for k, v in r["objects"].items()]
            parts += [f"{k}={v:.3f}rad" for k, v in r["joints"].items()]
            parts += [f"holding_{k}={int(v)}" for k, v in r["grasped"].items()]
            lines.append("  " + " ".join(parts))
        return "\n".join(lines)
