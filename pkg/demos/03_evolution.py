# %% [markdown]
# Reward evolution on the hinge task.
#
# The starting reward weighs progress at 0.05 against an effort penalty, so the
# first policy barely moves the lid. The scripted critic reads the rollouts,
# flags the lack of progress, and the refiner strengthens the progress term.
# Takes about a minute.

# %%
import tempfile
from dataclasses import replace
from pathlib import Path

from regot.cli import load_config, print_table
from regot.evolution import run_evolution

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
config, base = load_config(str(FIXTURES / "hinge1d_scripted.toml"))
print(config.initial_program)

# %%
run_dir = Path(tempfile.mkdtemp()) / "hinge"
report = run_evolution(replace(config, run_dir=str(run_dir)), base_dir=base)
print_table(report)

# %%
# what the critic saw and what it changed
for it in report.iterations:
    print(f"--- iteration {it['iteration']}: success {it['success_rate']:.2f}")
    print(it["feedback"]["video_description"])
    for p in it["feedback"]["potential_problems"]:
        print("  problem:", p["tag"], "-", p["text"])
    print(it["diff"] or "  (initial program)")

# %%
print(sorted(p.name for p in run_dir.iterdir()))
