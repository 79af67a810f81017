"""Chess rule learning under bounded working memory.

Runs the five-piece scenario twice: once with an effectively unlimited
working space (no forgetting ever fires) and once with capacity 60 plus
50% forgetting, then compares what ends up consolidated.  The bounded run
keeps sawing the population down yet consolidates the same clean move
generalisations.

Run:  python demos/chess_forgetting.py
"""

import os
import sys
from dataclasses import replace

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from covkb.harness import load_scenario, run_scenario
from covkb.rules import render_rule

HERE = os.path.dirname(__file__)
SCENARIO = os.path.join(HERE, "..", "fixtures", "chess", "chess.scn")


def sparkline(values, width=72):
    blocks = " .:-=+*#%@"
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1
    step = max(1, len(values) // width)
    picked = values[::step]
    return "".join(blocks[int((v - lo) / span * (len(blocks) - 1))] for v in picked)


def describe(tag, logs, state):
    forgets = [log.step for log in logs if log.n_forgotten]
    print(f"\n== {tag}")
    print(f"   population   {sparkline([log.population_w for log in logs])}")
    print(f"   consolidated {sparkline([log.consolidated_count for log in logs])}")
    print(f"   forget events: {len(forgets)}"
          + (f", roughly every {logs[-1].step // max(1, len(forgets))} steps" if forgets else ""))
    print(f"   final population {logs[-1].population_w}, "
          f"consolidated {logs[-1].consolidated_count}")
    print("   consolidated rules:")
    for nid in state.consolidated_ids():
        print("     ", render_rule(state.graph.nodes[nid]))


def main():
    cfg = load_scenario(SCENARIO)

    unlimited = replace(cfg, capacity=0)
    logs, state = run_scenario(unlimited, seed=3)
    describe("no forgetting (population saturates)", logs, state)

    logs, state = run_scenario(cfg, seed=3)
    describe("capacity 60, forget 50% (sawtooth)", logs, state)


if __name__ == "__main__":
    main()
