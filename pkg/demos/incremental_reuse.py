"""Incremental knowledge acquisition: learn rooks and bishops, then queens.

Phase one feeds rook/bishop moves into a tiny working space until their
generalisations consolidate.  Phase two feeds queen moves plus candidate
rules that *reuse* the consolidated rook/bishop heads; the deductive
engine resolves those bodies against the consolidated knowledge, so the
two reuse rules cover the queen evidence and consolidate in turn.

Run:  python demos/incremental_reuse.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from covkb.harness import load_scenario, run_scenario
from covkb.rules import render_rule

HERE = os.path.dirname(__file__)
SCENARIO = os.path.join(HERE, "..", "fixtures", "chess", "incremental.scn")


def main():
    cfg = load_scenario(SCENARIO)
    logs, state = run_scenario(cfg, seed=8)

    promotions = {}
    for log in logs:
        for nid in log.promoted_ids:
            promotions.setdefault(nid, log.step)

    print("promotion timeline (step -> rule):")
    for nid, step in sorted(promotions.items(), key=lambda kv: kv[1]):
        alive = nid in state.graph.nodes
        text = render_rule(state.graph.nodes[nid]) if alive else "(later demoted)"
        phase = "phase 1" if step <= 100 else "phase 2"
        print(f"  step {step:>3} [{phase}] {text}")

    print("\nfinal consolidated knowledge:")
    for nid in state.consolidated_ids():
        print("  ", render_rule(state.graph.nodes[nid]))

    forgets = sum(1 for log in logs if log.n_forgotten)
    print(f"\nforgetting fired in {forgets} of {len(logs)} steps "
          f"(capacity {cfg.capacity} keeps the space tight)")


if __name__ == "__main__":
    main()
