"""Sweep working-space capacity against forgetting fraction.

Runs a small version of the capacity x fraction grid (the full 8 x 3 x 10
sweep is what `covkb grid fixtures/chess/grid.grid` does) and prints how
often each rule was consolidated per cell, heat-map style.

Run:  python demos/grid_heatmap.py
"""

import os
import sys
from dataclasses import replace

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from covkb.harness import load_grid, run_grid

HERE = os.path.dirname(__file__)
GRID = os.path.join(HERE, "..", "fixtures", "chess", "grid.grid")


def main():
    grid = load_grid(GRID)
    small = replace(grid, capacities=(20, 40, 60), fractions=(0.25, 0.5), repetitions=4)
    rows, failures = run_grid(small, jobs=1)
    assert not failures, failures

    cells = sorted({(cap, frac) for cap, frac, _, _ in rows})
    rules = sorted({rule for _, _, rule, _ in rows})
    counts = {(cap, frac, rule): n for cap, frac, rule, n in rows}

    header = " ".join(f"{cap}/{frac}" for cap, frac in cells)
    print(f"{'rule':<74} {header}")
    shades = " .oO@"
    for rule in rules:
        marks = []
        for cap, frac in cells:
            n = counts.get((cap, frac, rule), 0)
            marks.append(shades[min(n, small.repetitions) * (len(shades) - 1) // small.repetitions])
        print(f"{rule:<74} " + "    ".join(marks))
    print(f"\n{len(rules)} rules consolidated at least once; "
          f"shade scale ' {shades[1:]}' = 0..{small.repetitions} repetitions")


if __name__ == "__main__":
    main()
