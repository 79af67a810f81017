import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from covkb.harness import build_oneshot_state, load_scenario  # noqa: E402
from covkb.rules import render_rule  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")
FAMILY_SCN = os.path.join(FIXTURES, "family", "family.scn")
FAMILY_KBR = os.path.join(FIXTURES, "family", "family.kbr")
CHESS_DIR = os.path.join(FIXTURES, "chess")

# Clause text -> the id used for it in the published family tables.
FAMILY_TABLE_IDS = {
    "daughter(mary,ann).": 1,
    "daughter(eve,tom).": 2,
    "daughter(tom,ann).": 3,
    "daughter(eve,ann).": 4,
    "daughter(cris,tom).": 5,
    "daughter(X,Y) :- female(Y), parent(Y,mary).": 100,
    "daughter(eve,tom) :- female(eve), parent(tom,eve).": 59,
    "daughter(eve,tom) :- female(eve).": 20,
    "daughter(eve,Y) :- female(eve).": 35,
    "daughter(X,tom) :- female(X), parent(tom,X).": 73,
    "daughter(X,Y) :- female(X), parent(Y,X).": 110,
    "daughter(V,W) :- female(X), parent(Y,Z).": 138,
}


def family_state():
    """Fresh one-shot family knowledge state (all 12 nodes, metrics ready)."""
    return build_oneshot_state(load_scenario(FAMILY_SCN))


def table_id_map(state):
    """node id -> published table id, and the reverse."""
    fwd = {}
    for nid, rule in state.graph.nodes.items():
        text = render_rule(rule)
        if text in FAMILY_TABLE_IDS:
            fwd[FAMILY_TABLE_IDS[text]] = nid
    return fwd


@pytest.fixture
def family():
    state = family_state()
    return state, table_id_map(state)
