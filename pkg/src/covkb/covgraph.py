"""Coverage DAG over working rules and evidence.

The graph stores two edge sets over the same nodes: the full pairwise
coverage relation (after cycle repair) and its transitive reduction, which
is unique for DAGs and is what the support metrics propagate over.
Evidence nodes never cover anything, so they are always sinks.

Each node carries a per-class residual: support inherited from forgotten
descendants, kept as intrinsic node mass.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .deduce import CoverageOracle
from .rules import CANDIDATE, EVIDENCE, Atom, Compound, Rule, rule_length


class GraphError(Exception):
    pass


def transitive_reduce(
    node_ids: Iterable[int], edges: Mapping[int, Set[int]]
) -> Dict[int, Set[int]]:
    """Unique minimal edge set with the same reachability as `edges`.

    The relation must be acyclic (GraphError otherwise).  An edge u->v is
    dropped exactly when v is a strict descendant of another child of u.
    """
    ids = sorted(node_ids)
    index = {v: i for i, v in enumerate(ids)}
    order = _topo_order(ids, edges)

    # Strict-descendant bitmasks, built leaves-first.
    desc = {v: 0 for v in ids}
    for v in reversed(order):
        mask = 0
        for child in edges.get(v, ()):
            mask |= (1 << index[child]) | desc[child]
        desc[v] = mask

    reduced: Dict[int, Set[int]] = {v: set() for v in ids}
    for u in ids:
        children = edges.get(u, ())
        redundant = 0
        for c in children:
            redundant |= desc[c]
        reduced[u] = {c for c in children if not (1 << index[c]) & redundant}
    return reduced


def _topo_order(ids: List[int], edges: Mapping[int, Set[int]]) -> List[int]:
    indeg = {v: 0 for v in ids}
    for u in ids:
        for v in edges.get(u, ()):
            indeg[v] += 1
    frontier = sorted(v for v in ids if indeg[v] == 0)
    order: List[int] = []
    while frontier:
        u = frontier.pop()
        order.append(u)
        for v in sorted(edges.get(u, ()), reverse=True):
            indeg[v] -= 1
            if indeg[v] == 0:
                frontier.append(v)
        frontier.sort(reverse=True)
    if len(order) != len(ids):
        raise GraphError("cycle detected in coverage relation")
    return order


def _strongly_connected(ids: List[int], edges: Mapping[int, Set[int]]) -> List[List[int]]:
    """Tarjan's SCC, iterative; returns components of size >= 2 only."""
    index_of: Dict[int, int] = {}
    low: Dict[int, int] = {}
    on_stack: Set[int] = set()
    stack: List[int] = []
    sccs: List[List[int]] = []
    counter = [0]

    for root in ids:
        if root in index_of:
            continue
        work = [(root, iter(sorted(edges.get(root, ()))))]
        index_of[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index_of:
                    index_of[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(edges.get(nxt, ())))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index_of[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index_of[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1:
                    sccs.append(comp)
    return sccs


class CoverageGraph:
    """Mutable coverage DAG owned by a single knowledge-base instance."""

    def __init__(self):
        self.nodes: Dict[int, Rule] = {}
        self.full: Dict[int, Set[int]] = {}
        self.reduced: Dict[int, Set[int]] = {}
        self.parents: Dict[int, Set[int]] = {}
        self.residuals: Dict[int, Dict[str, float]] = {}

    # -- construction ------------------------------------------------------

    @classmethod
    def build(cls, working: Iterable[Rule], oracle: CoverageOracle) -> "CoverageGraph":
        g = cls()
        rules = list(working)
        seen = set()
        for r in rules:
            if r.id in seen:
                raise GraphError(f"duplicate node id {r.id}")
            seen.add(r.id)
            g.nodes[r.id] = r
            g.full[r.id] = set()
            g.residuals[r.id] = {}
        for general in rules:
            if general.origin == EVIDENCE:
                continue  # evidence covers nothing
            for specific in rules:
                if specific.id == general.id:
                    continue
                if oracle.covers_pair(general, specific):
                    g.full[general.id].add(specific.id)
        g._recompute_structure()
        return g

    @classmethod
    def from_structure(
        cls,
        specs: Mapping[int, Tuple[Optional[str], float]],
        edges: Iterable[Tuple[int, int]],
    ) -> "CoverageGraph":
        """Synthetic graph from (class-label, length) specs and a raw relation.

        Used by tests and the support oracle; bypasses deduction entirely.
        Class-labeled nodes must be sinks.
        """
        g = cls()
        for nid, (label, length) in specs.items():
            g.nodes[nid] = Rule(
                id=nid,
                head=Atom("node", (Compound(str(nid)),)),
                class_label=label,
                length_override=float(length),
                origin=EVIDENCE if label is not None else CANDIDATE,
            )
            g.full[nid] = set()
            g.residuals[nid] = {}
        for u, v in edges:
            if u not in g.nodes or v not in g.nodes:
                raise GraphError(f"edge ({u},{v}) references unknown node")
            if u == v:
                raise GraphError("self edges are not allowed")
            if g.nodes[u].class_label is not None:
                raise GraphError("class-labeled nodes must have out-degree 0")
            g.full[u].add(v)
        g._recompute_structure()
        return g

    # -- accessors ----------------------------------------------------------

    def __contains__(self, nid: int) -> bool:
        return nid in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def suc(self, nid: int) -> Set[int]:
        return self.reduced[nid]

    def anc(self, nid: int) -> Set[int]:
        return self.parents[nid]

    def leaves(self) -> List[int]:
        return sorted(v for v in self.nodes if not self.reduced[v])

    def roots(self) -> List[int]:
        return sorted(v for v in self.nodes if not self.parents[v])

    def residual(self, nid: int, label: str) -> float:
        return self.residuals[nid].get(label, 0.0)

    def set_residual(self, nid: int, label: str, value: float) -> None:
        if value < 0:
            raise GraphError("residuals must stay non-negative")
        self.residuals[nid][label] = value

    def node_length(self, nid: int) -> float:
        return rule_length(self.nodes[nid])

    def topological_order(self) -> List[int]:
        """Roots first; reverse it for a leaves-first sweep."""
        return _topo_order(sorted(self.nodes), self.reduced)

    def ancestor_closure(self) -> Dict[int, Set[int]]:
        """All transitive coverers per node (closure of the full relation)."""
        closure: Dict[int, Set[int]] = {v: set() for v in self.nodes}
        for v in self.topological_order():
            for child in self.reduced[v]:
                closure[child].add(v)
                closure[child] |= closure[v]
        return closure

    # -- mutation -----------------------------------------------------------

    def insert_rule(self, rule: Rule, oracle: CoverageOracle) -> None:
        if rule.id in self.nodes:
            raise GraphError(f"node id {rule.id} already present")
        pairs_out: Set[int] = set()
        pairs_in: Set[int] = set()
        if rule.origin != EVIDENCE:
            for other in self.nodes.values():
                if oracle.covers_pair(rule, other):
                    pairs_out.add(other.id)
        for other in self.nodes.values():
            if other.origin == EVIDENCE:
                continue
            if oracle.covers_pair(other, rule):
                pairs_in.add(other.id)
        self.nodes[rule.id] = rule
        self.full[rule.id] = pairs_out
        self.residuals[rule.id] = {}
        for other_id in pairs_in:
            self.full[other_id].add(rule.id)
        self._recompute_structure()

    def replace_rule(self, rule: Rule) -> None:
        """Swap the stored rule object (protection flips); structure unchanged."""
        if rule.id not in self.nodes:
            raise GraphError(f"unknown node id {rule.id}")
        self.nodes[rule.id] = rule

    def remove_rule(self, nid: int) -> None:
        """Drop a node, redistributing its support mass to its coverers.

        A sink's full contribution (its length, if class-labeled, plus all
        residuals) is split equally over anc(nid); an internal node passes
        on only its residuals.  With no ancestors the mass is lost.
        """
        if nid not in self.nodes:
            raise GraphError(f"unknown node id {nid}")
        rule = self.nodes[nid]
        ancestors = sorted(self.parents[nid])
        amounts: Dict[str, float] = {}
        for label, value in self.residuals[nid].items():
            if value:
                amounts[label] = amounts.get(label, 0.0) + value
        if not self.reduced[nid] and rule.class_label is not None:
            amounts[rule.class_label] = amounts.get(rule.class_label, 0.0) + rule_length(rule)
        if ancestors:
            share = 1.0 / len(ancestors)
            for parent in ancestors:
                bucket = self.residuals[parent]
                for label, value in amounts.items():
                    bucket[label] = bucket.get(label, 0.0) + value * share
        del self.nodes[nid]
        del self.residuals[nid]
        del self.full[nid]
        for targets in self.full.values():
            targets.discard(nid)
        self._recompute_structure()

    # -- internals -----------------------------------------------------------

    def _recompute_structure(self) -> None:
        self._repair_cycles()
        self.reduced = transitive_reduce(self.nodes.keys(), self.full)
        self.parents = {v: set() for v in self.nodes}
        for u, targets in self.reduced.items():
            for v in targets:
                self.parents[v].add(u)

    def _repair_cycles(self) -> None:
        """Break mutual-coverage cycles deterministically.

        Mutual coverage means logical equivalence; within each strongly
        connected component, nodes are ordered by (length, id) and only
        forward edges of that order survive, so the shortest rule plays the
        generalisation role.
        """
        sccs = _strongly_connected(sorted(self.nodes), self.full)
        for comp in sccs:
            rank = {
                nid: pos
                for pos, nid in enumerate(
                    sorted(comp, key=lambda n: (rule_length(self.nodes[n]), n))
                )
            }
            for nid in comp:
                self.full[nid] = {
                    v for v in self.full[nid] if v not in rank or rank[nid] < rank[v]
                }
