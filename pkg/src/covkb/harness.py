"""Scenario configuration, seeded simulation, grid sweeps and exporters.

Config files are line-oriented `key = value` text with `#` comments;
lists are comma-separated and incremental scenarios declare consecutive
`[phase]` sections, each with its own pools.  All paths are resolved
relative to the config file.

Reproducibility: one PCG64 generator per run, seeded from the scenario
seed.  Per step the draw order is fixed: the evidence count, then that
many uniform pool indices, then the rule count, then its indices.  Grid
cells derive their seed by feeding (base seed, capacity, round(fraction *
1e6), repetition) into `numpy.random.SeedSequence`.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .covgraph import CoverageGraph
from .deduce import DERIVATION, SUBSUMPTION, CoverageConfig, DeriveLimits
from .lifecycle import (
    AVG_OPT,
    AVG_OPT_CLAMPED,
    FIXED,
    KnowledgeState,
    Policy,
    StepLog,
    Threshold,
)
from .metrics import MetricsTable
from .parser import ParseError, parse_program, scan_classes
from .rules import (
    BACKGROUND,
    CANDIDATE,
    EVIDENCE,
    Rule,
    canonical_form,
    render_rule,
)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PhaseConfig:
    steps: int
    evidence: Optional[str] = None
    candidates: Optional[str] = None


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    arrival_p: float = 0.5
    capacity: int = 0
    forget_fraction: float = 0.25
    beta: float = 0.5
    theta_p: Threshold = field(default_factory=lambda: Threshold(AVG_OPT_CLAMPED))
    theta_d: Threshold = field(default_factory=lambda: Threshold(FIXED, float("-inf")))
    consolidation_class: Optional[str] = None
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    background: Optional[str] = None
    phases: Tuple[PhaseConfig, ...] = ()

    @property
    def steps(self) -> int:
        return sum(p.steps for p in self.phases)

    def policy(self) -> Policy:
        return Policy(
            beta=self.beta,
            theta_p=self.theta_p,
            theta_d=self.theta_d,
            forget_fraction=self.forget_fraction,
            consolidation_class=self.consolidation_class,
        )


@dataclass(frozen=True)
class GridConfig:
    base: ScenarioConfig
    capacities: Tuple[int, ...]
    fractions: Tuple[float, ...]
    repetitions: int
    base_seed: int

    def cells(self) -> List[Tuple[int, float, int]]:
        return [
            (cap, frac, rep)
            for cap in self.capacities
            for frac in self.fractions
            for rep in range(self.repetitions)
        ]


# ---------------------------------------------------------------------------
# config file parsing


def _parse_kv_lines(text: str):
    """Yield (section, key, value, line_no); section None before any header."""
    section = None
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            yield section, None, None, line_no
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, value = line.split("=", 1)
        yield section, key.strip(), value.strip(), line_no


def _parse_threshold(text: str) -> Threshold:
    if text == AVG_OPT:
        return Threshold(AVG_OPT)
    if text == AVG_OPT_CLAMPED:
        return Threshold(AVG_OPT_CLAMPED)
    if text.startswith("fixed:"):
        try:
            return Threshold(FIXED, float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad fixed threshold {text!r}")
    raise ConfigError(f"unknown threshold mode {text!r}")


_SCALAR_KEYS = {
    "seed": int,
    "steps": int,
    "arrival_p": float,
    "capacity": int,
    "forget_fraction": float,
    "beta": float,
    "max_depth": int,
    "max_facts": int,
    "max_term_depth": int,
}


def load_scenario(path: str) -> ScenarioConfig:
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}")

    top: Dict[str, str] = {}
    phases: List[Dict[str, str]] = []
    current: Optional[Dict[str, str]] = None
    for section, key, value, line_no in _parse_kv_lines(text):
        if key is None:
            if section != "phase":
                raise ConfigError(f"line {line_no}: unknown section [{section}]")
            current = {}
            phases.append(current)
            continue
        target = current if current is not None else top
        if key in target:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        target[key] = value

    def resolve(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    scalars: Dict[str, object] = {}
    for key, conv in _SCALAR_KEYS.items():
        if key in top:
            try:
                scalars[key] = conv(top.pop(key))
            except ValueError:
                raise ConfigError(f"bad value for {key!r}")

    limits = DeriveLimits(
        max_depth=scalars.pop("max_depth", 10),
        max_facts=scalars.pop("max_facts", 10000),
        max_term_depth=scalars.pop("max_term_depth", 6),
    )
    for mode_key in ("rule_rule_coverage", "rule_evidence_coverage"):
        if mode_key in top and top[mode_key] not in (SUBSUMPTION, DERIVATION):
            raise ConfigError(f"bad value for {mode_key!r}")
    coverage = CoverageConfig(
        rule_rule_mode=top.pop("rule_rule_coverage", SUBSUMPTION),
        rule_evidence_mode=top.pop("rule_evidence_coverage", DERIVATION),
        limits=limits,
    )

    top_steps = scalars.pop("steps", None)
    background = resolve(top.pop("background", None))
    top_evidence = top.pop("evidence", None)
    top_candidates = top.pop("candidates", None)

    phase_cfgs: List[PhaseConfig] = []
    if phases:
        if top_evidence or top_candidates or top_steps is not None:
            raise ConfigError(
                "top-level steps/evidence/candidates clash with [phase] sections"
            )
        for i, ph in enumerate(phases, 1):
            if "steps" not in ph:
                raise ConfigError(f"[phase] {i} is missing steps")
            try:
                steps = int(ph.pop("steps"))
            except ValueError:
                raise ConfigError(f"[phase] {i}: bad steps value")
            phase_cfgs.append(
                PhaseConfig(
                    steps=steps,
                    evidence=resolve(ph.pop("evidence", None)),
                    candidates=resolve(ph.pop("candidates", None)),
                )
            )
            if ph:
                raise ConfigError(f"[phase] {i}: unknown keys {sorted(ph)}")
    else:
        if top_steps is None:
            raise ConfigError("scenario needs steps (or [phase] sections)")
        phase_cfgs.append(
            PhaseConfig(
                steps=int(top_steps),
                evidence=resolve(top_evidence),
                candidates=resolve(top_candidates),
            )
        )

    theta_p = _parse_threshold(top.pop("theta_p_mode", AVG_OPT_CLAMPED))
    theta_d = _parse_threshold(top.pop("theta_d_mode", "fixed:-inf"))
    consolidation_class = top.pop("consolidation_class", None)
    if top:
        raise ConfigError(f"unknown scenario keys {sorted(top)}")

    for phase in phase_cfgs:
        if phase.steps < 0:
            raise ConfigError("steps must be >= 0")
    cfg = ScenarioConfig(
        seed=int(scalars.pop("seed", 0)),
        arrival_p=float(scalars.pop("arrival_p", 0.5)),
        capacity=int(scalars.pop("capacity", 0)),
        forget_fraction=float(scalars.pop("forget_fraction", 0.25)),
        beta=float(scalars.pop("beta", 0.5)),
        theta_p=theta_p,
        theta_d=theta_d,
        consolidation_class=consolidation_class,
        coverage=coverage,
        background=background,
        phases=tuple(phase_cfgs),
    )
    if not 0.0 < cfg.arrival_p <= 1.0:
        raise ConfigError("arrival_p must lie in (0, 1]")
    return cfg


def load_grid(path: str) -> GridConfig:
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read grid file: {exc}")
    keys: Dict[str, str] = {}
    for section, key, value, line_no in _parse_kv_lines(text):
        if key is None:
            raise ConfigError(f"line {line_no}: grid files have no sections")
        keys[key] = value
    try:
        scenario_path = keys.pop("scenario")
    except KeyError:
        raise ConfigError("grid file needs scenario = <path>")
    if not os.path.isabs(scenario_path):
        scenario_path = os.path.join(base_dir, scenario_path)
    base = load_scenario(scenario_path)
    try:
        capacities = tuple(int(x) for x in keys.pop("capacities").split(","))
        fractions = tuple(float(x) for x in keys.pop("fractions").split(","))
        repetitions = int(keys.pop("repetitions"))
    except KeyError as exc:
        raise ConfigError(f"grid file is missing {exc}")
    except ValueError:
        raise ConfigError("bad grid list value")
    if keys:
        raise ConfigError(f"unknown grid keys {sorted(keys)}")
    if not capacities or not fractions or repetitions <= 0:
        raise ConfigError("grid lists must be non-empty")
    return GridConfig(
        base=base,
        capacities=capacities,
        fractions=fractions,
        repetitions=repetitions,
        base_seed=base.seed,
    )


# ---------------------------------------------------------------------------
# pools and state construction


def _load_pool(path: Optional[str], want_origin: str) -> List[Rule]:
    if path is None:
        return []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read pool file {path}: {exc}")
    try:
        rules = parse_program(text)
    except ParseError as exc:
        raise ConfigError(f"{path}: {exc}")
    return [r for r in rules if r.origin == want_origin]


def scenario_classes(cfg: ScenarioConfig) -> Tuple[str, ...]:
    """Class tokens declared by the evidence pools; must agree across phases."""
    declared: Optional[Tuple[str, ...]] = None
    for phase in cfg.phases:
        if phase.evidence is None:
            continue
        with open(phase.evidence, "r", encoding="utf-8") as fh:
            classes = scan_classes(fh.read())
        if not classes:
            continue
        if declared is None:
            declared = classes
        elif set(declared) != set(classes):
            raise ConfigError(
                f"class sets disagree across pools: {declared} vs {classes}"
            )
    if declared is None:
        raise ConfigError("no classes declared in any evidence pool")
    return declared


def build_state(cfg: ScenarioConfig) -> KnowledgeState:
    classes = scenario_classes(cfg)
    b0 = _load_pool(cfg.background, BACKGROUND)
    return KnowledgeState(
        b0,
        classes,
        capacity=cfg.capacity,
        policy=cfg.policy(),
        coverage=cfg.coverage,
    )


def build_oneshot_state(cfg: ScenarioConfig) -> KnowledgeState:
    """Ingest every pool item once, in file order; no sampling.

    This is what the `graph` and `metrics` commands operate on.
    """
    state = build_state(cfg)
    for phase in cfg.phases:
        state.ingest(_load_pool(phase.evidence, EVIDENCE))
        state.ingest(_load_pool(phase.candidates, CANDIDATE))
    state.ensure_metrics()
    return state


# ---------------------------------------------------------------------------
# sampling and the scenario runner


def sample_geometric(rng: np.random.Generator, p: float) -> int:
    """Inverse-transform geometric draw on {1, 2, ...} from one uniform."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    u = float(rng.random())
    if p == 1.0:
        return 1
    return int(math.floor(math.log1p(-u) / math.log1p(-p))) + 1


def run_scenario(
    cfg: ScenarioConfig,
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
) -> Tuple[List[StepLog], KnowledgeState]:
    """Run the arrival simulation; optionally stream steps.csv as it goes."""
    state = build_state(cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    pools = [
        (_load_pool(p.evidence, EVIDENCE), _load_pool(p.candidates, CANDIDATE))
        for p in cfg.phases
    ]
    logs: List[StepLog] = []
    writer = None
    fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "steps.csv"), "w", encoding="utf-8", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(step_csv_header(state.classes))
    try:
        for phase_idx, phase in enumerate(cfg.phases):
            evidence_pool, candidate_pool = pools[phase_idx]
            for _ in range(phase.steps):
                arrivals: List[Rule] = []
                for pool in (evidence_pool, candidate_pool):
                    if not pool:
                        continue
                    k = sample_geometric(rng, cfg.arrival_p)
                    for _ in range(k):
                        arrivals.append(pool[int(rng.integers(0, len(pool)))])
                log = state.step(arrivals)
                logs.append(log)
                if writer is not None:
                    writer.writerow(step_csv_row(log, state.classes))
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        write_snapshot(state, os.path.join(out_dir, "state.snapshot"))
    return logs, state


# ---------------------------------------------------------------------------
# grid sweeps


def derive_cell_seed(base_seed: int, capacity: int, fraction: float, rep: int) -> int:
    """Documented integer mix for per-cell seeds (stable across runs)."""
    seq = np.random.SeedSequence(
        [int(base_seed), int(capacity), int(round(fraction * 1e6)), int(rep)]
    )
    return int(seq.generate_state(1, np.uint64)[0])


def _grid_cell(args) -> Tuple[int, float, int, Optional[Tuple[str, ...]], str]:
    base, cap, frac, rep = args
    cfg = replace(base, capacity=cap, forget_fraction=frac)
    try:
        _, state = run_scenario(
            cfg, seed=derive_cell_seed(base.seed, cap, frac, rep)
        )
    except Exception as exc:  # recorded, grid continues
        return cap, frac, rep, None, f"{type(exc).__name__}: {exc}"
    consolidated = tuple(
        sorted(
            canonical_form(state.graph.nodes[nid])
            for nid in state.consolidated_ids()
        )
    )
    return cap, frac, rep, consolidated, ""


def run_grid(
    grid: GridConfig, jobs: int = 1
) -> Tuple[List[Tuple[int, float, str, int]], List[str]]:
    """Run every (capacity, fraction, repetition) cell; aggregate counts.

    Returns (rows, failures) with rows sorted by (capacity, fraction, rule
    canonical form); a rule appears once per cell with the number of
    repetitions that consolidated it.  Cell results are merged by this
    single writer, so serial and concurrent runs emit identical rows.
    """
    tasks = [(grid.base, cap, frac, rep) for cap, frac, rep in grid.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_cell, tasks))
    else:
        results = [_grid_cell(t) for t in tasks]
    counts: Dict[Tuple[int, float, str], int] = {}
    failures: List[str] = []
    for cap, frac, rep, consolidated, error in results:
        if consolidated is None:
            failures.append(f"capacity={cap} fraction={frac} rep={rep}: {error}")
            continue
        for canon in consolidated:
            key = (cap, frac, canon)
            counts[key] = counts.get(key, 0) + 1
    rows = [
        (cap, frac, canon, n) for (cap, frac, canon), n in sorted(counts.items())
    ]
    return rows, failures


def write_heatmap_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["capacity", "forget_fraction", "rule_canonical_form", "consolidated_count"]
        )
        for cap, frac, canon, n in rows:
            writer.writerow([cap, repr(frac), canon, n])


# ---------------------------------------------------------------------------
# exporters


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def step_csv_header(classes: Sequence[str]) -> List[str]:
    head = [
        "step",
        "arrivals_examples",
        "arrivals_rules",
        "population_w",
        "consolidated_count",
        "avg_opt_w",
        "avg_opt_cons",
        "n_forgotten",
        "forgotten_ids",
        "promoted_ids",
        "demoted_ids",
    ]
    head.extend(f"root_support_{c}" for c in classes)
    head.append("warnings")
    return head


def step_csv_row(log: StepLog, classes: Sequence[str]) -> List[str]:
    row = [
        str(log.step),
        str(log.arrivals_examples),
        str(log.arrivals_rules),
        str(log.population_w),
        str(log.consolidated_count),
        _fmt(log.avg_opt_w),
        _fmt(log.avg_opt_cons),
        str(log.n_forgotten),
        ";".join(str(i) for i in log.forgotten_ids),
        ";".join(str(i) for i in log.promoted_ids),
        ";".join(str(i) for i in log.demoted_ids),
    ]
    row.extend(_fmt(log.root_support[c]) for c in classes)
    row.append(";".join(log.warnings))
    return row


def write_steps_csv(logs: Sequence[StepLog], classes: Sequence[str], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(step_csv_header(classes))
        for log in logs:
            writer.writerow(step_csv_row(log, classes))


def metrics_csv_text(state: KnowledgeState) -> str:
    """Metrics dump: id, class, L, per-class support/lhat/opt, generics."""
    table = state.ensure_metrics()
    classes = state.classes
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    head = ["id", "class", "L"]
    for c in classes:
        head.extend([f"support_{c}", f"lhat_{c}", f"opt_{c}"])
    head.extend(["opt_generic", "perm_generic", "protected"])
    writer.writerow(head)
    for nid in sorted(state.graph.nodes):
        rule = state.graph.nodes[nid]
        row = [
            str(nid),
            rule.class_label or "",
            _fmt(state.graph.node_length(nid)),
        ]
        for c in classes:
            row.extend(
                [
                    _fmt(table.support[nid][c]),
                    _fmt(table.lhat[nid][c]),
                    _fmt(table.opt[nid][c]),
                ]
            )
        row.extend(
            [
                _fmt(table.opt_generic[nid]),
                _fmt(table.perm_generic[nid]),
                "1" if rule.protected else "0",
            ]
        )
        writer.writerow(row)
    return buf.getvalue()


_CLASS_COLORS = (
    "palegreen",
    "lightcoral",
    "lightblue",
    "khaki",
    "plum",
    "lightsalmon",
)


def export_dot(
    graph: CoverageGraph,
    table: MetricsTable,
    classes: Sequence[str],
) -> str:
    """DOT rendering of the reduced graph, deterministically ordered by id."""
    color = {
        c: _CLASS_COLORS[i % len(_CLASS_COLORS)] for i, c in enumerate(classes)
    }
    lines = ["digraph coverage {", "  rankdir=BT;"]
    for nid in sorted(graph.nodes):
        rule = graph.nodes[nid]
        attrs = [f'label="{nid}\\nopt={table.opt_generic[nid]:.3f}"']
        if rule.class_label is not None:
            attrs.append("style=filled")
            attrs.append(f'fillcolor="{color[rule.class_label]}"')
        if rule.protected:
            attrs.append("peripheries=2")
        lines.append(f"  n{nid} [{', '.join(attrs)}];")
    for u in sorted(graph.nodes):
        for v in sorted(graph.reduced[u]):
            lines.append(f"  n{u} -> n{v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# state snapshots


def write_snapshot(state: KnowledgeState, path: str) -> None:
    """Serialize graph nodes (rendered rules, flags, residuals) to text."""
    lines = ["#snapshot 1", "#classes " + " ".join(state.classes)]
    for nid in sorted(state.graph.nodes):
        rule = state.graph.nodes[nid]
        fields = [f"id={nid}", f"origin={rule.origin}",
                  f"protected={1 if rule.protected else 0}"]
        if rule.class_label is not None:
            fields.append(f"class={rule.class_label}")
        if rule.length_override is not None:
            fields.append(f"length={rule.length_override!r}")
        residuals = state.graph.residuals[nid]
        nonzero = {c: v for c, v in sorted(residuals.items()) if v}
        if nonzero:
            fields.append(
                "res=" + ";".join(f"{c}:{v!r}" for c, v in nonzero.items())
            )
        lines.append("#node " + " ".join(fields))
        lines.append(render_rule(rule))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class Snapshot:
    classes: Tuple[str, ...]
    rules: List[Rule]                      # snapshot ids preserved
    residuals: Dict[int, Dict[str, float]]


def load_snapshot(path: str) -> Snapshot:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#snapshot"):
        raise ConfigError("not a snapshot file")
    classes: Tuple[str, ...] = ()
    rules: List[Rule] = []
    residuals: Dict[int, Dict[str, float]] = {}
    pending: Optional[Dict[str, str]] = None
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("#classes"):
            classes = tuple(line.split()[1:])
            continue
        if line.startswith("#node"):
            pending = dict(
                part.split("=", 1) for part in line.split()[1:]
            )
            continue
        if pending is None:
            raise ConfigError(f"clause without #node header: {line!r}")
        parsed = parse_program(line)
        if len(parsed) != 1:
            raise ConfigError(f"expected one clause, got {len(parsed)}")
        nid = int(pending["id"])
        rule = replace(
            parsed[0],
            id=nid,
            origin=pending["origin"],
            protected=pending.get("protected") == "1",
            class_label=pending.get("class"),
            length_override=(
                float(pending["length"]) if "length" in pending else None
            ),
        )
        rules.append(rule)
        res: Dict[str, float] = {}
        for part in pending.get("res", "").split(";"):
            if part:
                c, v = part.split(":", 1)
                res[c] = float(v)
        residuals[nid] = res
        pending = None
    return Snapshot(classes=classes, rules=rules, residuals=residuals)


def restore_state(snapshot: Snapshot, cfg: ScenarioConfig) -> KnowledgeState:
    """Rebuild a knowledge state from a snapshot.

    Protected rules are ingested and promoted first so that the remaining
    rules' coverage is computed against the full consolidated background;
    edges themselves are recomputed, not replayed.
    """
    state = build_state(cfg)
    protected = [r for r in snapshot.rules if r.protected]
    rest = [r for r in snapshot.rules if not r.protected]
    id_map: Dict[int, int] = {}

    def ingest_batch(batch: List[Rule]) -> None:
        for rule in batch:
            new_ids = state.ingest([rule])
            if new_ids:
                id_map[rule.id] = new_ids[0]

    ingest_batch(protected)
    if protected:
        flagged = []
        for old in protected:
            nid = id_map[old.id]
            promoted = state.graph.nodes[nid].with_protection(True)
            state.graph.replace_rule(promoted)
            flagged.append(promoted)
        state.background = state.background.extended(flagged)
        state.oracle.set_background(state.background)
    ingest_batch(rest)
    for old_id, res in snapshot.residuals.items():
        nid = id_map.get(old_id)
        if nid is None:
            continue
        for c, v in res.items():
            state.graph.set_residual(nid, c, v)
    state.recompute_metrics()
    return state
