"""Static scenario model: network topology, attacker profile, episode economics.

A Scenario is immutable after load and safe to share read-only across any
number of concurrently running episodes. Dataclasses here do not self-check;
`validate_scenario` is the single gate that enumerates every violated rule.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from ._util import canonical_json, sha256_hex
from .errors import ParseError, UnknownNodeError, ValidationError

COST_DEFAULTS = {
    "patch_cost": 1.0,
    "patch_usability": 0.5,
    "restore_cost": 3.0,
    "restore_usability": 2.0,
    "isolate_cost_per_step": 2.0,
    "scan_cost": 0.5,
    "survival_bonus": 1.0,
    "target_loss_penalty": -100.0,
    "patch_delta": 0.2,
}

ALERT_DEFAULTS = {
    "p_alert_fail": 0.6,
    "p_alert_success": 0.3,
    "p_false_alert": 0.05,
    "scan_tpr": 0.9,
    "scan_fpr": 0.05,
}

DEFAULT_HORIZON = 100
DEFAULT_STRENGTH = 0.5
DEFAULT_SPREAD = 1


@dataclass(frozen=True)
class VulnSpec:
    """One exploitable weakness on a device; severity scales compromise odds."""

    id: str
    severity: float


@dataclass(frozen=True)
class NodeSpec:
    id: int
    defence: float = 0.0
    vulns: tuple[VulnSpec, ...] = ()
    creds_stored: frozenset[str] = frozenset()
    unlocks: frozenset[str] = frozenset()
    is_target: bool = False

    def max_severity(self) -> float:
        """Worst vulnerability on the device; 0 when it has none."""
        return max((v.severity for v in self.vulns), default=0.0)


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[NodeSpec, ...]
    edges: frozenset[tuple[int, int]]  # normalized (lo, hi) pairs
    _by_id: dict = field(init=False, repr=False, compare=False)
    _adj: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {n.id: n for n in self.nodes}
        adj: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for a, b in self.edges:
            if a in adj and b in adj and a != b:
                adj[a].add(b)
                adj[b].add(a)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_adj", {k: tuple(sorted(v)) for k, v in adj.items()})

    def node(self, node_id: int) -> NodeSpec:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node with id {node_id}") from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self._by_id

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        if node_id not in self._adj:
            raise UnknownNodeError(f"no node with id {node_id}")
        return self._adj[node_id]

    def node_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_id))

    def target_id(self) -> int:
        for n in self.nodes:
            if n.is_target:
                return n.id
        raise ValidationError("exactly one target: scenario has none")


@dataclass(frozen=True)
class AttackerParams:
    strength: float = DEFAULT_STRENGTH
    spread: int = DEFAULT_SPREAD
    entry: frozenset[int] = frozenset()


@dataclass(frozen=True)
class CostParams:
    patch_cost: float = COST_DEFAULTS["patch_cost"]
    patch_usability: float = COST_DEFAULTS["patch_usability"]
    restore_cost: float = COST_DEFAULTS["restore_cost"]
    restore_usability: float = COST_DEFAULTS["restore_usability"]
    isolate_cost_per_step: float = COST_DEFAULTS["isolate_cost_per_step"]
    scan_cost: float = COST_DEFAULTS["scan_cost"]
    survival_bonus: float = COST_DEFAULTS["survival_bonus"]
    target_loss_penalty: float = COST_DEFAULTS["target_loss_penalty"]
    patch_delta: float = COST_DEFAULTS["patch_delta"]


@dataclass(frozen=True)
class AlertParams:
    p_alert_fail: float = ALERT_DEFAULTS["p_alert_fail"]
    p_alert_success: float = ALERT_DEFAULTS["p_alert_success"]
    p_false_alert: float = ALERT_DEFAULTS["p_false_alert"]
    scan_tpr: float = ALERT_DEFAULTS["scan_tpr"]
    scan_fpr: float = ALERT_DEFAULTS["scan_fpr"]


@dataclass(frozen=True)
class Scenario:
    topology: NetworkTopology
    attacker: AttackerParams
    costs: CostParams = CostParams()
    alerts: AlertParams = AlertParams()
    horizon: int = DEFAULT_HORIZON


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NODE_KEYS = {"id", "defence", "vulns", "creds_stored", "unlocks", "target"}
_VULN_KEYS = {"id", "severity"}
_ATTACKER_KEYS = {"strength", "spread", "entry"}
_TOP_KEYS = {"nodes", "edges", "attacker", "costs", "alerts", "horizon"}


def _require(cond: bool, message: str):
    if not cond:
        raise ParseError(message)


def _check_keys(obj: dict, allowed: set, where: str, lenient: bool):
    unknown = set(obj) - allowed
    if unknown and not lenient:
        raise ParseError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _num(obj: dict, key: str, where: str, default=None):
    if key not in obj:
        if default is None:
            raise ParseError(f"missing required key '{key}' in {where}")
        return default
    value = obj[key]
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"'{key}' in {where} must be a number")
    return float(value)


def _str_list(obj: dict, key: str, where: str) -> list[str]:
    value = obj.get(key, [])
    _require(isinstance(value, list) and all(isinstance(x, str) for x in value),
             f"'{key}' in {where} must be a list of strings")
    return value


def _parse_node(obj, index: int, lenient: bool) -> NodeSpec:
    where = f"nodes[{index}]"
    _require(isinstance(obj, dict), f"{where} must be an object")
    _check_keys(obj, _NODE_KEYS, where, lenient)
    _require("id" in obj, f"missing required key 'id' in {where}")
    _require(isinstance(obj["id"], int) and not isinstance(obj["id"], bool),
             f"'id' in {where} must be an integer")
    vulns = []
    raw_vulns = obj.get("vulns", [])
    _require(isinstance(raw_vulns, list), f"'vulns' in {where} must be a list")
    for j, rv in enumerate(raw_vulns):
        vw = f"{where}.vulns[{j}]"
        _require(isinstance(rv, dict), f"{vw} must be an object")
        _check_keys(rv, _VULN_KEYS, vw, lenient)
        _require(isinstance(rv.get("id"), str), f"'id' in {vw} must be a string")
        vulns.append(VulnSpec(id=rv["id"], severity=_num(rv, "severity", vw)))
    target = obj.get("target", False)
    _require(isinstance(target, bool), f"'target' in {where} must be a boolean")
    return NodeSpec(
        id=obj["id"],
        defence=_num(obj, "defence", where, default=0.0),
        vulns=tuple(sorted(vulns, key=lambda v: v.id)),
        creds_stored=frozenset(_str_list(obj, "creds_stored", where)),
        unlocks=frozenset(_str_list(obj, "unlocks", where)),
        is_target=target,
    )


def scenario_from_obj(obj, lenient: bool = False) -> Scenario:
    """Build a Scenario from a decoded JSON object (no validation yet)."""
    _require(isinstance(obj, dict), "scenario document must be a JSON object")
    _check_keys(obj, _TOP_KEYS, "scenario", lenient)
    _require("nodes" in obj and isinstance(obj["nodes"], list), "scenario requires a 'nodes' array")
    _require("edges" in obj and isinstance(obj["edges"], list), "scenario requires an 'edges' array")
    _require("attacker" in obj and isinstance(obj["attacker"], dict),
             "scenario requires an 'attacker' object")

    nodes = tuple(sorted((_parse_node(n, i, lenient) for i, n in enumerate(obj["nodes"])),
                         key=lambda n: n.id))

    edges = set()
    for i, pair in enumerate(obj["edges"]):
        _require(isinstance(pair, list) and len(pair) == 2
                 and all(isinstance(x, int) and not isinstance(x, bool) for x in pair),
                 f"edges[{i}] must be a pair of integer node ids")
        a, b = pair
        edges.add((min(a, b), max(a, b)))

    atk = obj["attacker"]
    _check_keys(atk, _ATTACKER_KEYS, "attacker", lenient)
    _require("entry" in atk and isinstance(atk["entry"], list)
             and all(isinstance(x, int) and not isinstance(x, bool) for x in atk["entry"]),
             "'entry' in attacker must be a list of integer node ids")
    spread = atk.get("spread", DEFAULT_SPREAD)
    _require(isinstance(spread, int) and not isinstance(spread, bool),
             "'spread' in attacker must be an integer")
    attacker = AttackerParams(
        strength=_num(atk, "strength", "attacker", default=DEFAULT_STRENGTH),
        spread=spread,
        entry=frozenset(atk["entry"]),
    )

    costs_obj = obj.get("costs", {})
    _require(isinstance(costs_obj, dict), "'costs' must be an object")
    _check_keys(costs_obj, set(COST_DEFAULTS), "costs", lenient)
    costs = CostParams(**{k: _num(costs_obj, k, "costs", default=COST_DEFAULTS[k])
                          for k in COST_DEFAULTS})

    alerts_obj = obj.get("alerts", {})
    _require(isinstance(alerts_obj, dict), "'alerts' must be an object")
    _check_keys(alerts_obj, set(ALERT_DEFAULTS), "alerts", lenient)
    alerts = AlertParams(**{k: _num(alerts_obj, k, "alerts", default=ALERT_DEFAULTS[k])
                            for k in ALERT_DEFAULTS})

    horizon = obj.get("horizon", DEFAULT_HORIZON)
    _require(isinstance(horizon, int) and not isinstance(horizon, bool),
             "'horizon' must be an integer")

    return Scenario(
        topology=NetworkTopology(nodes=nodes, edges=frozenset(edges)),
        attacker=attacker,
        costs=costs,
        alerts=alerts,
        horizon=horizon,
    )


def load_scenario(text: str, lenient: bool = False) -> Scenario:
    """Parse and validate a scenario document.

    Raises ParseError for malformed documents (including unknown keys unless
    `lenient`), ValidationError when any invariant is violated.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    scenario = scenario_from_obj(obj, lenient=lenient)
    validate_scenario(scenario)
    return scenario


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_scenario(s: Scenario) -> None:
    """Check every invariant; raise ValidationError listing all violations."""
    problems: list[str] = []
    nodes = s.topology.nodes
    ids = [n.id for n in nodes]
    id_set = set(ids)

    if len(ids) != len(id_set):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        problems.append(f"node ids not unique: {dupes}")
    for n in nodes:
        if n.id < 0:
            problems.append(f"node id {n.id} must be non-negative")
        if not 0.0 <= n.defence <= 1.0:
            problems.append(f"defence out of range on node {n.id}: {n.defence}")
        vuln_ids = [v.id for v in n.vulns]
        if len(vuln_ids) != len(set(vuln_ids)):
            problems.append(f"duplicate vulnerability ids on node {n.id}")
        for v in n.vulns:
            if not v.id:
                problems.append(f"empty vulnerability id on node {n.id}")
            if not 0.0 <= v.severity <= 1.0:
                problems.append(f"severity out of range on node {n.id}: {v.id}={v.severity}")

    targets = [n.id for n in nodes if n.is_target]
    if len(targets) != 1:
        problems.append(f"exactly one target required, found {len(targets)}")

    for a, b in sorted(s.topology.edges):
        if a == b:
            problems.append(f"self-loop on node {a}")
        if a not in id_set:
            problems.append(f"edge endpoint {a} does not exist")
        if b not in id_set:
            problems.append(f"edge endpoint {b} does not exist")

    if nodes and not _connected(s.topology):
        problems.append("graph not connected")

    atk = s.attacker
    if not 0.0 <= atk.strength <= 1.0:
        problems.append(f"attacker strength out of range: {atk.strength}")
    if atk.spread < 1:
        problems.append(f"attacker spread must be >= 1, got {atk.spread}")
    if not atk.entry:
        problems.append("attacker entry set is empty")
    for e in sorted(atk.entry):
        if e not in id_set:
            problems.append(f"entry node {e} does not exist")
        elif len(targets) == 1 and e == targets[0]:
            problems.append(f"entry node {e} is the target")

    c = s.costs
    for name in ("patch_cost", "patch_usability", "restore_cost", "restore_usability",
                 "isolate_cost_per_step", "scan_cost"):
        if getattr(c, name) < 0:
            problems.append(f"{name} must be non-negative")
    if c.target_loss_penalty >= 0:
        problems.append("target_loss_penalty must be negative")
    if not 0.0 < c.patch_delta <= 1.0:
        problems.append(f"patch_delta must be in (0,1], got {c.patch_delta}")

    for name in ("p_alert_fail", "p_alert_success", "p_false_alert", "scan_tpr", "scan_fpr"):
        value = getattr(s.alerts, name)
        if not 0.0 <= value <= 1.0:
            problems.append(f"{name} out of range: {value}")

    if s.horizon < 1:
        problems.append(f"horizon must be >= 1, got {s.horizon}")

    if problems:
        raise ValidationError(problems)


def _connected(t: NetworkTopology) -> bool:
    start = t.nodes[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in t._adj.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(t.nodes)


def shortest_hops(t: NetworkTopology, a: int, b: int) -> int:
    """Breadth-first hop distance between two nodes; 0 iff a == b."""
    t.node(a)
    t.node(b)
    if a == b:
        return 0
    dist = {a: 0}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        for nxt in t.neighbors(cur):
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                if nxt == b:
                    return dist[nxt]
                queue.append(nxt)
    raise ValidationError(f"no path between {a} and {b}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def scenario_to_obj(s: Scenario) -> dict:
    """Canonical plain-object form; inverse of scenario_from_obj."""
    return {
        "nodes": [
            {
                "id": n.id,
                "defence": n.defence,
                "vulns": [{"id": v.id, "severity": v.severity} for v in n.vulns],
                "creds_stored": sorted(n.creds_stored),
                "unlocks": sorted(n.unlocks),
                "target": n.is_target,
            }
            for n in s.topology.nodes
        ],
        "edges": [list(e) for e in sorted(s.topology.edges)],
        "attacker": {
            "strength": s.attacker.strength,
            "spread": s.attacker.spread,
            "entry": sorted(s.attacker.entry),
        },
        "costs": {k: getattr(s.costs, k) for k in COST_DEFAULTS},
        "alerts": {k: getattr(s.alerts, k) for k in ALERT_DEFAULTS},
        "horizon": s.horizon,
    }


def serialize_scenario(s: Scenario, indent: int | None = 2) -> str:
    return json.dumps(scenario_to_obj(s), sort_keys=True, indent=indent)


def scenario_digest(s: Scenario) -> str:
    """SHA-256 of the canonical compact serialization."""
    return sha256_hex(canonical_json(scenario_to_obj(s)))
