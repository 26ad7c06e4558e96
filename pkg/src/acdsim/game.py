"""Stochastic lateral-movement game engine.

Ground-truth state, simultaneous attacker/defender moves with defender-first
resolution, stochastic compromise, noisy alerts, rewards, and replayable
episode logs.

Per-step draw order on the single episode generator (fixed for replay):

1. one draw for the defender's scan, if the action is a scan;
2. per attacker attempt in ascending target-node id: one draw for the
   compromise outcome, then one draw for the attempt alert (attempts that are
   skipped because the node is isolated or already compromised draw nothing);
3. one false-alert draw per node in ascending node id.

Policies never touch this generator; they get labelled side streams from
`run_episode`, so replaying a log from (scenario, seed, recorded actions)
reproduces it byte for byte.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from . import __version__
from ._util import child_seed
from .errors import (
    IllegalActionError,
    ParseError,
    ReplayMismatchError,
    TerminalStateError,
    ValidationError,
)
from .netmodel import (
    NodeSpec,
    Scenario,
    scenario_digest,
    scenario_from_obj,
    scenario_to_obj,
    validate_scenario,
)

TARGET_COMPROMISED = "target_compromised"
HORIZON_REACHED = "horizon_reached"

ALERT_ATTEMPT_FAIL = "attempt_fail"
ALERT_ATTEMPT_SUCCESS = "attempt_success"
ALERT_FALSE_POSITIVE = "false_positive"

CRED_COMPROMISE_PROB = 0.9


# ---------------------------------------------------------------------------
# Actions and events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefenderAction:
    kind: str  # nop | patch | restore | isolate | scan
    node: int | None = None
    duration: int = 1


NOP = DefenderAction("nop")


def patch(node: int) -> DefenderAction:
    return DefenderAction("patch", node)


def restore(node: int) -> DefenderAction:
    return DefenderAction("restore", node)


def isolate(node: int, duration: int = 1) -> DefenderAction:
    return DefenderAction("isolate", node, duration)


def scan(node: int) -> DefenderAction:
    return DefenderAction("scan", node)


@dataclass(frozen=True)
class AttackerAction:
    attempts: frozenset[int] = frozenset()  # empty set = pass


PASS = AttackerAction()


@dataclass(frozen=True)
class Event:
    kind: str  # attempt | loot | patch | restore | isolate | scan | alert
    node: int
    outcome: str | None = None      # attempt: success | fail | skipped
    creds: tuple[str, ...] = ()     # loot
    result: bool | None = None      # scan
    alert_kind: str | None = None   # alert (ground truth only)
    duration: int | None = None     # isolate

    def to_obj(self) -> dict:
        obj = {"kind": self.kind, "node": self.node}
        if self.outcome is not None:
            obj["outcome"] = self.outcome
        if self.creds:
            obj["creds"] = list(self.creds)
        if self.result is not None:
            obj["result"] = self.result
        if self.alert_kind is not None:
            obj["alert_kind"] = self.alert_kind
        if self.duration is not None:
            obj["duration"] = self.duration
        return obj


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    events: tuple[Event, ...]
    terminal_cause: str | None = None


# ---------------------------------------------------------------------------
# State and views
# ---------------------------------------------------------------------------

@dataclass
class GameState:
    scenario: Scenario
    t: int
    compromised: set[int]
    attacker_known: set[int]
    attacker_creds: set[str]
    isolation: dict[int, int]
    defence_now: dict[int, float]
    horizon: int
    rng: random.Random
    terminal: str | None = None
    last_alerts: tuple[int, ...] = ()  # node ids of last step's alerts (kind hidden)
    scan_results: dict[int, tuple[int, bool]] = field(default_factory=dict)
    cumulative_reward: float = 0.0

    def target_seen(self) -> int | None:
        target = self.scenario.topology.target_id()
        return target if target in self.attacker_known else None


@dataclass(frozen=True)
class AttackerView:
    """What the attacker knows: the discovered subgraph, never the full map."""

    known_nodes: dict[int, tuple[int, ...]]  # neighbor lists restricted to known
    known_unlocks: dict[int, frozenset[str]]
    compromised: frozenset[int]
    creds: frozenset[str]
    target_seen: int | None

    def to_obj(self) -> dict:
        return {
            "known_nodes": {str(k): list(v) for k, v in sorted(self.known_nodes.items())},
            "known_unlocks": {str(k): sorted(v) for k, v in sorted(self.known_unlocks.items())},
            "compromised": sorted(self.compromised),
            "creds": sorted(self.creds),
            "target_seen": self.target_seen,
        }


@dataclass(frozen=True)
class DefenderView:
    """What the defender knows: full topology, never the true compromise set."""

    topology_nodes: tuple[int, ...]
    topology_edges: tuple[tuple[int, int], ...]
    target: int
    t: int
    alerts_last_step: tuple[int, ...]  # node ids, kind withheld
    scan_results: dict[int, tuple[int, bool]]
    isolation: dict[int, int]
    defence_now: dict[int, float]
    cumulative_reward: float

    def neighbors_of(self, node_id: int) -> tuple[int, ...]:
        out = [b for a, b in self.topology_edges if a == node_id]
        out += [a for a, b in self.topology_edges if b == node_id]
        return tuple(sorted(out))

    def to_obj(self) -> dict:
        return {
            "nodes": list(self.topology_nodes),
            "edges": [list(e) for e in self.topology_edges],
            "target": self.target,
            "t": self.t,
            "alerts_last_step": list(self.alerts_last_step),
            "scan_results": {str(k): [s, r] for k, (s, r) in sorted(self.scan_results.items())},
            "isolation": {str(k): v for k, v in sorted(self.isolation.items())},
            "defence_now": {str(k): v for k, v in sorted(self.defence_now.items())},
            "cumulative_reward": self.cumulative_reward,
        }


def attacker_view(st: GameState) -> AttackerView:
    topo = st.scenario.topology
    known = st.attacker_known
    return AttackerView(
        known_nodes={n: tuple(x for x in topo.neighbors(n) if x in known)
                     for n in sorted(known)},
        known_unlocks={n: topo.node(n).unlocks for n in sorted(known)},
        compromised=frozenset(st.compromised),
        creds=frozenset(st.attacker_creds),
        target_seen=st.target_seen(),
    )


def defender_view(st: GameState) -> DefenderView:
    topo = st.scenario.topology
    return DefenderView(
        topology_nodes=topo.node_ids(),
        topology_edges=tuple(sorted(topo.edges)),
        target=topo.target_id(),
        t=st.t,
        alerts_last_step=st.last_alerts,
        scan_results=dict(st.scan_results),
        isolation={n: k for n, k in st.isolation.items() if k > 0},
        defence_now=dict(st.defence_now),
        cumulative_reward=st.cumulative_reward,
    )


# ---------------------------------------------------------------------------
# Mechanics
# ---------------------------------------------------------------------------

def compromise_probability(strength: float, node: NodeSpec, defence_now: float,
                           cred_held: bool) -> float:
    """Chance one attempt takes the node.

    A held credential that unlocks the node bypasses the vulnerability route
    entirely at a flat 0.9; otherwise strength scales the worst vulnerability,
    damped by current defence.
    """
    if cred_held:
        return CRED_COMPROMISE_PROB
    p = strength * node.max_severity() * (1.0 - defence_now)
    return min(1.0, max(0.0, p))


def init(s: Scenario, seed: int, horizon_override: int | None = None) -> GameState:
    """Fresh episode state: entry nodes compromised and looted, frontier known."""
    validate_scenario(s)
    if horizon_override is not None and horizon_override < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon_override}")
    topo = s.topology
    compromised = set(s.attacker.entry)
    known = set(compromised)
    for n in compromised:
        known.update(topo.neighbors(n))
    creds: set[str] = set()
    for n in compromised:
        creds.update(topo.node(n).creds_stored)
    return GameState(
        scenario=s,
        t=0,
        compromised=compromised,
        attacker_known=known,
        attacker_creds=creds,
        isolation={},
        defence_now={n.id: n.defence for n in topo.nodes},
        horizon=horizon_override if horizon_override is not None else s.horizon,
        rng=random.Random(seed),
    )


def _check_defender_action(st: GameState, d: DefenderAction):
    if d.kind not in ("nop", "patch", "restore", "isolate", "scan"):
        raise IllegalActionError(f"unknown defender action kind '{d.kind}'")
    if d.kind != "nop":
        if d.node is None or not st.scenario.topology.has_node(d.node):
            raise IllegalActionError(f"defender action on unknown node {d.node}")
    if d.kind == "isolate" and d.duration < 1:
        raise IllegalActionError("isolation duration must be >= 1")


def _check_attacker_action(st: GameState, a: AttackerAction):
    if len(a.attempts) > st.scenario.attacker.spread:
        raise IllegalActionError(
            f"{len(a.attempts)} attempts exceed spread {st.scenario.attacker.spread}")
    topo = st.scenario.topology
    for n in sorted(a.attempts):
        if not topo.has_node(n):
            raise IllegalActionError(f"attempt on unknown node {n}")
        if not any(adj in st.compromised for adj in topo.neighbors(n)):
            raise IllegalActionError(f"attempt on node {n} not adjacent to a compromised node")


def step(st: GameState, d: DefenderAction, a: AttackerAction) -> tuple[GameState, StepOutcome]:
    """Advance one step; mutates `st` in place and returns it with the outcome.

    Resolution order: defender action, attacker attempts, credential loot,
    knowledge growth, alerts, isolation tick, reward, clock/termination.
    """
    if st.terminal is not None:
        raise TerminalStateError(f"episode ended: {st.terminal}")
    _check_defender_action(st, d)
    _check_attacker_action(st, a)

    s = st.scenario
    topo = s.topology
    costs = s.costs
    events: list[Event] = []
    action_cost = 0.0

    # (1) defender action
    if d.kind == "patch":
        st.defence_now[d.node] = min(1.0, st.defence_now[d.node] + costs.patch_delta)
        action_cost += costs.patch_cost + costs.patch_usability
        events.append(Event("patch", d.node))
    elif d.kind == "restore":
        st.compromised.discard(d.node)
        action_cost += costs.restore_cost + costs.restore_usability
        events.append(Event("restore", d.node))
    elif d.kind == "isolate":
        st.isolation[d.node] = max(st.isolation.get(d.node, 0), d.duration)
        events.append(Event("isolate", d.node, duration=d.duration))
    elif d.kind == "scan":
        u = st.rng.random()
        truly = d.node in st.compromised
        result = (u < s.alerts.scan_tpr) if truly else (u < s.alerts.scan_fpr)
        st.scan_results[d.node] = (st.t, result)
        action_cost += costs.scan_cost
        events.append(Event("scan", d.node, result=result))

    # isolation keeps nodes offline; charge every node-step it is in effect
    isolated_now = sorted(n for n, k in st.isolation.items() if k > 0)
    action_cost += costs.isolate_cost_per_step * len(isolated_now)

    # (2) attempts, ascending node id; isolated or already-taken nodes are
    # skipped silently and draw nothing
    newly: list[int] = []
    for n in sorted(a.attempts):
        if st.isolation.get(n, 0) > 0 or n in st.compromised:
            events.append(Event("attempt", n, outcome="skipped"))
            continue
        node = topo.node(n)
        cred_held = bool(st.attacker_creds & node.unlocks)
        p = compromise_probability(s.attacker.strength, node, st.defence_now[n], cred_held)
        success = st.rng.random() < p
        alert_u = st.rng.random()
        events.append(Event("attempt", n, outcome="success" if success else "fail"))
        if success:
            newly.append(n)
        threshold = s.alerts.p_alert_success if success else s.alerts.p_alert_fail
        if alert_u < threshold:
            kind = ALERT_ATTEMPT_SUCCESS if success else ALERT_ATTEMPT_FAIL
            events.append(Event("alert", n, alert_kind=kind))

    # (3) loot newly compromised nodes
    st.compromised.update(newly)
    for n in newly:
        creds = topo.node(n).creds_stored
        if creds:
            st.attacker_creds.update(creds)
            events.append(Event("loot", n, creds=tuple(sorted(creds))))

    # (4) knowledge growth
    for n in newly:
        st.attacker_known.update(topo.neighbors(n))

    # (5) false alerts, ascending node id
    for n in topo.node_ids():
        if st.rng.random() < s.alerts.p_false_alert:
            events.append(Event("alert", n, alert_kind=ALERT_FALSE_POSITIVE))
    st.last_alerts = tuple(sorted(e.node for e in events if e.kind == "alert"))

    # (6) isolation timers
    st.isolation = {n: k - 1 for n, k in st.isolation.items() if k - 1 > 0}

    # (7) reward
    target = topo.target_id()
    if target in st.compromised:
        reward = costs.target_loss_penalty
    else:
        reward = costs.survival_bonus - action_cost
    st.cumulative_reward += reward

    # (8) clock and termination
    st.t += 1
    cause = None
    if target in st.compromised:
        cause = TARGET_COMPROMISED
    elif st.t >= st.horizon:
        cause = HORIZON_REACHED
    st.terminal = cause

    return st, StepOutcome(reward=reward, events=tuple(events), terminal_cause=cause)


# ---------------------------------------------------------------------------
# Episodes and logs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    t: int
    defender: DefenderAction
    attacker: AttackerAction
    outcome: StepOutcome


@dataclass(frozen=True)
class EpisodeLog:
    scenario: Scenario
    scenario_sha256: str
    seed: int
    version: str
    steps: tuple[StepRecord, ...]
    final: dict

    def total_reward(self) -> float:
        return sum(r.outcome.reward for r in self.steps)

    def terminal_cause(self) -> str:
        return self.final["terminal"]

    def length(self) -> int:
        return len(self.steps)

    def time_to_target(self) -> int:
        """Step count until target compromise; episode length when it never fell."""
        return self.final["t"]


def run_episode(s: Scenario, defender, attacker, seed: int,
                horizon_override: int | None = None) -> EpisodeLog:
    """Drive init/step with the two policies until the episode terminates.

    Policies receive labelled side RNG streams; the engine stream is derived
    from `seed` alone, so logs replay from the recorded actions.
    """
    st = init(s, seed, horizon_override)
    def_rng = random.Random(child_seed(seed, "defender"))
    atk_rng = random.Random(child_seed(seed, "attacker"))
    records: list[StepRecord] = []
    while st.terminal is None:
        d = defender.act(defender_view(st), def_rng)
        a = attacker.act(attacker_view(st), atk_rng)
        t_before = st.t
        st, outcome = step(st, d, a)
        defender.observe(outcome)
        attacker.observe(outcome)
        records.append(StepRecord(t_before, d, a, outcome))
    return assemble_log(s, seed, st, records)


def assemble_log(s: Scenario, seed: int, st: GameState,
                 records: list[StepRecord]) -> EpisodeLog:
    """Build the episode log from a finished state and its step records."""
    return EpisodeLog(
        scenario=s,
        scenario_sha256=scenario_digest(s),
        seed=seed,
        version=__version__,
        steps=tuple(records),
        final={
            "t": st.t,
            "terminal": st.terminal,
            "total_reward": st.cumulative_reward,
            "compromised": sorted(st.compromised),
            "creds": sorted(st.attacker_creds),
        },
    )


def _defender_action_obj(d: DefenderAction) -> dict:
    obj = {"kind": d.kind}
    if d.node is not None:
        obj["node"] = d.node
    if d.kind == "isolate":
        obj["duration"] = d.duration
    return obj


def _attacker_action_obj(a: AttackerAction) -> dict:
    return {"attempts": sorted(a.attempts)}


def episode_to_jsonl(log: EpisodeLog) -> str:
    """Serialize to the JSON-lines log format (header, steps, final summary)."""
    lines = [json.dumps({
        "scenario": scenario_to_obj(log.scenario),
        "scenario_sha256": log.scenario_sha256,
        "seed": log.seed,
        "version": log.version,
    }, sort_keys=True, separators=(",", ":"))]
    for rec in log.steps:
        lines.append(json.dumps({
            "t": rec.t,
            "def": _defender_action_obj(rec.defender),
            "atk": _attacker_action_obj(rec.attacker),
            "events": [e.to_obj() for e in rec.outcome.events],
            "reward": rec.outcome.reward,
        }, sort_keys=True, separators=(",", ":")))
    lines.append(json.dumps({"final": log.final}, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def _event_from_obj(obj: dict) -> Event:
    return Event(
        kind=obj["kind"],
        node=obj["node"],
        outcome=obj.get("outcome"),
        creds=tuple(obj.get("creds", ())),
        result=obj.get("result"),
        alert_kind=obj.get("alert_kind"),
        duration=obj.get("duration"),
    )


def parse_episode_jsonl(text: str) -> EpisodeLog:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ParseError("episode log needs a header and a final summary")
    try:
        header = json.loads(lines[0])
        body = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in episode log: {exc}") from None
    if "scenario" not in header or "seed" not in header:
        raise ParseError("episode log header missing scenario or seed")
    scenario = scenario_from_obj(header["scenario"])
    if "final" not in body[-1]:
        raise ParseError("episode log missing final summary line")
    final = body[-1]["final"]
    records = []
    for obj in body[:-1]:
        d = obj["def"]
        records.append(StepRecord(
            t=obj["t"],
            defender=DefenderAction(d["kind"], d.get("node"), d.get("duration", 1)),
            attacker=AttackerAction(frozenset(obj["atk"]["attempts"])),
            outcome=StepOutcome(
                reward=obj["reward"],
                events=tuple(_event_from_obj(e) for e in obj["events"]),
                terminal_cause=None,
            ),
        ))
    if records:
        last = records[-1]
        records[-1] = StepRecord(last.t, last.defender, last.attacker,
                                 StepOutcome(last.outcome.reward, last.outcome.events,
                                             final["terminal"]))
    return EpisodeLog(
        scenario=scenario,
        scenario_sha256=header["scenario_sha256"],
        seed=header["seed"],
        version=header.get("version", __version__),
        steps=tuple(records),
        final=final,
    )


def replay_episode(log: EpisodeLog) -> EpisodeLog:
    """Re-run the engine with the recorded action streams."""
    if log.final["terminal"] == HORIZON_REACHED:
        horizon = log.final["t"]
    else:
        horizon = max(log.scenario.horizon, len(log.steps))
    st = init(log.scenario, log.seed, horizon)
    records: list[StepRecord] = []
    for rec in log.steps:
        if st.terminal is not None:
            raise ReplayMismatchError(f"recorded step at t={rec.t} after termination")
        t_before = st.t
        st, outcome = step(st, rec.defender, rec.attacker)
        records.append(StepRecord(t_before, rec.defender, rec.attacker, outcome))
    return assemble_log(log.scenario, log.seed, st, records)


def verify_replay(text: str) -> bool:
    """True iff re-running the log's actions reproduces its exact bytes."""
    log = parse_episode_jsonl(text)
    try:
        replayed = replay_episode(log)
    except ReplayMismatchError:
        return False
    return episode_to_jsonl(replayed) == text
