"""Policies for both sides: the scripted frontier attacker, baseline defenders,
and a tabular Q-learning defender with its training harness.

The Q machinery is generic over hashable state keys; the game defender uses
the small discretized `FeatureKey`, while tests drive the same updates on
hand-rolled MDPs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Protocol

from . import __version__
from .errors import ParseError
from .game import (
    NOP,
    PASS,
    AttackerAction,
    AttackerView,
    DefenderAction,
    DefenderView,
    EpisodeLog,
    StepOutcome,
    isolate,
    patch,
    restore,
    run_episode,
    scan,
)
from .netmodel import Scenario


class Policy(Protocol):
    def act(self, view, rng): ...

    def observe(self, outcome: StepOutcome) -> None: ...


# ---------------------------------------------------------------------------
# Scripted attacker
# ---------------------------------------------------------------------------

def lateral_attacker_act(view: AttackerView, spread: int, rng) -> AttackerAction:
    """Pick up to `spread` frontier nodes to attack.

    Priority: the target if its location is known, then nodes a held
    credential unlocks, then the rest of the frontier; ties broken by
    ascending node id. Passes when the frontier is empty.
    """
    frontier = set()
    for c in view.compromised:
        for n in view.known_nodes.get(c, ()):
            if n not in view.compromised:
                frontier.add(n)
    if not frontier:
        return PASS

    def priority(n: int) -> tuple[int, int]:
        if view.target_seen is not None and n == view.target_seen:
            group = 0
        elif view.known_unlocks.get(n, frozenset()) & view.creds:
            group = 1
        else:
            group = 2
        return (group, n)

    chosen = sorted(frontier, key=priority)[:spread]
    return AttackerAction(frozenset(chosen))


class LateralAttacker:
    """Policy wrapper for `lateral_attacker_act`; stateless and deterministic."""

    def __init__(self, spread: int):
        self.spread = spread

    def act(self, view: AttackerView, rng) -> AttackerAction:
        return lateral_attacker_act(view, self.spread, rng)

    def observe(self, outcome: StepOutcome) -> None:
        pass


class PassingAttacker:
    def act(self, view: AttackerView, rng) -> AttackerAction:
        return PASS

    def observe(self, outcome: StepOutcome) -> None:
        pass


# ---------------------------------------------------------------------------
# Baseline defenders
# ---------------------------------------------------------------------------

class NopDefender:
    def act(self, view: DefenderView, rng) -> DefenderAction:
        return NOP

    def observe(self, outcome: StepOutcome) -> None:
        pass


class RandomDefender:
    """Uniform over action kinds, then uniform over nodes; always legal."""

    def act(self, view: DefenderView, rng) -> DefenderAction:
        kind = rng.choice(["nop", "patch", "restore", "isolate", "scan"])
        if kind == "nop":
            return NOP
        node = rng.choice(list(view.topology_nodes))
        return DefenderAction(kind, node)

    def observe(self, outcome: StepOutcome) -> None:
        pass


# ---------------------------------------------------------------------------
# Feature discretization
# ---------------------------------------------------------------------------

class FeatureKey(NamedTuple):
    alert_bucket: int          # 0, 1, 2, 3 (= 3 or more)
    target_adjacent_alert: bool
    isolated_bucket: int       # 0, 1, 2 (= 2 or more)


def featurize(v: DefenderView) -> FeatureKey:
    alerts = v.alerts_last_step
    target_neigh = set(v.neighbors_of(v.target))
    return FeatureKey(
        alert_bucket=min(len(alerts), 3),
        target_adjacent_alert=any(n in target_neigh for n in alerts),
        isolated_bucket=min(sum(1 for k in v.isolation.values() if k > 0), 2),
    )


META_ACTIONS = (
    "nop",
    "scan_hottest",
    "patch_hottest",
    "isolate_hottest",
    "restore_hottest",
    "patch_target_neighbor",
)


def hottest_node(view: DefenderView) -> int | None:
    """Node with the most last-step alerts, lowest id on ties; None if quiet."""
    if not view.alerts_last_step:
        return None
    counts: dict[int, int] = {}
    for n in view.alerts_last_step:
        counts[n] = counts.get(n, 0) + 1
    return min(counts, key=lambda n: (-counts[n], n))


def meta_action_to_defender_action(index: int, view: DefenderView) -> DefenderAction:
    name = META_ACTIONS[index]
    if name == "nop":
        return NOP
    if name == "patch_target_neighbor":
        return patch(min(view.neighbors_of(view.target)))
    # with no alerts every node ties at zero, so the tie-break picks the
    # lowest id; the action stays concrete and keeps its cost
    hot = hottest_node(view)
    if hot is None:
        hot = min(view.topology_nodes)
    if name == "scan_hottest":
        return scan(hot)
    if name == "patch_hottest":
        return patch(hot)
    if name == "isolate_hottest":
        return isolate(hot)
    return restore(hot)


# ---------------------------------------------------------------------------
# Tabular Q-learning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.995
    episodes: int = 10_000


class QTable:
    """Sparse (state key, action index) -> value table, zero by default."""

    def __init__(self, actions: tuple[str, ...] = META_ACTIONS):
        self.actions = tuple(actions)
        self.values: dict[tuple, list[float]] = {}

    def row(self, key) -> list[float]:
        if key not in self.values:
            self.values[key] = [0.0] * len(self.actions)
        return self.values[key]

    def get(self, key, action: int) -> float:
        row = self.values.get(key)
        return row[action] if row is not None else 0.0

    def max_value(self, key) -> float:
        row = self.values.get(key)
        return max(row) if row is not None else 0.0

    def greedy(self, key) -> int:
        """Argmax action index; lowest index wins ties."""
        row = self.values.get(key)
        if row is None:
            return 0
        best = max(row)
        return row.index(best)

    def to_obj(self) -> dict:
        entries = []
        for key in sorted(self.values, key=lambda k: tuple(int(x) for x in k)):
            entries.append({
                "key": [int(x) for x in key],
                "values": list(self.values[key]),
            })
        return {"version": __version__, "actions": list(self.actions), "entries": entries}

    def save(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, indent=2)

    @classmethod
    def load(cls, text: str) -> "QTable":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid Q-table JSON: {exc}") from None
        if "actions" not in obj or "entries" not in obj:
            raise ParseError("Q-table JSON needs 'actions' and 'entries'")
        table = cls(tuple(obj["actions"]))
        for entry in obj["entries"]:
            key = FeatureKey(entry["key"][0], bool(entry["key"][1]), entry["key"][2])
            table.values[key] = list(entry["values"])
        return table


def q_update(q: QTable, key, action: int, reward: float, next_key,
             p: LearningParams) -> None:
    """One-step backup: Q(k,a) += alpha * (r + gamma * max_a' Q(k',a') - Q(k,a)).

    `next_key` of None marks a terminal transition (zero bootstrap).
    """
    bootstrap = 0.0 if next_key is None else q.max_value(next_key)
    row = q.row(key)
    row[action] += p.alpha * (reward + p.gamma * bootstrap - row[action])


class QDefender:
    """Defender policy backed by a QTable; learns when `training` is set.

    During training the update for step t is applied lazily at the next call
    to `act` (which supplies the successor key); terminal transitions are
    flushed from `observe`.
    """

    def __init__(self, table: QTable, params: LearningParams | None = None,
                 training: bool = False):
        self.table = table
        self.params = params or LearningParams()
        self.training = training
        self.epsilon = self.params.epsilon_start
        self._pending: tuple[FeatureKey, int] | None = None
        self._pending_reward: float | None = None

    def act(self, view: DefenderView, rng) -> DefenderAction:
        key = featurize(view)
        if self.training and self._pending is not None and self._pending_reward is not None:
            prev_key, prev_action = self._pending
            q_update(self.table, prev_key, prev_action, self._pending_reward, key, self.params)
            self._pending = None
            self._pending_reward = None
        if self.training and rng.random() < self.epsilon:
            action = rng.randrange(len(self.table.actions))
        else:
            action = self.table.greedy(key)
        self._pending = (key, action)
        self._pending_reward = None
        return meta_action_to_defender_action(action, view)

    def observe(self, outcome: StepOutcome) -> None:
        if not self.training or self._pending is None:
            return
        if outcome.terminal_cause is not None:
            key, action = self._pending
            q_update(self.table, key, action, outcome.reward, None, self.params)
            self._pending = None
            self._pending_reward = None
        else:
            self._pending_reward = outcome.reward


def train(s: Scenario, p: LearningParams, seed: int) -> tuple[QTable, list[float]]:
    """Train a Q defender against the scripted attacker.

    Episode i runs with seed `seed + i` (the same scheme the CLI uses for
    parallel evaluation), with epsilon decaying multiplicatively per episode
    down to its floor. Returns the table and per-episode returns.
    """
    table = QTable(META_ACTIONS)
    agent = QDefender(table, p, training=True)
    curve: list[float] = []
    for i in range(p.episodes):
        agent.epsilon = max(p.epsilon_end, p.epsilon_start * p.epsilon_decay ** i)
        log = run_episode(s, agent, LateralAttacker(s.attacker.spread), seed=seed + i)
        curve.append(log.total_reward())
    return table, curve


def evaluate(s: Scenario, table: QTable, episodes: int, seed: int) -> list[EpisodeLog]:
    """Run frozen-greedy episodes; episode i uses seed + i."""
    logs = []
    for i in range(episodes):
        agent = QDefender(table, training=False)
        logs.append(run_episode(s, agent, LateralAttacker(s.attacker.spread), seed=seed + i))
    return logs


def curve_to_csv(curve: list[float]) -> str:
    lines = [f"# acdsim {__version__}", "episode,return"]
    lines += [f"{i},{r}" for i, r in enumerate(curve)]
    return "\n".join(lines) + "\n"
