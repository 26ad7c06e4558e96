"""Closed detection/mitigation loop.

During a live episode: extract noisy indicator frames step by step, smooth
them under the malign tactic model over a sliding window, and when any tactic
posterior crosses the threshold, pick the intervention that minimizes the
predicted end-of-lookahead collection risk and map it to a concrete defender
action, gated by the configured autonomy level.

The loop's indicator noise consumes a labelled RNG stream separate from the
game engine's, so loop logs replay exactly like plain episode logs. At the
advise level the trajectory is byte-identical to a plain episode with the
no-op defender and the same seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Protocol

from . import __version__
from ._util import child_seed
from .causal import (
    Assignment,
    Cgm,
    DbnEngine,
    DbnSpec,
    Topology,
    VarId,
    attach_emissions,
    build_topology,
    do_transform,
    emission_var,
    interventional,
)
from .detect import TACTICS, BEACON_PERIOD, EmissionNoise, apply_noise
from .errors import ParseError, SpecError, ZeroEvidenceError
from .game import (
    NOP,
    DefenderAction,
    DefenderView,
    EpisodeLog,
    StepRecord,
    assemble_log,
    attacker_view,
    defender_view,
    episode_to_jsonl,
    init,
    isolate,
    restore,
    step,
)
from .agents import LateralAttacker, NopDefender, hottest_node
from .netmodel import Scenario


class AutonomyLevel(Enum):
    ADVISE = "advise"
    CONFIRM = "confirm"
    AUTO = "auto"


class ApprovalHook(Protocol):
    def approve(self, plan: "InterventionPlan") -> bool: ...


class AlwaysApprove:
    def approve(self, plan) -> bool:
        return True


class NeverApprove:
    def approve(self, plan) -> bool:
        return False


class ScriptedApprover:
    """Consumes a fixed list of decisions in proposal order; False when spent."""

    def __init__(self, decisions):
        self.decisions = list(decisions)
        self._next = 0

    def approve(self, plan) -> bool:
        if self._next >= len(self.decisions):
            return False
        decision = bool(self.decisions[self._next])
        self._next += 1
        return decision


@dataclass(frozen=True)
class InterventionPlan:
    do: dict                 # VarId -> 0/1 at the intervention slice; empty = do nothing
    predicted_risk: float    # p(Y at the final slice = 1 | evidence, do)
    rationale: tuple         # ((candidate do-dict, risk), ...) in declaration order

    def to_obj(self) -> dict:
        return {
            "do": {str(v): val for v, val in sorted(self.do.items(), key=lambda kv: str(kv[0]))},
            "predicted_risk": self.predicted_risk,
            "rationale": [
                {"do": {str(v): val for v, val in sorted(c.items(), key=lambda kv: str(kv[0]))},
                 "risk": r}
                for c, r in self.rationale
            ],
        }


@dataclass(frozen=True)
class LoopConfig:
    autonomy: AutonomyLevel = AutonomyLevel.ADVISE
    tau: float = 0.8                      # posterior threshold; > 1 never fires
    dbn: DbnSpec = DbnSpec(Topology.CHAIN_A, slices=8)
    emission: EmissionNoise = EmissionNoise()
    candidates: tuple = (("X", 0), ("Y", 0))  # (tactic, forced value) or None for do-nothing
    window: int = 8
    lookahead: int = 2


@dataclass(frozen=True)
class LoopReport:
    log: EpisodeLog
    autonomy: AutonomyLevel
    tau: float
    detections: tuple       # per evaluated step: {"t", "posteriors", "max_tactic_posterior"}
    interventions: tuple    # {"t", "plan", "approved", "applied", "action"}
    summary: dict

    def to_obj(self) -> dict:
        return {
            "version": __version__,
            "autonomy": self.autonomy.value,
            "tau": self.tau,
            "episode_jsonl": episode_to_jsonl(self.log),
            "detections": list(self.detections),
            "interventions": list(self.interventions),
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, indent=2)


def extract_episode_jsonl(text: str) -> str:
    """Pull the embedded episode log out of a loop report, or pass through
    a plain JSON-lines log unchanged."""
    stripped = text.lstrip()
    if stripped.startswith("{") and "\n" in stripped:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            return text
        if isinstance(obj, dict) and "episode_jsonl" in obj:
            return obj["episode_jsonl"]
    return text


# ---------------------------------------------------------------------------
# Intervention selection
# ---------------------------------------------------------------------------

def select_intervention(m: Cgm, evidence: Assignment, candidates,
                        horizon_slice: int) -> InterventionPlan:
    """Minimize p(Y at `horizon_slice` = 1 | evidence, do) over the candidate
    interventions; first declared wins ties."""
    if not candidates:
        raise SpecError("candidate intervention list is empty")
    target = {VarId("Y", horizon_slice): 1}
    risks = []
    for cand in candidates:
        risks.append(interventional(m, target, dict(cand or {}), evidence))
    best = 0
    for i in range(1, len(risks)):
        if risks[i] < risks[best]:
            best = i
    return InterventionPlan(
        do=dict(candidates[best] or {}),
        predicted_risk=risks[best],
        rationale=tuple((dict(c or {}), r) for c, r in zip(candidates, risks)),
    )


def map_intervention_to_action(plan: InterventionPlan, view: DefenderView) -> DefenderAction:
    """Bridge a tactic intervention to a concrete game action.

    Suppressing lateral movement (X) isolates the node with the most last-step
    alerts; suppressing collection (Y) restores it. No alerts, or a do-nothing
    plan, maps to a no-op.
    """
    names = {v.name for v in plan.do}
    hot = hottest_node(view)
    if "X" in names:
        return isolate(hot) if hot is not None else NOP
    if "Y" in names:
        return restore(hot) if hot is not None else NOP
    return NOP


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------

class _ModelCache:
    """Per-window-length engines; models only depend on (spec, emission, w)."""

    def __init__(self, cfg: LoopConfig):
        self.cfg = cfg
        self._store: dict = {}

    def _extended(self, slices: int) -> Cgm:
        key = ("model", slices)
        if key not in self._store:
            base = self.cfg.dbn.schedule
            schedule = (tuple(base[i % len(base)] for i in range(slices))
                        if base else None)
            spec = replace(self.cfg.dbn, slices=slices, schedule=schedule)
            self._store[key] = attach_emissions(
                build_topology(spec), self.cfg.emission.miss, self.cfg.emission.false_pos)
        return self._store[key]

    def detect_engine(self, w: int) -> tuple[Cgm, DbnEngine]:
        key = ("detect", w)
        if key not in self._store:
            model = self._extended(w)
            self._store[key] = (model, DbnEngine(model))
        return self._store[key]

    def select_engine(self, w: int, candidate: Assignment | None) -> tuple[Cgm, DbnEngine]:
        key = ("select", w, tuple(sorted(((str(v), val) for v, val in (candidate or {}).items()))))
        if key not in self._store:
            model = self._extended(w + self.cfg.lookahead)
            if candidate:
                model = do_transform(model, candidate)
            self._store[key] = (model, DbnEngine(model))
        return self._store[key]


def _window_evidence(window: list[dict], model: Cgm) -> Assignment:
    present = {(v.name, v.slice) for v in model.variables}
    evidence: Assignment = {}
    for i, bits in enumerate(window):
        for tactic in TACTICS:
            if (tactic, i) in present:
                evidence[emission_var(VarId(tactic, i))] = bits[tactic]
    return evidence


def run_loop(s: Scenario, cfg: LoopConfig, seed: int,
             approval: ApprovalHook | None = None) -> LoopReport:
    """Run one episode under the loop; deterministic given (scenario, cfg, seed).

    Each step smooths the last `window` indicator frames under the malign
    model; when the highest tactic posterior reaches tau, an intervention plan
    is built and, subject to autonomy (and the approval hook at confirm), its
    mapped action replaces the base no-op defender action for that step.
    """
    if not 1 <= cfg.window <= 16:
        raise SpecError(f"window must be in 1..16, got {cfg.window}")
    if cfg.lookahead < 1:
        raise SpecError("lookahead must be >= 1")
    if not cfg.candidates:
        raise SpecError("candidate intervention list is empty")

    st = init(s, seed)
    def_rng = random.Random(child_seed(seed, "defender"))
    atk_rng = random.Random(child_seed(seed, "attacker"))
    ind_rng = random.Random(child_seed(seed, "indicators"))
    base = NopDefender()
    attacker = LateralAttacker(s.attacker.spread)
    cache = _ModelCache(cfg)

    frames: list[dict] = []
    detections: list[dict] = []
    interventions: list[dict] = []
    records: list[StepRecord] = []

    while st.terminal is None:
        dview = defender_view(st)
        action = base.act(dview, def_rng)

        plan = None
        if frames:
            w = min(cfg.window, len(frames))
            window = frames[-w:]
            model, engine = cache.detect_engine(w)
            evidence = _window_evidence(window, model)
            try:
                posteriors = engine.posteriors(evidence)
            except ZeroEvidenceError:
                posteriors = {}
            tactic_post = {str(v): p for v, p in posteriors.items()
                           if v.name in TACTICS and v.slice is not None}
            max_post = max(tactic_post.values(), default=0.0)
            detections.append({
                "t": st.t,
                "posteriors": dict(sorted(tactic_post.items())),
                "max_tactic_posterior": max_post,
            })
            if max_post >= cfg.tau:
                plan = _build_plan(cache, cfg, window)

        approved = None
        applied = False
        if plan is not None:
            if cfg.autonomy is AutonomyLevel.AUTO:
                action = map_intervention_to_action(plan, dview)
                applied = True
            elif cfg.autonomy is AutonomyLevel.CONFIRM:
                approved = bool(approval.approve(plan)) if approval is not None else False
                if approved:
                    action = map_intervention_to_action(plan, dview)
                    applied = True
            interventions.append({
                "t": st.t,
                "plan": plan.to_obj(),
                "approved": approved,
                "applied": applied,
                "action": {"kind": action.kind, "node": action.node} if applied else None,
            })

        aview = attacker_view(st)
        atk_action = attacker.act(aview, atk_rng)
        t_before = st.t
        z_truth = t_before % BEACON_PERIOD == 0 and bool(st.compromised)
        st, outcome = step(st, action, atk_action)
        truth = {
            "Z": int(z_truth),
            "X": int(any(e.kind == "attempt" for e in outcome.events)),
            "Y": int(any(e.kind == "loot" for e in outcome.events)),
        }
        frames.append(apply_noise(truth, cfg.emission, ind_rng))
        records.append(StepRecord(t_before, action, atk_action, outcome))

    log = assemble_log(s, seed, st, records)
    return LoopReport(
        log=log,
        autonomy=cfg.autonomy,
        tau=cfg.tau,
        detections=tuple(detections),
        interventions=tuple(interventions),
        summary={
            "terminal": log.final["terminal"],
            "steps": log.final["t"],
            "total_reward": log.final["total_reward"],
            "time_to_target": log.time_to_target(),
            "proposed": len(interventions),
            "applied": sum(1 for i in interventions if i["applied"]),
        },
    )


def _build_plan(cache: _ModelCache, cfg: LoopConfig, window: list[dict]) -> InterventionPlan:
    """Cached-engine twin of `select_intervention` over the lookahead model."""
    w = len(window)
    horizon_slice = w + cfg.lookahead - 1
    target = {VarId("Y", horizon_slice): 1}
    risks = []
    instantiated = []
    for cand in cfg.candidates:
        assignment = {VarId(cand[0], w): cand[1]} if cand is not None else {}
        instantiated.append(assignment)
        model, engine = cache.select_engine(w, assignment)
        evidence = _window_evidence(window, model)
        conditioning = dict(evidence)
        conditioning.update(assignment)
        risks.append(engine.conditional(target, conditioning))
    best = 0
    for i in range(1, len(risks)):
        if risks[i] < risks[best]:
            best = i
    return InterventionPlan(
        do=instantiated[best],
        predicted_risk=risks[best],
        rationale=tuple((c, r) for c, r in zip(instantiated, risks)),
    )


def parse_loop_report(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid loop report JSON: {exc}") from None
    if "episode_jsonl" not in obj:
        raise ParseError("loop report missing embedded episode log")
    return obj
