"""Tactic-level threat detection over episode logs.

Maps ground-truth episode events to noisy per-step indicator bits for the
three modelled tactics (Z command-and-control, X lateral movement,
Y collection), scores sequences with exact model likelihoods, and classifies
malign vs. benign by log-likelihood ratio.

Indicator mapping: Z fires on the beaconing schedule (step 0 and every fifth
step while anything is compromised at the start of the step), X fires on any
compromise attempt, Y fires on any credential loot. Noise flips each bit
independently: 1 -> 0 with probability `miss`, 0 -> 1 with `false_pos`, one
draw per bit in frame order, tactics ordered Z, X, Y.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import NamedTuple

from . import __version__
from ._util import sha256_hex
from .causal import (
    Cgm,
    DbnEngine,
    VarId,
    attach_emissions,
    emission_var,
    sample,
    smooth,
)
from .errors import ParseError, SpecError
from .game import EpisodeLog, episode_to_jsonl

TACTICS = ("Z", "X", "Y")
BEACON_PERIOD = 5


class EmissionNoise(NamedTuple):
    miss: float = 0.2
    false_pos: float = 0.05


@dataclass(frozen=True)
class IndicatorFrame:
    t: int
    bits: dict  # tactic name -> 0/1, all of TACTICS present

    def get(self, tactic: str) -> int:
        return self.bits[tactic]


@dataclass(frozen=True)
class IndicatorSequence:
    frames: tuple[IndicatorFrame, ...]
    source_digest: str

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class DetectionResult:
    label: str  # "benign" | "malign"
    llr: float
    posterior_trace: tuple[dict, ...]  # per slice: tactic -> posterior

    def to_obj(self) -> dict:
        return {
            "version": __version__,
            "label": self.label,
            "llr": self.llr,
            "posterior": [
                {"t": t, **{k: row[k] for k in sorted(row)}}
                for t, row in enumerate(self.posterior_trace)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Indicator extraction
# ---------------------------------------------------------------------------

def ground_truth_bits(log: EpisodeLog) -> list[dict]:
    """Noise-free tactic bits per step, reconstructed from the event stream."""
    compromised = set(log.scenario.attacker.entry)
    out = []
    for rec in log.steps:
        beaconing = rec.t % BEACON_PERIOD == 0 and bool(compromised)
        attempts = any(e.kind == "attempt" for e in rec.outcome.events)
        loots = any(e.kind == "loot" for e in rec.outcome.events)
        out.append({"Z": int(beaconing), "X": int(attempts), "Y": int(loots)})
        for e in rec.outcome.events:
            if e.kind == "restore":
                compromised.discard(e.node)
            elif e.kind == "attempt" and e.outcome == "success":
                compromised.add(e.node)
    return out


def apply_noise(bits: dict, noise: EmissionNoise, rng: random.Random) -> dict:
    noisy = {}
    for tactic in TACTICS:
        u = rng.random()
        if bits[tactic] == 1:
            noisy[tactic] = 0 if u < noise.miss else 1
        else:
            noisy[tactic] = 1 if u < noise.false_pos else 0
    return noisy


def extract_indicators(log: EpisodeLog, noise: EmissionNoise, seed: int) -> IndicatorSequence:
    """Noisy indicator frames for a whole episode; deterministic given seed."""
    rng = random.Random(seed)
    frames = tuple(
        IndicatorFrame(t=i, bits=apply_noise(bits, noise, rng))
        for i, bits in enumerate(ground_truth_bits(log))
    )
    return IndicatorSequence(frames=frames,
                             source_digest=sha256_hex(episode_to_jsonl(log)))


def sequence_to_csv(seq: IndicatorSequence) -> str:
    lines = [f"# acdsim {__version__}", "t,Z,X,Y"]
    lines += [f"{f.t},{f.bits['Z']},{f.bits['X']},{f.bits['Y']}" for f in seq.frames]
    return "\n".join(lines) + "\n"


def sequence_from_csv(text: str) -> IndicatorSequence:
    frames = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("t,"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"indicator row must be t,Z,X,Y: '{line}'")
        try:
            t, z, x, y = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"indicator row must be integers: '{line}'") from None
        frames.append(IndicatorFrame(t=t, bits={"Z": z, "X": x, "Y": y}))
    return IndicatorSequence(frames=tuple(frames), source_digest="")


# ---------------------------------------------------------------------------
# Likelihoods and classification
# ---------------------------------------------------------------------------

def _model_slices(m: Cgm) -> int:
    slices = [v.slice for v in m.variables if v.slice is not None]
    if not slices:
        raise SpecError("model has no time-indexed variables")
    return max(slices) + 1


def _sequence_evidence(m: Cgm, seq: IndicatorSequence) -> dict:
    """Evidence on the model's emission variables for each observed bit."""
    evidence = {}
    tactic_vars = {(v.name, v.slice) for v in m.variables}
    for frame in seq.frames:
        for tactic in TACTICS:
            if (tactic, frame.t) in tactic_vars:
                evidence[emission_var(VarId(tactic, frame.t))] = frame.bits[tactic]
    return evidence


def sequence_loglik(m: Cgm, seq: IndicatorSequence, emission: EmissionNoise) -> float:
    """Exact log p(sequence | model), summing over hidden tactic trajectories.

    Observed bits are emitted from their tactic variables with the stated flip
    probabilities. Returns -inf for sequences the model cannot produce.
    """
    if _model_slices(m) != len(seq.frames):
        raise SpecError(f"model has {_model_slices(m)} slices but the sequence "
                        f"has {len(seq.frames)} frames")
    extended = attach_emissions(m, emission.miss, emission.false_pos)
    return DbnEngine(extended).loglik(_sequence_evidence(extended, seq))


def benign_model_like(m: Cgm) -> Cgm:
    """Null reference: the same tactic variables clamped inactive, so any
    observed activity is pure false-positive noise."""
    variables = tuple(v for v in m.variables if v not in m.latent)
    return Cgm(
        variables=variables,
        parents={v: () for v in variables},
        cpts={v: (0.0,) for v in variables},
        latent=frozenset(),
    )


def classify(seq: IndicatorSequence, benign: Cgm, malign: Cgm,
             emission: EmissionNoise, threshold: float = 0.0) -> DetectionResult:
    """Label a sequence by log-likelihood ratio, with the smoothed posterior
    of every tactic under the malign model as supporting trace."""
    ll_malign = sequence_loglik(malign, seq, emission)
    ll_benign = sequence_loglik(benign, seq, emission)
    if ll_malign == float("-inf") and ll_benign == float("-inf"):
        llr = 0.0
    else:
        llr = ll_malign - ll_benign

    extended = attach_emissions(malign, emission.miss, emission.false_pos)
    posteriors = smooth(extended, _sequence_evidence(extended, seq))
    trace = []
    for t in range(len(seq.frames)):
        row = {}
        for tactic in TACTICS:
            v = VarId(tactic, t)
            if v in posteriors:
                row[tactic] = posteriors[v]
        trace.append(row)

    return DetectionResult(
        label="malign" if llr > threshold else "benign",
        llr=llr,
        posterior_trace=tuple(trace),
    )


def sample_indicator_sequence(m: Cgm, emission: EmissionNoise, seed: int) -> IndicatorSequence:
    """Draw one observation sequence from a tactic model plus emission noise."""
    extended = attach_emissions(m, emission.miss, emission.false_pos)
    draw = sample(extended, 1, seed)[0]
    T = _model_slices(m)
    tactic_vars = {(v.name, v.slice) for v in m.variables}
    frames = []
    for t in range(T):
        bits = {}
        for tactic in TACTICS:
            if (tactic, t) in tactic_vars:
                bits[tactic] = draw[emission_var(VarId(tactic, t))]
            else:
                bits[tactic] = 0
        frames.append(IndicatorFrame(t=t, bits=bits))
    return IndicatorSequence(frames=tuple(frames), source_digest=f"sampled:{seed}")
