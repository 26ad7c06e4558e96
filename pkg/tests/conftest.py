"""Shared fixtures and independent oracles for the test suite.

The oracle helpers here deliberately re-implement the math they check by the
dumbest route available (full itertools enumeration, literal BFS) so model
code and test expectations never share a code path.
"""

from __future__ import annotations

import itertools
import json
import random

import pytest

from acdsim.causal import Cgm, VarId
from acdsim.netmodel import Scenario, load_scenario


# ---------------------------------------------------------------------------
# Brute-force probability oracles
# ---------------------------------------------------------------------------

def oracle_joint(m: Cgm, assignment: dict) -> float:
    """Probability of one full assignment, straight off the CPT product."""
    p = 1.0
    for v in m.variables:
        idx = 0
        for parent in m.parents.get(v, ()):
            idx = idx * 2 + assignment[parent]
        p1 = m.cpts[v][idx]
        p *= p1 if assignment[v] == 1 else 1.0 - p1
    return p


def oracle_marginal(m: Cgm, q: dict) -> float:
    """Marginal by summing the joint over every completion of q."""
    free = [v for v in m.variables if v not in q]
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(free)):
        assignment = dict(q)
        assignment.update(zip(free, bits))
        total += oracle_joint(m, assignment)
    return total


def oracle_conditional(m: Cgm, target: dict, given: dict) -> float:
    merged = dict(given)
    merged.update(target)
    for v in target:
        if v in given and given[v] != target[v]:
            return 0.0
    return oracle_marginal(m, merged) / oracle_marginal(m, given)


def random_dag_model(rng: random.Random, n_vars: int = 5, edge_p: float = 0.4) -> Cgm:
    """Random DAG over sliceless binary variables with uniform CPT entries."""
    variables = tuple(VarId(f"V{i}") for i in range(n_vars))
    parents = {}
    cpts = {}
    for i, v in enumerate(variables):
        ps = tuple(variables[j] for j in range(i) if rng.random() < edge_p)
        parents[v] = ps
        cpts[v] = tuple(rng.random() for _ in range(2 ** len(ps)))
    return Cgm(variables=variables, parents=parents, cpts=cpts)


# ---------------------------------------------------------------------------
# Example causal models from the module contracts
# ---------------------------------------------------------------------------

@pytest.fixture
def chain_example() -> Cgm:
    """Single-slice chain Z -> X -> Y with the worked-example CPTs."""
    Z, X, Y = VarId("Z", 0), VarId("X", 0), VarId("Y", 0)
    return Cgm(
        variables=(Z, X, Y),
        parents={Z: (), X: (Z,), Y: (X,)},
        cpts={Z: (0.5,), X: (0.1, 0.9), Y: (0.2, 0.8)},
    )


@pytest.fixture
def confounded_example() -> Cgm:
    """Latent U drives X deterministically and Y at 0.9/0.1; no X -> Y edge."""
    U, X, Y = VarId("U"), VarId("X", 0), VarId("Y", 0)
    return Cgm(
        variables=(U, X, Y),
        parents={U: (), X: (U,), Y: (U,)},
        cpts={U: (0.5,), X: (0.0, 1.0), Y: (0.1, 0.9)},
        latent=frozenset({U}),
    )


# ---------------------------------------------------------------------------
# Scenario builders
# ---------------------------------------------------------------------------

MINIMAL_SCENARIO = ('{"nodes":[{"id":0},{"id":1,"target":true}],'
                    '"edges":[[0,1]],"attacker":{"entry":[0]}}')


def chain3_doc(strength: float = 1.0, severity: float = 1.0, defence: float = 0.0,
               horizon: int = 50) -> dict:
    """0 - 1 - 2 chain, entry 0, target 2."""
    return {
        "nodes": [
            {"id": 0, "defence": defence,
             "vulns": [{"id": "v", "severity": severity}]},
            {"id": 1, "defence": defence,
             "vulns": [{"id": "v", "severity": severity}]},
            {"id": 2, "defence": defence,
             "vulns": [{"id": "v", "severity": severity}], "target": True},
        ],
        "edges": [[0, 1], [1, 2]],
        "attacker": {"strength": strength, "spread": 1, "entry": [0]},
        "horizon": horizon,
    }


@pytest.fixture
def chain3() -> Scenario:
    return load_scenario(json.dumps(chain3_doc()))


def random_scenario_doc(rng: random.Random, deterministic: bool = False) -> dict:
    """Random connected scenario; deterministic=True forces success prob 1."""
    n = rng.randrange(4, 9)
    edges = set()
    for i in range(1, n):
        j = rng.randrange(i)
        edges.add((j, i))
    for _ in range(rng.randrange(0, n)):
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    target = n - 1
    n_entry = 1 if deterministic else rng.randrange(1, 3)
    entry = sorted(rng.sample(range(n - 1), n_entry))
    nodes = []
    for i in range(n):
        if deterministic:
            node = {"id": i, "defence": 0.0,
                    "vulns": [{"id": "v", "severity": 1.0}]}
        else:
            vulns = [{"id": f"v{k}", "severity": rng.random()}
                     for k in range(rng.randrange(0, 3))]
            node = {"id": i, "defence": rng.random(), "vulns": vulns}
            if rng.random() < 0.3:
                node["creds_stored"] = [f"c{rng.randrange(3)}"]
            if rng.random() < 0.3:
                node["unlocks"] = [f"c{rng.randrange(3)}"]
        if i == target:
            node["target"] = True
            node.pop("creds_stored", None)
        nodes.append(node)
    return {
        "nodes": nodes,
        "edges": [list(e) for e in sorted(edges)],
        "attacker": {
            "strength": 1.0 if deterministic else round(rng.uniform(0.2, 1.0), 3),
            "spread": n if deterministic else rng.randrange(1, 4),
            "entry": entry,
        },
        "horizon": 3 * n if deterministic else rng.randrange(10, 40),
    }


def load_random_scenario(rng: random.Random, deterministic: bool = False) -> Scenario:
    return load_scenario(json.dumps(random_scenario_doc(rng, deterministic)))


# ---------------------------------------------------------------------------
# Embedded 4-state / 2-action MDP with a value-iteration oracle
# ---------------------------------------------------------------------------

MDP_TRANSITIONS = {
    (0, 0): ((1.0, 1, 0.0),),
    (0, 1): ((0.9, 2, 0.0), (0.1, 1, 0.0)),
    (1, 0): ((1.0, 3, 1.0),),
    (1, 1): ((1.0, 3, 0.5),),
    (2, 0): ((1.0, 3, 0.2),),
    (2, 1): ((1.0, 3, 1.5),),
}
MDP_TERMINAL = 3
MDP_GAMMA = 0.95
MDP_STATES = (0, 1, 2)


def mdp_value_iteration(reward_scale: float = 1.0, tol: float = 1e-12):
    """Bellman fixed point by plain iteration; the slow, obviously-right way."""
    values = {s: 0.0 for s in MDP_STATES + (MDP_TERMINAL,)}
    while True:
        delta = 0.0
        for s in MDP_STATES:
            best = max(
                sum(p * (r * reward_scale + MDP_GAMMA * values[s2])
                    for p, s2, r in MDP_TRANSITIONS[(s, a)])
                for a in (0, 1)
            )
            delta = max(delta, abs(best - values[s]))
            values[s] = best
        if delta < tol:
            break
    q_star = {
        (s, a): sum(p * (r * reward_scale + MDP_GAMMA * values[s2])
                    for p, s2, r in MDP_TRANSITIONS[(s, a)])
        for s in MDP_STATES for a in (0, 1)
    }
    policy = {s: max((0, 1), key=lambda a: q_star[(s, a)]) for s in MDP_STATES}
    return values, q_star, policy


def mdp_q_learn(episodes: int, seed: int, reward_scale: float = 1.0):
    """Epsilon-greedy tabular learning on the embedded MDP.

    Alpha anneals 0.1 -> 0.01 at the halfway mark so late stochastic updates
    stop jittering the table.
    """
    from acdsim.agents import LearningParams, QTable, q_update

    rng = random.Random(seed)
    table = QTable(actions=("a0", "a1"))
    for ep in range(episodes):
        epsilon = max(0.05, 0.995 ** ep)
        alpha = 0.1 if ep < episodes // 2 else 0.01
        params = LearningParams(alpha=alpha, gamma=MDP_GAMMA)
        s = rng.choice(MDP_STATES)
        while s != MDP_TERMINAL:
            if rng.random() < epsilon:
                a = rng.randrange(2)
            else:
                a = table.greedy(s)
            u = rng.random()
            acc = 0.0
            for prob, s2, r in MDP_TRANSITIONS[(s, a)]:
                acc += prob
                if u < acc:
                    break
            q_update(table, s, a, r * reward_scale,
                     None if s2 == MDP_TERMINAL else s2, params)
            s = s2
    return table
