"""Scenario loading, validation, BFS distances, and serialization."""

import itertools
import json
import random

import pytest

from acdsim.errors import ParseError, UnknownNodeError, ValidationError
from acdsim.netmodel import (
    load_scenario,
    scenario_digest,
    serialize_scenario,
    shortest_hops,
    validate_scenario,
)
from acdsim.game import init

from .conftest import MINIMAL_SCENARIO, chain3_doc, load_random_scenario, random_scenario_doc


class TestLoadScenario:
    def test_minimal_two_node_document(self):
        s = load_scenario(MINIMAL_SCENARIO)
        assert len(s.topology.nodes) == 2
        assert len(s.topology.edges) == 1
        assert s.topology.target_id() == 1
        assert s.attacker.entry == frozenset({0})

    def test_defaults_filled_when_costs_omitted(self):
        s = load_scenario(MINIMAL_SCENARIO)
        assert s.costs.patch_cost == 1.0
        assert s.costs.scan_cost == 0.5
        assert s.costs.restore_cost == 3.0
        assert s.costs.target_loss_penalty == -100.0
        assert s.alerts.p_alert_fail == 0.6
        assert s.alerts.scan_tpr == 0.9
        assert s.horizon == 100

    def test_defence_out_of_range(self):
        doc = chain3_doc(defence=1.3)
        with pytest.raises(ValidationError, match="defence out of range"):
            load_scenario(json.dumps(doc))

    def test_malformed_json_is_parse_error(self):
        with pytest.raises(ParseError):
            load_scenario("{nope")

    def test_unknown_key_strict_vs_lenient(self):
        doc = json.loads(MINIMAL_SCENARIO)
        doc["sneaky"] = 1
        with pytest.raises(ParseError, match="unknown key"):
            load_scenario(json.dumps(doc))
        s = load_scenario(json.dumps(doc), lenient=True)
        assert len(s.topology.nodes) == 2

    def test_unknown_node_key_strict(self):
        doc = json.loads(MINIMAL_SCENARIO)
        doc["nodes"][0]["color"] = "red"
        with pytest.raises(ParseError, match="unknown key"):
            load_scenario(json.dumps(doc))

    def test_missing_attacker_is_parse_error(self):
        with pytest.raises(ParseError, match="attacker"):
            load_scenario('{"nodes":[{"id":0}],"edges":[]}')

    def test_wrong_type_is_parse_error(self):
        doc = json.loads(MINIMAL_SCENARIO)
        doc["nodes"][0]["defence"] = "high"
        with pytest.raises(ParseError, match="must be a number"):
            load_scenario(json.dumps(doc))


class TestValidateScenario:
    def test_valid_chain_passes(self, chain3):
        validate_scenario(chain3)  # no raise

    def test_two_targets(self):
        doc = chain3_doc()
        doc["nodes"][0]["target"] = True
        with pytest.raises(ValidationError, match="exactly one target"):
            load_scenario(json.dumps(doc))

    def test_disconnected_graph(self):
        doc = chain3_doc()
        doc["edges"] = [[0, 1]]
        with pytest.raises(ValidationError, match="graph not connected"):
            load_scenario(json.dumps(doc))

    def test_all_violations_enumerated(self):
        doc = chain3_doc(defence=2.0)
        doc["nodes"][0]["target"] = True            # two targets
        doc["attacker"]["strength"] = 1.5           # out of range
        doc["attacker"]["spread"] = 0               # below minimum
        with pytest.raises(ValidationError) as err:
            load_scenario(json.dumps(doc))
        messages = err.value.violations
        assert len(messages) >= 4
        joined = " ".join(messages)
        assert "defence out of range" in joined
        assert "exactly one target" in joined
        assert "strength out of range" in joined
        assert "spread" in joined

    def test_entry_is_target_rejected(self):
        doc = chain3_doc()
        doc["attacker"]["entry"] = [2]
        with pytest.raises(ValidationError, match="is the target"):
            load_scenario(json.dumps(doc))

    def test_self_loop_rejected(self):
        doc = chain3_doc()
        doc["edges"].append([1, 1])
        with pytest.raises(ValidationError, match="self-loop"):
            load_scenario(json.dumps(doc))

    def test_validate_matches_init_success(self):
        """validate_scenario accepts exactly what init accepts."""
        rng = random.Random(42)
        for case in range(60):
            doc = random_scenario_doc(rng)
            if case % 3 == 1:  # sprinkle invalid mutations
                doc["nodes"][rng.randrange(len(doc["nodes"]))]["defence"] = 1.7
            if case % 5 == 2:
                doc["attacker"]["entry"] = [len(doc["nodes"]) - 1]  # target entry
            try:
                scenario = load_scenario(json.dumps(doc))
                valid = True
            except ValidationError:
                valid = False
            if valid:
                init(scenario, seed=0)  # must not raise


class TestShortestHops:
    def test_chain_distance(self, chain3):
        assert shortest_hops(chain3.topology, 0, 2) == 2

    def test_identity(self, chain3):
        for n in (0, 1, 2):
            assert shortest_hops(chain3.topology, n, n) == 0

    def test_four_cycle_by_path_enumeration(self):
        doc = {
            "nodes": [{"id": i, "target": i == 3} for i in range(4)],
            "edges": [[0, 1], [1, 2], [2, 3], [0, 3]],
            "attacker": {"entry": [0]},
        }
        s = load_scenario(json.dumps(doc))
        # oracle: enumerate all simple paths 0 -> 2 and take the shortest
        adjacency = {0: [1, 3], 1: [0, 2], 2: [1, 3], 3: [0, 2]}

        def paths(frontier, goal, seen):
            if frontier == goal:
                return [0]
            lengths = []
            for nxt in adjacency[frontier]:
                if nxt not in seen:
                    lengths += [1 + d for d in paths(nxt, goal, seen | {nxt})]
            return lengths

        assert min(paths(0, 2, {0})) == 2
        assert shortest_hops(s.topology, 0, 2) == 2

    def test_unknown_node(self, chain3):
        with pytest.raises(UnknownNodeError):
            shortest_hops(chain3.topology, 0, 99)

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(7)
        for _ in range(25):
            s = load_random_scenario(rng)
            ids = s.topology.node_ids()
            for a, b in itertools.combinations(ids, 2):
                assert shortest_hops(s.topology, a, b) == shortest_hops(s.topology, b, a)
            for a, b, c in itertools.islice(itertools.combinations(ids, 3), 20):
                ab = shortest_hops(s.topology, a, b)
                bc = shortest_hops(s.topology, b, c)
                ac = shortest_hops(s.topology, a, c)
                assert ac <= ab + bc


class TestSerialization:
    def test_round_trip_identity(self):
        rng = random.Random(13)
        for _ in range(30):
            s = load_random_scenario(rng)
            assert load_scenario(serialize_scenario(s)) == s

    def test_round_trip_minimal(self):
        s = load_scenario(MINIMAL_SCENARIO)
        assert load_scenario(serialize_scenario(s)) == s

    def test_digest_stable_and_distinct(self, chain3):
        assert scenario_digest(chain3) == scenario_digest(chain3)
        other = load_scenario(json.dumps(chain3_doc(strength=0.5)))
        assert scenario_digest(chain3) != scenario_digest(other)
