"""Engine mechanics: init, compromise odds, step resolution, episodes, replay."""

import json
import random

import pytest

from acdsim.agents import LateralAttacker, NopDefender, PassingAttacker, RandomDefender
from acdsim.errors import IllegalActionError, TerminalStateError
from acdsim.game import (
    HORIZON_REACHED,
    NOP,
    PASS,
    TARGET_COMPROMISED,
    AttackerAction,
    attacker_view,
    compromise_probability,
    defender_view,
    episode_to_jsonl,
    init,
    isolate,
    parse_episode_jsonl,
    patch,
    restore,
    run_episode,
    scan,
    step,
    verify_replay,
)
from acdsim.netmodel import NodeSpec, VulnSpec, load_scenario, shortest_hops

from .conftest import MINIMAL_SCENARIO, chain3_doc, load_random_scenario


class TestInit:
    def test_two_node_entry(self):
        s = load_scenario(MINIMAL_SCENARIO)
        st = init(s, seed=0)
        assert st.compromised == {0}
        assert st.attacker_known == {0, 1}
        assert st.t == 0 and st.terminal is None

    def test_entry_cred_looted(self):
        doc = json.loads(MINIMAL_SCENARIO)
        doc["nodes"][0]["creds_stored"] = ["c1"]
        st = init(load_scenario(json.dumps(doc)), seed=0)
        assert st.attacker_creds == {"c1"}

    def test_same_seed_identical_states(self, chain3):
        a, b = init(chain3, 7), init(chain3, 7)
        assert a.compromised == b.compromised
        assert a.attacker_known == b.attacker_known
        assert a.rng.getstate() == b.rng.getstate()

    def test_defence_copied_not_shared(self, chain3):
        st = init(chain3, 0)
        st.defence_now[0] = 0.9
        assert chain3.topology.node(0).defence == 0.0


class TestCompromiseProbability:
    def test_hand_arithmetic(self):
        node = NodeSpec(id=0, vulns=(VulnSpec("v", 0.5),))
        p = compromise_probability(0.6, node, 0.2, cred_held=False)
        assert p == pytest.approx(0.24, rel=1e-12)

    def test_no_vulns_zero(self):
        node = NodeSpec(id=0)
        assert compromise_probability(0.9, node, 0.0, cred_held=False) == 0.0

    def test_cred_overrides_defence(self):
        node = NodeSpec(id=0, unlocks=frozenset({"c"}))
        assert compromise_probability(0.1, node, 1.0, cred_held=True) == 0.9

    def test_max_severity_used(self):
        node = NodeSpec(id=0, vulns=(VulnSpec("a", 0.2), VulnSpec("b", 0.7)))
        p = compromise_probability(1.0, node, 0.0, cred_held=False)
        assert p == pytest.approx(0.7)


class TestStep:
    def test_deterministic_chain_capture_and_return(self, chain3):
        st = init(chain3, seed=1)
        total = 0.0
        while st.terminal is None:
            view = attacker_view(st)
            frontier = sorted(n for c in view.compromised
                              for n in view.known_nodes[c] if n not in view.compromised)
            st, out = step(st, NOP, AttackerAction(frozenset(frontier[:1])))
            total += out.reward
        assert st.terminal == TARGET_COMPROMISED
        assert st.t == 2
        assert total == pytest.approx(1.0 - 100.0)

    def test_pass_and_nop_changes_only_clock(self, chain3):
        st = init(chain3, seed=5)
        before = (set(st.compromised), set(st.attacker_known), set(st.attacker_creds))
        st, out = step(st, NOP, PASS)
        assert st.t == 1
        assert (set(st.compromised), set(st.attacker_known), set(st.attacker_creds)) == before
        assert out.reward == pytest.approx(1.0)

    def test_isolate_same_step_attempt_skipped(self, chain3):
        st = init(chain3, seed=2)
        st, out = step(st, isolate(1), AttackerAction(frozenset({1})))
        attempt = [e for e in out.events if e.kind == "attempt"]
        assert attempt and attempt[0].outcome == "skipped"
        assert 1 not in st.compromised

    def test_attempt_non_adjacent_illegal(self, chain3):
        st = init(chain3, seed=0)
        with pytest.raises(IllegalActionError, match="not adjacent"):
            step(st, NOP, AttackerAction(frozenset({2})))

    def test_attempt_exceeding_spread_illegal(self, chain3):
        st = init(chain3, seed=0)
        with pytest.raises(IllegalActionError, match="spread"):
            step(st, NOP, AttackerAction(frozenset({1, 0})))

    def test_defender_unknown_node_illegal(self, chain3):
        st = init(chain3, seed=0)
        with pytest.raises(IllegalActionError, match="unknown node"):
            step(st, patch(99), PASS)

    def test_terminal_state_raises(self, chain3):
        st = init(chain3, seed=3, horizon_override=1)
        st, _ = step(st, NOP, PASS)
        assert st.terminal == HORIZON_REACHED
        with pytest.raises(TerminalStateError):
            step(st, NOP, PASS)

    def test_patch_raises_defence_and_costs(self, chain3):
        st = init(chain3, seed=0)
        st, out = step(st, patch(1), PASS)
        assert st.defence_now[1] == pytest.approx(0.2)
        assert out.reward == pytest.approx(1.0 - 1.0 - 0.5)

    def test_restore_clears_flag_keeps_creds(self):
        doc = chain3_doc()
        doc["nodes"][1]["creds_stored"] = ["gold"]
        s = load_scenario(json.dumps(doc))
        st = init(s, seed=4)
        st, _ = step(st, NOP, AttackerAction(frozenset({1})))  # certain success
        assert 1 in st.compromised and "gold" in st.attacker_creds
        st, out = step(st, restore(1), PASS)
        assert 1 not in st.compromised
        assert "gold" in st.attacker_creds
        assert out.reward == pytest.approx(1.0 - 3.0 - 2.0)

    def test_scan_records_noisy_result(self, chain3):
        st = init(chain3, seed=0)
        st, out = step(st, scan(0), PASS)
        assert 0 in st.scan_results
        t, result = st.scan_results[0]
        assert t == 0 and isinstance(result, bool)
        assert out.reward == pytest.approx(1.0 - 0.5)


class TestRunEpisode:
    def test_nop_vs_pass_horizon_five(self, chain3):
        log = run_episode(chain3, NopDefender(), PassingAttacker(), seed=0,
                          horizon_override=5)
        assert log.final["terminal"] == HORIZON_REACHED
        assert log.final["t"] == 5
        assert log.total_reward() == pytest.approx(5.0)

    def test_deterministic_chain_episode(self, chain3):
        log = run_episode(chain3, NopDefender(), LateralAttacker(1), seed=9)
        assert log.final["terminal"] == TARGET_COMPROMISED
        assert log.final["t"] == 2

    def test_same_seed_byte_identical(self, chain3):
        a = run_episode(chain3, NopDefender(), LateralAttacker(1), seed=11)
        b = run_episode(chain3, NopDefender(), LateralAttacker(1), seed=11)
        assert episode_to_jsonl(a) == episode_to_jsonl(b)

    def test_return_equals_sum_of_step_rewards(self):
        rng = random.Random(12)
        for _ in range(10):
            s = load_random_scenario(rng)
            log = run_episode(s, RandomDefender(), LateralAttacker(s.attacker.spread),
                              seed=rng.randrange(1000))
            assert log.final["total_reward"] == pytest.approx(log.total_reward())


class TestInvariants:
    def test_monotone_knowledge_and_compromise(self):
        rng = random.Random(21)
        for _ in range(40):
            s = load_random_scenario(rng)
            st = init(s, seed=rng.randrange(10_000))
            defender = RandomDefender()
            attacker = LateralAttacker(s.attacker.spread)
            drng = random.Random(1)
            arng = random.Random(2)
            while st.terminal is None:
                known_before = set(st.attacker_known)
                comp_before = set(st.compromised)
                d = defender.act(defender_view(st), drng)
                a = attacker.act(attacker_view(st), arng)
                st, _ = step(st, d, a)
                assert known_before <= st.attacker_known
                if d.kind != "restore":
                    assert comp_before <= st.compromised

    def test_no_defender_win_cause_exists(self):
        import acdsim.game as game_mod
        causes = {getattr(game_mod, name) for name in dir(game_mod)
                  if name.isupper() and isinstance(getattr(game_mod, name), str)
                  and name in ("TARGET_COMPROMISED", "HORIZON_REACHED")}
        assert causes == {"target_compromised", "horizon_reached"}

    def test_defender_view_hides_compromise(self):
        rng = random.Random(31)
        for _ in range(10):
            s = load_random_scenario(rng)
            st = init(s, seed=3)
            for _ in range(5):
                if st.terminal is not None:
                    break
                obj = defender_view(st).to_obj()
                assert "compromised" not in json.dumps(obj)
                st, _ = step(st, NOP,
                             LateralAttacker(s.attacker.spread).act(attacker_view(st), rng))

    def test_attacker_view_restricted_to_known(self):
        rng = random.Random(32)
        for _ in range(10):
            s = load_random_scenario(rng)
            st = init(s, seed=4)
            attacker = LateralAttacker(s.attacker.spread)
            while st.terminal is None:
                view = attacker_view(st)
                known = set(view.known_nodes)
                for node, neighbors in view.known_nodes.items():
                    assert node in known
                    assert all(x in known for x in neighbors)
                assert "defence" not in json.dumps(view.to_obj())
                st, _ = step(st, NOP, attacker.act(view, rng))

    def test_capture_time_equals_bfs_distance(self):
        rng = random.Random(41)
        for _ in range(25):
            s = load_random_scenario(rng, deterministic=True)
            log = run_episode(s, NopDefender(), LateralAttacker(s.attacker.spread),
                              seed=rng.randrange(10_000))
            target = s.topology.target_id()
            expected = min(shortest_hops(s.topology, e, target) for e in s.attacker.entry)
            assert log.final["terminal"] == TARGET_COMPROMISED
            assert log.final["t"] == expected


class TestReplay:
    def test_round_trip_and_replay(self):
        rng = random.Random(51)
        for _ in range(15):
            s = load_random_scenario(rng)
            log = run_episode(s, RandomDefender(), LateralAttacker(s.attacker.spread),
                              seed=rng.randrange(10_000))
            text = episode_to_jsonl(log)
            parsed = parse_episode_jsonl(text)
            assert parsed.seed == log.seed
            assert parsed.scenario == log.scenario
            assert verify_replay(text)

    def test_tampered_log_fails_replay(self, chain3):
        log = run_episode(chain3, NopDefender(), LateralAttacker(1), seed=13)
        text = episode_to_jsonl(log)
        lines = text.splitlines()
        tampered = json.loads(lines[1])
        tampered["reward"] = tampered["reward"] + 1.0
        lines[1] = json.dumps(tampered, sort_keys=True, separators=(",", ":"))
        assert not verify_replay("\n".join(lines) + "\n")
