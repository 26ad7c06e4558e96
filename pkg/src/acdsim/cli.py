"""Command line front end.

One binary, subcommand style: simulate / train / evaluate / causal / detect /
loop / replay. All randomness flows from --seed, so identical invocations
produce identical output bytes. Errors are reported as a single JSON object
on stderr; exit codes: 0 success, 2 configuration or parse error, 3 runtime
error, 4 replay mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources

from . import __version__
from . import agents, causal, detect, game, loop, netmodel
from .errors import AcdError, ParseError, ReplayMismatchError, ValidationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_REPLAY_MISMATCH = 4

METRIC_COLUMNS = "episode,seed,steps,return,terminal,time_to_target"


def default_scenario_path() -> str:
    """The 8-node enterprise scenario shipped with the package."""
    return str(resources.files("acdsim").joinpath("data/enterprise8.json"))


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_scenario(args) -> netmodel.Scenario:
    path = args.scenario or default_scenario_path()
    return netmodel.load_scenario(_read(path), lenient=getattr(args, "lenient", False))


def _make_defender(spec: str):
    if spec == "nop":
        return agents.NopDefender()
    if spec == "random":
        return agents.RandomDefender()
    if spec.startswith("q:"):
        table = agents.QTable.load(_read(spec[2:]))
        return agents.QDefender(table, training=False)
    raise ParseError(f"unknown defender '{spec}' (want nop, random or q:FILE)")


def _load_dbn_spec(path: str | None) -> causal.DbnSpec:
    if path is None:
        return causal.DbnSpec(causal.Topology.CHAIN_A, slices=8)
    return causal.load_spec(_read(path))


def _parse_noise(text: str) -> detect.EmissionNoise:
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError("--noise wants miss,false_pos")
    try:
        return detect.EmissionNoise(float(parts[0]), float(parts[1]))
    except ValueError:
        raise ParseError(f"bad --noise values '{text}'") from None


def _print_result(value: float):
    sys.stdout.write(format(value, "#.12g") + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    scenario = _load_scenario(args)
    defender = _make_defender(args.defender)
    if args.attacker != "lateral":
        raise ParseError(f"unknown attacker '{args.attacker}'")
    attacker = agents.LateralAttacker(scenario.attacker.spread)
    log = game.run_episode(scenario, defender, attacker, args.seed,
                           horizon_override=args.horizon)
    _write(args.out, game.episode_to_jsonl(log))
    sys.stdout.write(json.dumps({
        "version": __version__,
        "terminal": log.final["terminal"],
        "steps": log.final["t"],
        "return": log.total_reward(),
    }, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_train(args) -> int:
    scenario = _load_scenario(args)
    params = agents.LearningParams(
        alpha=args.alpha, gamma=args.gamma,
        epsilon_start=args.epsilon_start, epsilon_end=args.epsilon_end,
        epsilon_decay=args.epsilon_decay, episodes=args.episodes,
    )
    table, curve = agents.train(scenario, params, args.seed)
    _write(args.out, table.save())
    if args.curve:
        _write(args.curve, agents.curve_to_csv(curve))
    mean_tail = (sum(curve[-100:]) / min(len(curve), 100)) if curve else 0.0
    sys.stdout.write(json.dumps({
        "version": __version__,
        "episodes": len(curve),
        "keys": len(table.values),
        "mean_return_last_100": mean_tail,
    }, sort_keys=True) + "\n")
    return EXIT_OK


def _evaluate_episode(scenario_text: str, qtable_text: str, seed: int) -> dict:
    scenario = netmodel.load_scenario(scenario_text)
    table = agents.QTable.load(qtable_text)
    agent = agents.QDefender(table, training=False)
    log = game.run_episode(scenario, agent,
                           agents.LateralAttacker(scenario.attacker.spread), seed)
    return {
        "seed": seed,
        "steps": log.final["t"],
        "return": log.total_reward(),
        "terminal": log.final["terminal"],
        "time_to_target": log.time_to_target(),
    }


def cmd_evaluate(args) -> int:
    scenario_text = _read(args.scenario or default_scenario_path())
    netmodel.load_scenario(scenario_text)  # fail fast on config errors
    qtable_text = _read(args.qtable)
    agents.QTable.load(qtable_text)
    seeds = [args.seed + i for i in range(args.episodes)]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            rows = list(pool.map(_evaluate_episode,
                                 [scenario_text] * len(seeds),
                                 [qtable_text] * len(seeds), seeds))
    else:
        rows = [_evaluate_episode(scenario_text, qtable_text, s) for s in seeds]
    for i, row in enumerate(rows):
        row["episode"] = i
    summary = {
        "episodes": len(rows),
        "mean_return": sum(r["return"] for r in rows) / len(rows) if rows else 0.0,
        "mean_steps": sum(r["steps"] for r in rows) / len(rows) if rows else 0.0,
        "compromise_rate": (sum(1 for r in rows if r["terminal"] == game.TARGET_COMPROMISED)
                            / len(rows) if rows else 0.0),
        "mean_time_to_target": (sum(r["time_to_target"] for r in rows) / len(rows)
                                if rows else 0.0),
    }
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(f"# acdsim {__version__}\n")
        writer = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS.split(","))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in METRIC_COLUMNS.split(",")})
        _write(args.out, buf.getvalue())
    else:
        _write(args.out, json.dumps({
            "version": __version__, "episodes": rows, "summary": summary,
        }, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_causal(args) -> int:
    if args.causal_cmd == "build":
        params = causal.DbnParams(
            spontaneous=args.spontaneous, persistence=args.persistence,
            edge_strength=args.edge_strength, root_activation=args.root_activation,
            confounder_prior=args.confounder_prior,
            confounder_strength=args.confounder_strength,
        )
        schedule = None
        if args.schedule:
            schedule = tuple(tok.strip() in ("1", "true") for tok in args.schedule.split(","))
        spec = causal.DbnSpec(causal.Topology(args.topology), args.slices,
                              schedule=schedule, params=params)
        model = causal.build_topology(spec)
        _write(args.out, causal.save_model(model))
        return EXIT_OK

    model = causal.load_model(_read(args.model))
    if args.causal_cmd == "marginal":
        _print_result(causal.marginal(model, causal.parse_assignment(model, args.query)))
    elif args.causal_cmd == "observational":
        _print_result(causal.observational(
            model,
            causal.parse_assignment(model, args.target),
            causal.parse_assignment(model, args.given or ""),
        ))
    elif args.causal_cmd == "do":
        _print_result(causal.interventional(
            model,
            causal.parse_assignment(model, args.target),
            causal.parse_assignment(model, args.do),
            causal.parse_assignment(model, args.given or ""),
        ))
    return EXIT_OK


def cmd_detect(args) -> int:
    log = game.parse_episode_jsonl(loop.extract_episode_jsonl(_read(args.log)))
    noise = _parse_noise(args.noise)
    seq = detect.extract_indicators(log, noise, args.seed)
    if args.indicators_out:
        _write(args.indicators_out, detect.sequence_to_csv(seq))
    spec = _load_dbn_spec(args.dbn)
    spec = replace(spec, slices=len(seq.frames),
                   schedule=(tuple(spec.schedule[i % len(spec.schedule)]
                                   for i in range(len(seq.frames)))
                             if spec.schedule else None))
    malign = causal.build_topology(spec)
    benign = detect.benign_model_like(malign)
    result = detect.classify(seq, benign, malign, noise, threshold=args.threshold)
    _write(args.out, result.to_json() + "\n")
    return EXIT_OK


def _run_loop_episode(scenario_text: str, spec_text: str | None, autonomy: str,
                      tau: float, window: int, lookahead: int, noise: str,
                      approve: str, seed: int) -> dict:
    scenario = netmodel.load_scenario(scenario_text)
    dbn = causal.load_spec(spec_text) if spec_text else causal.DbnSpec(
        causal.Topology.CHAIN_A, slices=8)
    cfg = loop.LoopConfig(
        autonomy=loop.AutonomyLevel(autonomy), tau=tau, dbn=dbn,
        emission=_parse_noise(noise), window=window, lookahead=lookahead,
    )
    hook = _make_approver(approve)
    report = loop.run_loop(scenario, cfg, seed, approval=hook)
    return report.to_obj()


def _make_approver(spec: str):
    if spec == "always":
        return loop.AlwaysApprove()
    if spec == "never":
        return loop.NeverApprove()
    if spec.startswith("file:"):
        decisions = json.loads(_read(spec[5:]))
        if not isinstance(decisions, list):
            raise ParseError("approval file must be a JSON array of booleans")
        return loop.ScriptedApprover(decisions)
    raise ParseError(f"unknown approver '{spec}' (want always, never or file:PATH)")


def cmd_loop(args) -> int:
    scenario_text = _read(args.scenario or default_scenario_path())
    netmodel.load_scenario(scenario_text)
    spec_text = _read(args.dbn) if args.dbn else None
    if spec_text:
        causal.load_spec(spec_text)
    loop.AutonomyLevel(args.autonomy)
    _make_approver(args.approve)

    seeds = [args.seed + i for i in range(args.episodes)]
    common = (scenario_text, spec_text, args.autonomy, args.tau, args.window,
              args.lookahead, args.noise, args.approve)
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            reports = list(pool.map(_run_loop_episode,
                                    *[[c] * len(seeds) for c in common], seeds))
    else:
        reports = [_run_loop_episode(*common, s) for s in seeds]
    if args.episodes == 1:
        _write(args.out, json.dumps(reports[0], sort_keys=True, indent=2) + "\n")
    else:
        _write(args.out, json.dumps({"version": __version__, "reports": reports},
                                    sort_keys=True, indent=2) + "\n")
    summary = {
        "version": __version__,
        "episodes": len(reports),
        "mean_time_to_target": sum(r["summary"]["time_to_target"] for r in reports)
        / len(reports),
        "proposed": sum(r["summary"]["proposed"] for r in reports),
        "applied": sum(r["summary"]["applied"] for r in reports),
    }
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    text = loop.extract_episode_jsonl(_read(args.log))
    if game.verify_replay(text):
        sys.stdout.write(json.dumps({"version": __version__, "replay": "ok"},
                                    sort_keys=True) + "\n")
        return EXIT_OK
    raise ReplayMismatchError("replay did not reproduce the recorded log")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acdsim",
        description="Deterministic lateral-movement defence arena.",
        epilog=f"evaluate CSV columns: {METRIC_COLUMNS}",
    )
    parser.add_argument("--version", action="version", version=f"acdsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write its log")
    p.add_argument("--scenario", help="scenario JSON (default: bundled enterprise8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--defender", default="nop", help="nop | random | q:FILE")
    p.add_argument("--attacker", default="lateral")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--lenient", action="store_true",
                   help="ignore unknown scenario keys")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the tabular Q defender")
    p.add_argument("--scenario")
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--epsilon-start", type=float, default=1.0)
    p.add_argument("--epsilon-end", type=float, default=0.05)
    p.add_argument("--epsilon-decay", type=float, default=0.995)
    p.add_argument("--out", required=True, help="Q-table JSON")
    p.add_argument("--curve", help="learning curve CSV (episode,return)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run frozen-greedy episodes and report metrics")
    p.add_argument("--scenario")
    p.add_argument("--qtable", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", default=None, help="default stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("causal", help="build and query causal models")
    csub = p.add_subparsers(dest="causal_cmd", required=True)
    b = csub.add_parser("build", help="unroll a tactic topology into a model file")
    b.add_argument("--topology", required=True,
                   choices=[t.value for t in causal.Topology])
    b.add_argument("--slices", type=int, required=True)
    b.add_argument("--schedule", help="confounded-c: comma list of 0/1 per slice")
    b.add_argument("--spontaneous", type=float, default=0.02)
    b.add_argument("--persistence", type=float, default=0.95)
    b.add_argument("--edge-strength", type=float, default=0.8)
    b.add_argument("--root-activation", type=float, default=0.8)
    b.add_argument("--confounder-prior", type=float, default=0.5)
    b.add_argument("--confounder-strength", type=float, default=0.8)
    b.add_argument("--out", default=None)
    for name, needs in (("marginal", "query"), ("observational", "target"),
                        ("do", "target")):
        q = csub.add_parser(name)
        q.add_argument("--model", required=True)
        if needs == "query":
            q.add_argument("--query", required=True, help="e.g. Y=1 or Y@2=1,X@0=0")
        else:
            q.add_argument("--target", required=True)
            q.add_argument("--given", default="")
        if name == "do":
            q.add_argument("--do", required=True)
    p.set_defaults(func=cmd_causal)

    p = sub.add_parser("detect", help="classify an episode log benign vs malign")
    p.add_argument("--log", required=True, help="episode JSON-lines (or loop report)")
    p.add_argument("--dbn", help="DBN spec JSON (default: chain-a defaults)")
    p.add_argument("--noise", default="0.2,0.05", help="miss,false_pos")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--indicators-out", help="also write the indicator CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("loop", help="run the closed detection/mitigation loop")
    p.add_argument("--scenario")
    p.add_argument("--dbn", help="DBN spec JSON (default: chain-a defaults)")
    p.add_argument("--autonomy", default="advise",
                   choices=[a.value for a in loop.AutonomyLevel])
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--lookahead", type=int, default=2)
    p.add_argument("--noise", default="0.2,0.05")
    p.add_argument("--approve", default="never",
                   help="confirm level: always | never | file:decisions.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("replay", help="verify a log reproduces byte-for-byte")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def _emit_error(kind: str, message: str):
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}},
                                sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_CONFIG
    except ReplayMismatchError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_REPLAY_MISMATCH
    except AcdError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
