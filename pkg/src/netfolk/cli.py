"""Operator entry points: validate configs, run simulations, drive campaigns.

Three subcommands:

* ``check``  — validate a (graph, game, v, delta) config against every
  hypothesis the guarantees need, and print the certified constants.
* ``run``    — one simulation; writes a line-delimited trace plus plot-ready
  CSVs (knower counts and per-stage payoffs) and prints a summary.
* ``verify`` — a campaign of randomized + directed gossip runs and one-shot
  deviation audits across bundled fixtures; exit status 0 iff every
  in-hypothesis verifier passed.

Configs are JSON files; ``--seed`` (or NETFOLK_SEED) overrides the config
seed. All file outputs are UTF-8.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import InputError, NetfolkError
from .fixtures import Economy, contribution_economy, economy, economy_names
from .game import (
    feasible_ir,
    game_from_json,
    interior_nonempty,
    minmax_vector,
    sorin_bound,
    thresholds,
)
from .graph import (
    articulation_vertices,
    is_two_connected,
    longest_cycle_length,
    network_from_json,
)
from .protocol import protocol_horizon
from .simulator import (
    AdversaryScript,
    RunResult,
    deviation_gain_audit,
    deviation_script,
    gossip_campaign,
    run,
    verify_deadline,
)
from .strategy import build_plan

log = logging.getLogger(__name__)

_NORMALIZED_TOL = 1e-7


# ------------------------------------------------------------------ configs


def _load_json(path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return data


def _resolve_economy(cfg: Dict[str, Any]) -> Economy:
    """A config names a bundled economy or supplies graph (+ game, v) inline."""
    if "economy" in cfg:
        try:
            return economy(cfg["economy"])
        except KeyError:
            raise InputError(
                f"unknown economy {cfg['economy']!r}; bundled: {', '.join(economy_names())}"
            )
    if "graph" not in cfg:
        raise InputError('config needs "economy" or an inline "graph"')
    net = network_from_json(cfg["graph"])
    if "game" in cfg:
        game = game_from_json(cfg["game"])
        if game.n_players != net.player_count:
            raise InputError(
                f"inline game has {game.n_players} players, graph has {net.player_count}"
            )
        if "v" not in cfg:
            raise InputError('an inline "game" needs an explicit target "v"')
        v = np.asarray(cfg["v"], dtype=float)
        if v.shape != (game.n_players,):
            raise InputError(f'"v" must list one payoff per player, got {cfg["v"]!r}')
        return Economy(name=cfg.get("label", "inline"), game=game, net=net, v=v)
    # graph-only config: dress the graph in the stock contribution economy
    eco = contribution_economy(net, name=cfg.get("label", "inline-contribution"))
    if "v" in cfg:
        v = np.asarray(cfg["v"], dtype=float)
        eco = Economy(name=eco.name, game=eco.game, net=eco.net, v=v)
    return eco


def _resolve_seed(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("NETFOLK_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"NETFOLK_SEED must be an integer, got {env!r}")
    return int(cfg.get("seed", 0))


def _script_from_config(cfg: Optional[Dict[str, Any]]) -> AdversaryScript:
    if not cfg:
        return AdversaryScript()
    schedule = {int(t): dict(d) for t, d in (cfg.get("liar_schedule") or {}).items()}
    return AdversaryScript(
        action_deviation=cfg.get("action_deviation"),
        liar_schedule=schedule,
        false_announcement=cfg.get("false_announcement"),
    )


# -------------------------------------------------------------------- check


def cmd_check(args: argparse.Namespace) -> int:
    cfg = _load_json(args.config)
    eco = _resolve_economy(cfg)
    delta = float(cfg.get("delta", 0.95))
    net, game, v = eco.net, eco.game, eco.v
    failed: List[str] = []

    print(f"[check] {eco.name}: {net.player_count} players, {len(net.edges)} edges")

    cuts = articulation_vertices(net)
    if not is_two_connected(net):
        witness = f"articulation vertices {sorted(cuts)}" if cuts else "graph is disconnected"
        failed.append(f"2-connectivity: {witness}")
        print(f"[check] 2-connectivity: FAIL ({witness})")
    else:
        print("[check] 2-connectivity: ok")

    horizon_l: Optional[int] = None
    try:
        n_prime = eco.n_prime_override or longest_cycle_length(net)
    except NetfolkError as exc:
        failed.append(f"longest cycle: {exc}")
        print(f"[check] longest cycle: FAIL ({exc})")
        n_prime = None
    if n_prime is not None:
        if n_prime == 3:
            print(
                "[check] longest cycle n' = 3: WARNING — degenerate protocol with "
                "zero report blocks; only direct witnesses ever learn anything"
            )
        else:
            horizon_l = protocol_horizon(n_prime)
            print(f"[check] longest cycle n' = {n_prime}, communication span L = {horizon_l}")

    mm, certs = minmax_vector(game)
    print(f"[check] minmax vector: {np.round(mm, 6).tolist()}")
    normalized = bool(np.abs(mm).max() <= _NORMALIZED_TOL)
    if not normalized:
        failed.append("normalization: minmax levels are not all zero")
        print("[check] normalization: FAIL (shift payoffs so every minmax is 0)")

    if not interior_nonempty(game):
        failed.append("interior: the feasible strictly-rational set has empty interior")
        print("[check] feasible-set interior: FAIL (empty interior)")
    else:
        print("[check] feasible-set interior: ok")

    if not feasible_ir(game, v):
        failed.append(f"target: v = {v.tolist()} is not feasible and strictly rational")
        print("[check] target payoff: FAIL")
    else:
        print(f"[check] target payoff v = {v.tolist()}: ok")

    bound = sorin_bound(game.n_players)
    if not (bound <= delta < 1.0):
        failed.append(f"discount: delta = {delta} outside the targeting bound [{bound}, 1)")
        print(f"[check] targeting bound [{bound:.4f}, 1): FAIL for delta = {delta}")
    else:
        print(f"[check] targeting bound [{bound:.4f}, 1): ok for delta = {delta}")

    if normalized and horizon_l is not None and not failed:
        th = thresholds(game, v, horizon_l, certificates=list(certs))
        print(
            f"[check] certified constants: v' = {np.round(th.v_prime, 6).tolist()}, "
            f"bonus rho = {th.rho:.6f}, punishment spans T = {list(th.T)}"
        )
        print(f"[check] discount threshold: delta_bar = {th.delta_bar:.6f}")
        if delta < th.delta_bar:
            failed.append(
                f"discount: delta = {delta} is below the certified threshold {th.delta_bar:.6f}"
            )
            print("[check] delta clears delta_bar: FAIL")
        else:
            print("[check] delta clears delta_bar: ok")

    if failed:
        print(f"[check] {len(failed)} hypothesis failure(s):")
        for item in failed:
            print(f"[check]   - {item}")
        return 1
    print("[check] all hypotheses hold")
    return 0


# ---------------------------------------------------------------------- run


def _write_knower_csv(path: Path, result: RunResult, horizon: int) -> None:
    devs = sorted(result.knower_counts, key=lambda d: (d.period, d.deviator))
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage"] + [f"knowers_dev{d.deviator}_t{d.period}" for d in devs])
        for t in range(1, horizon + 1):
            row: List[Any] = [t]
            for d in devs:
                counts = result.knower_counts[d]
                row.append(counts[t - 1] if t <= len(counts) else counts[-1])
            writer.writerow(row)


def _write_payoff_csv(path: Path, result: RunResult) -> None:
    n = len(result.payoff_rows[0]) if result.payoff_rows else 0
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage"] + [f"u{i}" for i in range(1, n + 1)])
        for t, row in enumerate(result.payoff_rows, start=1):
            writer.writerow([t] + list(row))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_json(args.config)
    eco = _resolve_economy(cfg)
    delta = float(cfg.get("delta", 0.95))
    horizon = int(cfg.get("horizon", 0))
    if horizon < 1:
        raise InputError('run configs need a positive "horizon"')
    seed = _resolve_seed(args, cfg)
    script = _script_from_config(cfg.get("adversary"))
    n_prime = cfg.get("n_prime", eco.n_prime_override)

    result = run(
        eco.net,
        eco.game,
        eco.v,
        delta,
        horizon,
        adversary=script,
        seed=seed,
        n_prime=n_prime,
        stress=(args.mode == "stress"),
        trace_mode=args.trace,
        label=cfg.get("label", eco.name),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    result.trace.write(trace_path)
    _write_knower_csv(out / "knower_counts.csv", result, horizon)
    _write_payoff_csv(out / "payoffs.csv", result)

    print(f"[run] {eco.name}: {horizon} stages, seed {seed}, digest {result.digest[:16]}")
    if result.knowledge_events:
        print(f"[run] knowledge timeline ({len(result.knowledge_events)} events):")
        for e in sorted(result.knowledge_events, key=lambda e: (e["stage"], e["player"])):
            print(
                f"[run]   stage {e['stage']:>4}: player {e['player']} learned "
                f"(deviator {e['deviator']}, period {e['period']}, block {e['block']})"
            )
    else:
        print("[run] knowledge timeline: no deviations learned")
    print(f"[run] discounted payoffs: {np.round(result.discounted, 6).tolist()}")
    print(f"[run] target payoffs:     {np.round(result.plan.v, 6).tolist()}")
    print(f"[run] wrote {trace_path}, knower_counts.csv, payoffs.csv in {out}")
    return 0


# ------------------------------------------------------------------- verify


@dataclass
class Campaign:
    """A validated verification campaign: every fixture resolves before any run."""

    fixtures: List[Dict[str, Any]] = field(default_factory=list)
    audits: List[Dict[str, Any]] = field(default_factory=list)
    seed: int = 0
    workers: int = 2

    @classmethod
    def from_config(cls, cfg: Dict[str, Any]) -> "Campaign":
        camp = cls(
            fixtures=list(cfg.get("fixtures", [])),
            audits=list(cfg.get("audits", [])),
            seed=int(cfg.get("seed", 0)),
            workers=max(1, int(cfg.get("workers", 2))),
        )
        if not camp.fixtures and not camp.audits:
            raise InputError("campaign is empty: no fixtures and no audits")
        for entry in camp.fixtures + camp.audits:
            _resolve_economy(entry)  # fail fast on any bad fixture
        return camp


def default_campaign() -> Campaign:
    """Small but representative: four gossip fixtures plus the ring audit."""
    return Campaign(
        fixtures=[
            {"economy": "contribution-ring-5", "delta": 0.95, "schedules": 30},
            {"economy": "contribution-chorded-6", "delta": 0.95, "schedules": 20},
            {"economy": "contribution-theta-8", "delta": 0.95, "schedules": 15},
            {
                "economy": "contribution-ring-12",
                "delta": 0.95,
                "schedules": 6,
                "greedy_pairs": [[1, 7], [4, 10], [9, 2]],
            },
            {
                "economy": "cut-pair-triangles",
                "delta": 0.95,
                "stress": True,
                "deviator": 1,
            },
        ],
        audits=[{"economy": "contribution-ring-4", "delta": None}],
    )


def _campaign_fixture(entry: Dict[str, Any], base_seed: int) -> Dict[str, Any]:
    """One fixture's randomized + directed gossip campaign."""
    eco = _resolve_economy(entry)
    delta = float(entry.get("delta", 0.95))
    log.info("campaign fixture %s starting (delta=%s)", eco.name, delta)
    plan = build_plan(
        eco.game, eco.net, eco.v, delta, n_prime=entry.get("n_prime", eco.n_prime_override)
    )
    pairs = entry.get("greedy_pairs")
    report = gossip_campaign(
        eco.net,
        plan,
        schedules=int(entry.get("schedules", 20)),
        seed=base_seed + int(entry.get("seed_offset", 0)),
        t0=int(entry.get("t0", 3)),
        corrupt_rate=float(entry.get("corrupt_rate", 0.35)),
        greedy_pairs=[tuple(p) for p in pairs] if pairs is not None else None,
    )
    report["name"] = eco.name
    return report


def _stress_fixture(entry: Dict[str, Any], base_seed: int) -> Dict[str, Any]:
    """Out-of-hypothesis demonstration: a silenced cut vertex starves a side.

    The graph may fail 2-connectivity, so the run is forced through in stress
    mode and the deadline verifier is EXPECTED to fail. The punishment span is
    stretched past the demo window: the question here is knowledge spread, and
    the reward machinery cannot be fed when half the reports never arrive.
    """
    eco = _resolve_economy(entry)
    delta = float(entry.get("delta", 0.95))
    n_prime = entry.get("n_prime", eco.n_prime_override)
    base = build_plan(eco.game, eco.net, eco.v, delta, n_prime=n_prime)
    t0 = int(entry.get("t0", 3))
    horizon = t0 + 10 * base.comm_span
    th = dataclasses.replace(base.thresholds, T=(horizon,) * eco.net.player_count)
    plan = build_plan(
        eco.game, eco.net, eco.v, delta, thresholds_data=th, n_prime=n_prime
    )
    cuts = sorted(articulation_vertices(eco.net))
    liar = int(entry.get("liar", cuts[0] if cuts else 1))
    deviator = int(entry.get("deviator", 1))
    script = deviation_script(plan, deviator, t0)
    script.liar_schedule = {
        t: {"player": liar, "kind": "silence"} for t in range(t0, horizon + 1)
    }
    result = run(
        eco.net, eco.game, eco.v, delta, horizon,
        adversary=script, seed=base_seed, plan=plan, stress=True,
    )
    verdict = verify_deadline(result)
    # Police instances opened on the silenced liar also emit knowledge
    # events; only the tracked deviation says who the gossip reached.
    learned = {
        e["player"]
        for e in result.knowledge_events
        if e["deviator"] == deviator and e["period"] == t0
    }
    starved = sorted(set(range(1, eco.net.player_count + 1)) - learned)
    return {
        "name": eco.name,
        "stress": True,
        "ok": True,  # out-of-hypothesis: never gates the exit status
        "deadline_verdict": verdict,
        "expected_failure": not verdict["ok"],
        "starved_players": starved,
        "horizon": horizon,
    }


def _campaign_audit(entry: Dict[str, Any]) -> Dict[str, Any]:
    eco = _resolve_economy(entry)
    delta = entry.get("delta")
    n_prime = entry.get("n_prime", eco.n_prime_override)
    if delta is None:
        base = build_plan(eco.game, eco.net, eco.v, 0.95, n_prime=n_prime)
        delta = (1.0 + base.thresholds.delta_bar) / 2.0
    plan = build_plan(eco.game, eco.net, eco.v, float(delta), n_prime=n_prime)
    report = deviation_gain_audit(plan, tol=float(entry.get("tol", 1e-6)))
    return {
        "name": eco.name,
        "delta": float(delta),
        "ok": report["ok"],
        "count": report["count"],
        "worst_gain": report["worst_gain"],
        "bound_exprs_negative": report["bound_exprs_negative"],
    }


def cmd_verify(args: argparse.Namespace) -> int:
    if args.config:
        campaign = Campaign.from_config(_load_json(args.config))
    else:
        campaign = default_campaign()
    base_seed = args.seed if args.seed is not None else campaign.seed

    in_scope = [f for f in campaign.fixtures if not f.get("stress")]
    stress = [f for f in campaign.fixtures if f.get("stress")]

    with ThreadPoolExecutor(max_workers=campaign.workers) as pool:
        futures = [pool.submit(_campaign_fixture, f, base_seed) for f in in_scope]
        reports = [fut.result() for fut in futures]

    stress_reports = [_stress_fixture(f, base_seed) for f in stress]
    audit_reports = [_campaign_audit(a) for a in campaign.audits]

    violations = 0
    for rep in reports:
        status = "ok" if rep["ok"] else f"{len(rep['failures'])} VIOLATION(S)"
        print(f"[verify] gossip {rep['name']}: {rep['runs']} runs, {status}")
        if not rep["ok"]:
            violations += 1
            for failure in rep["failures"][:5]:
                print(f"[verify]   {failure['tag']}: {failure['verdict']['name']}")
    for rep in stress_reports:
        tag = "expected out-of-hypothesis failure" if rep["expected_failure"] else (
            "UNEXPECTED pass (graph met the deadline without the hypotheses)"
        )
        print(
            f"[verify] stress {rep['name']}: {tag}; "
            f"starved players {rep['starved_players']} over {rep['horizon']} stages"
        )
    for rep in audit_reports:
        status = "ok" if rep["ok"] else "VIOLATION"
        print(
            f"[verify] audit {rep['name']} @ delta={rep['delta']:.6f}: "
            f"{rep['count']} deviations, worst gain {rep['worst_gain']:.3e}, {status}"
        )
        if not rep["ok"]:
            violations += 1

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "seed": base_seed,
            "gossip": [
                {k: v for k, v in rep.items() if k != "failures"}
                | {"failures": len(rep["failures"])}
                for rep in reports
            ],
            "stress": [
                {k: v for k, v in rep.items() if k != "deadline_verdict"}
                for rep in stress_reports
            ],
            "audits": audit_reports,
        }
        (out / "verify_report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True, default=str), encoding="utf-8"
        )
        print(f"[verify] wrote {out / 'verify_report.json'}")

    if violations:
        print(f"[verify] {violations} verifier(s) reported violations")
        return 1
    print("[verify] all in-hypothesis verifiers passed")
    return 0


# --------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netfolk",
        description="Repeated games on networks: hypothesis checks, simulations, campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="validate a config against the theorem hypotheses")
    p_check.add_argument("--config", required=True, help="JSON config path")

    p_run = sub.add_parser("run", help="run one simulation and write trace + CSVs")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.add_argument("--seed", type=int, default=None, help="overrides config/NETFOLK_SEED")
    p_run.add_argument("--out", default="netfolk-out", help="output directory")
    p_run.add_argument(
        "--mode", choices=("unilateral", "stress"), default="unilateral",
        help="stress lifts the one-scripted-player and 2-connectivity checks",
    )
    p_run.add_argument("--trace", choices=("events", "full"), default="events")

    p_verify = sub.add_parser("verify", help="run a verification campaign")
    p_verify.add_argument("--config", default=None, help="campaign JSON (default: bundled)")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--out", default=None, help="write verify_report.json here")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"check": cmd_check, "run": cmd_run, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except NetfolkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
