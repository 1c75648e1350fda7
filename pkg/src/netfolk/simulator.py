"""Repeated-play engine with scripted adversaries, verifiers, and audits.

``run`` drives every player's strategy automaton in lockstep over the
network. Stage-t broadcasts and actions are composed from histories through
stage t-1, the adversary's mutations are applied to the composed outputs, and
only then is everything delivered. A trace replays byte-for-byte from the
same (config, seed) pair.

The adversary model is a script, not a strategy: one action replacement, a
per-stage schedule of broadcast corruptions, and an optional fabricated
announcement campaign. In the default mode at most one player may be
scripted per stage; stress mode lifts the hypothesis checks entirely.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import InputError, PreconditionError
from .game import (
    SorinStream,
    _all_gain_exprs_negative,
    expected_payoff_vector,
    feasible_ir,
)
from .graph import Network, distance, is_two_connected, neighbors
from .protocol import (
    AccusationTriplet,
    DeviationId,
    ProtocolMessage,
    _announces_now,
    block_partition,
    confirm_broadcast,
    draw_keys,
    due_relays,
)
from .strategy import (
    EquilibriumPlan,
    Fallback,
    PhaseIV,
    PlayerState,
    StageObservation,
    build_plan,
    choose_action,
    initial_state,
    observe_and_transition,
    reward_payoffs,
    reward_report,
)

log = logging.getLogger(__name__)

DIRECTIVE_KINDS = (
    "silence",
    "suppress_claims",
    "fake_claim",
    "frame",
    "suppress_accusation",
    "suppress_relays",
    "alter_relays",
    "random_message",
)

_NOTHING_SENT = ProtocolMessage(
    sender=0, stage=0, deviation_slot=(), auth_key=0,
    neighbor_triplets=(), relay_triplets=(),
)


# --------------------------------------------------------------- adversary


@dataclass
class AdversaryScript:
    """Scripted misbehavior, resolved against composed outputs each stage.

    ``action_deviation``: {"player", "stage", "action"} — replace one stage
    action. ``liar_schedule``: stage -> directive dict with a "player" and a
    "kind" from DIRECTIVE_KINDS (plus kind-specific fields: "deviator" and
    "period" for fake_claim; "accused" and optional "claim_stage" for frame).
    ``false_announcement``: {"announcer", "accused", "stage"} — expands into
    fake_claim directives following the honest announcement pattern for a
    deviation that never happened.
    """

    action_deviation: Optional[Dict[str, int]] = None
    liar_schedule: Dict[int, Dict[str, Any]] = field(default_factory=dict)
    false_announcement: Optional[Dict[str, int]] = None

    def mutated_players(self) -> Set[int]:
        out = set()
        if self.action_deviation:
            out.add(int(self.action_deviation["player"]))
        for d in self.liar_schedule.values():
            out.add(int(d["player"]))
        if self.false_announcement:
            out.add(int(self.false_announcement["announcer"]))
        return out

    def validate(self, n_players: int) -> None:
        players = self.mutated_players()
        if not players <= set(range(1, n_players + 1)):
            raise InputError(f"scripted players {sorted(players)} outside 1..{n_players}")
        if self.action_deviation is not None:
            for key in ("player", "stage", "action"):
                if key not in self.action_deviation:
                    raise InputError(f"action_deviation needs {key!r}")
        for t, d in self.liar_schedule.items():
            if int(t) < 1:
                raise InputError(f"directive stage {t} must be positive")
            if d.get("kind") not in DIRECTIVE_KINDS:
                raise InputError(f"unknown directive kind {d.get('kind')!r} at stage {t}")
        if self.false_announcement is not None:
            for key in ("announcer", "accused", "stage"):
                if key not in self.false_announcement:
                    raise InputError(f"false_announcement needs {key!r}")

    def to_config(self) -> Optional[Dict[str, Any]]:
        if not (self.action_deviation or self.liar_schedule or self.false_announcement):
            return None
        return {
            "action_deviation": dict(self.action_deviation) if self.action_deviation else None,
            "liar_schedule": {str(int(t)): dict(d) for t, d in self.liar_schedule.items()},
            "false_announcement": dict(self.false_announcement)
            if self.false_announcement
            else None,
        }


def _expanded_schedule(adv: AdversaryScript, n_prime: int) -> Dict[int, Dict[str, Any]]:
    sched = {int(t): dict(d) for t, d in adv.liar_schedule.items()}
    fa = adv.false_announcement
    if fa is not None:
        part = block_partition(int(fa["stage"]), n_prime)
        fake = {
            "player": int(fa["announcer"]),
            "kind": "fake_claim",
            "deviator": int(fa["accused"]),
            "period": int(fa["stage"]),
        }
        for b in range(1, part.block_count + 1):
            interval = part.block_interval(b)
            for s in range(interval[0], interval[-1] + 1):
                sched.setdefault(s, dict(fake))
    return sched


def _decoy_carrier(sender: int, t: int, nbrs: Tuple[int, ...], rng) -> ProtocolMessage:
    tokens = draw_keys(rng, 1 + len(nbrs))
    trips = tuple(
        (j, AccusationTriplet(j, t - 1, tokens[1 + k])) for k, j in enumerate(nbrs)
    )
    return ProtocolMessage(sender, t, (), tokens[0], trips, ())


def _liar_key_for(state: PlayerState, accused: int, stage: int) -> Optional[int]:
    for inst in state.protocol_states.values():
        ledger = inst.key_ledger.get(accused)
        if ledger and stage in ledger:
            return ledger[stage]
    return None


def _apply_directive(
    msg: Optional[ProtocolMessage],
    directive: Mapping[str, Any],
    liar: PlayerState,
    nbrs: Tuple[int, ...],
    t: int,
    n_players: int,
    rng,
    registry: Dict[Tuple[int, int], int],
    counters: Dict[str, int],
) -> Optional[ProtocolMessage]:
    kind = directive["kind"]
    if kind == "silence":
        return None
    if msg is None:
        if kind in ("fake_claim", "frame", "random_message"):
            msg = _decoy_carrier(liar.id, t, nbrs, rng)
        else:
            return None

    def forged_key(accused: int, stage: int) -> int:
        key = draw_keys(rng, 1)[0]
        counters["forged"] += 1
        if registry.get((accused, stage)) == key:
            counters["forged_matches"] += 1
        return key

    if kind == "suppress_claims":
        return replace(msg, deviation_slot=())
    if kind == "suppress_relays":
        return replace(msg, relay_triplets=())
    if kind == "suppress_accusation":
        trips = tuple(
            (j, AccusationTriplet(j, t - 1, forged_key(j, t - 1)))
            for j, _ in msg.neighbor_triplets
        )
        return replace(msg, neighbor_triplets=trips)
    if kind == "alter_relays":
        out = tuple(
            AccusationTriplet(tr.accused, tr.stage, forged_key(tr.accused, tr.stage))
            for tr in msg.relay_triplets
        )
        return replace(msg, relay_triplets=out)
    if kind == "fake_claim":
        dev = DeviationId(int(directive["deviator"]), int(directive["period"]))
        slot = tuple(sorted(set(msg.deviation_slot) | {dev}))
        return replace(msg, deviation_slot=slot)
    if kind == "frame":
        accused = int(directive["accused"])
        stage = int(directive.get("claim_stage", t - 1))
        key = _liar_key_for(liar, accused, stage)
        if key is None:
            key = forged_key(accused, stage)
        triplet = AccusationTriplet(accused, stage, key)
        if accused in nbrs:
            trips = tuple(
                (j, triplet if j == accused else tr) for j, tr in msg.neighbor_triplets
            )
            return replace(msg, neighbor_triplets=trips)
        return replace(msg, relay_triplets=msg.relay_triplets + (triplet,))
    if kind == "random_message":
        fake_dev = DeviationId(
            int(rng.integers(1, n_players + 1)), int(rng.integers(1, t + 1))
        )
        tokens = draw_keys(rng, 1 + len(nbrs))
        trips = tuple(
            (j, AccusationTriplet(j, t - 1, tokens[1 + k])) for k, j in enumerate(nbrs)
        )
        return ProtocolMessage(liar.id, t, (fake_dev,), tokens[0], trips, ())
    raise InputError(f"unknown directive kind {kind!r}")


# ------------------------------------------------------------------- trace


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {obj!r}")


@dataclass
class Trace:
    """Canonical line-delimited JSON log; identical bytes for identical runs."""

    mode: str = "events"
    lines: List[str] = field(default_factory=list)

    def add(self, record: Mapping[str, Any]) -> None:
        self.lines.append(
            json.dumps(record, sort_keys=True, separators=(",", ":"), default=_jsonable)
        )

    def dump(self) -> str:
        return "\n".join(self.lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dump())


@dataclass
class RunResult:
    config: Dict[str, Any]
    digest: str
    seed: int
    plan: EquilibriumPlan
    states: Dict[int, PlayerState]
    realized: Dict[int, Tuple[int, ...]]
    payoff_rows: List[List[float]]
    discounted: np.ndarray
    knowledge_events: List[Dict[str, int]]
    knower_counts: Dict[DeviationId, List[int]]
    true_deviations: Set[DeviationId]
    tracked: Optional[DeviationId]
    forged_keys: int
    forged_key_matches: int
    trace: Trace
    elapsed: float


# ------------------------------------------------------------------ engine


def _compose_merged(
    state: PlayerState, t: int, tokens: List[int]
) -> Optional[ProtocolMessage]:
    """One physical broadcast multiplexing all of the player's instances.

    Each instance gets its own relay budget: honest accusations about one
    deviation fit inside that instance's slot count (one lie per window
    stage at most), so anything past the budget is forged filler from a
    liar and gets dropped rather than forwarded.
    """
    insts = list(state.protocol_states.values())
    if not insts or isinstance(state.phase, Fallback):
        return None
    nbrs = insts[0].neighbor_list
    slot = tuple(sorted({inst.deviation for inst in insts if _announces_now(inst, t)}))
    triplets = []
    for idx, j in enumerate(nbrs):
        chosen = None
        for inst in insts:
            if j in inst.lies_detected.get(t - 1, ()):
                true_key = inst.key_ledger[j].get(t - 1)
                if true_key is not None:
                    chosen = AccusationTriplet(j, t - 1, true_key)
                    break
        if chosen is None:
            chosen = AccusationTriplet(j, t - 1, tokens[1 + idx])
        triplets.append((j, chosen))
    relays: List[AccusationTriplet] = []
    seen: Set[AccusationTriplet] = set()
    for inst in insts:
        due = due_relays(inst, t)
        if len(due) > inst.partition.horizon:
            log.debug(
                "player %d stage %d: dropping %d overflow relays for %s",
                state.id, t, len(due) - inst.partition.horizon, inst.deviation,
            )
            due = due[: inst.partition.horizon]
        for tr in due:
            if tr not in seen:
                seen.add(tr)
                relays.append(tr)
    return ProtocolMessage(
        sender=state.id,
        stage=t,
        deviation_slot=slot,
        auth_key=tokens[0],
        neighbor_triplets=tuple(triplets),
        relay_triplets=tuple(relays),
    )


def _reward_envelope(state: PlayerState, t: int, plan: EquilibriumPlan) -> Dict[int, Tuple[int, ...]]:
    """Punishment-sequence flooding payload riding on the stage broadcast."""
    if not isinstance(state.phase, PhaseIV) or state.reward_program is None:
        return {}
    program = state.reward_program
    if not (program.reward_start <= t <= program.uncompensated_end):
        return {}
    env = dict(state.known_sequences)
    if t == program.reward_start:
        env.update(reward_report(state, t, plan))
    return env


def _canonical_config(
    net: Network,
    plan: EquilibriumPlan,
    horizon: int,
    seed: int,
    adversary: AdversaryScript,
    stress: bool,
    trace_mode: str,
    label: str,
) -> Dict[str, Any]:
    th = plan.thresholds
    return {
        "label": label,
        "players": net.player_count,
        "edges": sorted(sorted(map(int, e)) for e in net.edges),
        "v": [float(x) for x in plan.v],
        "delta": float(plan.delta),
        "horizon": int(horizon),
        "n_prime": int(plan.n_prime),
        "stress": bool(stress),
        "trace_mode": trace_mode,
        "seed": int(seed),
        "thresholds": {
            "v_prime": [float(x) for x in th.v_prime],
            "rho": float(th.rho),
            "T": [int(x) for x in th.T],
            "delta_bar": float(th.delta_bar),
        },
        "adversary": adversary.to_config(),
    }


def run(
    net: Network,
    game,
    v: Sequence[float],
    delta: float,
    horizon: int,
    adversary: Optional[AdversaryScript] = None,
    seed: int = 0,
    *,
    plan: Optional[EquilibriumPlan] = None,
    thresholds_data=None,
    n_prime: Optional[int] = None,
    stress: bool = False,
    trace_mode: str = "events",
    label: str = "",
) -> RunResult:
    """Simulate `horizon` stages of play and return the full record.

    Preconditions (skipped under ``stress``): the network is 2-connected and
    at most one player is scripted per stage. The target payoff must be
    strictly individually rational and the discount must clear the targeting
    bound in every mode.
    """
    t_start = time.perf_counter()
    adversary = adversary or AdversaryScript()
    if trace_mode not in ("events", "full"):
        raise InputError(f"trace_mode must be 'events' or 'full', got {trace_mode!r}")
    if not stress and not is_two_connected(net):
        raise PreconditionError(
            "network is not 2-connected; gossip guarantees need a backup route "
            "around every vertex (use stress mode to run anyway)"
        )
    adversary.validate(net.player_count)
    if plan is None:
        plan = build_plan(game, net, v, delta, thresholds_data=thresholds_data, n_prime=n_prime)
    if not feasible_ir(game, plan.v):
        raise PreconditionError("target payoff vector is not strictly individually rational")
    n = net.player_count
    schedule = _expanded_schedule(adversary, plan.n_prime)
    if not stress:
        ad = adversary.action_deviation
        for t, d in schedule.items():
            movers = {int(d["player"])}
            if ad is not None and int(ad["stage"]) == t:
                movers.add(int(ad["player"]))
            if len(movers) > 1:
                raise PreconditionError(
                    f"stage {t} scripts {sorted(movers)}; one player per stage "
                    "unless stress mode is on"
                )

    nbrs = {i: tuple(sorted(neighbors(net, i))) for i in range(1, n + 1)}
    config = _canonical_config(net, plan, horizon, seed, adversary, stress, trace_mode, label)
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    seeds = np.random.SeedSequence(seed).spawn(n + 1)
    states = {i: initial_state(i, seeds[i - 1]) for i in range(1, n + 1)}
    adv_rng = np.random.default_rng(seeds[n])

    trace = Trace(mode=trace_mode)
    trace.add({"record": "header", "digest": digest, "config": config})
    registry: Dict[Tuple[int, int], int] = {}
    counters = {"forged": 0, "forged_matches": 0}
    knowledge_events: List[Dict[str, int]] = []
    true_devs: Set[DeviationId] = set()
    realized_log: Dict[int, Tuple[int, ...]] = {}
    payoff_rows: List[List[float]] = []
    knower_counts: Dict[DeviationId, List[int]] = {}

    for t in range(1, horizon + 1):
        sent: Dict[int, Optional[ProtocolMessage]] = {}
        intended: Dict[int, int] = {}
        for i in range(1, n + 1):
            st = states[i]
            tokens = draw_keys(st.rng, 1 + len(nbrs[i]))
            sent[i] = _compose_merged(st, t, tokens)
            intended[i] = choose_action(st, t, plan)

        realized = dict(intended)
        ad = adversary.action_deviation
        if ad is not None and int(ad["stage"]) == t:
            p = int(ad["player"])
            realized[p] = int(ad["action"])
            if realized[p] != intended[p]:
                true_devs.add(DeviationId(p, t))
        directive = schedule.get(t)
        if directive is not None:
            p = int(directive["player"])
            sent[p] = _apply_directive(
                sent[p], directive, states[p], nbrs[p], t, n, adv_rng, registry, counters
            )
        for i in range(1, n + 1):
            if sent[i] is not None:
                registry[(i, t)] = sent[i].auth_key
        for i in range(1, n + 1):
            actual = sent[i] if sent[i] is not None else _NOTHING_SENT
            for inst in states[i].protocol_states.values():
                confirm_broadcast(inst, actual, t)

        envelopes = {i: _reward_envelope(states[i], t, plan) for i in range(1, n + 1)}
        if directive is not None and directive["kind"] == "silence":
            envelopes[int(directive["player"])] = {}

        profile = tuple(realized[i] for i in range(1, n + 1))
        payoffs = game.payoff(profile)
        realized_log[t] = profile
        payoff_rows.append([float(x) for x in payoffs])
        stage_rec: Dict[str, Any] = {
            "record": "stage",
            "t": t,
            "actions": list(profile),
            "payoffs": [float(x) for x in payoffs],
        }
        if trace_mode == "full":
            stage_rec["messages"] = {
                str(i): None
                if sent[i] is None
                else {
                    "slot": [[d.deviator, d.period] for d in sent[i].deviation_slot],
                    "relays": len(sent[i].relay_triplets),
                }
                for i in range(1, n + 1)
            }
        trace.add(stage_rec)

        for i in range(1, n + 1):
            st = states[i]
            n_transitions = len(st.transitions)
            before = {d: inst.knows for d, inst in st.protocol_states.items()}
            entries = dict(envelopes[i])
            for j in nbrs[i]:
                for p, seq in envelopes[j].items():
                    entries.setdefault(p, seq)
            obs = StageObservation(
                actions={j: realized[j] for j in nbrs[i]},
                messages={j: sent[j] for j in nbrs[i]},
                reward_entries=entries,
            )
            st.own_actions[t] = realized[i]
            observe_and_transition(st, obs, t, plan)
            for d, inst in st.protocol_states.items():
                if inst.knows and not before.get(d, False):
                    ev = {
                        "stage": t,
                        "player": i,
                        "deviator": d.deviator,
                        "period": d.period,
                        "block": inst.learned_at_block,
                    }
                    knowledge_events.append(ev)
                    trace.add({"record": "knowledge", **ev})
            for tr in st.transitions[n_transitions:]:
                trace.add({"record": "phase", **tr})

        for d in true_devs:
            cnt = 0
            for st in states.values():
                inst = st.protocol_states.get(d)
                if inst is not None and inst.knows:
                    cnt += 1
            knower_counts.setdefault(d, [0] * (t - 1)).append(cnt)

    delta_f = float(plan.delta)
    weights = (1 - delta_f) * delta_f ** np.arange(horizon)
    discounted = weights @ np.asarray(payoff_rows) if payoff_rows else np.zeros(n)
    tracked = next(iter(true_devs)) if len(true_devs) == 1 else None
    trace.add(
        {
            "record": "summary",
            "discounted": [float(x) for x in discounted],
            "true_deviations": sorted([d.deviator, d.period] for d in true_devs),
            "forged_keys": counters["forged"],
            "forged_key_matches": counters["forged_matches"],
        }
    )
    return RunResult(
        config=config,
        digest=digest,
        seed=seed,
        plan=plan,
        states=states,
        realized=realized_log,
        payoff_rows=payoff_rows,
        discounted=np.asarray(discounted),
        knowledge_events=knowledge_events,
        knower_counts=knower_counts,
        true_deviations=true_devs,
        tracked=tracked,
        forged_keys=counters["forged"],
        forged_key_matches=counters["forged_matches"],
        trace=trace,
        elapsed=time.perf_counter() - t_start,
    )


# --------------------------------------------------------------- verifiers


def verify_no_false_knowledge(result: RunResult) -> Dict[str, Any]:
    """Nobody ever accepts a deviation that did not happen (and no forged
    authentication key ever collided with a real one)."""
    false_events = [
        e
        for e in result.knowledge_events
        if DeviationId(e["deviator"], e["period"]) not in result.true_deviations
    ]
    return {
        "name": "no-false-knowledge",
        "ok": not false_events and result.forged_key_matches == 0,
        "false_events": false_events,
        "forged_key_matches": result.forged_key_matches,
    }


def _learn_stages(result: RunResult, dev: DeviationId) -> Dict[int, int]:
    out: Dict[int, int] = {}
    for e in result.knowledge_events:
        if DeviationId(e["deviator"], e["period"]) == dev:
            out.setdefault(e["player"], e["stage"])
    return out


def verify_block_growth(result: RunResult, dev: Optional[DeviationId] = None) -> Dict[str, Any]:
    """The knower set grows strictly every block until it covers everyone."""
    dev = dev or result.tracked
    if dev is None:
        raise InputError("no tracked deviation in this run")
    part = block_partition(dev.period, result.plan.n_prime)
    n = result.plan.game.n_players
    learned = _learn_stages(result, dev)
    counts = []
    prev = sum(1 for s in learned.values() if s <= dev.period)
    initial = prev
    ok = prev > 0
    for b in range(1, part.block_count + 1):
        end = part.block_interval(b)[-1]
        cur = sum(1 for s in learned.values() if s <= end)
        counts.append(cur)
        if prev < n and cur <= prev:
            ok = False
        prev = cur
    return {
        "name": "strict-block-growth",
        "ok": ok,
        "initial_knowers": initial,
        "block_counts": counts,
        "complete": prev == n,
    }


def verify_deadline(result: RunResult, dev: Optional[DeviationId] = None) -> Dict[str, Any]:
    """Everyone knows the deviation by its communication deadline."""
    dev = dev or result.tracked
    if dev is None:
        raise InputError("no tracked deviation in this run")
    deadline = dev.period + result.plan.comm_span
    learned = _learn_stages(result, dev)
    n = result.plan.game.n_players
    latest = max(learned.values()) if learned else None
    ok = len(learned) == n and latest is not None and latest <= deadline
    return {
        "name": "gossip-deadline",
        "ok": ok,
        "deadline": deadline,
        "latest": latest,
        "knowers": len(learned),
        "players": n,
        "elapsed": result.elapsed,
    }


# --------------------------------------------------------------- campaigns


def off_path_action(plan: EquilibriumPlan, player: int, stage: int) -> int:
    a = plan.path_action(player, stage)
    return (a + 1) % plan.game.action_counts[player - 1]


def deviation_script(plan: EquilibriumPlan, deviator: int, t0: int) -> AdversaryScript:
    return AdversaryScript(
        action_deviation={
            "player": deviator,
            "stage": t0,
            "action": off_path_action(plan, deviator, t0),
        }
    )


def random_liar_schedule(
    rng: np.random.Generator,
    net: Network,
    liar: int,
    window: Sequence[int],
    corrupt_rate: float = 0.35,
) -> Dict[int, Dict[str, Any]]:
    """A random per-stage corruption schedule for one player."""
    kinds = list(DIRECTIVE_KINDS)
    nb = sorted(neighbors(net, liar))
    sched: Dict[int, Dict[str, Any]] = {}
    for t in window:
        if rng.random() >= corrupt_rate:
            continue
        kind = kinds[int(rng.integers(len(kinds)))]
        d: Dict[str, Any] = {"player": liar, "kind": kind}
        if kind == "frame":
            d["accused"] = int(nb[int(rng.integers(len(nb)))])
        elif kind == "fake_claim":
            d["deviator"] = int(rng.integers(1, net.player_count + 1))
            d["period"] = int(rng.integers(max(1, t - 5), t + 1))
        sched[int(t)] = d
    return sched


def greedy_liar_schedule(
    plan: EquilibriumPlan,
    net: Network,
    dev: DeviationId,
    liar: int,
    honest: RunResult,
) -> Dict[int, Dict[str, Any]]:
    """Aim every corrupted stage at delaying the earliest indirect learner.

    Uses one honest run to find the first player who learns by decoding
    (rather than witnessing), then attacks her most plausible informant: the
    liar suppresses her own traffic when she is the informant, frames the
    informant when adjacent, and otherwise withholds everything.
    """
    window = range(dev.period + 1, dev.period + plan.comm_span + 1)
    events = [
        e
        for e in honest.knowledge_events
        if DeviationId(e["deviator"], e["period"]) == dev and (e["block"] or 0) >= 1
    ]
    if not events:
        return {int(t): {"player": liar, "kind": "silence"} for t in window}
    first = min(events, key=lambda e: (e["stage"], e["player"]))
    informant = min(
        neighbors(net, first["player"]),
        key=lambda c: (distance(net, c, dev.deviator), c),
    )
    if informant == liar:
        return {int(t): {"player": liar, "kind": "silence"} for t in window}
    if informant in neighbors(net, liar):
        return {
            int(t): {"player": liar, "kind": "frame", "accused": int(informant)}
            for t in window
        }
    return {int(t): {"player": liar, "kind": "silence"} for t in window}


def single_corruption_scripts(
    net: Network, liar: int, window: Sequence[int]
) -> Iterator[Dict[int, Dict[str, Any]]]:
    """Every one-stage corruption a given liar could attempt in the window."""
    nb = sorted(neighbors(net, liar))
    for t in window:
        yield {int(t): {"player": liar, "kind": "silence"}}
        yield {int(t): {"player": liar, "kind": "suppress_claims"}}
        yield {int(t): {"player": liar, "kind": "suppress_accusation"}}
        yield {int(t): {"player": liar, "kind": "suppress_relays"}}
        for j in nb:
            yield {int(t): {"player": liar, "kind": "frame", "accused": int(j)}}
            yield {
                int(t): {
                    "player": liar,
                    "kind": "fake_claim",
                    "deviator": int(j),
                    "period": max(1, int(t) - 1),
                }
            }


def run_gossip_case(
    net: Network,
    plan: EquilibriumPlan,
    deviator: int,
    t0: int,
    liar_schedule: Optional[Dict[int, Dict[str, Any]]] = None,
    seed: int = 0,
    horizon: Optional[int] = None,
) -> RunResult:
    """One deviation-plus-liar run over the communication window."""
    horizon = horizon or (t0 + plan.comm_span + 1)
    script = deviation_script(plan, deviator, t0)
    if liar_schedule:
        script.liar_schedule = dict(liar_schedule)
    return run(
        net,
        plan.game,
        plan.v,
        plan.delta,
        horizon,
        adversary=script,
        seed=seed,
        plan=plan,
    )


def gossip_campaign(
    net: Network,
    plan: EquilibriumPlan,
    *,
    schedules: int,
    seed: int = 0,
    t0: int = 3,
    corrupt_rate: float = 0.35,
    greedy_pairs: Optional[Sequence[Tuple[int, int]]] = None,
    progress: Optional[Callable[[int], None]] = None,
) -> Dict[str, Any]:
    """Randomized liar campaign plus directed greedy schedules.

    Every run must show zero false knowledge, strict per-block growth of the
    knower set, and full coverage by the communication deadline.
    ``greedy_pairs`` picks which (deviator, liar) pairs get the directed
    treatment; the default is all ordered pairs.
    """
    rng = np.random.default_rng(seed)
    n = net.player_count
    failures: List[Dict[str, Any]] = []
    slowest = 0.0
    honest_cache: Dict[int, RunResult] = {}

    def check(result: RunResult, tag: str) -> None:
        nonlocal slowest
        slowest = max(slowest, result.elapsed)
        for verdict in (
            verify_no_false_knowledge(result),
            verify_block_growth(result),
            verify_deadline(result),
        ):
            if not verdict["ok"]:
                log.warning("campaign run %s failed %s", tag, verdict["name"])
                failures.append({"tag": tag, "verdict": verdict, "config": result.config})

    done = 0
    for r in range(schedules):
        deviator = int(rng.integers(1, n + 1))
        liar = int(rng.integers(1, n + 1))
        window = range(t0 + 1, t0 + plan.comm_span + 1)
        sched = random_liar_schedule(rng, net, liar, window, corrupt_rate)
        result = run_gossip_case(
            net, plan, deviator, t0, sched, seed=int(rng.integers(2**31))
        )
        check(result, f"random-{r}")
        done += 1
        if progress is not None:
            progress(done)

    # directed schedules: one honest probe per deviator, then the greedy liar
    if greedy_pairs is None:
        greedy_pairs = [(d, l) for d in range(1, n + 1) for l in range(1, n + 1)]
    for deviator, liar in greedy_pairs:
        if deviator not in honest_cache:
            honest_cache[deviator] = run_gossip_case(net, plan, deviator, t0, None, seed=7)
        honest = honest_cache[deviator]
        dev = DeviationId(deviator, t0)
        sched = greedy_liar_schedule(plan, net, dev, liar, honest)
        result = run_gossip_case(net, plan, deviator, t0, sched, seed=11 + liar)
        check(result, f"greedy-dev{deviator}-liar{liar}")
        done += 1
        if progress is not None:
            progress(done)

    return {
        "runs": done,
        "failures": failures,
        "ok": not failures,
        "slowest_run": slowest,
    }


# ------------------------------------------------------------------- audit


@dataclass
class AuditCase:
    player: int
    label: str
    stage: int
    alt_action: int
    gain: float


class _IncumbentMachine:
    """Exact expected payoffs and values along one deviation's aftermath.

    Stage payoffs are path payoffs through the gossip window, the minmax
    expectation during punishment, then the reward machine (handshake stage,
    uncompensated stream, and a concrete compensated stream built from the
    lowest-support punishment realization). Values are filled by backward
    recursion anchored at the compensated stream, whose value equals its
    target exactly.
    """

    def __init__(self, plan: EquilibriumPlan, dev: DeviationId):
        self.plan = plan
        self.dev = dev
        self.k = dev.deviator
        self.tl = plan.timeline(dev)
        self.pure, self.mixes = plan.punish_profile_spec(self.k)
        self.punish_u = plan.expected_punishment_payoffs(self.k)
        n = plan.game.n_players
        self.zero_u = np.asarray(plan.game.payoff((0,) * n), dtype=float)
        T = plan.punishment_span(self.k)
        realized = {}
        for p in range(1, n + 1):
            a = self.pure[p] if p in self.pure else plan.punisher_support(p, self.k)[0]
            realized[p] = (a,) * T
        self.targets = reward_payoffs(realized, plan, self.k)
        self.comp = SorinStream(plan.game, self.targets, plan.delta)
        self._values: Dict[int, np.ndarray] = {}
        self._u_cache: Dict[int, np.ndarray] = {}

    def stage_u(self, s: int) -> np.ndarray:
        cached = self._u_cache.get(s)
        if cached is None:
            cached = self._u_cache[s] = self._stage_u(s)
        return cached

    def _stage_u(self, s: int) -> np.ndarray:
        tl = self.tl
        if s <= tl.gossip_end:
            return np.asarray(self.plan.game.payoff(self.plan.path_profile(s)), dtype=float)
        if s <= tl.punish_end:
            return self.punish_u
        if s == tl.reward_start:
            return self.zero_u
        if s <= tl.uncompensated_end:
            prof = self.plan.uncompensated_stream(self.k).action_at(s - tl.uncompensated_start + 1)
        else:
            prof = self.comp.action_at(s - tl.compensated_start + 1)
        return np.asarray(self.plan.game.payoff(prof), dtype=float)

    def value_from(self, s: int) -> np.ndarray:
        tl = self.tl
        if s >= tl.compensated_start:
            return self.comp.target_after(s - tl.compensated_start)
        if not self._values:
            v = self.targets.copy()
            delta = self.plan.delta
            for q in range(tl.compensated_start - 1, tl.t0, -1):
                v = (1 - delta) * self.stage_u(q) + delta * v
                self._values[q] = v
        return self._values[s]

    def prescription(self, s: int) -> Tuple[Dict[int, int], Dict[int, np.ndarray]]:
        tl = self.tl
        n = self.plan.game.n_players
        if s <= tl.gossip_end:
            prof = self.plan.path_profile(s)
            return {p: prof[p - 1] for p in range(1, n + 1)}, {}
        if s <= tl.punish_end:
            return dict(self.pure), dict(self.mixes)
        if s == tl.reward_start:
            return {p: 0 for p in range(1, n + 1)}, {}
        if s <= tl.uncompensated_end:
            prof = self.plan.uncompensated_stream(self.k).action_at(s - tl.uncompensated_start + 1)
        else:
            prof = self.comp.action_at(s - tl.compensated_start + 1)
        return {p: prof[p - 1] for p in range(1, n + 1)}, {}

    def conforming_actions(self, i: int, s: int) -> Set[int]:
        tl = self.tl
        if tl.punish_start <= s <= tl.punish_end:
            if i == self.k:
                return set(self.plan.target_argmax(self.k))
            return set(self.plan.punisher_support(i, self.k))
        pure, _ = self.prescription(s)
        return {pure[i]}


def _fresh_reward_value(plan: EquilibriumPlan, k: int, cache: Dict[int, np.ndarray]) -> np.ndarray:
    """Expected value vector at the first reward stage after punishing k."""
    if k in cache:
        return cache[k]
    delta = plan.delta
    L = plan.comm_span
    n = plan.game.n_players
    acc = np.asarray(plan.game.payoff((0,) * n), dtype=float).copy()
    disc = 1.0
    stream = plan.uncompensated_stream(k)
    for r in range(1, L):
        disc *= delta
        acc = acc + disc * np.asarray(plan.game.payoff(stream.action_at(r)), dtype=float)
    value = (1 - delta) * acc + disc * delta * plan.reward_base(k)
    cache[k] = value
    return value


def deviation_gain_audit(
    plan: EquilibriumPlan,
    *,
    t0: int = 3,
    tol: float = 1e-6,
    path_stages: Sequence[int] = (1, 2, 5),
    progress: Optional[Callable[[int], None]] = None,
) -> Dict[str, Any]:
    """Evaluate every one-shot deviation class against the automaton's value.

    Covers path play, the gossip window, the punishment window (punishers,
    pinned players, and the punished player), and all three reward segments,
    for every ordered pair of incumbent target and deviating player, at the
    start, middle, and end of each window. All gains must be strictly below
    -tol. Continuation values are exact (stream targets), not truncations.
    """
    game = plan.game
    n = game.n_players
    delta = plan.delta
    L = plan.comm_span
    disc_end = delta ** (L + 1)
    reward_cache: Dict[int, np.ndarray] = {}
    cases: List[AuditCase] = []

    def post_deviation_tail(i: int, s: int, incumbent) -> float:
        """Value at the stage after the stage-s deviation's window closes.

        ``incumbent`` is (target, punish_end) of the regime already running,
        or None on the path. A repeat offence by the incumbent target whose
        window closes mid-punishment lengthens the running span by a full
        T_i; every other deviation is punished fresh for T_i stages.
        """
        T_i = plan.punishment_span(i)
        if incumbent is not None and i == incumbent[0] and s + L <= incumbent[1]:
            z = incumbent[1] + T_i - (s + L)
        else:
            z = T_i
        own = float(plan.expected_punishment_payoffs(i)[i - 1])
        fresh = float(_fresh_reward_value(plan, i, reward_cache)[i - 1])
        return own * (1.0 - delta**z) + (delta**z) * fresh

    def sweep(label, s, value_from, stage_u, prescription, conforming_of, incumbent=None):
        # the discounted gossip-window tail is shared by every deviation at s
        tail = np.zeros(n)
        disc = 1.0
        for r in range(1, L + 1):
            disc *= delta
            tail = tail + disc * stage_u(s + r)
        pure, mixes = prescription(s)
        values = value_from(s)
        for i in range(1, n + 1):
            conforming = conforming_of(i)
            for a in range(game.action_counts[i - 1]):
                if a in conforming:
                    continue
                pures = dict(pure)
                pures[i] = a
                mixes2 = {j: m for j, m in mixes.items() if j != i}
                imm = float(expected_payoff_vector(game, pures, mixes2)[i - 1])
                v_dev = (1 - delta) * (imm + float(tail[i - 1]))
                v_dev += disc_end * post_deviation_tail(i, s, incumbent)
                gain = v_dev - float(values[i - 1])
                cases.append(AuditCase(player=i, label=label, stage=s, alt_action=a, gain=gain))
        if progress is not None:
            progress(len(cases))

    # --- path deviations
    path_u_cache: Dict[int, np.ndarray] = {}

    def path_stage_u(s):
        cached = path_u_cache.get(s)
        if cached is None:
            cached = path_u_cache[s] = np.asarray(
                game.payoff(plan.path_profile(s)), dtype=float
            )
        return cached

    def path_prescription(s):
        prof = plan.path_profile(s)
        return {p: prof[p - 1] for p in range(1, n + 1)}, {}

    def path_value(s):
        return plan.path.target_after(s - 1)

    for s in sorted({int(x) for x in path_stages}):
        prof = plan.path_profile(s)
        sweep(
            "path", s, path_value, path_stage_u, path_prescription,
            lambda i, _prof=prof: {_prof[i - 1]},
        )

    # --- deviations inside every window of every incumbent's aftermath
    for k0 in range(1, n + 1):
        machine = _IncumbentMachine(plan, DeviationId(k0, t0))
        tl = machine.tl
        windows = {
            "gossip": (t0 + 1, t0 + 1 + L // 2, tl.gossip_end),
            "punish": (
                tl.punish_start,
                (tl.punish_start + tl.punish_end) // 2,
                tl.punish_end,
            ),
            "reward": (
                tl.reward_start,
                tl.reward_start + 1,
                tl.reward_start + max(1, L // 2),
                tl.compensated_start,
                tl.compensated_start + 2,
            ),
        }
        for label, stages in windows.items():
            for s in sorted({int(x) for x in stages}):
                sweep(
                    f"{label}-after-{k0}",
                    s,
                    machine.value_from,
                    machine.stage_u,
                    machine.prescription,
                    lambda i, _m=machine, _s=s: set(_m.conforming_actions(i, _s)),
                    incumbent=(k0, tl.punish_end),
                )

    th = plan.thresholds
    certs = [plan.certificates[k] for k in range(1, n + 1)]
    exprs_ok = _all_gain_exprs_negative(
        delta, plan.v, th.max_payoffs, th.v_prime, th.T, th.rho, L, certs
    )
    worst = max((c.gain for c in cases), default=float("-inf"))
    return {
        "cases": cases,
        "count": len(cases),
        "worst_gain": worst,
        "ok": bool(cases) and worst < -tol and exprs_ok,
        "bound_exprs_negative": exprs_ok,
        "tol": tol,
    }
