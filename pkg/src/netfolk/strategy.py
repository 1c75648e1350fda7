"""Per-player strategy automaton: path play, gossip entry, punishment, reward.

Play proceeds in four regimes. On the path everyone follows a shared
deterministic pure-action stream tracking the target payoff v. When a player
steps off script her neighbors witness it, open a gossip instance, and the
whole population learns the event within the communication window. Everyone
then minmaxes the offender for a precomputed number of stages, and finally
switches to a reward stream that pays the punishers a bonus — adjusted by an
exact compensation transfer so each punisher is indifferent over her own
mixed-strategy draws.

Stages are 1-based. An instance's window layout, for deviation stage t0,
communication span L and punishment span T:

    [t0+1       , t0+L]       gossip window (actions unchanged)
    [t0+L+1     , t0+L+T]     punishment
    t0+L+T+1                  reward start: fixed action 0, sequence reports
    [t0+L+T+2   , t0+2L+T]    reward stream, uncompensated
    [t0+2L+T+1  , ...)        reward stream, compensated
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .errors import FeasibilityError, InputError, PreconditionError
from .game import (
    MinmaxCertificate,
    SorinStream,
    StageGame,
    Thresholds,
    expected_payoff_vector,
    feasible_ir,
    minmax_vector,
    reward_vector,
    sorin_bound,
)
from .graph import Network, longest_cycle_length, neighbors
from .protocol import (
    DEFAULT_DETECTION,
    DetectionConfig,
    DeviationId,
    ProtocolInstanceState,
    ProtocolMessage,
    new_instance,
    process_incoming,
    protocol_horizon,
)

log = logging.getLogger(__name__)

_SUPPORT_TOL = 1e-12
_BR_TOL = 1e-12


# ------------------------------------------------------------------ phases


@dataclass(frozen=True)
class PhaseI:
    pass


@dataclass(frozen=True)
class PhaseII:
    instance: DeviationId


@dataclass(frozen=True)
class PhaseIII:
    """Punishment span is [start_stage, end_stage]; it can grow if the target
    deviates again before it is served, so the reward bookkeeping reads these
    stamps instead of re-deriving dates from the triggering deviation."""

    target: int
    end_stage: int
    start_stage: int = 0  # 0 = unknown; only reward bookkeeping needs it


@dataclass(frozen=True)
class PhaseIV:
    target: int
    bonus: float


@dataclass(frozen=True)
class Fallback:
    """Off the one-deviator history class: static best response forever."""

    action: int


PhaseTag = Union[PhaseI, PhaseII, PhaseIII, PhaseIV, Fallback]

PHASE_I = PhaseI()


def phase_name(tag: PhaseTag) -> str:
    return type(tag).__name__


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class DeviationTimeline:
    """Absolute stage layout implied by one deviation."""

    deviation: DeviationId
    comm_span: int
    punish_span: int

    @property
    def t0(self) -> int:
        return self.deviation.period

    @property
    def gossip_end(self) -> int:
        return self.t0 + self.comm_span

    @property
    def punish_start(self) -> int:
        return self.t0 + self.comm_span + 1

    @property
    def punish_end(self) -> int:
        return self.t0 + self.comm_span + self.punish_span

    @property
    def reward_start(self) -> int:
        return self.punish_end + 1

    @property
    def uncompensated_start(self) -> int:
        return self.punish_end + 2

    @property
    def uncompensated_end(self) -> int:
        return self.t0 + 2 * self.comm_span + self.punish_span

    @property
    def compensated_start(self) -> int:
        return self.uncompensated_end + 1


# -------------------------------------------------------------------- plan


class EquilibriumPlan:
    """Everything common knowledge before play: path, thresholds, punishments.

    The stage game must already be normalized (zero minmax for everyone).
    ``thresholds`` may be supplied explicitly (e.g. a handpicked punishment
    length); otherwise they are derived from the game, v, and the network's
    communication span.
    """

    def __init__(
        self,
        game: StageGame,
        net: Network,
        v: Sequence[float],
        delta: float,
        thresholds_data: Optional[Thresholds] = None,
        n_prime: Optional[int] = None,
        detection: DetectionConfig = DEFAULT_DETECTION,
    ):
        if game.n_players != net.player_count:
            raise InputError(
                f"game has {game.n_players} players but network has {net.player_count}"
            )
        bound = sorin_bound(game.n_players)
        if not (bound <= delta < 1.0):
            raise InputError(
                f"delta {delta} outside [{bound}, 1): the targeting bound is violated"
            )
        self.game = game
        self.net = net
        self.v = np.asarray(v, dtype=float)
        self.delta = float(delta)
        self.n_prime = n_prime if n_prime is not None else longest_cycle_length(net)
        self.comm_span = protocol_horizon(self.n_prime)
        self.detection = detection
        if thresholds_data is None:
            from .game import thresholds as _thresholds

            thresholds_data = _thresholds(game, self.v, self.comm_span)
        self.thresholds = thresholds_data
        certs = thresholds_data.certificates
        if not certs:
            _, certs = minmax_vector(game)
        self.certificates: Dict[int, MinmaxCertificate] = {c.target: c for c in certs}
        for c in self.certificates.values():
            if abs(c.value) > 1e-7:
                raise InputError(
                    f"player {c.target} has minmax {c.value}; normalize the game first"
                )
        self.path = SorinStream(game, self.v, self.delta)
        self._argmax_cache: Dict[int, Tuple[int, ...]] = {}
        self._uncomp_cache: Dict[int, SorinStream] = {}
        self._timelines: Dict[DeviationId, DeviationTimeline] = {}

    # ----- path

    def path_profile(self, t: int) -> Tuple[int, ...]:
        return self.path.action_at(t)

    def path_action(self, i: int, t: int) -> int:
        return self.path.action_at(t)[i - 1]

    # ----- punishment prescriptions

    def punisher_mix(self, i: int, k: int) -> Optional[np.ndarray]:
        """i's minmax mix against k, or None when i is pinned to action 0."""
        return self.certificates[k].punisher_profile.distributions.get(i)

    def punisher_support(self, i: int, k: int) -> Tuple[int, ...]:
        mix = self.punisher_mix(i, k)
        if mix is None:
            return (0,)
        return self.certificates[k].punisher_profile.support(i, _SUPPORT_TOL)

    def target_response(self, k: int) -> int:
        return self.certificates[k].best_response_action

    def target_argmax(self, k: int) -> Tuple[int, ...]:
        """Actions of k within tolerance of the best response vs the minmax mix."""
        if k not in self._argmax_cache:
            cert = self.certificates[k]
            pinned = {
                j: 0
                for j in range(1, self.game.n_players + 1)
                if j != k and j not in cert.punisher_profile.distributions
            }
            vals = []
            for a in range(self.game.action_counts[k - 1]):
                pure = dict(pinned)
                pure[k] = a
                vals.append(
                    expected_payoff_vector(
                        self.game, pure, cert.punisher_profile.distributions
                    )[k - 1]
                )
            vals = np.array(vals)
            top = vals.max()
            self._argmax_cache[k] = tuple(
                int(a) for a in np.nonzero(vals >= top - _BR_TOL)[0]
            )
        return self._argmax_cache[k]

    def punish_profile_spec(self, k: int) -> Tuple[Dict[int, int], Dict[int, np.ndarray]]:
        """(pure pinned actions incl. the target's reply, mixes) during punishment."""
        cert = self.certificates[k]
        pure = {k: cert.best_response_action}
        for j in range(1, self.game.n_players + 1):
            if j != k and j not in cert.punisher_profile.distributions:
                pure[j] = 0
        return pure, dict(cert.punisher_profile.distributions)

    def punishment_span(self, k: int) -> int:
        return self.thresholds.T[k - 1]

    def expected_punishment_payoffs(self, k: int) -> np.ndarray:
        return self.certificates[k].minmaxing_payoffs

    # ----- reward

    def reward_base(self, k: int) -> np.ndarray:
        return reward_vector(self.thresholds.v_prime.copy(), self.thresholds.rho, k)

    def uncompensated_stream(self, k: int) -> SorinStream:
        if k not in self._uncomp_cache:
            self._uncomp_cache[k] = SorinStream(self.game, self.reward_base(k), self.delta)
        return self._uncomp_cache[k]

    def timeline(self, dev: DeviationId) -> DeviationTimeline:
        if dev not in self._timelines:
            self._timelines[dev] = DeviationTimeline(
                deviation=dev,
                comm_span=self.comm_span,
                punish_span=self.punishment_span(dev.deviator),
            )
        return self._timelines[dev]


def build_plan(
    game: StageGame,
    net: Network,
    v: Sequence[float],
    delta: float,
    thresholds_data: Optional[Thresholds] = None,
    n_prime: Optional[int] = None,
    detection: DetectionConfig = DEFAULT_DETECTION,
) -> EquilibriumPlan:
    return EquilibriumPlan(game, net, v, delta, thresholds_data, n_prime, detection)


# ------------------------------------------------------------ player state


@dataclass
class RewardProgram:
    """One instance's reward-phase play data for one player.

    Carries the punishment span actually served (which may be longer than the
    nominal one when the target re-deviated mid-punishment), so every reward
    date is anchored to real stages rather than the triggering deviation.
    """

    deviation: DeviationId
    uncompensated: SorinStream
    punish_start: int
    punish_end: int
    comm_span: int
    compensated: Optional[SorinStream] = None
    compensated_targets: Optional[np.ndarray] = None

    @property
    def punish_span(self) -> int:
        return self.punish_end - self.punish_start + 1

    @property
    def reward_start(self) -> int:
        return self.punish_end + 1

    @property
    def uncompensated_start(self) -> int:
        return self.punish_end + 2

    @property
    def uncompensated_end(self) -> int:
        return self.punish_end + self.comm_span

    @property
    def compensated_start(self) -> int:
        return self.punish_end + self.comm_span + 1


@dataclass
class StageObservation:
    """What one player perceives at the end of a stage."""

    actions: Dict[int, int] = field(default_factory=dict)
    messages: Dict[int, Optional[ProtocolMessage]] = field(default_factory=dict)
    reward_entries: Dict[int, Tuple[int, ...]] = field(default_factory=dict)


@dataclass
class PlayerState:
    """Everything player i carries between stages."""

    id: int
    rng: np.random.Generator
    phase: PhaseTag = PHASE_I
    protocol_states: Dict[DeviationId, ProtocolInstanceState] = field(default_factory=dict)
    private_history: List[dict] = field(default_factory=list)
    plan_instance: Optional[DeviationId] = None
    phase_stack: List[PhaseTag] = field(default_factory=list)
    transitions: List[dict] = field(default_factory=list)
    own_actions: Dict[int, int] = field(default_factory=dict)
    observed_actions: Dict[int, Dict[int, int]] = field(default_factory=dict)
    refuted: Set[DeviationId] = field(default_factory=set)
    known_sequences: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    reported_sequences: Set[int] = field(default_factory=set)
    reward_program: Optional[RewardProgram] = None

    def known_deviations(self) -> List[DeviationId]:
        return [d for d, s in self.protocol_states.items() if s.knows]


def initial_state(i: int, seed_seq: np.random.SeedSequence) -> PlayerState:
    return PlayerState(id=i, rng=np.random.default_rng(seed_seq))


# ------------------------------------------------------------ action choice


def _draw_from_mix(rng: np.random.Generator, mix: np.ndarray) -> int:
    u = rng.random()
    a = int(np.searchsorted(np.cumsum(mix), u, side="right"))
    return min(a, len(mix) - 1)


def choose_action(state: PlayerState, t: int, plan: EquilibriumPlan) -> int:
    """The stage-t pure action prescribed by the player's current phase."""
    tag = state.phase
    if isinstance(tag, Fallback):
        return tag.action
    if isinstance(tag, (PhaseI, PhaseII)):
        return plan.path_action(state.id, t)
    if isinstance(tag, PhaseIII):
        k = tag.target
        if state.id == k:
            return plan.target_response(k)
        mix = plan.punisher_mix(state.id, k)
        if mix is None:
            return 0
        return _draw_from_mix(state.rng, mix)
    if isinstance(tag, PhaseIV):
        program = state.reward_program
        if program is None:
            raise PreconditionError(f"player {state.id} in reward phase without a program")
        if t == program.reward_start:
            return 0
        if t <= program.uncompensated_end:
            return program.uncompensated.action_at(t - program.uncompensated_start + 1)[
                state.id - 1
            ]
        if program.compensated is None:
            raise PreconditionError(
                f"player {state.id} reached the compensated stream at stage {t} "
                "without complete punishment sequences"
            )
        return program.compensated.action_at(t - program.compensated_start + 1)[
            state.id - 1
        ]
    raise InputError(f"unknown phase tag {tag!r}")


def conforms(
    plan: EquilibriumPlan,
    tag: PhaseTag,
    j: int,
    action: int,
    t: int,
    program: Optional[RewardProgram] = None,
) -> bool:
    """Is j's observed stage-t action consistent with the governing phase?"""
    if isinstance(tag, Fallback):
        return True
    if isinstance(tag, (PhaseI, PhaseII)):
        return action == plan.path_action(j, t)
    if isinstance(tag, PhaseIII):
        k = tag.target
        if j == k:
            return action in plan.target_argmax(k)
        return action in plan.punisher_support(j, k)
    if isinstance(tag, PhaseIV):
        if program is None:
            return True
        if t == program.reward_start:
            return action == 0
        if t <= program.uncompensated_end:
            return action == program.uncompensated.action_at(
                t - program.uncompensated_start + 1
            )[j - 1]
        if program.compensated is None:
            return True
        return action == program.compensated.action_at(
            t - program.compensated_start + 1
        )[j - 1]
    return True


def _prescribed_pure(
    plan: EquilibriumPlan,
    tag: PhaseTag,
    program: Optional[RewardProgram],
    j: int,
    t: int,
) -> int:
    """A deterministic representative of j's stage-t prescription."""
    if isinstance(tag, PhaseIII):
        k = tag.target
        if j == k:
            return plan.target_response(k)
        mix = plan.punisher_mix(j, k)
        return 0 if mix is None else plan.punisher_support(j, k)[0]
    if isinstance(tag, PhaseIV) and program is not None:
        if t == program.reward_start:
            return 0
        if t <= program.uncompensated_end:
            return program.uncompensated.action_at(t - program.uncompensated_start + 1)[
                j - 1
            ]
        if program.compensated is not None:
            return program.compensated.action_at(t - program.compensated_start + 1)[
                j - 1
            ]
        return 0
    return plan.path_action(j, t)


def _fallback_action(plan: EquilibriumPlan, state: PlayerState, t: int) -> int:
    """One-shot best response to the frozen stage-t prescribed profile."""
    i = state.id
    frozen = [
        _prescribed_pure(plan, state.phase, state.reward_program, j, t)
        for j in range(1, plan.game.n_players + 1)
    ]
    best, best_val = 0, -np.inf
    for a in range(plan.game.action_counts[i - 1]):
        profile = tuple(frozen[: i - 1] + [a] + frozen[i:])
        val = plan.game.payoff(profile)[i - 1]
        if val > best_val + 1e-12:
            best, best_val = a, val
    log.debug("player %d drops to static best response %d at stage %d", i, best, t)
    return best


# --------------------------------------------------- observation/transition


def _record_transition(state: PlayerState, t: int, new_tag: PhaseTag, cause: str) -> None:
    state.transitions.append(
        {
            "stage": t,
            "player": state.id,
            "from_phase": phase_name(state.phase),
            "to_phase": phase_name(new_tag),
            "cause": cause,
        }
    )
    state.phase = new_tag


def _open_instance(
    state: PlayerState,
    dev: DeviationId,
    plan: EquilibriumPlan,
    witnessed: bool,
) -> ProtocolInstanceState:
    inst = state.protocol_states.get(dev)
    if inst is None:
        inst = new_instance(state.id, dev, plan.n_prime, plan.net, knows=witnessed)
        state.protocol_states[dev] = inst
    elif witnessed and not inst.knows:
        inst.knows = True
        inst.learned_at_block = 0
    return inst


def observe_and_transition(
    state: PlayerState,
    observed: StageObservation,
    t: int,
    plan: EquilibriumPlan,
) -> PlayerState:
    """Advance one player through the end of stage t.

    Vets neighbors' actions — and the player's own realized action, which the
    caller must have recorded in ``state.own_actions[t]`` beforehand — against
    the phase prescription, opens gossip instances for witnessed or announced
    deviations, forwards everything to the per-instance protocol handlers,
    collects reward-phase sequence reports, and finally applies the phase
    schedule.
    """
    i = state.id
    state.observed_actions[t] = dict(observed.actions)

    if isinstance(state.phase, Fallback):
        state.private_history.append({"stage": t, "observed": observed.actions})
        return state

    # --- action vetting (own realized action included: I know when I moved)
    violators = []
    own = state.own_actions.get(t)
    if own is not None and not conforms(plan, state.phase, i, own, t, state.reward_program):
        violators.append(i)
    for j, a in observed.actions.items():
        if not conforms(plan, state.phase, j, a, t, state.reward_program):
            violators.append(j)
    if len(violators) >= 2:
        action = _fallback_action(plan, state, t)
        _record_transition(state, t, Fallback(action), "multilateral deviation")
        state.private_history.append({"stage": t, "observed": observed.actions})
        return state
    externally_flagged: Set[int] = set()
    for j in violators:
        dev = DeviationId(j, t)
        _open_instance(state, dev, plan, witnessed=True)

    # --- provisional instances for fresh announcements; ground-truth refutation
    for j, msg in observed.messages.items():
        if msg is None:
            continue
        for dev in msg.deviation_slot:
            if dev in state.refuted:
                externally_flagged.add(j)
                continue
            if dev in state.protocol_states:
                continue
            if dev.deviator == i or dev.deviator in neighbors(plan.net, i):
                # I watch that player directly, so an unwitnessed claim is a
                # lie; keep a police instance that logs the claimant's keys
                # and substantiates accusations, but never decodes
                state.refuted.add(dev)
                externally_flagged.add(j)
                inst = _open_instance(state, dev, plan, witnessed=False)
                inst.refuted = True
            else:
                _open_instance(state, dev, plan, witnessed=False)

    # --- protocol step for every live instance
    for dev, inst in state.protocol_states.items():
        process_incoming(
            inst,
            observed.messages,
            t,
            plan.net,
            config=plan.detection,
            externally_flagged=externally_flagged or None,
        )

    # --- reward-phase sequence collection
    if observed.reward_entries:
        for p, seq in observed.reward_entries.items():
            state.known_sequences.setdefault(p, tuple(seq))
    _maybe_build_compensation(state, t, plan)

    state.private_history.append({"stage": t, "observed": observed.actions})
    _apply_schedule(state, t, plan)
    return state


def _newest_known(state: PlayerState) -> Optional[DeviationId]:
    known = state.known_deviations()
    if not known:
        return None
    return max(known, key=lambda d: (d.period, d.deviator))


def _apply_schedule(state: PlayerState, t: int, plan: EquilibriumPlan) -> None:
    """End-of-stage phase bookkeeping; new tags take effect at stage t+1.

    Every known deviation starts its punishment when its own gossip window
    closes, the latest one superseding whatever regime was running — except
    that a repeat offence by the player already being punished lengthens the
    running punishment rather than restarting it. Between the signal and the
    hand-off, actions keep following the incumbent regime. Punishment
    start/end stages are common knowledge, so under a single running
    deviation all players move in lockstep.
    """
    closing = [
        d for d in state.known_deviations() if plan.timeline(d).gossip_end == t
    ]
    if closing:
        d = max(closing, key=lambda x: (x.period, x.deviator))
        if state.plan_instance != d:
            if (
                isinstance(state.phase, PhaseIII)
                and state.phase.target == d.deviator
            ):
                # the player already under punishment deviated again: serving
                # a full extra span (instead of re-anchoring on the new date)
                # keeps every repeat offence strictly unprofitable
                state.plan_instance = d
                _record_transition(
                    state,
                    t,
                    PhaseIII(
                        target=d.deviator,
                        end_stage=state.phase.end_stage
                        + plan.punishment_span(d.deviator),
                        start_stage=state.phase.start_stage,
                    ),
                    "punishment lengthened",
                )
                return
            if isinstance(state.phase, (PhaseIII, PhaseIV)):
                state.phase_stack.append(state.phase)
            state.plan_instance = d
            state.reward_program = None
            state.known_sequences = {}
            state.reported_sequences = set()
            tl = plan.timeline(d)
            _record_transition(
                state,
                t,
                PhaseIII(
                    target=d.deviator,
                    end_stage=tl.punish_end,
                    start_stage=tl.punish_start,
                ),
                "gossip window closed",
            )
            return

    if isinstance(state.phase, PhaseIII) and t == state.phase.end_stage:
        cur = state.plan_instance
        ph = state.phase
        state.reward_program = RewardProgram(
            deviation=cur,
            uncompensated=plan.uncompensated_stream(cur.deviator),
            punish_start=ph.start_stage,
            punish_end=ph.end_stage,
            comm_span=plan.comm_span,
        )
        # my own punishment actions are known to me without any report
        seq = tuple(
            state.own_actions[s] for s in range(ph.start_stage, ph.end_stage + 1)
        )
        state.known_sequences.setdefault(state.id, seq)
        _maybe_build_compensation(state, t, plan)
        _record_transition(
            state,
            t,
            PhaseIV(target=cur.deviator, bonus=plan.thresholds.rho),
            "punishment complete",
        )
        return

    newest = _newest_known(state)
    if (
        newest is not None
        and isinstance(state.phase, (PhaseI, PhaseII))
        and state.phase != PhaseII(newest)
        and t < plan.timeline(newest).gossip_end
    ):
        _record_transition(state, t, PhaseII(newest), "deviation signal")


def _maybe_build_compensation(state: PlayerState, t: int, plan: EquilibriumPlan) -> None:
    program = state.reward_program
    if program is None or program.compensated is not None:
        return
    if len(state.known_sequences) < plan.game.n_players:
        return
    realized = {p: state.known_sequences[p] for p in state.known_sequences}
    targets = reward_payoffs(
        realized, plan, program.deviation.deviator, span=program.punish_span
    )
    program.compensated_targets = targets
    program.compensated = SorinStream(plan.game, targets, plan.delta)


# ----------------------------------------------------------------- rewards


def reward_report(state: PlayerState, t: int, plan: EquilibriumPlan) -> Dict[int, Tuple[int, ...]]:
    """The punishment-phase action sequences of my neighbors, for flooding.

    Only valid at the first reward stage; the engine transports the payload
    through the same relay fabric the gossip phase uses.
    """
    if not isinstance(state.phase, PhaseIV) or state.reward_program is None:
        raise PreconditionError(
            f"player {state.id} asked for a reward report outside the reward phase"
        )
    program = state.reward_program
    if t != program.reward_start:
        raise PreconditionError(
            f"reward reports are sent at stage {program.reward_start}, not {t}"
        )
    payload = {}
    for j in sorted(neighbors(plan.net, state.id)):
        payload[j] = tuple(
            state.observed_actions[s][j]
            for s in range(program.punish_start, program.punish_end + 1)
        )
    return payload


def reward_payoffs(
    realized: Mapping[int, Sequence[int]],
    plan: EquilibriumPlan,
    k: int,
    span: Optional[int] = None,
) -> np.ndarray:
    """Continuation targets after punishing k, compensated for realized draws.

    Each punisher's target is v' + bonus shifted by the discounted difference
    between her realized and expected punishment payoff, scaled back through
    the reward-prefix delay, so her total discounted payoff is the same for
    every support sequence she might have drawn. The punished player's target
    stays exactly v'_k. ``span`` is the punishment length actually served
    (longer than nominal when the punished player re-offended mid-span).
    """
    game, delta = plan.game, plan.delta
    n = game.n_players
    T = span if span is not None else plan.punishment_span(k)
    L = plan.comm_span
    if sorted(realized) != list(range(1, n + 1)):
        raise InputError("realized sequences must cover every player exactly once")
    for p, seq in realized.items():
        if len(seq) != T:
            raise InputError(
                f"player {p}'s punishment sequence has length {len(seq)}, expected {T}"
            )
    discounted = np.zeros(n)
    for s in range(T):
        profile = tuple(int(realized[p][s]) for p in range(1, n + 1))
        discounted += (delta**s) * game.payoff(profile)
    expected_stage = plan.expected_punishment_payoffs(k)
    expected = expected_stage * (1.0 - delta**T) / (1.0 - delta)
    base = plan.reward_base(k)
    adjust = (1.0 - delta) * (discounted - expected) / (delta ** (L + T))
    targets = base - adjust
    targets[k - 1] = plan.thresholds.v_prime[k - 1]
    if not feasible_ir(game, targets):
        raise FeasibilityError(
            "compensated reward target is outside the feasible strictly rational "
            "set; the bonus or discount is misconfigured for this punishment",
            certificate={"targets": targets.tolist(), "k": k},
        )
    return targets
