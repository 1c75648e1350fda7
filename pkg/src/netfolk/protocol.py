"""Block-structured gossip over the network: composing, vetting, relaying.

One protocol *instance* tracks one announced deviation (who deviated, when).
Time after the deviation is split into blocks; a player who knows the
deviation announces it at every stage of every block, authenticated by a
fresh per-stage key. Listeners accept an announcement only after hearing it
enough times without a substantiated accusation against the announcer, which
is what lets honest players outrun a liar who can corrupt at most one
broadcast per stage.

Players are 1-based; stages are 1-based; blocks are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import DegenerateProtocolError, InputError
from .graph import Network, distance, neighbors

KEY_BITS = 64
_KEY_HIGH = 2 ** KEY_BITS

LIE_DETECTED_TAG = "lie-detected"
UNINFORMED_TAG = "uninformed"


class DeviationId(NamedTuple):
    """Identifies one announced deviation: who moved off-script, and when."""

    deviator: int
    period: int


class AccusationTriplet(NamedTuple):
    """Names an accused broadcaster, the stage in question, and a key.

    The key equals the accused's true per-stage key when the sender actually
    detected a lie (substantiating the accusation to anyone who observed that
    key), and is a fresh random decoy otherwise, so traffic is uninformative.
    """

    accused: int
    stage: int
    key: int


@dataclass(frozen=True)
class ProtocolMessage:
    """One player's per-stage broadcast, delivered identically to neighbors.

    ``deviation_slot`` carries every deviation the sender currently announces
    (empty tuple when none); ``neighbor_triplets`` holds exactly one
    accusation slot per neighbor; ``relay_triplets`` forwards accusations
    about non-neighbors received a stage earlier.
    """

    sender: int
    stage: int
    deviation_slot: Tuple[DeviationId, ...]
    auth_key: int
    neighbor_triplets: Tuple[Tuple[int, AccusationTriplet], ...]
    relay_triplets: Tuple[AccusationTriplet, ...]

    def claims(self) -> Tuple[DeviationId, ...]:
        return self.deviation_slot

    def triplet_for(self, j: int) -> Optional[AccusationTriplet]:
        for neighbor, triplet in self.neighbor_triplets:
            if neighbor == j:
                return triplet
        return None

    def all_triplets(self) -> Iterable[AccusationTriplet]:
        for _, triplet in self.neighbor_triplets:
            yield triplet
        yield from self.relay_triplets


def protocol_horizon(n_prime: int) -> int:
    """Length of the whole correction window: 1 + (n'-3)(2n'-3)."""
    if n_prime <= 3:
        raise DegenerateProtocolError(
            f"longest cycle length {n_prime} leaves no communication blocks "
            "(need at least 4); pass an explicit override to proceed"
        )
    return 1 + (n_prime - 3) * (2 * n_prime - 3)


@dataclass(frozen=True)
class BlockPartition:
    """The n'-3 blocks of 2n'-3 stages that follow a deviation at t0."""

    t0: int
    n_prime: int

    def __post_init__(self):
        if self.n_prime <= 3:
            raise DegenerateProtocolError(
                f"longest cycle length {self.n_prime} leaves no communication blocks"
            )
        if self.t0 < 0:
            raise InputError(f"deviation stage must be nonnegative, got {self.t0}")

    @property
    def block_length(self) -> int:
        return 2 * self.n_prime - 3

    @property
    def block_count(self) -> int:
        return self.n_prime - 3

    @property
    def horizon(self) -> int:
        return 1 + self.block_count * self.block_length

    @property
    def first_stage(self) -> int:
        return self.t0 + 1

    @property
    def last_stage(self) -> int:
        """Last stage covered by any block."""
        return self.t0 + self.block_count * self.block_length

    def block_interval(self, b: int) -> range:
        if not (1 <= b <= self.block_count):
            raise InputError(f"block {b} out of range 1..{self.block_count}")
        start = self.t0 + 1 + (b - 1) * self.block_length
        return range(start, start + self.block_length)

    def block_of(self, stage: int) -> Optional[int]:
        """1-based block containing the stage; 0 before block 1; None after."""
        if stage <= self.t0:
            return 0
        offset = stage - self.t0 - 1
        b = offset // self.block_length + 1
        return b if b <= self.block_count else None

    def blocks(self) -> Tuple[range, ...]:
        return tuple(self.block_interval(b) for b in range(1, self.block_count + 1))


def block_partition(t0: int, n_prime: int) -> BlockPartition:
    """The block schedule every informed player derives from (t0, n')."""
    return BlockPartition(t0=t0, n_prime=n_prime)


def draw_keys(rng: np.random.Generator, count: int) -> List[int]:
    """Fresh per-stage tokens: one broadcast key plus one decoy per neighbor."""
    return [int(x) for x in rng.integers(0, _KEY_HIGH, size=count, dtype=np.uint64)]


@dataclass
class PendingRelay:
    """A non-neighbor accusation awaiting its forward (with one retry)."""

    triplet: AccusationTriplet
    received_at: int
    forwarded: bool = False
    attempts: int = 0


@dataclass
class ProtocolInstanceState:
    """One player's memory about one announced deviation.

    ``key_ledger`` and ``message_log`` describe physical traffic (shared
    verbatim between concurrent instances of the same player); the claim
    indexes, beliefs, and block-decoding results are instance-specific.
    """

    player: int
    deviation: DeviationId
    partition: BlockPartition
    neighbor_list: Tuple[int, ...]
    knows: bool = False
    learned_at_block: Optional[int] = None
    # a police instance: the player directly observed that this deviation never
    # happened, so she logs traffic and accuses claimants but never decodes
    refuted: bool = False
    message_log: Dict[int, Dict[int, ProtocolMessage]] = field(default_factory=dict)
    key_ledger: Dict[int, Dict[int, int]] = field(default_factory=dict)
    pending_relays: List[PendingRelay] = field(default_factory=list)
    believed_knowledge: Dict[int, bool] = field(default_factory=dict)
    # neighbor -> stages at which they announced this instance's deviation
    claim_stages: Dict[int, List[int]] = field(default_factory=dict)
    # (accused neighbor, stage) -> earliest arrival of a key-matching accusation
    blocking_arrivals: Dict[Tuple[int, int], int] = field(default_factory=dict)
    # stage -> neighbors caught lying at that stage (drives next accusations)
    lies_detected: Dict[int, Set[int]] = field(default_factory=dict)
    first_claim_stage: Dict[int, int] = field(default_factory=dict)
    pattern_violation: Dict[int, bool] = field(default_factory=dict)
    seen_relay_keys: Set[AccusationTriplet] = field(default_factory=set)

    def __post_init__(self):
        for j in self.neighbor_list:
            self.key_ledger.setdefault(j, {})
            self.believed_knowledge.setdefault(j, False)
            self.claim_stages.setdefault(j, [])


def new_instance(
    player: int,
    deviation: DeviationId,
    n_prime: int,
    g: Network,
    knows: bool = False,
) -> ProtocolInstanceState:
    """Fresh per-player state for one deviation; initial holders know at block 0."""
    state = ProtocolInstanceState(
        player=player,
        deviation=deviation,
        partition=block_partition(deviation.period, n_prime),
        neighbor_list=tuple(sorted(neighbors(g, player))),
        knows=knows,
        learned_at_block=0 if knows else None,
    )
    return state


def _announces_now(state: ProtocolInstanceState, t: int) -> bool:
    if not state.knows:
        return False
    b = state.partition.block_of(t)
    if not b:  # outside the window (0 = before it, None = after)
        return False
    return b > (state.learned_at_block or 0)


def due_relays(state: ProtocolInstanceState, t: int) -> List[AccusationTriplet]:
    """Triplets this player should forward at stage t (first try or the retry)."""
    out = []
    for p in state.pending_relays:
        if p.forwarded or p.attempts >= 2:
            continue
        if t in (p.received_at + 1, p.received_at + 2):
            out.append(p.triplet)
    return out


def compose_message(
    state: ProtocolInstanceState, t: int, rng: np.random.Generator
) -> ProtocolMessage:
    """The honest stage-t broadcast for a single-instance player.

    Always draws one broadcast key plus one token per neighbor (the token is
    published as a decoy unless a lie by that neighbor was detected at t-1, in
    which case the neighbor's true observed key substantiates the accusation).
    The draw count is constant so seeded streams stay aligned across runs.
    """
    tokens = draw_keys(rng, 1 + len(state.neighbor_list))
    auth_key = tokens[0]
    caught = state.lies_detected.get(t - 1, set())
    triplets = []
    for idx, j in enumerate(state.neighbor_list):
        true_key = state.key_ledger[j].get(t - 1)
        if j in caught and true_key is not None:
            triplets.append((j, AccusationTriplet(j, t - 1, true_key)))
        else:
            triplets.append((j, AccusationTriplet(j, t - 1, tokens[1 + idx])))
    relays = tuple(due_relays(state, t))
    if len(relays) > state.partition.horizon:
        raise InputError(
            f"relay load {len(relays)} exceeds capacity {state.partition.horizon}"
        )
    slot = (state.deviation,) if _announces_now(state, t) else ()
    return ProtocolMessage(
        sender=state.player,
        stage=t,
        deviation_slot=slot,
        auth_key=auth_key,
        neighbor_triplets=tuple(triplets),
        relay_triplets=relays,
    )


def confirm_broadcast(state: ProtocolInstanceState, sent: ProtocolMessage, t: int) -> None:
    """Record what actually went out at stage t, scheduling relay retries.

    A pending relay that missed its first forwarding (the sender's broadcast
    was corrupted that stage) is retried exactly once, a stage later.
    """
    actually_sent = set(sent.relay_triplets)
    for p in state.pending_relays:
        if p.forwarded or p.attempts >= 2:
            continue
        if t == p.received_at + 1 or t == p.received_at + 2:
            p.attempts += 1
            if p.triplet in actually_sent:
                p.forwarded = True
    # entries past both forwarding dates can never become due again; dropping
    # them keeps the per-stage scans proportional to recent arrivals, not to
    # the whole window (seen_relay_keys owns dedup, so this loses nothing)
    state.pending_relays = [
        p
        for p in state.pending_relays
        if not p.forwarded and p.attempts < 2 and p.received_at >= t - 1
    ]


def detect_lie(
    state: ProtocolInstanceState,
    j: int,
    incoming: Optional[ProtocolMessage],
    t: int,
    g: Network,
) -> bool:
    """Did neighbor j's stage-t broadcast betray a lie about this deviation?

    Two tests: a player everyone can tell must know the deviation announced
    something else (or nothing), or a player announced it faster than gossip
    can possibly travel from the deviator.
    """
    if j not in state.neighbor_list:
        raise InputError(f"player {j} is not a neighbor of {state.player}")
    dev = state.deviation
    slot = incoming.deviation_slot if incoming is not None else ()

    # case A: a deemed knower failed to announce
    b_now = state.partition.block_of(t)
    if b_now and state.knows and b_now > (state.learned_at_block or 0):
        deemed = state.believed_knowledge.get(j, False) or j == dev.deviator or (
            j in neighbors(g, dev.deviator)
        )
        if deemed and dev not in slot:
            return True

    # case B: announcing faster than the deviation could have propagated
    if dev in slot:
        b = state.partition.block_of(t)
        if b is not None and b < distance(g, j, dev.deviator):
            return True
    return False


def messages_with_same_period_conflict(msg: ProtocolMessage) -> bool:
    """Two distinct deviations claimed for one period in a single broadcast."""
    periods: Dict[int, int] = {}
    for dev in msg.deviation_slot:
        if periods.setdefault(dev.period, dev.deviator) != dev.deviator:
            return True
    return False


@dataclass(frozen=True)
class DetectionConfig:
    """Optional vetting layers on top of the two always-on checks.

    ``consecutive_decode`` restricts decoding to runs of consecutive stages.
    ``pattern_check`` flags announcers whose first announcement falls outside
    the claimed schedule (not at a block start, or outside the window).
    ``same_period_check`` flags broadcasts claiming two deviators for one
    period and claims that contradict a known deviation of the same period.
    """

    consecutive_decode: bool = False
    pattern_check: bool = True
    same_period_check: bool = True


DEFAULT_DETECTION = DetectionConfig()


def process_incoming(
    state: ProtocolInstanceState,
    per_neighbor_msgs: Mapping[int, Optional[ProtocolMessage]],
    t: int,
    g: Network,
    config: DetectionConfig = DEFAULT_DETECTION,
    externally_flagged: Optional[Set[int]] = None,
) -> ProtocolInstanceState:
    """Advance one player's instance state through stage t's deliveries.

    Records keys and claims, vets each announcer, queues relays (with the
    one-stage retry window), and — when stage t closes a block — runs the
    decoding rule and promotes the player to a knower on success.
    """
    caught: Set[int] = set(externally_flagged or ())
    for j, msg in per_neighbor_msgs.items():
        if j not in state.neighbor_list:
            raise InputError(f"message from non-neighbor {j} delivered to {state.player}")
        if msg is None:
            pass
        else:
            state.message_log.setdefault(t, {})[j] = msg
            state.key_ledger[j][t] = msg.auth_key

        if detect_lie(state, j, msg, t, g):
            caught.add(j)

        if msg is None:
            continue

        if config.same_period_check:
            if messages_with_same_period_conflict(msg):
                caught.add(j)
            for dev in msg.deviation_slot:
                if (
                    state.knows
                    and dev.period == state.deviation.period
                    and dev != state.deviation
                ):
                    caught.add(j)

        if state.deviation in msg.deviation_slot:
            if j not in state.first_claim_stage:
                state.first_claim_stage[j] = t
                if config.pattern_check:
                    b = state.partition.block_of(t)
                    ok_start = (
                        b is not None
                        and b >= 1
                        and t == state.partition.block_interval(b)[0]
                    )
                    if not ok_start:
                        state.pattern_violation[j] = True
                        caught.add(j)
            elif config.pattern_check and state.partition.block_of(t) is None:
                state.pattern_violation[j] = True
                caught.add(j)
            state.claim_stages[j].append(t)
            state.believed_knowledge[j] = True

        my_neighbors = set(state.neighbor_list)
        for triplet in msg.all_triplets():
            accused, tau, key = triplet
            if accused == state.player:
                continue
            if accused in my_neighbors:
                true_key = state.key_ledger[accused].get(tau)
                if true_key is not None and key == true_key:
                    prev = state.blocking_arrivals.get((accused, tau))
                    if prev is None or t < prev:
                        state.blocking_arrivals[(accused, tau)] = t
            else:
                if triplet not in state.seen_relay_keys:
                    state.seen_relay_keys.add(triplet)
                    state.pending_relays.append(PendingRelay(triplet, received_at=t))

    if caught:
        state.lies_detected.setdefault(t, set()).update(caught)

    partition = state.partition
    b = partition.block_of(t)
    if b and t == partition.block_interval(b)[-1] and not state.knows and not state.refuted:
        learned = decode_block(
            state, partition.block_interval(b), partition.n_prime,
            consecutive_only=config.consecutive_decode,
        )
        if learned is not None:
            state.knows = True
            state.learned_at_block = b
    return state


def decode_block(
    state: ProtocolInstanceState,
    block: Sequence[int],
    n_prime: int,
    consecutive_only: bool = False,
) -> Optional[DeviationId]:
    """Apply the end-of-block acceptance rule for this instance's deviation.

    The deviation is learned when some neighbor announced it at n'-1 stages
    of the block and no substantiated accusation against that neighbor's
    anchor stage arrived in time: for a candidate stage subsequence starting
    at tau_1 and ending at tau_last, only a key-matching accusation about
    (neighbor, tau_1) delivered by stage tau_last blocks it, and any
    surviving subsequence suffices.
    """
    if state.knows:
        return None
    needed = n_prime - 1
    block_set = range(block[0], block[-1] + 1)
    for j in state.neighbor_list:
        stages = [s for s in state.claim_stages.get(j, ()) if s in block_set]
        stages.sort()
        if len(stages) < needed:
            continue
        if consecutive_only:
            starts = [
                a for a in range(len(stages) - needed + 1)
                if stages[a + needed - 1] - stages[a] == needed - 1
            ]
        else:
            starts = list(range(len(stages) - needed + 1))
        for a in starts:
            anchor = stages[a]
            deadline = stages[a + needed - 1]
            arrival = state.blocking_arrivals.get((j, anchor))
            if arrival is None or arrival > deadline:
                return state.deviation
    return None


def false_announcement_response(g: Network, announcer: int, accused: int) -> Dict[int, str]:
    """How the announcer's audience splits when the accusation is baseless.

    Common neighbors of the accused and the announcer saw the accused conform,
    so they treat the announcer as a caught liar; the announcer's remaining
    neighbors have nothing to corroborate and behave as uninformed.
    """
    if accused not in neighbors(g, announcer):
        raise InputError(
            f"player {accused} is not adjacent to announcer {announcer}"
        )
    n_accused = neighbors(g, accused)
    n_announcer = neighbors(g, announcer)
    tags: Dict[int, str] = {}
    for p in sorted(n_announcer):
        if p in n_accused:
            tags[p] = LIE_DETECTED_TAG
        else:
            tags[p] = UNINFORMED_TAG
    return tags
