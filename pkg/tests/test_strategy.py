"""Tests for the per-player strategy automaton."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netfolk.errors import FeasibilityError, InputError, PreconditionError
from netfolk.fixtures import contribution_ring, matched_bonus_square, ring
from netfolk.game import SorinStream, StructuredGame
from netfolk.graph import neighbors
from netfolk.protocol import DeviationId, confirm_broadcast, draw_keys
from netfolk.simulator import _NOTHING_SENT, _compose_merged
from netfolk.strategy import (
    PHASE_I,
    DeviationTimeline,
    Fallback,
    PhaseII,
    PhaseIII,
    PhaseIV,
    RewardProgram,
    StageObservation,
    build_plan,
    choose_action,
    conforms,
    initial_state,
    observe_and_transition,
    reward_payoffs,
    reward_report,
)

DELTA_A = 0.95
DELTA_B = 0.97


@pytest.fixture(scope="module")
def plan_a():
    eco = contribution_ring()
    return build_plan(eco.game, eco.net, eco.v, delta=DELTA_A)


@pytest.fixture(scope="module")
def plan_a_short():
    """Ring economy with a hand-set 3-stage punishment, for schedule walks."""
    eco = contribution_ring()
    base = build_plan(eco.game, eco.net, eco.v, delta=DELTA_A)
    th = dataclasses.replace(base.thresholds, T=(3, 3, 3, 3))
    return build_plan(eco.game, eco.net, eco.v, delta=DELTA_A, thresholds_data=th)


@pytest.fixture(scope="module")
def plan_b():
    eco = matched_bonus_square()
    return build_plan(eco.game, eco.net, eco.v, delta=DELTA_B)


# ------------------------------------------------------------- construction


def test_plan_layout_on_contribution_ring(plan_a):
    assert plan_a.n_prime == 4
    assert plan_a.comm_span == 6
    assert all(t >= 1 for t in plan_a.thresholds.T)
    assert len(plan_a.path_profile(1)) == 4


def test_plan_rejects_player_count_mismatch():
    eco = contribution_ring()
    with pytest.raises(InputError):
        build_plan(eco.game, ring(5), eco.v, delta=DELTA_A)


def test_plan_rejects_unnormalized_game(plan_a):
    # same contribution ring shifted up by 1: minmax becomes 1, not 0
    net = ring(4)
    self_terms = {i: np.array([1.0, 0.0]) for i in range(1, 5)}
    edge = np.array([[0.0, 2.0], [0.0, 2.0]])
    edge_terms = {}
    for a, b in net.edges:
        edge_terms[(a, b)] = edge
        edge_terms[(b, a)] = edge
    pool = [(0, 0, 0, 0), (1, 1, 1, 1)]
    shifted = StructuredGame(net, (2, 2, 2, 2), self_terms, edge_terms, pool)
    # reuse certified thresholds but strip the certificates so the plan
    # recomputes the minmax for the shifted game
    th = dataclasses.replace(plan_a.thresholds, certificates=())
    with pytest.raises(InputError, match="normalize"):
        build_plan(shifted, net, [2.7] * 4, delta=DELTA_A, thresholds_data=th)


def test_plan_rejects_delta_below_targeting_bound():
    eco = contribution_ring()
    with pytest.raises(InputError, match="targeting bound"):
        build_plan(eco.game, eco.net, eco.v, delta=0.3)


def test_timeline_window_arithmetic():
    tl = DeviationTimeline(DeviationId(2, 3), comm_span=6, punish_span=5)
    assert tl.t0 == 3
    assert tl.gossip_end == 9
    assert tl.punish_start == 10
    assert tl.punish_end == 14
    assert tl.reward_start == 15
    assert tl.uncompensated_start == 16
    assert tl.uncompensated_end == 20
    assert tl.compensated_start == 21


@settings(max_examples=60, deadline=None)
@given(
    t0=st.integers(min_value=1, max_value=10**6),
    n_prime=st.integers(min_value=4, max_value=40),
    span=st.integers(min_value=1, max_value=10**4),
)
def test_timeline_windows_tile_without_gaps(t0, n_prime, span):
    comm = 1 + (n_prime - 3) * (2 * n_prime - 3)
    tl = DeviationTimeline(DeviationId(1, t0), comm_span=comm, punish_span=span)
    assert tl.punish_start == tl.gossip_end + 1
    assert tl.reward_start == tl.punish_end + 1
    assert tl.uncompensated_start == tl.reward_start + 1
    assert tl.compensated_start == tl.uncompensated_end + 1
    # the uncompensated stretch plus the report stage covers one comm span
    assert tl.uncompensated_end - tl.reward_start + 1 == comm
    assert tl.punish_end - tl.punish_start + 1 == span


# ------------------------------------------------------------ action choice


def test_path_phase_follows_shared_stream(plan_a):
    state = initial_state(2, np.random.SeedSequence(1))
    for t in range(1, 11):
        assert choose_action(state, t, plan_a) == plan_a.path_action(2, t)
    state.phase = PhaseII(DeviationId(3, 5))
    assert choose_action(state, 7, plan_a) == plan_a.path_action(2, 7)


def test_punisher_draws_match_minmax_frequencies(plan_b):
    state = initial_state(2, np.random.SeedSequence(42))
    state.phase = PhaseIII(target=1, end_stage=10**9)
    draws = [choose_action(state, t, plan_b) for t in range(1, 10_001)]
    assert set(draws) <= {0, 1}
    freq = sum(draws) / len(draws)
    assert abs(freq - 0.5) < 0.02
    for a in draws[:200]:
        assert conforms(plan_b, state.phase, 2, a, 5)


def test_pinned_punisher_plays_zero(plan_a):
    # player 3 does not affect player 1's payoff on the ring, so the minmax
    # profile leaves her unspecified and the plan pins her to action 0
    assert plan_a.punisher_mix(3, 1) is None
    state = initial_state(3, np.random.SeedSequence(2))
    state.phase = PhaseIII(target=1, end_stage=10**9)
    assert choose_action(state, 5, plan_a) == 0


def test_target_best_responds_during_punishment(plan_b):
    state = initial_state(1, np.random.SeedSequence(3))
    state.phase = PhaseIII(target=1, end_stage=10**9)
    assert choose_action(state, 5, plan_b) == plan_b.target_response(1)


def test_fallback_phase_repeats_frozen_action(plan_a):
    state = initial_state(1, np.random.SeedSequence(4))
    state.phase = Fallback(action=1)
    assert [choose_action(state, t, plan_a) for t in (1, 5, 99)] == [1, 1, 1]


def test_reward_phase_without_program_raises(plan_a):
    state = initial_state(1, np.random.SeedSequence(5))
    state.phase = PhaseIV(target=2, bonus=plan_a.thresholds.rho)
    with pytest.raises(PreconditionError):
        choose_action(state, 20, plan_a)


def test_reward_phase_start_and_streams(plan_a_short):
    plan = plan_a_short
    dev = DeviationId(2, 3)
    tl = plan.timeline(dev)
    assert (tl.reward_start, tl.uncompensated_end, tl.compensated_start) == (13, 18, 19)
    state = initial_state(1, np.random.SeedSequence(6))
    state.phase = PhaseIV(target=2, bonus=plan.thresholds.rho)
    state.reward_program = RewardProgram(
        dev,
        uncompensated=plan.uncompensated_stream(2),
        punish_start=tl.punish_start,
        punish_end=tl.punish_end,
        comm_span=plan.comm_span,
    )
    assert choose_action(state, 13, plan) == 0
    for t in range(14, 19):
        want = plan.uncompensated_stream(2).action_at(t - 13)[0]
        assert choose_action(state, t, plan) == want
    with pytest.raises(PreconditionError, match="compensated"):
        choose_action(state, 19, plan)
    comp = SorinStream(plan.game, plan.reward_base(2), plan.delta)
    state.reward_program.compensated = comp
    assert choose_action(state, 19, plan) == comp.action_at(1)[0]
    assert choose_action(state, 20, plan) == comp.action_at(2)[0]


# ------------------------------------------------------------------ vetting


def test_conforms_accepts_support_and_rejects_off_support(plan_a, plan_b):
    tag = PhaseIII(target=1, end_stage=50)
    # mixed punisher: both support actions pass
    assert conforms(plan_b, tag, 2, 0, 10)
    assert conforms(plan_b, tag, 2, 1, 10)
    # pure punisher: only her support action passes
    assert conforms(plan_b, tag, 3, 0, 10)
    assert not conforms(plan_b, tag, 3, 1, 10)
    # the ring target strictly prefers the best response
    assert conforms(plan_a, tag, 1, 0, 10)
    assert not conforms(plan_a, tag, 1, 1, 10)
    # path conformity is exact
    assert conforms(plan_a, PHASE_I, 2, plan_a.path_action(2, 4), 4)
    assert not conforms(plan_a, PHASE_I, 2, 1 - plan_a.path_action(2, 4), 4)


def test_false_claim_about_my_neighbor_opens_police_instance(plan_a):
    from netfolk.protocol import ProtocolMessage

    state = initial_state(1, np.random.SeedSequence(11))
    fake = DeviationId(2, 4)  # player 2 is 1's neighbor and never deviated
    lie = ProtocolMessage(
        sender=4, stage=5, deviation_slot=(fake,), auth_key=7,
        neighbor_triplets=(), relay_triplets=(),
    )
    t = 5
    state.own_actions[t] = plan_a.path_action(1, t)
    obs = StageObservation(
        actions={2: plan_a.path_action(2, t), 4: plan_a.path_action(4, t)},
        messages={2: None, 4: lie},
    )
    observe_and_transition(state, obs, t, plan_a)
    assert fake in state.refuted
    inst = state.protocol_states[fake]
    assert inst.refuted and not inst.knows
    assert 4 in inst.lies_detected[t]
    assert inst.key_ledger[4][t] == 7  # the liar's key is on record
    # repeat claims keep getting flagged, and the instance never promotes
    lie2 = ProtocolMessage(
        sender=4, stage=6, deviation_slot=(fake,), auth_key=9,
        neighbor_triplets=(), relay_triplets=(),
    )
    state.own_actions[6] = plan_a.path_action(1, 6)
    obs2 = StageObservation(
        actions={2: plan_a.path_action(2, 6), 4: plan_a.path_action(4, 6)},
        messages={2: None, 4: lie2},
    )
    observe_and_transition(state, obs2, 6, plan_a)
    assert 4 in inst.lies_detected[6]
    assert not inst.knows
    # the phase machine never reacts to a refuted instance
    assert state.phase == PHASE_I


def test_multilateral_deviation_triggers_static_response(plan_a):
    state = initial_state(1, np.random.SeedSequence(7))
    t = 1
    path = plan_a.path_profile(t)
    state.own_actions[t] = path[0]
    bad = {2: 1 - path[1], 4: 1 - path[3]}
    observe_and_transition(state, StageObservation(actions=bad), t, plan_a)
    assert isinstance(state.phase, Fallback)
    assert state.transitions[-1]["cause"] == "multilateral deviation"
    assert state.protocol_states == {}
    # the frozen response is a one-shot best reply: contributing never pays
    assert state.phase.action == 0
    # and the state stays parked there
    observe_and_transition(state, StageObservation(actions={2: 0, 4: 1}), t + 1, plan_a)
    assert isinstance(state.phase, Fallback)


# -------------------------------------------------------------------- walk


def _drive_walk(plan, horizon=22, t_dev=3, deviator=2, extra_devs=()):
    """All-honest play except scripted deviations; hand-rolled transport."""
    net = plan.net
    n = plan.game.n_players
    states = {i: initial_state(i, np.random.SeedSequence(100 + i)) for i in range(1, n + 1)}
    nbrs = {i: sorted(neighbors(net, i)) for i in range(1, n + 1)}
    forced = {t_dev: deviator, **{s: p for s, p in extra_devs}}
    realized_log = {}
    for t in range(1, horizon + 1):
        actions = {i: choose_action(states[i], t, plan) for i in states}
        if t in forced:
            actions[forced[t]] = 1 - actions[forced[t]]
        realized_log[t] = dict(actions)

        messages = {}
        for i, s in states.items():
            tokens = draw_keys(s.rng, 1 + len(nbrs[i]))
            msg = _compose_merged(s, t, tokens)
            for inst in s.protocol_states.values():
                confirm_broadcast(inst, msg if msg is not None else _NOTHING_SENT, t)
            messages[i] = msg

        reports = {}
        if any(isinstance(s.phase, PhaseIV) for s in states.values()):
            for i, s in states.items():
                if t == s.reward_program.reward_start:
                    reports[i] = reward_report(s, t, plan)

        for i, s in states.items():
            entries = {}
            if i in reports:
                entries.update(reports[i])
            for j in nbrs[i]:
                entries.update(reports.get(j, {}))
            obs = StageObservation(
                actions={j: actions[j] for j in nbrs[i]},
                messages={j: messages[j] for j in nbrs[i]},
                reward_entries=entries,
            )
            s.own_actions[t] = actions[i]
            observe_and_transition(s, obs, t, plan)
    return states, realized_log


def test_full_schedule_walk_on_ring(plan_a_short):
    plan = plan_a_short
    dev = DeviationId(2, 3)
    tl = plan.timeline(dev)
    assert (tl.gossip_end, tl.punish_start, tl.punish_end) == (9, 10, 12)
    states, realized = _drive_walk(plan)

    # the deviator's neighbors witness at once; the far player decodes the
    # claims by the end of the first block; the deviator vets herself
    for i in (1, 2, 3):
        assert states[i].protocol_states[dev].learned_at_block == 0
    far = states[4].protocol_states[dev]
    assert far.knows and far.learned_at_block == 1

    by_player = {i: {tr["stage"]: tr for tr in states[i].transitions} for i in states}
    for i in (1, 2, 3):
        assert by_player[i][3]["to_phase"] == "PhaseII"
    assert by_player[4][8]["to_phase"] == "PhaseII"
    for i in states:
        assert by_player[i][9]["to_phase"] == "PhaseIII"
        assert by_player[i][9]["cause"] == "gossip window closed"
        assert by_player[i][12]["to_phase"] == "PhaseIV"
        assert states[i].plan_instance == dev
        assert max(by_player[i]) == 12  # no transitions after the reward entry

    # punishment actions: everyone holds at 0 for the whole span
    for t in (10, 11, 12):
        assert realized[t] == {1: 0, 2: 0, 3: 0, 4: 0}
    # the reward entry stage is the all-zeros handshake
    assert realized[13] == {1: 0, 2: 0, 3: 0, 4: 0}

    # punishment was pure, so compensation is a no-op: targets equal the base
    for i, s in states.items():
        prog = s.reward_program
        assert prog is not None and prog.compensated is not None
        assert np.allclose(prog.compensated_targets, plan.reward_base(2), atol=1e-12)
        assert prog.compensated_targets[1] == pytest.approx(
            plan.thresholds.v_prime[1], abs=1e-12
        )
        assert s.known_sequences == {p: (0, 0, 0) for p in range(1, 5)}
        assert not s.refuted
        for inst in s.protocol_states.values():
            assert not inst.lies_detected

    # reward streams are on script from stage 14 onward
    stream = plan.uncompensated_stream(2)
    for t in range(14, 19):
        want = stream.action_at(t - 13)
        assert realized[t] == {i: want[i - 1] for i in range(1, 5)}

    # byte-for-byte determinism of the whole walk
    states2, realized2 = _drive_walk(plan)
    assert realized2 == realized
    for i in states:
        assert states2[i].transitions == states[i].transitions


def test_repeat_offence_lengthens_running_punishment(plan_a_short):
    """A second deviation by the punished player extends her span by a full T
    instead of restarting it, and the reward machinery follows the real dates."""
    plan = plan_a_short
    T = plan.thresholds.T[1]
    states, realized = _drive_walk(plan, horizon=24, extra_devs=((5, 2),))

    first, second = DeviationId(2, 3), DeviationId(2, 5)
    for i, s in states.items():
        assert set(s.protocol_states) == {first, second}
        assert s.protocol_states[second].knows
        assert s.plan_instance == second
        by_stage = {tr["stage"]: tr for tr in s.transitions}
        assert by_stage[9]["cause"] == "gossip window closed"
        assert by_stage[11]["cause"] == "punishment lengthened"
        assert by_stage[11]["from_phase"] == "PhaseIII"
        assert by_stage[11]["to_phase"] == "PhaseIII"
        assert by_stage[15]["cause"] == "punishment complete"
        assert max(by_stage) == 15

    # the doubled span is served in one unbroken block of minmax play,
    # followed by the handshake stage
    for t in range(10, 17):
        assert realized[t] == {1: 0, 2: 0, 3: 0, 4: 0}

    stream = plan.uncompensated_stream(2)
    for t in range(17, 22):
        want = stream.action_at(t - 16)
        assert realized[t] == {i: want[i - 1] for i in range(1, 5)}

    for i, s in states.items():
        prog = s.reward_program
        assert (prog.punish_start, prog.punish_end) == (10, 15)
        assert prog.punish_span == 2 * T
        assert s.known_sequences == {p: (0,) * (2 * T) for p in range(1, 5)}
        # pure punishment: the doubled span still compensates to the base
        assert prog.compensated is not None
        assert np.allclose(prog.compensated_targets, plan.reward_base(2), atol=1e-12)
    comp = states[1].reward_program.compensated
    for t in (22, 23, 24):
        assert realized[t] == {i: comp.action_at(t - 21)[i - 1] for i in range(1, 5)}


def test_walk_reward_report_contents(plan_a_short):
    plan = plan_a_short
    states, _ = _drive_walk(plan, horizon=13)
    s = states[1]
    payload = reward_report(s, 13, plan)
    assert sorted(payload) == [2, 4]
    assert all(seq == (0, 0, 0) for seq in payload.values())
    with pytest.raises(PreconditionError, match="stage"):
        reward_report(s, 14, plan)
    fresh = initial_state(1, np.random.SeedSequence(0))
    with pytest.raises(PreconditionError, match="reward"):
        reward_report(fresh, 13, plan)


# ------------------------------------------------------------------ rewards


def test_zero_compensation_reproduces_base_targets(plan_a_short):
    plan = plan_a_short
    realized = {p: (0, 0, 0) for p in range(1, 5)}
    targets = reward_payoffs(realized, plan, 2)
    assert np.allclose(targets, plan.reward_base(2), atol=1e-12)
    assert targets[1] == pytest.approx(plan.thresholds.v_prime[1], abs=1e-12)


def test_indifference_across_punisher_draws(plan_b):
    """The compensated target makes punisher 2's total exactly draw-free."""
    th = dataclasses.replace(plan_b.thresholds, T=(4, 4, 4, 4))
    plan = build_plan(
        plan_b.game, plan_b.net, plan_b.v, delta=DELTA_B, thresholds_data=th
    )
    delta, T, L = plan.delta, 4, plan.comm_span
    totals = []
    for bits in range(16):
        seq2 = tuple((bits >> s) & 1 for s in range(4))
        realized = {1: (0,) * 4, 2: seq2, 3: (0,) * 4, 4: (0,) * 4}
        targets = reward_payoffs(realized, plan, 1)
        assert targets[0] == pytest.approx(plan.thresholds.v_prime[0], abs=1e-12)
        r2 = sum(
            delta**s
            * plan.game.payoff(tuple(realized[p][s] for p in range(1, 5)))[1]
            for s in range(T)
        )
        totals.append((1 - delta) * r2 + delta ** (T + L) * targets[1])
    assert max(totals) - min(totals) < 1e-9


def test_reward_payoffs_validates_input(plan_a_short):
    plan = plan_a_short
    with pytest.raises(InputError, match="length"):
        reward_payoffs({1: (0, 0), 2: (0, 0, 0), 3: (0, 0, 0), 4: (0, 0, 0)}, plan, 2)
    with pytest.raises(InputError, match="every player"):
        reward_payoffs({1: (0, 0, 0), 2: (0, 0, 0), 3: (0, 0, 0)}, plan, 2)


def test_infeasible_compensation_is_rejected():
    eco = matched_bonus_square()
    base = build_plan(eco.game, eco.net, eco.v, delta=DELTA_B)
    th = dataclasses.replace(base.thresholds, T=(4, 4, 4, 4))
    plan = build_plan(eco.game, eco.net, eco.v, delta=0.9, thresholds_data=th)
    # wildly off-distribution draws demand a transfer the hull cannot pay
    realized = {1: (1,) * 4, 2: (1,) * 4, 3: (1,) * 4, 4: (1,) * 4}
    with pytest.raises(FeasibilityError):
        reward_payoffs(realized, plan, 1)
