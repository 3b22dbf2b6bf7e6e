"""Replay planning, handle materialization, and the probe-burn guarantee."""

import dataclasses

import pytest

from parcelfuzz.mutator import FuzzCase, Policy, mutate_field
from parcelfuzz.parcel import I32_MAX, Kind, handle_at
from parcelfuzz.recorder import CorpusError, build_dependency_graph
from parcelfuzz.replayer import HandleMap, ReplaySession, Unreplayable, plan
from parcelfuzz.router import ReplyKind
from parcelfuzz.services import fresh_router


def _seq_of(corpus, descriptor, code):
    for record in corpus:
        if record.descriptor == descriptor and record.code == code:
            return record.seq
    raise LookupError((descriptor, code))


@pytest.fixture()
def audio_seqs(corpus):
    return {
        "open_session": _seq_of(corpus, "svc.audio", 3),
        "ping": next(r.seq for r in corpus if r.descriptor.startswith("<anonymous:")),
        "register": _seq_of(corpus, "svc.audio", 2),
    }


# -- planning ---------------------------------------------------------------------


def test_plan_matches_a_brute_force_transitive_closure(corpus, graph):
    direct = {}
    for edge in graph.edges:
        direct.setdefault(edge.consumer_seq, set()).add(edge.producer_seq)

    def closure(seq):
        out = set()
        stack = [seq]
        while stack:
            for parent in direct.get(stack.pop(), ()):
                if parent not in out:
                    out.add(parent)
                    stack.append(parent)
        return out

    for record in corpus:
        expected = sorted(closure(record.seq))
        assert plan(record.seq, graph) == expected


def test_plan_order_is_topological(corpus, graph):
    for edge in graph.edges:
        assert edge.producer_seq < edge.consumer_seq
    for record in corpus:
        for ancestor in plan(record.seq, graph):
            assert ancestor < record.seq


def test_plan_rejects_unknown_seqs(graph):
    with pytest.raises(CorpusError):
        plan(999, graph)


def test_only_the_audio_scenario_needs_supports(corpus, graph, audio_seqs):
    dependents = {seq for seq in graph.nodes if plan(seq, graph)}
    assert dependents == {audio_seqs["ping"], audio_seqs["register"]}
    assert plan(audio_seqs["ping"], graph) == [audio_seqs["open_session"]]
    assert plan(audio_seqs["register"], graph) == [audio_seqs["open_session"]]


# -- replay soundness --------------------------------------------------------------


def test_every_seed_replays_clean_on_a_fresh_router(corpus):
    for record in corpus:
        session = ReplaySession(corpus)
        reply = session.replay_seed(record.seq)
        assert reply.kind is ReplyKind.OK, "seq %d (%s code %d) replied %s" % (
            record.seq,
            record.descriptor,
            record.code,
            reply.kind.value,
        )


def test_one_session_replays_the_whole_corpus_in_order(corpus):
    session = ReplaySession(corpus)
    for record in corpus:
        assert session.replay_seed(record.seq).kind is ReplyKind.OK


# -- the probe burn ------------------------------------------------------------------


def test_live_session_handle_differs_from_the_recorded_one(corpus, audio_seqs):
    session = ReplaySession(corpus)
    session.ensure_supports(audio_seqs["ping"])
    (recorded,) = session.map.dynamic
    live = session.map.dynamic[recorded]
    assert live != recorded
    assert live == recorded + 1  # exactly one handle burned up front


def test_burning_can_be_disabled_for_diagnostics(corpus, audio_seqs):
    session = ReplaySession(corpus, burn_probe=False)
    session.ensure_supports(audio_seqs["ping"])
    (recorded,) = session.map.dynamic
    assert session.map.dynamic[recorded] == recorded
    assert session.probe_handle is None


# -- support bookkeeping ---------------------------------------------------------------


def test_ensure_supports_runs_each_ancestor_once(corpus, audio_seqs):
    session = ReplaySession(corpus)
    first = session.ensure_supports(audio_seqs["ping"])
    assert first == [audio_seqs["open_session"]]
    assert session.ensure_supports(audio_seqs["ping"]) == []
    assert session.ensure_supports(audio_seqs["register"]) == []
    assert session.missing_supports(audio_seqs["register"]) == []


def test_support_failure_is_unreplayable_with_the_culprit_seq(corpus, audio_seqs):
    broken = [
        dataclasses.replace(r, code=99) if r.seq == audio_seqs["open_session"] else r
        for r in corpus
    ]
    session = ReplaySession(broken)
    with pytest.raises(Unreplayable) as info:
        session.ensure_supports(audio_seqs["ping"])
    assert info.value.support_seq == audio_seqs["open_session"]
    assert "REJECTED" in str(info.value)


def test_replay_seed_rejects_unknown_seqs(corpus):
    with pytest.raises(CorpusError):
        ReplaySession(corpus).replay_seed(999)


# -- materialization -------------------------------------------------------------------


def test_unmutated_case_gets_the_live_handle(corpus, audio_seqs):
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = FuzzCase(
        1,
        Policy.SEMI_VALID,
        register.descriptor,
        register.code,
        register.payload_hex,
        register.offsets,
        seed_seq=register.seq,
        field_path=(0,),
        mutation_id="plus_one",
    )
    session = ReplaySession(corpus)
    txn = session.prepare(case)
    slot = handle_at(txn.data.buffer, 0)
    recorded = handle_at(bytes.fromhex(register.payload_hex), 0)
    assert slot == session.map.dynamic[recorded]
    assert slot != recorded
    assert session.router.transact(txn).kind is ReplyKind.OK


def test_pin_directive_keeps_the_mutated_slot_bytes(corpus, audio_seqs):
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = mutate_field(register, (0,), "huge_handle", case_id=1)
    session = ReplaySession(corpus)
    txn = session.prepare(case)
    assert handle_at(txn.data.buffer, 0) == I32_MAX


def test_zero_handle_pin_survives_too(corpus, audio_seqs):
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = mutate_field(register, (0,), "zero_handle", case_id=1)
    session = ReplaySession(corpus)
    txn = session.prepare(case)
    assert handle_at(txn.data.buffer, 0) == 0


def test_swap_directive_resolves_the_other_services_live_handle(corpus, audio_seqs):
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = mutate_field(register, (0,), "cross_service_swap", case_id=1)
    session = ReplaySession(corpus)
    txn = session.prepare(case)
    assert handle_at(txn.data.buffer, 0) == session.router.get_service("svc.queue")


def test_materialize_without_supports_has_no_live_mapping(corpus, audio_seqs):
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = FuzzCase(
        1,
        Policy.SEMI_VALID,
        register.descriptor,
        register.code,
        register.payload_hex,
        register.offsets,
        seed_seq=register.seq,
        field_path=(0,),
        mutation_id="plus_one",
    )
    with pytest.raises(Unreplayable):
        ReplaySession(corpus).materialize(case)


def test_unknown_static_descriptor_is_unreplayable(corpus):
    case = FuzzCase(1, Policy.EMPTY, "svc.ghost", 1, "", ())
    with pytest.raises(Unreplayable):
        ReplaySession(corpus).prepare(case)


def test_empty_policy_case_targets_the_named_service(corpus):
    case = FuzzCase(1, Policy.EMPTY, "svc.queue", 2, "", ())
    session = ReplaySession(corpus)
    txn = session.prepare(case)
    assert txn.target_handle == session.router.get_service("svc.queue")
    assert session.router.transact(txn).kind is ReplyKind.OK


# -- static resolution ------------------------------------------------------------------


def test_static_descriptors_are_recovered_from_manager_records(corpus):
    session = ReplaySession(corpus)
    recorded_names = set(session._recorded_static.values())
    assert recorded_names == {
        "svc.queue",
        "svc.audio",
        "svc.bluetooth",
        "svc.view",
        "svc.graphics",
        "svc.activity",
    }


def test_resolve_static_caches_and_manager_is_special(corpus):
    session = ReplaySession(corpus)
    first = session.resolve_static("svc.view")
    assert session.resolve_static("svc.view") == first
    assert session.resolve_static("service_manager") == 0
    with pytest.raises(Unreplayable):
        session.resolve_static("svc.ghost")


# -- sharing a session across resets (the fast-mode contract) ------------------------------


def test_handle_map_survives_named_service_resets(corpus, audio_seqs):
    session = ReplaySession(corpus)
    session.ensure_supports(audio_seqs["register"])
    before = dict(session.map.dynamic)
    session.router.reset_named_services()
    assert session.ensure_supports(audio_seqs["register"]) == []
    register = next(r for r in corpus if r.seq == audio_seqs["register"])
    case = FuzzCase(
        1,
        Policy.SEMI_VALID,
        register.descriptor,
        register.code,
        register.payload_hex,
        register.offsets,
        seed_seq=register.seq,
        field_path=(0,),
        mutation_id="plus_one",
    )
    txn = session.prepare(case)
    assert session.map.dynamic == before
    assert session.router.transact(txn).kind is ReplyKind.OK


def test_shared_router_can_be_injected(corpus):
    router = fresh_router()
    session = ReplaySession(corpus, router=router)
    assert session.router is router
    assert session.replay_seed(0).kind is ReplyKind.OK


def test_handle_map_defaults_are_independent():
    a, b = HandleMap(), HandleMap()
    a.dynamic[7] = 8
    assert b.dynamic == {}
