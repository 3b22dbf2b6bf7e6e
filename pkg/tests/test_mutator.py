"""Mutation engine: decomposition, the catalog, and campaign enumeration.

The enumeration tests re-derive expected orders with independent tree
walks over the recorded traces rather than calling back into the
functions under test.
"""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parcelfuzz.mutator import (
    BYTES_MUTATIONS,
    CATALOG,
    CATALOG_VERSION,
    F64_MUTATIONS,
    FRAME_BREAKING_MUTATIONS,
    HANDLE_MUTATIONS,
    INT_MUTATIONS,
    RANDOM_LENGTH_CYCLE,
    STRING_MUTATIONS,
    CatalogError,
    ConfigurationError,
    FuzzCase,
    Policy,
    _rebuild,
    decompose,
    enumerate_composites,
    enumerate_fields,
    generate_campaign,
    make_random,
    mutate_field,
    mutate_structural,
    semi_valid_cases,
    structural_mutations_for,
)
from parcelfuzz.parcel import I32_MAX, I32_MIN, Kind, Parcel
from parcelfuzz.recorder import COMPOSITE, SeedRecord, TraceNode
from parcelfuzz.services import all_methods


def _record_for(corpus, descriptor, code=None):
    for record in corpus:
        if record.descriptor == descriptor and (code is None or record.code == code):
            return record
    raise LookupError(descriptor)


def _synthetic_four_ints():
    payload = Parcel()
    for value in (10, 20, 30, 40):
        payload.write_value(Kind.I32, value)
    trace = TraceNode(
        COMPOSITE,
        "request",
        0,
        16,
        [TraceNode("I32", "", i * 4, i * 4 + 4) for i in range(4)],
    )
    return SeedRecord(
        seq=0,
        scenario="synthetic",
        descriptor="svc.queue",
        code=1,
        target=1,
        payload_hex=payload.to_hex(),
        offsets=(),
        trace=trace,
        consumed_handles=(),
        produced_handles=(),
        reply_kind="OK",
    )


# -- catalog contents ----------------------------------------------------------


def test_catalog_is_pinned():
    assert CATALOG_VERSION == "catalog-v1"
    assert INT_MUTATIONS == ("plus_one", "minus_one", "zero", "max", "min", "negate", "flip_high_bit")
    assert F64_MUTATIONS == ("zero", "nan", "pos_inf", "neg_inf", "max", "min_positive")
    assert STRING_MUTATIONS == (
        "empty",
        "long_64k",
        "embedded_nul",
        "invalid_utf8",
        "format_specials",
        "declared_length_plus_4",
    )
    assert BYTES_MUTATIONS == ("truncate_half", "declared_length_max")
    assert HANDLE_MUTATIONS == ("zero_handle", "huge_handle", "cross_service_swap")
    assert CATALOG["BOOL"] is INT_MUTATIONS
    assert FRAME_BREAKING_MUTATIONS == {"declared_length_plus_4", "declared_length_max"}


# -- decomposition and identity --------------------------------------------------


def test_identity_rebuild_reproduces_every_seed_exactly(corpus):
    for record in corpus:
        rebuilt = _rebuild(decompose(record))
        assert rebuilt.to_hex() == record.payload_hex, "record %d" % record.seq
        assert tuple(rebuilt.offsets) == record.offsets


def test_enumerate_fields_matches_an_independent_walk(corpus):
    for record in corpus:
        expected = []

        def walk(node, path):
            if node.is_leaf:
                expected.append(path)
                return
            for i, child in enumerate(node.children):
                walk(child, path + (i,))

        walk(record.trace, ())
        assert enumerate_fields(record) == expected


def test_enumerate_composites_is_preorder_with_root_first(corpus):
    activity = _record_for(corpus, "svc.activity")
    paths = enumerate_composites(activity)
    assert paths[0] == ()
    assert paths == sorted(paths, key=lambda p: (len(p) and 1, p))
    # root, intent wrapper, outer bundle, four entries, nested bundle, its entry
    assert len(paths) == 9


# -- field mutations ---------------------------------------------------------------


def test_int_max_mutation_rewrites_exactly_one_leaf(corpus):
    gfx = _record_for(corpus, "svc.graphics")
    case = mutate_field(gfx, (1,), "max")
    original = bytes.fromhex(gfx.payload_hex)
    mutated = bytes.fromhex(case.payload_hex)
    leaf = gfx.trace.children[1]
    assert len(mutated) == len(original)
    assert struct.unpack_from("<i", mutated, leaf.start)[0] == I32_MAX
    assert mutated[: leaf.start] == original[: leaf.start]
    assert mutated[leaf.end :] == original[leaf.end :]
    assert case.policy is Policy.SEMI_VALID
    assert not case.frame_breaking


def test_int_wrapping_mutations():
    record = _synthetic_four_ints()
    top = mutate_field(record, (0,), "flip_high_bit")
    assert struct.unpack_from("<i", bytes.fromhex(top.payload_hex), 0)[0] == _wrap(10 ^ (1 << 31))
    negated = mutate_field(record, (1,), "negate")
    assert struct.unpack_from("<i", bytes.fromhex(negated.payload_hex), 4)[0] == -20


def _wrap(value):
    value &= 0xFFFFFFFF
    return value - (1 << 32) if value >= (1 << 31) else value


def test_string_empty_shrinks_and_shifts(corpus):
    add = _record_for(corpus, "svc.queue", 1)
    case = mutate_field(add, (0,), "empty")
    assert case.payload_hex == "00000000"


def test_string_long_64k(corpus):
    add = _record_for(corpus, "svc.queue", 1)
    case = mutate_field(add, (0,), "long_64k")
    buf = bytes.fromhex(case.payload_hex)
    assert struct.unpack_from("<i", buf, 0)[0] == 65536
    assert len(buf) == 4 + 65536


def test_string_embedded_nul(corpus):
    add = _record_for(corpus, "svc.queue", 1)
    case = mutate_field(add, (0,), "embedded_nul")
    buf = bytes.fromhex(case.payload_hex)
    declared = struct.unpack_from("<i", buf, 0)[0]
    assert b"\x00" in buf[4 : 4 + declared]
    assert declared == 6  # "alpha" with one NUL inserted


def test_string_invalid_utf8_keeps_string_framing(corpus):
    add = _record_for(corpus, "svc.queue", 1)
    case = mutate_field(add, (0,), "invalid_utf8")
    assert case.payload_hex == "03000000eda08000"


def test_string_declared_length_plus_4_only_touches_the_prefix(corpus):
    add = _record_for(corpus, "svc.queue", 1)
    case = mutate_field(add, (0,), "declared_length_plus_4")
    original = bytes.fromhex(add.payload_hex)
    mutated = bytes.fromhex(case.payload_hex)
    assert struct.unpack_from("<i", mutated, 0)[0] == struct.unpack_from("<i", original, 0)[0] + 4
    assert mutated[4:] == original[4:]
    assert case.frame_breaking


def test_bytes_mutations(corpus):
    activity = _record_for(corpus, "svc.activity")
    # the "blob" entry value is the only BYTES leaf in the corpus
    blob_path = next(
        p for p in enumerate_fields(activity) if _kind_at(activity, p) == "BYTES"
    )
    truncated = mutate_field(activity, blob_path, "truncate_half")
    t_buf = bytes.fromhex(truncated.payload_hex)
    lied = mutate_field(activity, blob_path, "declared_length_max")
    l_buf = bytes.fromhex(lied.payload_hex)
    original = bytes.fromhex(activity.payload_hex)
    node = activity.trace
    for index in blob_path:
        node = node.children[index]
    assert struct.unpack_from("<i", t_buf, node.start)[0] == 2
    assert struct.unpack_from("<i", l_buf, node.start)[0] == I32_MAX
    assert len(l_buf) == len(original)
    assert lied.frame_breaking and not truncated.frame_breaking


def _kind_at(record, path):
    node = record.trace
    for index in path:
        node = node.children[index]
    return node.kind


def test_handle_mutations_pin_or_swap(corpus):
    register = _record_for(corpus, "svc.audio", 2)
    zeroed = mutate_field(register, (0,), "zero_handle")
    assert struct.unpack_from("<i", bytes.fromhex(zeroed.payload_hex), 0)[0] == 0
    assert zeroed.slot_overrides == ((0, "pin"),)
    huge = mutate_field(register, (0,), "huge_handle")
    assert struct.unpack_from("<i", bytes.fromhex(huge.payload_hex), 0)[0] == I32_MAX
    assert huge.slot_overrides == ((0, "pin"),)
    swapped = mutate_field(register, (0,), "cross_service_swap")
    assert swapped.slot_overrides == ((0, "swap:svc.queue"),)
    assert swapped.offsets == (0,)


def test_f64_mutations_apply():
    payload = Parcel().write_value(Kind.F64, 2.5)
    trace = TraceNode(COMPOSITE, "request", 0, 8, [TraceNode("F64", "", 0, 8)])
    record = SeedRecord(0, "synthetic", "svc.queue", 1, 1, payload.to_hex(), (), trace, (), (), "OK")
    tiny = mutate_field(record, (0,), "min_positive")
    assert struct.unpack_from("<d", bytes.fromhex(tiny.payload_hex), 0)[0] == 5e-324
    gone = mutate_field(record, (0,), "nan")
    value = struct.unpack_from("<d", bytes.fromhex(gone.payload_hex), 0)[0]
    assert value != value


def test_mutation_kind_mismatches_are_catalog_errors(corpus):
    gfx = _record_for(corpus, "svc.graphics")
    with pytest.raises(CatalogError):
        mutate_field(gfx, (1,), "empty")
    with pytest.raises(CatalogError):
        mutate_field(gfx, (1,), "no_such_mutation")
    with pytest.raises(CatalogError):
        mutate_field(gfx, (), "zero")
    with pytest.raises(CatalogError):
        mutate_field(gfx, (9, 9), "zero")


# -- structural mutations -------------------------------------------------------------


def test_structural_menu_for_plain_composites(corpus):
    view = _record_for(corpus, "svc.view")
    assert structural_mutations_for(view, ()) == ["duplicate_subtree", "remove_subtree"]


def test_structural_menu_for_bundle_entries(corpus):
    activity = _record_for(corpus, "svc.activity")
    entry_path = _entry_paths(activity)[0]
    menu = structural_mutations_for(activity, entry_path)
    assert menu[:2] == ["duplicate_subtree", "remove_subtree"]
    swaps = menu[2:]
    assert len(swaps) == 6
    assert all(m.startswith("tag_swap_to_") for m in swaps)
    # the first entry is the I32-tagged "mode"; 1 is excluded
    assert "tag_swap_to_1" not in swaps


def _entry_paths(record):
    return [
        p
        for p in enumerate_composites(record)
        if _label_at(record, p).startswith("Bundle.entry[")
    ]


def _label_at(record, path):
    node = record.trace
    for index in path:
        node = node.children[index]
    return node.label


def test_duplicate_subtree_splices_the_leaf_slice(corpus):
    view = _record_for(corpus, "svc.view")
    # duplicate the first child of the root pair node (a leaf view)
    case = mutate_structural(view, (1, 1), "duplicate_subtree")
    original_leaves = decompose(view)
    mutated = bytes.fromhex(case.payload_hex)
    subtree = [leaf for leaf in original_leaves if leaf.path[:2] == (1, 1)]
    assert len(subtree) == 2  # mode + content
    assert case.frame_breaking
    assert len(mutated) > len(bytes.fromhex(view.payload_hex))


def test_remove_subtree_drops_the_leaf_slice(corpus):
    view = _record_for(corpus, "svc.view")
    case = mutate_structural(view, (1, 1), "remove_subtree")
    assert len(bytes.fromhex(case.payload_hex)) < len(bytes.fromhex(view.payload_hex))


def test_tag_swap_rewrites_only_the_tag(corpus):
    activity = _record_for(corpus, "svc.activity")
    entry_path = _entry_paths(activity)[0]
    case = mutate_structural(activity, entry_path, "tag_swap_to_6")
    original = bytes.fromhex(activity.payload_hex)
    mutated = bytes.fromhex(case.payload_hex)
    assert len(mutated) == len(original)
    diff = [i for i, (a, b) in enumerate(zip(original, mutated)) if a != b]
    tag_node = activity.trace
    for index in entry_path + (1,):
        tag_node = tag_node.children[index]
    assert diff and all(tag_node.start <= i < tag_node.end for i in diff)


def test_structural_mutation_validation(corpus):
    view = _record_for(corpus, "svc.view")
    with pytest.raises(CatalogError):
        mutate_structural(view, (0,), "duplicate_subtree")  # a leaf, not a composite
    with pytest.raises(CatalogError):
        mutate_structural(view, (), "tag_swap_to_3")


# -- unstructured policies ---------------------------------------------------------


def test_make_random_is_seed_deterministic():
    a = make_random("svc.queue", 1, 64, 99)
    b = make_random("svc.queue", 1, 64, 99)
    c = make_random("svc.queue", 1, 64, 100)
    assert a.payload_hex == b.payload_hex
    assert a.payload_hex != c.payload_hex
    with pytest.raises(ConfigurationError):
        make_random("svc.queue", 1, 1 << 20, 1)


# -- case bookkeeping -----------------------------------------------------------------


def test_fuzz_case_reference_validation():
    with pytest.raises(ValueError):
        FuzzCase(1, Policy.SEMI_VALID, "svc.queue", 1, "", ())
    with pytest.raises(ValueError):
        FuzzCase(1, Policy.EMPTY, "svc.queue", 1, "", (), seed_seq=3)


def test_fuzz_case_json_round_trip(corpus):
    register = _record_for(corpus, "svc.audio", 2)
    case = mutate_field(register, (0,), "cross_service_swap", case_id=17)
    assert FuzzCase.from_json(case.to_json()) == case


# -- campaign enumeration ---------------------------------------------------------------


def test_budget_slices_the_leaf_sweep_mid_leaf():
    record = _synthetic_four_ints()
    cases = list(generate_campaign([record], "semi-valid", 10, 1))
    assert [c.case_id for c in cases] == list(range(1, 11))
    assert [c.field_path for c in cases[:7]] == [(0,)] * 7
    assert [c.mutation_id for c in cases[:7]] == list(INT_MUTATIONS)
    assert [c.field_path for c in cases[7:]] == [(1,)] * 3
    assert [c.mutation_id for c in cases[7:]] == list(INT_MUTATIONS[:3])


def test_semi_valid_order_is_seeds_then_leaves_then_structural(corpus):
    record = _record_for(corpus, "svc.view")
    cases = list(semi_valid_cases(record))
    first_structural = next(i for i, c in enumerate(cases) if c.mutation_id in ("duplicate_subtree", "remove_subtree"))
    assert all(c.mutation_id in CATALOG[_kind_at(record, c.field_path)] for c in cases[:first_structural])
    assert all(
        c.mutation_id in ("duplicate_subtree", "remove_subtree") or c.mutation_id.startswith("tag_swap")
        for c in cases[first_structural:]
    )


def test_empty_policy_covers_every_method_once(corpus):
    cases = list(generate_campaign(corpus, "empty", 100, 1))
    assert len(cases) == 11
    assert [(c.descriptor, c.code) for c in cases] == [(d, c) for d, c, _ in all_methods()]
    assert all(c.payload_hex == "" and c.policy is Policy.EMPTY for c in cases)


def test_random_policy_round_robins_with_the_length_cycle(corpus):
    cases = list(generate_campaign(corpus, "random", 23, 5))
    methods = all_methods()
    for i, case in enumerate(cases):
        descriptor, code, _name = methods[i % 11]
        assert (case.descriptor, case.code) == (descriptor, code)
        expected_length = RANDOM_LENGTH_CYCLE[(i // 11) % len(RANDOM_LENGTH_CYCLE)]
        assert len(bytes.fromhex(case.payload_hex)) == expected_length


def test_policies_concatenate_in_order(corpus):
    cases = list(generate_campaign(corpus, ["empty", "random"], 15, 1))
    assert [c.policy for c in cases[:11]] == [Policy.EMPTY] * 11
    assert [c.policy for c in cases[11:]] == [Policy.RANDOM] * 4
    assert [c.case_id for c in cases] == list(range(1, 16))


def test_campaign_is_deterministic(corpus):
    first = [c.to_json() for c in generate_campaign(corpus, "semi-valid", 400, 3)]
    second = [c.to_json() for c in generate_campaign(corpus, "semi-valid", 400, 3)]
    assert first == second
    assert len(first) == 349  # the natural SEMI_VALID enumeration of the shipped corpus


def test_campaign_configuration_errors(corpus):
    with pytest.raises(ConfigurationError):
        generate_campaign(corpus, "semi-valid", 0, 1)
    with pytest.raises(ConfigurationError):
        generate_campaign([], "semi-valid", 10, 1)
    with pytest.raises(ConfigurationError):
        generate_campaign(corpus, "made-up", 10, 1)
    with pytest.raises(ConfigurationError):
        generate_campaign(corpus, [], 10, 1)


def test_policy_spellings_normalize(corpus):
    for spelling in ("semi-valid", "SEMI_VALID", Policy.SEMI_VALID, "Semi-Valid"):
        case = next(iter(generate_campaign(corpus, spelling, 1, 1)))
        assert case.policy is Policy.SEMI_VALID


# -- a rebuild property -----------------------------------------------------------------


@given(st.lists(st.integers(I32_MIN, I32_MAX), min_size=1, max_size=8), st.data())
@settings(max_examples=100)
def test_every_int_mutation_yields_a_decodable_payload(values, data):
    payload = Parcel()
    for value in values:
        payload.write_value(Kind.I32, value)
    trace = TraceNode(
        COMPOSITE,
        "request",
        0,
        len(values) * 4,
        [TraceNode("I32", "", i * 4, i * 4 + 4) for i in range(len(values))],
    )
    record = SeedRecord(
        0, "synthetic", "svc.queue", 1, 1, payload.to_hex(), (), trace, (), (), "OK"
    )
    index = data.draw(st.integers(0, len(values) - 1))
    mutation = data.draw(st.sampled_from(INT_MUTATIONS))
    case = mutate_field(record, (index,), mutation)
    reader = Parcel.from_hex(case.payload_hex)
    out = [reader.read_value(Kind.I32) for _ in values]
    assert reader.remaining() == 0
    for i, (before, after) in enumerate(zip(values, out)):
        if i != index:
            assert before == after
