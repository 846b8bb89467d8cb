import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from progsearch.programs import (
    END_TOKEN,
    InvalidAddressError,
    Program,
    TrailingTokensError,
    TruncatedProgramError,
    UnknownModuleError,
    asymmetric_deletion_keys,
    brute_force_distance,
    canonical_key,
    from_sequence,
    from_tree,
    mutate,
    mutate_all,
    mutation_keys,
    random_program,
    to_sequence,
    to_tree,
)


def P(*tokens):
    return Program(tuple(tokens))


# -- serialization -----------------------------------------------------------


def test_to_sequence_examples(tiny_registry):
    assert to_sequence(P("count", "filter_red", "scene")) == ("count", "filter_red", "scene")
    # a 2-slot module with one END leaf emits the END
    assert to_sequence(P("compare", "find_A", "END")) == ("compare", "find_A", "END")
    assert to_sequence(P("scene")) == ("scene",)


def test_from_sequence_examples(tiny_registry):
    p = from_sequence(["count", "filter_red", "scene"], tiny_registry)
    assert p == P("count", "filter_red", "scene")
    assert from_sequence(["scene"], tiny_registry) == P("scene")


def test_from_sequence_errors(tiny_registry):
    with pytest.raises(TruncatedProgramError):
        from_sequence(["count"], tiny_registry)
    with pytest.raises(UnknownModuleError):
        from_sequence(["warp", "scene"], tiny_registry)
    with pytest.raises(TrailingTokensError):
        from_sequence(["scene", "scene"], tiny_registry)
    with pytest.raises(TruncatedProgramError):
        from_sequence([], tiny_registry)


def test_roundtrip_bulk(tiny_registry):
    rng = random.Random(42)
    for _ in range(2000):
        p = random_program(tiny_registry, rng)
        assert from_sequence(to_sequence(p), tiny_registry) == p


def test_tree_view_roundtrip(mw39):
    rng = random.Random(5)
    for _ in range(500):
        p = random_program(mw39, rng)
        assert from_tree(to_tree(p, mw39)) == p


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_roundtrip_property(mw39, seed):
    p = random_program(mw39, random.Random(seed))
    assert from_sequence(to_sequence(p), mw39) == p


# -- canonical keys -----------------------------------------------------------


def test_canonical_key_examples(tiny_registry):
    assert canonical_key(P("scene")) == "scene"
    assert canonical_key(P("count", "scene")) != canonical_key(P("exist", "scene"))


def test_canonical_key_injective(mw39):
    rng = random.Random(9)
    seen = {}
    for _ in range(5000):
        p = random_program(mw39, rng)
        key = canonical_key(p)
        if key in seen:
            assert seen[key] == p.tokens
        seen[key] = p.tokens
    # round-trip preserves the key
    for key, tokens in list(seen.items())[:200]:
        assert canonical_key(from_sequence(tokens, mw39)) == key


# -- mutation -----------------------------------------------------------


def test_mutate_example_at_scene(tiny_registry):
    muts = {m.key for m in mutate(P("count", "scene"), 1, tiny_registry)}
    assert muts == {
        "count count scene",
        "count exist scene",
        "count filter_red scene",
        "count END",
    }


def test_mutate_substitution_empty_for_unique_arity0(tiny_registry):
    muts = mutate(P("scene"), 0, tiny_registry)
    # no other arity-0 module, no deletion of the root: insertions only
    assert all(len(m.tokens) > 1 for m in muts)


def test_mutate_end_target_insertions(tiny_registry):
    muts = {m.key for m in mutate(P("count", "END"), 1, tiny_registry)}
    assert "count scene" in muts  # arity-0 module replaces the END
    assert "count count END" in muts
    assert "count END" not in muts


def test_mutate_root_insertion(tiny_registry):
    muts = {m.key for m in mutate(P("scene"), 0, tiny_registry)}
    assert "count scene" in muts and "exist scene" in muts


def test_mutate_invalid_address(tiny_registry):
    with pytest.raises(InvalidAddressError):
        mutate(P("scene"), 3, tiny_registry)


def test_mutate_deletion_keeps_each_child(mw39):
    p = P("and_", "exist", "scene", "exist", "filter_red", "scene")
    muts = {m.key for m in mutate(p, 0, mw39)}
    assert "exist scene" in muts
    assert "exist filter_red scene" in muts


def test_mutate_root_deletion_to_end_discarded(tiny_registry):
    p = P("count", "END")
    muts = {m.key for m in mutate(p, 0, tiny_registry)}
    assert "END" not in muts


def test_mutation_soundness(tiny_registry):
    rng = random.Random(7)
    for _ in range(150):
        p = random_program(tiny_registry, rng, max_depth=4)
        for addr in range(len(p.tokens)):
            for m in mutate(p, addr, tiny_registry):
                # structurally legal and exactly one edit away
                assert from_sequence(m.tokens, tiny_registry) == m
                assert m != p
                assert brute_force_distance(p, m, tiny_registry, 1) == 1


def test_mutation_completeness(tiny_registry):
    # any program at distance 1 is in the union of mutate over addresses
    rng = random.Random(11)
    checked = 0
    for _ in range(80):
        p = random_program(tiny_registry, rng, max_depth=3)
        if len(p.tokens) > 7:
            continue
        neighborhood = {m.key for m in mutate_all(p, tiny_registry)}
        for q in mutate_all(p, tiny_registry):
            if brute_force_distance(p, q, tiny_registry, 1) == 1:
                assert q.key in neighborhood
                checked += 1
    assert checked > 500


def test_mutation_keys_match_object_path(mw39):
    rng = random.Random(13)
    for _ in range(200):
        p = random_program(mw39, rng, max_depth=4)
        assert mutation_keys(p, mw39) == [m.key for m in mutate_all(p, mw39)]


def test_asymmetric_deletion_keys_cover_one_way_edits(mw39):
    # every mutant is reachable back, or listed as an asymmetric deletion
    rng = random.Random(17)
    for _ in range(60):
        p = random_program(mw39, rng, max_depth=3)
        asym = set(asymmetric_deletion_keys(p, mw39))
        for m in mutate_all(p, mw39):
            back = p.key in mutation_keys(m, mw39)
            assert back or m.key in asym


# -- brute-force distance -----------------------------------------------------------


def test_distance_identity(tiny_registry):
    p = P("count", "scene")
    assert brute_force_distance(p, p, tiny_registry, 2) == 0


def test_distance_one_substitution(tiny_registry):
    assert brute_force_distance(P("count", "scene"), P("exist", "scene"), tiny_registry, 2) == 1


def test_distance_two_insertions(tiny_registry):
    assert (
        brute_force_distance(P("scene"), P("count", "filter_red", "scene"), tiny_registry, 3) == 2
    )


def test_distance_unreachable(tiny_registry):
    far = P("count", "filter_red", "filter_red", "filter_red", "scene")
    assert brute_force_distance(P("scene"), far, tiny_registry, 2) is None


# -- random generator -----------------------------------------------------------


def test_random_program_depth_cap(mw39):
    rng = random.Random(23)
    for _ in range(300):
        p = random_program(mw39, rng, max_depth=4)
        tree_depth = 1
        stack = [(0, 1)]
        open_slots = [1]
        depth = 0
        # depth via token scan
        pending = [1]
        for tok in p.tokens:
            depth = len(pending)
            tree_depth = max(tree_depth, depth)
            pending[-1] -= 1
            arity = 0 if tok == END_TOKEN else mw39.arity(tok)
            if arity > 0:
                pending.append(arity)
            while pending and pending[-1] == 0:
                pending.pop()
        assert tree_depth <= 4 + 1  # END leaves may sit one level below the cap
