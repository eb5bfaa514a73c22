"""Word algebra, moment structure, and rank bookkeeping."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimcert.sampling import Field
from dimcert.words import (
    BellScenario,
    Measurement,
    MomentStructure,
    Party,
    RankVector,
    TracialScenario,
    balanced_ranks,
    canonical_reduce,
    enumerate_rank_vectors,
    evaluate_moment_matrix,
    generate_words,
    sample_realization,
    validate_ranks,
    word_adjoint,
)

from conftest import brute_force_moments


def chsh_scenario(level=2, field=Field.COMPLEX, dim=2):
    return BellScenario(
        field=field,
        parties=(
            Party("A", dim, (Measurement(2), Measurement(2))),
            Party("B", dim, (Measurement(2), Measurement(2))),
        ),
        level=level,
    )


TABLE = chsh_scenario().symbol_table()
SYMS = st.integers(min_value=0, max_value=len(TABLE.symbols) - 1)
WORDS = st.lists(SYMS, min_size=0, max_size=6)


# -- reduction rules -----------------------------------------------------


@given(WORDS)
def test_reduce_idempotent(seq):
    once = canonical_reduce(seq, TABLE)
    if once is None:
        return
    assert canonical_reduce(once, TABLE) == once


@given(WORDS)
def test_reduce_against_naive_rewriter(seq):
    # one-rule-at-a-time rewriting to a fixed point must agree with the
    # one-pass canonical form (confluence)
    assert _naive_reduce(tuple(seq)) == canonical_reduce(seq, TABLE)


def _naive_reduce(word):
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            a, b = word[i], word[i + 1]
            ga, gb = TABLE.orth_group[a], TABLE.orth_group[b]
            if a == b:
                word = word[:i] + word[i + 1:]
                changed = True
                break
            if ga == gb and ga >= 0:
                return None  # orthogonal outcomes annihilate
            if TABLE.party_idx[a] > TABLE.party_idx[b]:
                word = word[:i] + (b, a) + word[i + 2:]
                changed = True
                break
    return tuple(word)


@given(WORDS)
def test_adjoint_involution(seq):
    w = canonical_reduce(seq, TABLE)
    if w is None:
        return
    adj = word_adjoint(w, TABLE)
    assert canonical_reduce(adj, TABLE) == adj  # adjoints stay canonical
    assert word_adjoint(adj, TABLE) == w


def test_projector_identities():
    a00 = 0  # A setting 0 outcome 0 comes first in the table
    assert canonical_reduce([a00, a00], TABLE) == (a00,)
    assert canonical_reduce([a00, 1], TABLE) is None  # orthogonal outcomes
    # distinct parties commute: AB == BA after sorting
    b00 = next(
        i for i, s in enumerate(TABLE.symbols) if s.party == "B" and s.setting == 0 and s.outcome == 0
    )
    assert canonical_reduce([b00, a00], TABLE) == canonical_reduce([a00, b00], TABLE)


# -- word generation -----------------------------------------------------


def test_word_levels_nest():
    prev = set()
    for level in (0, 1, 2, 3):
        words = generate_words(TABLE, level)
        assert len(set(words)) == len(words)
        assert prev <= set(words)
        prev = set(words)


def test_level_one_covers_every_outcome():
    # every single-symbol word must be present so that probability
    # functionals resolve, even for the non-generating last outcomes
    words = set(generate_words(TABLE, 1))
    for i in range(len(TABLE.symbols)):
        assert (i,) in words


def test_party_level_caps_limit_blocks():
    capped = BellScenario(
        parties=chsh_scenario().parties, level=3, party_level_caps=(1, 1)
    ).words()
    full = chsh_scenario(level=3).words()
    assert set(capped) < set(full)


# -- moment matrices against the brute-force oracle ----------------------


@pytest.mark.parametrize("field", [Field.COMPLEX, Field.REAL])
@pytest.mark.parametrize("dim", [2, 3])
def test_bell_moments_match_operator_products(field, dim, rng):
    sc = chsh_scenario(level=2, field=field, dim=dim)
    real = sample_realization(sc, balanced_ranks(sc), rng)
    got = evaluate_moment_matrix(real)
    struct = sc.structure()
    want = brute_force_moments(struct, real.sym_mats, real.psi)
    assert np.abs(got.entries - want).max() < 1e-10
    got.check()


def test_tracial_moments_match_operator_products(rng):
    sc = TracialScenario(preparations=3, settings=(Measurement(2), Measurement(2)), dim=2, level=2)
    real = sample_realization(sc, balanced_ranks(sc), rng)
    got = evaluate_moment_matrix(real)
    want = brute_force_moments(sc.structure(), real.sym_mats, real.psi)
    assert np.abs(got.entries - want).max() < 1e-10


def test_moment_matrix_psd_and_normalized(rng):
    for seed in range(5):
        sc = chsh_scenario()
        real = sample_realization(sc, balanced_ranks(sc), np.random.default_rng(seed))
        m = evaluate_moment_matrix(real)
        assert np.linalg.eigvalsh((m.entries + m.entries.conj().T) / 2).min() >= -1e-9
        assert abs(m.entries[0, 0] - 1.0) < 1e-12


def test_cell_classes_consistent_with_reduction():
    struct = MomentStructure(TABLE, generate_words(TABLE, 2))
    words = struct.words
    for i, j in itertools.product(range(len(words)), repeat=2):
        expect = canonical_reduce(word_adjoint(words[i], TABLE) + words[j], TABLE)
        cid = struct.cell_class[i, j]
        if expect is None:
            assert cid < 0
        else:
            assert struct.class_words[cid] == expect


# -- ranks ---------------------------------------------------------------


def test_balanced_ranks_sum_to_dim():
    sc = chsh_scenario(dim=3)
    rv = balanced_ranks(sc)
    validate_ranks(sc, rv)
    assert all(sum(rs) == 3 for rs in rv.ranks)


def test_validate_ranks_rejects_bad_sum():
    sc = chsh_scenario()
    with pytest.raises(ValueError, match="rank sum"):
        validate_ranks(sc, RankVector.parse("2,1;1,1;1,1;1,1"))


def test_rank_vector_roundtrip():
    rv = RankVector.parse("2,0;1,1;0,2")
    assert RankVector.parse(str(rv)) == rv


def test_enumerate_rank_vectors_counts():
    sc = chsh_scenario()
    got = enumerate_rank_vectors(sc)
    # independent count: 3 compositions of 2 per setting, 4 settings,
    # minus combinations where some party only has rank-(2,0)/(0,2)
    # (identity) measurements
    comps = [(2, 0), (1, 1), (0, 2)]
    expect = 0
    for combo in itertools.product(comps, repeat=4):
        trivial_a = all(0 in rs for rs in combo[:2])
        trivial_b = all(0 in rs for rs in combo[2:])
        if not (trivial_a or trivial_b):
            expect += 1
    assert len(got) == expect
    assert len(set(map(str, got))) == len(got)
