"""Structural invariants the whole pipeline must satisfy.

Soundness hinges on a handful of order relations: bounds tighten with the
relaxation level, never dip below a variational point, and never exceed the
dimension-free value. These are checked across the built-in functionals.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimcert.presets import preset, preset_names
from dimcert.sampling import Field
from dimcert.sdp import SolveStatus, upper_bound
from dimcert.seesaw import seesaw
from dimcert.span import sample_span
from dimcert.words import (
    BellScenario,
    Measurement,
    Party,
    TracialScenario,
    balanced_ranks,
    evaluate_moment_matrix,
    sample_realization,
)

from conftest import npa_value

CHEAP = ["chsh", "qrac-2", "mod3"]


def _ub(name, level=None, dims=None, field=Field.COMPLEX, seed=0):
    p = preset(name)
    kw = {}
    if level is not None:
        kw["level"] = level
    if dims is not None:
        kw["dims"] = dims
    sc = p.scenario(field=field, **kw)
    return upper_bound(sc, p.functional, balanced_ranks(sc), seed=seed).result.value


# -- random scenarios stay physical --------------------------------------


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, 10**6),
    st.integers(1, 3),
    st.lists(st.integers(2, 3), min_size=2, max_size=2),
    st.sampled_from([Field.COMPLEX, Field.REAL]),
)
def test_random_bell_moment_matrices_psd_normalized(seed, n_settings, outs, field):
    sc = BellScenario(
        field=field,
        parties=(
            Party("A", 3, tuple(Measurement(o) for o in outs[:n_settings] * n_settings)[:n_settings]),
            Party("B", 2, tuple(Measurement(2) for _ in range(n_settings))),
        ),
        level=2,
    )
    real = sample_realization(sc, balanced_ranks(sc), np.random.default_rng(seed))
    m = evaluate_moment_matrix(real).entries
    assert np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -1e-9
    assert abs(m[0, 0] - 1.0) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4), st.integers(2, 3))
def test_random_tracial_moment_matrices_psd_normalized(seed, n_prep, dim):
    sc = TracialScenario(
        preparations=n_prep, settings=(Measurement(2), Measurement(2)), dim=dim, level=2
    )
    real = sample_realization(sc, balanced_ranks(sc), np.random.default_rng(seed))
    m = evaluate_moment_matrix(real).entries
    assert np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -1e-9
    assert abs(m[0, 0] - sc.normalization) < 1e-9


# -- span stability ------------------------------------------------------


@pytest.mark.parametrize("name", CHEAP)
def test_span_dimension_seed_independent_across_presets(name):
    p = preset(name)
    sc = p.scenario()
    dims = {sample_span(sc, balanced_ranks(sc), seed=s).n for s in range(5)}
    assert len(dims) == 1, f"{name}: span dimension varies with the seed: {dims}"


# -- hierarchy order relations -------------------------------------------


@pytest.mark.parametrize("name,levels", [("chsh", (1, 2, 3)), ("qrac-2", (1, 2, 3)), ("mod3", (1, 2))])
def test_level_monotone(name, levels):
    vals = [_ub(name, level=lv) for lv in levels]
    for lo, hi in zip(vals[1:], vals):
        assert lo <= hi + 1e-7, f"{name}: bound increased with the level: {vals}"


@pytest.mark.parametrize("name", ["chsh", "pironio", "qrac-2", "mod3", "i3322"])
def test_dimension_free_dominates(name):
    # the dimension-constrained value can never exceed the commuting-
    # operator relaxation at the same level, computed independently in
    # conftest from cell indicators alone
    p = preset(name)
    sc = p.scenario()
    free = npa_value(sc, p.functional)
    bounded = upper_bound(sc, p.functional, balanced_ranks(sc), seed=0).result.value
    assert bounded <= free + 1e-7, f"{name}: constrained bound exceeds the free value"


@pytest.mark.parametrize("name", CHEAP)
def test_sandwich_lower_below_upper(name):
    p = preset(name)
    sc = p.scenario()
    ub = upper_bound(sc, p.functional, balanced_ranks(sc), seed=0).result.value
    lb = seesaw(sc, p.functional, seed=0, restarts=5).value
    assert lb <= ub + 1e-6, f"{name}: variational point beats the certificate"
    assert lb >= (p.classical_bound or -np.inf) - 1e-9


def test_real_field_never_looser_than_complex_chsh():
    assert _ub("chsh", field=Field.REAL) <= _ub("chsh", field=Field.COMPLEX) + 1e-7


def test_seesaw_ascent_is_monotone():
    for name in CHEAP:
        p = preset(name)
        point = seesaw(p.scenario(), p.functional, seed=3, restarts=2)
        h = np.asarray(point.history)
        assert np.all(np.diff(h) >= -1e-8), f"{name}: see-saw descended"
