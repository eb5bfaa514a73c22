"""Span extraction: Gram-Schmidt streaming, isometries, caching."""
import numpy as np
import pytest

from dimcert.sampling import Field
from dimcert.span import (
    CACHE_MAGIC,
    SpanExtractionError,
    dimension_free_span,
    extract_basis,
    load_basis,
    sample_span,
    save_basis,
    support_isometry,
)
from dimcert.words import (
    MomentMatrix,
    balanced_ranks,
    evaluate_moment_matrix,
    sample_realization,
)

from test_words import chsh_scenario


def test_span_dimension_seed_independent():
    sc = chsh_scenario()
    rv = balanced_ranks(sc)
    dims = {sample_span(sc, rv, seed=s).n for s in range(5)}
    assert len(dims) == 1, f"span dimension varies with the seed: {dims}"


def test_real_field_span_no_larger_than_complex():
    rv = balanced_ranks(chsh_scenario())
    n_complex = sample_span(chsh_scenario(field=Field.COMPLEX), rv, seed=0).n
    n_real = sample_span(chsh_scenario(field=Field.REAL), rv, seed=0).n
    assert n_real <= n_complex


def test_basis_orthonormal_and_in_dimension_free_span():
    sc = chsh_scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=1)
    gram = basis.coords @ basis.coords.T
    assert np.abs(gram - np.eye(basis.n)).max() < 1e-10
    # every basis matrix lives inside the merged-class indicator span
    free = np.stack([m.ravel() for m in dimension_free_span(sc.structure())])
    free /= np.linalg.norm(free, axis=1, keepdims=True)
    for j in range(basis.n):
        flat = basis.matrix(j).real.ravel()
        coeffs = np.linalg.lstsq(free.T, flat, rcond=None)[0]
        assert np.linalg.norm(free.T @ coeffs - flat) < 1e-9


def test_dimension_free_span_matches_merged_classes():
    struct = chsh_scenario().structure()
    mats = dimension_free_span(struct)
    assert len(mats) == struct.n_merged
    for m in mats:
        assert np.array_equal(m, m.T)


def test_extract_basis_stall_on_constant_stream():
    sc = chsh_scenario()
    real = sample_realization(sc, balanced_ranks(sc), np.random.default_rng(0))
    m = evaluate_moment_matrix(real)
    basis = extract_basis(iter([m] * 50), stall=5)
    assert basis.n == 1
    assert basis.sample_count <= 7


def test_extract_basis_errors_on_empty_stream():
    with pytest.raises(SpanExtractionError):
        extract_basis(iter([]))


def test_support_isometry_properties(rng):
    x = rng.standard_normal((8, 3))
    g = x @ x.T  # PSD, rank 3
    v = support_isometry(g)
    assert v.shape == (8, 3)
    assert np.abs(v.T @ v - np.eye(3)).max() < 1e-12
    # range(V) is the support: projecting G changes nothing
    p = v @ v.T
    assert np.abs(p @ g @ p - g).max() < 1e-9


def test_save_load_roundtrip(tmp_path):
    sc = chsh_scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=3)
    path = tmp_path / "chsh.basis"
    save_basis(path, basis)
    assert path.read_bytes().startswith(CACHE_MAGIC)
    loaded = load_basis(path, sc)
    assert loaded.n == basis.n
    assert np.abs(loaded.coords - basis.coords).max() < 1e-15
    for j in (0, basis.n - 1):
        assert np.abs(loaded.matrix(j) - basis.matrix(j)).max() < 1e-12


def test_load_rejects_other_scenario(tmp_path):
    sc = chsh_scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=3)
    path = tmp_path / "chsh.basis"
    save_basis(path, basis)
    with pytest.raises(ValueError, match="different scenario"):
        load_basis(path, chsh_scenario(level=3))


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.basis"
    path.write_bytes(b"not a basis\n")
    with pytest.raises(ValueError, match="not a"):
        load_basis(path, chsh_scenario())


def test_hermitian_span_for_bounded_block():
    from dimcert.presets import preset

    sc = preset("tripartite").scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=0, hermitian=True, compute_isometry=False)
    m = basis.matrix(0)
    assert np.iscomplexobj(m)
    assert np.abs(m - m.conj().T).max() < 1e-10
