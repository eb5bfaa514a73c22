"""Relaxation assembly and cone solving."""
import io
import math

import numpy as np
import pytest

from dimcert.presets import preset
from dimcert.sdp import (
    LinearFunctional,
    RelaxationProblem,
    SolveStatus,
    assemble_hybrid_tripartite,
    assemble_relaxation,
    dump_problem,
    rank_sweep,
    solve,
    upper_bound,
    verify_certificate,
)
from dimcert.span import sample_span
from dimcert.words import (
    OperatorSymbol,
    RankVector,
    balanced_ranks,
    evaluate_moment_matrix,
    sample_realization,
)

from test_words import chsh_scenario

TSIRELSON = 2 * math.sqrt(2)


@pytest.fixture(scope="module")
def chsh_bound():
    p = preset("chsh")
    sc = p.scenario()
    return upper_bound(sc, p.functional, balanced_ranks(sc), seed=0)


def test_chsh_upper_bound_matches_tsirelson(chsh_bound):
    assert chsh_bound.result.status == SolveStatus.OPTIMAL
    assert abs(chsh_bound.result.value - TSIRELSON) < 1e-6


def test_certificate_verifies(chsh_bound):
    p = preset("chsh")
    sc = p.scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=0)
    problem = assemble_relaxation(p.functional, basis, sc.normalization)
    res = solve(problem)
    verify_certificate(problem, res)


def test_objective_agrees_with_direct_evaluation():
    # project a fresh realization's moment matrix onto the basis: the
    # assembled objective/normalization rows must reproduce the values
    # computed straight from the matrix entries
    p = preset("chsh")
    sc = p.scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=0)
    problem = assemble_relaxation(p.functional, basis, sc.normalization)
    struct = basis.struct
    real = sample_realization(sc, balanced_ranks(sc), np.random.default_rng(99))
    gamma = evaluate_moment_matrix(real).entries.real
    flat = np.stack([basis.matrix(j).real.ravel() for j in range(basis.n)])
    coeffs, residual = np.linalg.lstsq(flat.T, gamma.ravel(), rcond=None)[:2]
    assert np.linalg.norm(flat.T @ coeffs - gamma.ravel()) < 1e-8
    want = sum(
        coeff * gamma[struct.index[r], struct.index[c]]
        for r, c, coeff in p.functional.resolved(struct.table)
    )
    assert abs(problem.objective @ coeffs - want) < 1e-7
    assert abs(problem.norm_vector @ coeffs - 1.0) < 1e-8
    # and the compressed block of a physical point is PSD
    k = problem.block_size
    block = np.tensordot(coeffs, problem.blocks, axes=(0, 0))
    assert np.linalg.eigvalsh((block + block.T) / 2).min() > -1e-8


def test_functional_resolution_errors():
    bogus = LinearFunctional("bogus", (((OperatorSymbol("Z", 0, 0),), (), 1.0),))
    with pytest.raises(KeyError, match="unknown symbol"):
        bogus.resolved(chsh_scenario().symbol_table())
    nonfinite = LinearFunctional("nan", (((), (), math.nan),))
    with pytest.raises(ValueError, match="non-finite"):
        nonfinite.resolved(chsh_scenario().symbol_table())


def test_functional_scaling():
    p = preset("chsh")
    sc = p.scenario()
    rv = balanced_ranks(sc)
    basis = sample_span(sc, rv, seed=0)
    a = solve(assemble_relaxation(p.functional, basis, 1.0)).value
    b = solve(assemble_relaxation(p.functional.scaled(0.5), basis, 1.0)).value
    assert abs(b - 0.5 * a) < 1e-7


def test_infeasible_normalization_detected():
    problem = RelaxationProblem(
        objective=np.array([1.0]),
        norm_vector=np.array([0.0]),
        norm_value=1.0,
        blocks=np.ones((1, 1, 1)),
    )
    res = solve(problem)
    assert res.status in (SolveStatus.INFEASIBLE, SolveStatus.FAILED)


def test_rank_sweep_parallel_matches_serial():
    p = preset("chsh")
    sc = p.scenario()
    vectors = [RankVector.parse("1,1;1,1;1,1;1,1"), RankVector.parse("2,0;1,1;1,1;1,1")]
    serial = rank_sweep(sc, p.functional, seed=0, rank_vectors=vectors, jobs=1)
    parallel = rank_sweep(sc, p.functional, seed=0, rank_vectors=vectors, jobs=2)
    for a, b in zip(serial.per_rank, parallel.per_rank):
        assert a.ranks == b.ranks
        assert abs(a.result.value - b.result.value) < 1e-12


def test_sweep_records_failures_without_aborting():
    p = preset("chsh")
    sc = p.scenario()
    bad = RankVector.parse("1,1;1,1")  # wrong number of settings
    report = rank_sweep(sc, p.functional, seed=0, rank_vectors=[bad, balanced_ranks(sc)])
    assert report.any_failed
    assert abs(report.value - TSIRELSON) < 1e-6  # the good stratum survives


def test_hybrid_tripartite_free_limit():
    # with everything at level 1 and an unconstrained bounded block the
    # program reproduces the algebraic maximum 4 sqrt(2)
    p = preset("tripartite")
    sc = p.scenario(level=1)
    problem = assemble_hybrid_tripartite(
        sc, p.functional, balanced_ranks(sc), seed=0, dimension_free_c=True, support_samples=200
    )
    res = solve(problem)
    assert res.status == SolveStatus.OPTIMAL
    assert abs(res.value - 4 * math.sqrt(2)) < 1e-6


def test_dump_problem_roundtrip(chsh_bound):
    p = preset("chsh")
    sc = p.scenario()
    basis = sample_span(sc, balanced_ranks(sc), seed=0)
    problem = assemble_relaxation(p.functional, basis, sc.normalization)
    buf = io.StringIO()
    dump_problem(problem, buf)
    text = buf.getvalue()
    assert text.startswith("# dimcert standard-form dump")
    assert f"vars {problem.n}" in text and f"block {problem.block_size}" in text
    section = None
    obj = {}
    for line in text.splitlines():
        if line in ("objective", "norm_row", "psd_blocks", "end") or line.startswith("#"):
            section = line
            continue
        if section == "objective":
            j, val = line.split()
            obj[int(j)] = float(val)
    for j, val in obj.items():
        assert val == problem.objective[j]
