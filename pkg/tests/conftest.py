"""Shared oracles for the test suite.

The point of these helpers is independence: they recompute moment-matrix
entries and dimension-free bounds by brute force, without going through the
class-compression machinery under test.
"""
import numpy as np
import pytest

from dimcert.sdp import RelaxationProblem, solve
from dimcert.span import dimension_free_span
from dimcert.words import HybridScenario, Scenario


def word_operator(word, sym_mats, dim):
    """Plain operator product of a word's symbols; no reductions."""
    op = np.eye(dim, dtype=complex)
    for s in word:
        op = op @ sym_mats[s]
    return op


def brute_force_moments(struct, sym_mats, psi):
    """Moment matrix entries <psi| u† w |psi> (or tr(u† w)) from raw
    operator products -- the oracle against the class/DAG evaluation."""
    dim = sym_mats[0].shape[0]
    ops = [word_operator(w, sym_mats, dim) for w in struct.words]
    s = len(ops)
    out = np.empty((s, s), dtype=complex)
    for i in range(s):
        for j in range(s):
            prod = ops[i].conj().T @ ops[j]
            out[i, j] = psi.conj() @ prod @ psi if psi is not None else np.trace(prod)
    return out


def npa_value(scenario: Scenario, functional) -> float:
    """Dimension-free relaxation value over the merged-class span.

    Uses the same real symmetrized elements as the library's unconstrained
    limit, but assembled directly from cell indicators (no sampling, no
    compression), so it is an independent dominance reference.
    """
    struct = scenario.structure()
    mats = dimension_free_span(struct)
    blocks = np.stack(mats)
    idx = struct.index[()]
    norm_vec = blocks[:, idx, idx].copy()
    terms = functional.resolved(struct.table)
    b = np.zeros(len(mats))
    for r, c, coeff in terms:
        b += coeff * blocks[:, struct.index[r], struct.index[c]]
    problem = RelaxationProblem(b, norm_vec, scenario.normalization, blocks, None, "npa")
    return solve(problem).value


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
