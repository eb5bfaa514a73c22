"""Random rank-constrained quantum objects over the real or complex field.

These are the raw material for span sampling: Haar unitaries, fixed-rank
projectors, complete projective measurements, Gaussian pure states and
projective dilations of multi-outcome measurements.
"""
from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np


class Field(Enum):
    """Number field the sampled matrices live over."""

    COMPLEX = "complex"
    REAL = "real"

    @classmethod
    def parse(cls, text: str) -> "Field":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown field {text!r}; expected 'complex' or 'real'") from None


def gaussian_matrix(dim: int, field: Field, rng: np.random.Generator) -> np.ndarray:
    """dim x dim matrix with i.i.d. standard Gaussian entries over `field`."""
    z = rng.standard_normal((dim, dim))
    if field is Field.COMPLEX:
        z = z + 1j * rng.standard_normal((dim, dim))
    return z


def haar_unitary(dim: int, field: Field, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary (complex) or orthogonal (real) matrix.

    QR of a Ginibre matrix with the R diagonal phases folded back in, which
    makes the distribution exactly Haar rather than QR-convention biased.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    q, r = np.linalg.qr(gaussian_matrix(dim, field, rng))
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_pure_state(dim: int, field: Field, rng: np.random.Generator) -> np.ndarray:
    """Unit vector with i.i.d. Gaussian entries, normalized."""
    psi = rng.standard_normal(dim)
    if field is Field.COMPLEX:
        psi = psi + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def random_projector(dim: int, rank: int, field: Field, rng: np.random.Generator) -> np.ndarray:
    """Hermitian idempotent of the given rank: U diag(1..1,0..0) U†."""
    if not 0 <= rank <= dim:
        raise ValueError(f"rank must be in [0, {dim}], got {rank}")
    if rank == 0:
        dtype = complex if field is Field.COMPLEX else float
        return np.zeros((dim, dim), dtype=dtype)
    if rank == dim:
        dtype = complex if field is Field.COMPLEX else float
        return np.eye(dim, dtype=dtype)
    u = haar_unitary(dim, field, rng)
    cols = u[:, :rank]
    return cols @ cols.conj().T


def random_measurement(
    dim: int, outcome_ranks: Sequence[int], field: Field, rng: np.random.Generator
) -> list[np.ndarray]:
    """Complete projective measurement with prescribed outcome ranks.

    A single Haar unitary rotates the blocks of the fixed block-diagonal
    partition of C^dim, so orthogonality and completeness hold by
    construction.
    """
    ranks = list(outcome_ranks)
    if any(r < 0 for r in ranks) or sum(ranks) != dim:
        raise ValueError(f"outcome ranks {ranks} must be nonnegative and sum to dim={dim}")
    u = haar_unitary(dim, field, rng)
    projectors = []
    offset = 0
    for r in ranks:
        cols = u[:, offset : offset + r]
        projectors.append(cols @ cols.conj().T)
        offset += r
    return projectors


def povm_dilation_measurement(
    outcomes: int, dim: int, field: Field, rng: np.random.Generator
) -> list[np.ndarray]:
    """Projective dilation of a d-outcome measurement on C^dim.

    Returns d mutually orthogonal rank-dim projectors on the extended space
    C^d (x) C^dim, i.e. U (|a><a| (x) I) U† for one fresh Haar unitary U.
    """
    if outcomes < 2:
        raise ValueError(f"need at least 2 outcomes, got {outcomes}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return random_measurement(outcomes * dim, [dim] * outcomes, field, rng)


def check_projective_measurement(
    projectors: Sequence[np.ndarray], ranks: Sequence[int] | None = None
) -> None:
    """Raise AssertionError unless the projectors form a valid measurement.

    Tolerances: 1e-12 idempotence/hermiticity, 1e-9 trace vs rank, 1e-10
    completeness.
    """
    dim = projectors[0].shape[0]
    total = np.zeros((dim, dim), dtype=complex)
    for i, p in enumerate(projectors):
        assert np.abs(p @ p - p).max() < 1e-12, f"projector {i} not idempotent"
        assert np.abs(p - p.conj().T).max() < 1e-12, f"projector {i} not Hermitian"
        if ranks is not None:
            assert abs(np.trace(p).real - ranks[i]) < 1e-9, f"projector {i} has wrong rank"
        total += p
    assert np.abs(total - np.eye(dim)).max() < 1e-10, "measurement not complete"
