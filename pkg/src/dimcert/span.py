"""Sampled-span extraction: orthonormal moment bases and the
strict-feasibility isometry.

The span of moment matrices at fixed dimension and ranks is identified by
streaming random samples through a modified Gram-Schmidt process (one
reorthogonalization pass) until a run of dependent samples signals that
the span is exhausted.  Everything runs in per-class coordinates, which
turns the trace inner product into a weighted dot product.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .sampling import Field
from .words import (
    HybridScenario,
    MomentMatrix,
    MomentStructure,
    RankVector,
    Scenario,
    sample_realization,
)

CACHE_MAGIC = b"DIMCERT-BASIS-v1"


class SpanExtractionError(RuntimeError):
    pass


class StreamingGramSchmidt:
    """Modified Gram-Schmidt over streamed real vectors.

    A sample whose residual after projection (plus one reorthogonalization
    pass) is below tol times its own norm counts as dependent; `stall`
    consecutive dependent samples terminate the stream.
    """

    def __init__(self, dim: int, tol: float, stall: int, cap: Optional[int] = None):
        if tol <= 0 or stall < 1:
            raise ValueError("need tol > 0 and stall >= 1")
        self.dim = dim
        self.tol = tol
        self.stall = stall
        self.cap = cap
        self._rows = np.empty((16, dim))
        self.n = 0
        self.dependent_run = 0
        self.offered = 0

    @property
    def basis(self) -> np.ndarray:
        return self._rows[: self.n]

    @property
    def done(self) -> bool:
        return self.dependent_run >= self.stall

    def offer(self, v: np.ndarray) -> bool:
        self.offered += 1
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            self.dependent_run += 1
            return False
        q = self.basis
        r = v - q.T @ (q @ v)
        r -= q.T @ (q @ r)
        nrm = np.linalg.norm(r)
        if nrm < self.tol * norm0:
            self.dependent_run += 1
            return False
        self.dependent_run = 0
        if self.cap is not None and self.n >= self.cap:
            raise SpanExtractionError(
                f"basis exceeded safety cap {self.cap}; the tolerance is likely misconfigured"
            )
        if self.n == len(self._rows):
            grown = np.empty((2 * len(self._rows), self.dim))
            grown[: self.n] = self._rows[: self.n]
            self._rows = grown
        self._rows[self.n] = r / nrm
        self.n += 1
        return True


@dataclass
class MomentBasis:
    """Orthonormal basis {M_j} of a sampled moment-matrix span.

    Rows of `coords` are weighted class coordinates, orthonormal under the
    plain dot product, which equals tr(M_i† M_j) on the matrices.  For
    struct-backed bases the matrices are reconstructed on demand; `stream`
    bases (built from explicit matrices) store flattened cells instead.
    """

    coords: np.ndarray
    weights: np.ndarray
    struct: Optional[MomentStructure]
    hermitian: bool
    shape: tuple[int, int]
    isometry: Optional[np.ndarray]
    sample_count: int
    seed: Optional[int]
    tol: float
    stall: int
    ranks: Optional[RankVector] = None
    scenario_hash: Optional[str] = None

    @property
    def n(self) -> int:
        return len(self.coords)

    def class_values(self, j: int) -> np.ndarray:
        """Per word-class values of M_j (complex for Hermitian bases)."""
        if self.struct is None:
            raise ValueError("not a struct-backed basis")
        unweighted = self.coords[j] / np.sqrt(self.weights)
        if self.hermitian:
            return self.struct.class_values_from_hermitian(unweighted)
        return self.struct.class_values_from_real(unweighted)

    def matrix(self, j: int) -> np.ndarray:
        if self.struct is not None:
            return self.struct.matrix_from_classes(self.class_values(j))
        flat = self.coords[j] / np.sqrt(self.weights)
        s = self.shape[0]
        if self.hermitian:
            return (flat[: s * s] + 1j * flat[s * s :]).reshape(self.shape)
        return flat.reshape(self.shape)

    def matrices(self) -> list[np.ndarray]:
        return [self.matrix(j) for j in range(self.n)]

    def project_residual(self, m: np.ndarray) -> float:
        """Relative residual of a moment matrix against the basis span."""
        if self.struct is None:
            v = _flatten_matrix(m, self.hermitian)
        else:
            v = _struct_coords(self.struct, m, self.hermitian) * np.sqrt(self.weights)
        nrm = np.linalg.norm(v)
        r = v - self.coords.T @ (self.coords @ v)
        return float(np.linalg.norm(r) / nrm) if nrm > 0 else 0.0


def _struct_coords(struct: MomentStructure, m: np.ndarray, hermitian: bool) -> np.ndarray:
    if hermitian:
        return struct.hermitian_coords(m)
    return struct.real_coords(m)


def _flatten_matrix(entries: np.ndarray, hermitian: bool) -> np.ndarray:
    if hermitian:
        return np.concatenate([entries.real.ravel(), entries.imag.ravel()])
    return np.asarray(entries.real, dtype=float).ravel()


def support_isometry(g: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Isometry onto the support of a PSD matrix.

    Columns are the eigenvectors of G with eigenvalue above rel_tol times
    the largest; V† G V is then positive definite, so the compressed cone
    has a strictly feasible point.
    """
    g = (g + g.conj().T) / 2
    vals, vecs = np.linalg.eigh(g)
    top = vals[-1]
    if top <= 0:
        raise SpanExtractionError("support matrix is zero; no samples with mass")
    keep = vals > rel_tol * top
    return vecs[:, keep]


def strict_feasibility_isometry(samples: Iterable[MomentMatrix], rel_tol: float = 1e-8) -> np.ndarray:
    """V spanning the support of the average Re(Gamma) over the samples."""
    g = None
    count = 0
    for s in samples:
        e = np.asarray(s.entries.real, dtype=float)
        g = e if g is None else g + e
        count += 1
    if g is None:
        raise ValueError("need at least one sample")
    return support_isometry(g / count, rel_tol)


def extract_basis(
    sample_stream: Iterable[MomentMatrix],
    take_real_part: bool = True,
    tol: float = 1e-8,
    stall: int = 8,
    cap: Optional[int] = None,
    compute_isometry: bool = True,
) -> MomentBasis:
    """Gram-Schmidt basis of the span of a stream of moment matrices.

    With take_real_part the basis spans the real parts (real symmetric
    matrices); otherwise the Hermitian matrices themselves.  The stream is
    consumed until `stall` consecutive samples are dependent.
    """
    gs = None
    gsum = None
    shape = None
    for sample in sample_stream:
        entries = sample.entries
        if shape is None:
            shape = entries.shape
        v = _flatten_matrix(entries, hermitian=not take_real_part)
        if gs is None:
            gs = StreamingGramSchmidt(v.size, tol, stall, cap)
        gs.offer(v)
        if compute_isometry:
            e = np.asarray(entries.real, dtype=float)
            gsum = e if gsum is None else gsum + e
        if gs.done:
            break
    if gs is None or gs.n == 0:
        raise SpanExtractionError("stream produced no independent samples")
    return MomentBasis(
        coords=gs.basis.copy(),
        weights=np.ones(gs.basis.shape[1]),
        struct=None,
        hermitian=not take_real_part,
        shape=shape,
        isometry=support_isometry(gsum / gs.offered) if compute_isometry else None,
        sample_count=gs.offered,
        seed=None,
        tol=tol,
        stall=stall,
    )


def sample_span(
    scenario: Scenario,
    ranks: RankVector,
    seed: int = 0,
    tol: float = 1e-8,
    stall: int = 8,
    hermitian: bool = False,
    compute_isometry: bool = True,
    max_samples: int = 200_000,
) -> MomentBasis:
    """Sampled span of a scenario at a fixed rank vector, in class coordinates.

    The default real-part basis is what the Bell and tracial programs use;
    `hermitian=True` keeps complex entries (the bounded block of hybrid
    scenarios).  The safety cap is the dimension-free span dimension: the
    sampled span can never exceed it.
    """
    struct = (
        scenario.bounded_structure()
        if isinstance(scenario, HybridScenario)
        else scenario.structure()
    )
    weights = struct.hermitian_weights() if hermitian else struct.real_weights()
    sqrt_w = np.sqrt(weights)
    cap = len(weights)
    gs = StreamingGramSchmidt(len(weights), tol, stall, cap)
    rng = np.random.default_rng(seed)
    msum = np.zeros(struct.n_classes, dtype=complex)
    while not gs.done:
        if gs.offered >= max_samples:
            raise SpanExtractionError(f"no convergence after {max_samples} samples")
        realization = sample_realization(scenario, ranks, rng)
        m = struct.moment_values(realization.sym_mats, realization.psi)
        coords = struct.hermitian_coords(m) if hermitian else struct.real_coords(m)
        gs.offer(coords * sqrt_w)
        if compute_isometry:
            msum += m
    isometry = None
    if compute_isometry:
        g = struct.matrix_from_classes((msum / gs.offered).real)
        isometry = support_isometry(g)
    return MomentBasis(
        coords=gs.basis.copy(),
        weights=weights,
        struct=struct,
        hermitian=hermitian,
        shape=(len(struct.words), len(struct.words)),
        isometry=isometry,
        sample_count=gs.offered,
        seed=seed,
        tol=tol,
        stall=stall,
        ranks=ranks,
        scenario_hash=scenario.content_hash(),
    )


def dimension_free_span(struct: MomentStructure) -> list[np.ndarray]:
    """Real symmetric span of moment matrices with no dimension bound.

    One matrix per merged word class: N_u + N_u† (twice N_u when u is
    self-adjoint), i.e. the symmetrized cell indicators.
    """
    out = []
    for mi in range(struct.n_merged):
        rep = int(struct.merged_rep[mi])
        adj = int(struct.adjoint[rep])
        mat = (struct.cell_class == rep).astype(float)
        mat += (struct.cell_class == adj).astype(float)
        out.append(mat)
    return out


# -- basis cache ---------------------------------------------------------


def save_basis(path, basis: MomentBasis) -> None:
    """Persist a struct-backed basis; leading magic identifies the format."""
    if basis.struct is None:
        raise ValueError("only struct-backed bases are cached")
    meta = {
        "scenario_hash": basis.scenario_hash,
        "seed": basis.seed,
        "tol": basis.tol,
        "stall": basis.stall,
        "hermitian": basis.hermitian,
        "sample_count": basis.sample_count,
        "ranks": str(basis.ranks) if basis.ranks is not None else None,
        "n": basis.n,
    }
    buf = io.BytesIO()
    np.savez_compressed(
        buf,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        coords=basis.coords,
        weights=basis.weights,
        isometry=basis.isometry if basis.isometry is not None else np.empty((0, 0)),
    )
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + b"\n")
        fh.write(buf.getvalue())


def load_basis(path, scenario: Scenario) -> MomentBasis:
    """Load a cached basis, checking magic and scenario hash."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: not a {CACHE_MAGIC.decode()} file")
        data = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    meta = json.loads(bytes(data["meta"]).decode())
    if meta["scenario_hash"] != scenario.content_hash():
        raise ValueError(f"{path}: cached basis belongs to a different scenario")
    struct = (
        scenario.bounded_structure()
        if isinstance(scenario, HybridScenario)
        else scenario.structure()
    )
    iso = data["isometry"]
    return MomentBasis(
        coords=data["coords"],
        weights=data["weights"],
        struct=struct,
        hermitian=meta["hermitian"],
        shape=(len(struct.words), len(struct.words)),
        isometry=iso if iso.size else None,
        sample_count=meta["sample_count"],
        seed=meta["seed"],
        tol=meta["tol"],
        stall=meta["stall"],
        ranks=RankVector.parse(meta["ranks"]) if meta["ranks"] else None,
        scenario_hash=meta["scenario_hash"],
    )
