"""Assembly and solution of the span-constrained SDP relaxations.

The decision variable is the coefficient vector c over the orthonormal
span basis {M_j}: maximize b·c subject to the identity-cell normalization
and V (sum_j c_j M_j) V† >= 0.  The PSD block is compressed by the
strict-feasibility isometry V so interior-point solvers have a strictly
feasible point to work with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .sampling import Field
from .span import MomentBasis, sample_span, support_isometry
from .words import (
    HybridScenario,
    MomentStructure,
    OperatorSymbol,
    RankVector,
    Scenario,
    SymbolTable,
    WordT,
    canonical_reduce,
    enumerate_rank_vectors,
    sample_realization,
)


@dataclass(frozen=True)
class LinearFunctional:
    """Linear objective over moment-matrix entries.

    Each term is (row symbols, column symbols, coefficient): the value is
    sum coeff * Gamma[row, col].  Symbols are resolved against a scenario's
    symbol table at assembly time.
    """

    name: str
    terms: tuple[tuple[tuple[OperatorSymbol, ...], tuple[OperatorSymbol, ...], float], ...]

    def resolved(self, table: SymbolTable) -> list[tuple[WordT, WordT, float]]:
        sym_id = {s: i for i, s in enumerate(table.symbols)}
        out = []
        for row, col, coeff in self.terms:
            if not math.isfinite(coeff):
                raise ValueError(f"{self.name}: non-finite coefficient")
            try:
                r = canonical_reduce([sym_id[s] for s in row], table)
                c = canonical_reduce([sym_id[s] for s in col], table)
            except KeyError as err:
                raise KeyError(f"{self.name}: unknown symbol {err.args[0]}") from None
            if r is None or c is None:
                continue  # zero word: contributes nothing
            out.append((r, c, coeff))
        return out

    def scaled(self, factor: float) -> "LinearFunctional":
        return LinearFunctional(
            self.name,
            tuple((r, c, coeff * factor) for r, c, coeff in self.terms),
        )


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    INFEASIBLE = "infeasible"
    FAILED = "failed"


@dataclass
class SolverSettings:
    gap: float = 1e-9
    retry_gap: float = 1e-7
    max_iter: int = 200
    feastol: float = 1e-9
    backend: str = "cvxopt"  # or "scs"


@dataclass
class SolveResult:
    value: float
    status: SolveStatus
    duality_gap: float
    coefficients: Optional[np.ndarray]
    iterations: int
    message: str = ""


@dataclass
class RelaxationProblem:
    """Compressed standard-form program over span coefficients."""

    objective: np.ndarray  # b_j = functional applied to M_j
    norm_vector: np.ndarray  # (M_j) at the identity-identity cell
    norm_value: float
    blocks: np.ndarray  # (N, k, k) compressed basis matrices V† M_j V
    basis: Optional[MomentBasis] = None
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.objective)

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]


def _cell_entry(struct: MomentStructure, values: np.ndarray, row: WordT, col: WordT) -> complex:
    try:
        i = struct.index[row]
        j = struct.index[col]
    except KeyError as err:
        raise KeyError(
            f"word {struct.table.label(err.args[0])!r} is outside this truncation"
        ) from None
    cid = struct.cell_class[i, j]
    return 0.0 if cid < 0 else values[cid]


def compress_blocks(basis: MomentBasis, isometry: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Stack of V† M_j V over the basis, built in chunks."""
    struct = basis.struct
    n = basis.n
    k = isometry.shape[1]
    out = np.empty((n, k, k))
    v = isometry
    cell = np.clip(struct.cell_class, 0, None)
    zero_mask = struct.cell_class < 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        vals = np.stack([basis.class_values(j) for j in range(start, stop)])
        mats = vals[:, cell]
        mats[:, zero_mask] = 0
        if basis.hermitian:
            comp = np.einsum("ij,njl,lm->nim", v.conj().T, mats, v)
            out[start:stop] = comp.real
        else:
            out[start:stop] = v.T @ mats.real @ v
    return out


def assemble_relaxation(
    functional: LinearFunctional,
    basis: MomentBasis,
    normalization_value: float,
    isometry: Optional[np.ndarray] = None,
    label: str = "",
) -> RelaxationProblem:
    """Bind a functional to a sampled span basis.

    Objective coefficients are the functional evaluated on each basis
    matrix; the PSD constraint acts on the V-compressed combination.
    """
    struct = basis.struct
    if struct is None:
        raise ValueError("assemble_relaxation needs a struct-backed basis")
    v = isometry if isometry is not None else basis.isometry
    if v is None:
        raise ValueError("no strict-feasibility isometry available")
    terms = functional.resolved(struct.table)
    n = basis.n
    b = np.zeros(n)
    norm_vec = np.zeros(n)
    for j in range(n):
        vals = basis.class_values(j)
        b[j] = sum(coeff * _cell_entry(struct, vals, r, c) for r, c, coeff in terms).real
        norm_vec[j] = vals[struct.identity_class].real
    blocks = compress_blocks(basis, v)
    return RelaxationProblem(b, norm_vec, float(normalization_value), blocks, basis, label)


# -- cone solve ----------------------------------------------------------


def _solve_cvxopt(problem: RelaxationProblem, gap: float, max_iter: int, feastol: float) -> SolveResult:
    from cvxopt import matrix, solvers

    n = problem.n
    k = problem.block_size
    c = matrix(-problem.objective)
    g_np = -problem.blocks.reshape(n, k * k).T  # cvxopt 's' block, column-major == symmetric
    g = matrix(np.ascontiguousarray(g_np))
    h = matrix(np.zeros(k * k))
    a = matrix(problem.norm_vector.reshape(1, n))
    b = matrix([float(problem.norm_value)])
    options = {
        "show_progress": False,
        "maxiters": max_iter,
        "abstol": gap,
        "reltol": gap,
        "feastol": feastol,
    }
    try:
        sol = solvers.conelp(c, g, h, dims={"l": 0, "q": [], "s": [k]}, A=a, b=b, options=options)
    except (ZeroDivisionError, ArithmeticError, ValueError) as err:
        return SolveResult(math.nan, SolveStatus.FAILED, math.inf, None, 0, f"cvxopt: {err}")
    status = sol["status"]
    x = np.array(sol["x"]).ravel() if sol["x"] is not None else None
    value = float(problem.objective @ x) if x is not None else math.nan
    gap_got = float(sol["gap"]) if sol["gap"] is not None else math.inf
    iters = int(sol.get("iterations", 0))
    if status == "optimal":
        return SolveResult(value, SolveStatus.OPTIMAL, gap_got, x, iters, "cvxopt optimal")
    if status == "primal infeasible":
        return SolveResult(math.nan, SolveStatus.INFEASIBLE, gap_got, None, iters, "cvxopt primal infeasible")
    if status == "dual infeasible":
        return SolveResult(math.nan, SolveStatus.FAILED, gap_got, None, iters, "cvxopt dual infeasible (unbounded)")
    if x is not None and np.isfinite(gap_got):
        return SolveResult(value, SolveStatus.INACCURATE, gap_got, x, iters, "cvxopt stopped early")
    return SolveResult(math.nan, SolveStatus.FAILED, math.inf, None, iters, "cvxopt unknown")


def _svec(mat: np.ndarray) -> np.ndarray:
    """Scaled lower-triangular vectorization (off-diagonals times sqrt(2))."""
    k = mat.shape[0]
    idx = np.tril_indices(k)
    scale = np.where(idx[0] == idx[1], 1.0, math.sqrt(2.0))
    return mat[idx] * scale


def _solve_scs(problem: RelaxationProblem, gap: float, max_iter: int) -> SolveResult:
    import scs
    from scipy import sparse

    n = problem.n
    k = problem.block_size
    rows = [sparse.csc_matrix(problem.norm_vector.reshape(1, n))]
    psd = np.stack([_svec(problem.blocks[j]) for j in range(n)], axis=1)
    a = sparse.vstack([rows[0], sparse.csc_matrix(-psd)], format="csc")
    b = np.zeros(a.shape[0])
    b[0] = problem.norm_value
    data = {"A": a, "b": b, "c": -problem.objective}
    cone = {"z": 1, "s": [k]}
    out = scs.solve(
        data, cone, eps_abs=gap, eps_rel=gap, max_iters=max(max_iter * 500, 20_000), verbose=False
    )
    info = out["info"]
    x = out["x"]
    value = float(problem.objective @ x) if x is not None else math.nan
    gap_got = abs(info.get("gap", math.inf))
    iters = int(info.get("iter", 0))
    status = info.get("status", "")
    if status == "solved":
        return SolveResult(value, SolveStatus.OPTIMAL, gap_got, x, iters, "scs solved")
    if "infeasible" in status:
        return SolveResult(math.nan, SolveStatus.INFEASIBLE, gap_got, None, iters, f"scs {status}")
    if "inaccurate" in status and x is not None:
        return SolveResult(value, SolveStatus.INACCURATE, gap_got, x, iters, f"scs {status}")
    return SolveResult(math.nan, SolveStatus.FAILED, math.inf, None, iters, f"scs {status}")


def solve(problem: RelaxationProblem, settings: Optional[SolverSettings] = None) -> SolveResult:
    """Solve the compressed SDP; one automatic retry at a relaxed gap.

    The contract is backend-agnostic: any result with status OPTIMAL
    satisfies the duality-gap and certificate invariants.
    """
    settings = settings or SolverSettings()
    if problem.n == 0:
        return SolveResult(math.nan, SolveStatus.FAILED, math.inf, None, 0, "empty basis")

    def run(gap):
        if settings.backend == "scs":
            return _solve_scs(problem, gap, settings.max_iter)
        return _solve_cvxopt(problem, gap, settings.max_iter, settings.feastol)

    result = run(settings.gap)
    if result.status in (SolveStatus.FAILED, SolveStatus.INACCURATE) and settings.retry_gap > settings.gap:
        retry = run(settings.retry_gap)
        if retry.status == SolveStatus.OPTIMAL:
            retry = replace(retry, status=SolveStatus.INACCURATE, message=retry.message + " (relaxed gap)")
        if retry.status != SolveStatus.FAILED:
            return retry
    return result


def verify_certificate(
    problem: RelaxationProblem,
    result: SolveResult,
    norm_tol: float = 1e-7,
    eig_tol: float = 1e-7,
) -> None:
    """Re-check normalization and compressed positivity of the solution."""
    assert result.coefficients is not None, "no solution to verify"
    c = result.coefficients
    norm = float(problem.norm_vector @ c)
    assert abs(norm - problem.norm_value) < norm_tol, f"normalization {norm} != {problem.norm_value}"
    gamma_c = np.tensordot(c, problem.blocks, axes=(0, 0))
    lo = np.linalg.eigvalsh((gamma_c + gamma_c.T) / 2).min()
    assert lo >= -eig_tol, f"compressed matrix has eigenvalue {lo}"


# -- full pipeline helpers ----------------------------------------------


@dataclass
class RankResult:
    ranks: RankVector
    result: SolveResult
    span_dim: int = 0
    sample_count: int = 0


@dataclass
class SweepReport:
    """Outcome of a rank sweep: the bound is the max over rank strata."""

    scenario: Scenario
    functional_name: str
    per_rank: list[RankResult]
    seed: int

    @property
    def value(self) -> float:
        vals = [
            r.result.value
            for r in self.per_rank
            if r.result.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE)
        ]
        return max(vals) if vals else math.nan

    @property
    def best(self) -> Optional[RankResult]:
        cands = [
            r
            for r in self.per_rank
            if r.result.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE)
        ]
        return max(cands, key=lambda r: r.result.value) if cands else None

    @property
    def any_failed(self) -> bool:
        return any(r.result.status == SolveStatus.FAILED for r in self.per_rank)

    @property
    def any_inaccurate(self) -> bool:
        return any(r.result.status == SolveStatus.INACCURATE for r in self.per_rank)


def upper_bound(
    scenario: Scenario,
    functional: LinearFunctional,
    ranks: RankVector,
    seed: int = 0,
    tol: float = 1e-8,
    stall: int = 8,
    settings: Optional[SolverSettings] = None,
    basis: Optional[MomentBasis] = None,
) -> RankResult:
    """Sample the span at one rank vector, assemble and solve."""
    if isinstance(scenario, HybridScenario):
        problem = assemble_hybrid_tripartite(scenario, functional, ranks, seed, tol, stall)
        result = solve(problem, settings)
        nb = problem.basis.n if problem.basis is not None else 0
        return RankResult(ranks, result, nb, problem.basis.sample_count if problem.basis else 0)
    if basis is None:
        basis = sample_span(scenario, ranks, seed=seed, tol=tol, stall=stall)
    problem = assemble_relaxation(functional, basis, scenario.normalization, label=str(ranks))
    result = solve(problem, settings)
    return RankResult(ranks, result, basis.n, basis.sample_count)


def _sweep_one(args) -> RankResult:
    scenario, functional, ranks, seed_pair, tol, stall, settings = args
    try:
        return upper_bound(scenario, functional, ranks, seed=seed_pair, tol=tol, stall=stall, settings=settings)
    except Exception as err:  # recorded per combination, sweep continues
        return RankResult(ranks, SolveResult(math.nan, SolveStatus.FAILED, math.inf, None, 0, str(err)))


def rank_sweep(
    scenario: Scenario,
    functional: LinearFunctional,
    seed: int = 0,
    tol: float = 1e-8,
    stall: int = 8,
    settings: Optional[SolverSettings] = None,
    jobs: int = 1,
    rank_vectors: Optional[Sequence[RankVector]] = None,
) -> SweepReport:
    """Maximize over all rank combinations of the projective settings.

    Each combination is an independent (span, solve) job; failures are
    recorded in the report without aborting the sweep.
    """
    vectors = list(rank_vectors) if rank_vectors is not None else enumerate_rank_vectors(scenario)
    tasks = [
        (scenario, functional, rv, [seed, i], tol, stall, settings)
        for i, rv in enumerate(vectors)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    return SweepReport(scenario, functional.name, results, seed)


# -- hybrid tripartite assembly -----------------------------------------


def hermitian_npa_basis(struct: MomentStructure) -> tuple[np.ndarray, list[np.ndarray]]:
    """Hermitian dimension-free basis for a word block.

    Returns class-value rows: for every merged class the symmetric
    combination N_u + N_u†, and for u != u† also i(N_u - N_u†).  Used to
    replace a sampled bounded block by its unconstrained limit.
    """
    rows = []
    for mi in range(struct.n_merged):
        rep = int(struct.merged_rep[mi])
        adj = int(struct.adjoint[rep])
        vals = np.zeros(struct.n_classes, dtype=complex)
        vals[rep] += 1.0
        vals[adj] += 1.0
        rows.append(vals)
        if adj != rep:
            vals = np.zeros(struct.n_classes, dtype=complex)
            vals[rep] += 1j
            vals[adj] += -1j
            rows.append(vals)
    mats = [struct.matrix_from_classes(v) for v in rows]
    return np.stack(rows), mats


def _hybrid_support(
    scenario: HybridScenario,
    ranks: RankVector,
    free_struct: MomentStructure,
    c_struct: MomentStructure,
    rng: np.random.Generator,
    n_samples: int,
    probe_dims: Sequence[int] = (2, 3),
) -> np.ndarray:
    """Average full product moment matrix Re(Gamma_AB (x) Gamma_C).

    The free parties are probed at small dimensions with random ranks;
    product states span the tripartite space, so the support of the
    average is the support of the feasible set.
    """
    from .words import BellScenario, Party

    probes = [
        BellScenario(
            field=scenario.field,
            parties=tuple(Party(p.name, d, p.settings) for p in scenario.free_parties),
            level=scenario.level_free,
        )
        for d in probe_dims
    ]
    probe_settings = [p.sweepable_settings() for p in probes]
    g = None
    for i in range(n_samples):
        probe = probes[i % len(probes)]
        probe_ranks = []
        for _, _, outcomes, dim in probe_settings[i % len(probes)]:
            # random composition of dim so the probe covers every stratum
            ranks_i = rng.multinomial(dim, np.ones(outcomes) / outcomes)
            probe_ranks.append(tuple(int(r) for r in ranks_i))
        ab_real = sample_realization(probe, RankVector(tuple(probe_ranks)), rng)
        c_real = sample_realization(scenario, ranks, rng)
        d_ab = ab_real.sym_mats[0].shape[0]
        d_c = c_real.sym_mats[0].shape[0]
        u_ops = _word_operators(free_struct.words, ab_real.sym_mats, d_ab)
        c_ops = _word_operators(c_struct.words, c_real.sym_mats, d_c)
        # entangled state across all three parties: product states alone miss
        # the cross terms of the quadratic map psi -> Gamma
        psi = rng.standard_normal((d_ab, d_c))
        if scenario.field is Field.COMPLEX:
            psi = psi + 1j * rng.standard_normal((d_ab, d_c))
        psi /= np.linalg.norm(psi)
        phi = np.stack([(u @ psi @ c.T).ravel() for u in u_ops for c in c_ops])
        full = phi.conj() @ phi.T
        g = full.real if g is None else g + full.real
    return g / n_samples


def _word_operators(
    words: Sequence[tuple], sym_mats: Sequence[np.ndarray], dim: int
) -> list[np.ndarray]:
    ops = []
    for w in words:
        o = np.eye(dim, dtype=complex)
        for s in w:
            o = o @ sym_mats[s]
        ops.append(o)
    return ops


def assemble_hybrid_tripartite(
    scenario: HybridScenario,
    functional: LinearFunctional,
    ranks: RankVector,
    seed: int = 0,
    tol: float = 1e-8,
    stall: int = 8,
    c_basis: Optional[MomentBasis] = None,
    dimension_free_c: bool = False,
    support_samples: int = 400,
) -> RelaxationProblem:
    """Tensor-product relaxation: dimension-free block for the unbounded
    parties, sampled (or unconstrained) Hermitian block for the bounded one.

    Decision variables are the real coefficients of the symmetrized
    elements (N_u + N_u†) (x) Re(M_j) and i(N_u - N_u†) (x) Im(M_j).
    """
    free_struct = scenario.free_structure()
    c_struct = scenario.bounded_structure()
    if dimension_free_c:
        _, c_mats = hermitian_npa_basis(c_struct)
    else:
        if c_basis is None:
            c_basis = sample_span(
                scenario, ranks, seed=seed, tol=tol, stall=stall, hermitian=True,
                compute_isometry=False,
            )
        c_mats = c_basis.matrices()
    # Only the real and imaginary parts of the C-block basis enter the real
    # overall matrix: reduce each family to a span-independent set, else the
    # element list overshoots the symmetric-matrix dimension.
    re_mats = _independent_real([np.asarray(m.real, dtype=float) for m in c_mats])
    im_mats = _independent_real([np.asarray(m.imag, dtype=float) for m in c_mats])

    seed_seq = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    rng = np.random.default_rng(seed_seq + [7_777])
    g = _hybrid_support(scenario, ranks, free_struct, c_struct, rng, support_samples)
    v = support_isometry(g)
    k = v.shape[1]
    s_ab = len(free_struct.words)
    s_c = len(c_struct.words)
    v3 = v.reshape(s_ab, s_c, k)

    terms = functional.resolved(_joint_table(scenario))
    ab_index = free_struct.index
    c_index = c_struct.index

    # Element grid: class carriers (N_u + N_u†, i-free antisymmetric parts)
    # tensored with the real/imaginary C-basis families.  Everything below is
    # normalized to unit Frobenius norm so residual thresholds are absolute.
    n_re = len(re_mats)
    cmats = [m / np.linalg.norm(m) for m in re_mats + im_mats]
    n_cm = len(cmats)
    carriers = []  # (cell-pattern matrix, slice into cmats)
    for mi in range(free_struct.n_merged):
        rep = int(free_struct.merged_rep[mi])
        adj = int(free_struct.adjoint[rep])
        n_u = (free_struct.cell_class == rep).astype(float)
        n_adj = (free_struct.cell_class == adj).astype(float)
        sym = n_u + n_adj if adj != rep else 2.0 * n_u
        carriers.append((sym / np.linalg.norm(sym), slice(0, n_re)))
        if adj != rep:
            anti = n_adj - n_u
            carriers.append((anti / np.linalg.norm(anti), slice(n_re, n_cm)))
    n_car = len(carriers)
    el_c = np.concatenate(
        [np.full(sl.stop - sl.start, ci) for ci, (_, sl) in enumerate(carriers)]
    )
    el_m = np.concatenate([np.arange(sl.start, sl.stop) for _, sl in carriers])
    n_el = el_c.size
    starts = np.concatenate([[0], np.cumsum([sl.stop - sl.start for _, sl in carriers])])

    id_ab_w = ab_index[()]
    id_c_w = c_index[()]
    split_terms = [(_split_words(r, c, scenario, ab_index, c_index), coeff) for r, c, coeff in terms]

    cm_stack = np.stack(cmats)
    # d_all[m, b] = C_m @ v3[b]; the building block of both e V and V† e V
    d_all = np.tensordot(cm_stack, v3, axes=(2, 1)).transpose(0, 2, 1, 3)
    blocks = np.empty((n_el, k, k))
    for ci, (s_mat, sl) in enumerate(carriers):
        kk = np.zeros((sl.stop - sl.start, k, k))
        for a, b in zip(*np.nonzero(s_mat)):
            kk += s_mat[a, b] * np.einsum("cK,mcL->mKL", v3[a], d_all[sl, b])
        blocks[starts[ci]:starts[ci + 1]] = kk

    s_flat = np.stack([s.ravel() for s, _ in carriers])
    norm_vec = s_flat.reshape(n_car, s_ab, s_ab)[el_c, id_ab_w, id_ab_w] * cm_stack[
        el_m, id_c_w, id_c_w
    ]
    obj = np.zeros(n_el)
    for ((ra, rc), (ca, cc)), coeff in split_terms:
        obj += coeff * s_flat.reshape(n_car, s_ab, s_ab)[el_c, ra, ca] * cm_stack[
            el_m, rc, cc
        ]

    # Restrict to combinations lying inside the sampled support (V V† e = e):
    # outside it the compressed PSD constraint loses the full-matrix cell
    # pattern and the program becomes unbounded.  The Gram matrix of the
    # off-support residuals (1 - V V†) e factorizes over the tensor structure,
    # so no full-size matrices are ever formed.
    cm_flat = cm_stack.reshape(n_cm, -1)
    gram = (s_flat @ s_flat.T)[np.ix_(el_c, el_c)] * (cm_flat @ cm_flat.T)[
        np.ix_(el_m, el_m)
    ]
    # <e V, e' V> = sum_{b,b'} (S^T S')[b,b'] <D[m,b], D[m',b']>
    d_flat = d_all.transpose(0, 1, 2, 3).reshape(n_cm * s_ab, s_c * k)
    h4 = (d_flat @ d_flat.T).reshape(n_cm, s_ab, n_cm, s_ab)
    for ci, (s_i, sl_i) in enumerate(carriers):
        for cj, (s_j, sl_j) in enumerate(carriers):
            r = s_i.T @ s_j
            gram[starts[ci]:starts[ci + 1], starts[cj]:starts[cj + 1]] -= np.einsum(
                "bc,ibjc->ij", r, h4[sl_i, :, sl_j, :]
            )
    vals, vecs = np.linalg.eigh(gram)
    keep = vals < 1e-10
    if not np.any(keep):
        raise ValueError("no support-compatible directions; increase support_samples")
    u_r = vecs[:, keep]
    blocks = np.tensordot(u_r.T, blocks, axes=(1, 0))
    blocks = (blocks + blocks.transpose(0, 2, 1)) / 2
    obj = u_r.T @ obj
    norm_vec = u_r.T @ norm_vec
    basis_stub = c_basis if not dimension_free_c else None
    return RelaxationProblem(
        obj, norm_vec, scenario.normalization, blocks, basis_stub, label=f"hybrid:{ranks}"
    )


def _independent_real(mats: Sequence[np.ndarray], tol: float = 1e-10) -> list[np.ndarray]:
    """Subset of the input spanning the same real-linear space."""
    out: list[np.ndarray] = []
    q: list[np.ndarray] = []
    for m in mats:
        v = m.ravel().astype(float)
        nrm0 = np.linalg.norm(v)
        if nrm0 == 0:
            continue
        for b in q:
            v = v - b * (b @ v)
        for b in q:
            v = v - b * (b @ v)
        nrm = np.linalg.norm(v)
        if nrm > tol * nrm0:
            q.append(v / nrm)
            out.append(m)
    return out


def _joint_table(scenario: HybridScenario) -> SymbolTable:
    from .words import _party_symbols

    syms = []
    order = []
    for p in scenario.free_parties:
        syms.extend(_party_symbols(p))
        order.append(p.name)
    syms.extend(_party_symbols(scenario.bounded_party))
    order.append(scenario.bounded_party.name)
    return SymbolTable(syms, order)


def _split_words(row: WordT, col: WordT, scenario: HybridScenario, ab_index, c_index):
    """Map joint-table words to (free-block, bounded-block) index pairs."""
    free_tab = scenario.free_table()
    c_tab = scenario.bounded_table()
    joint = _joint_table(scenario)

    def split(word):
        ab_syms, c_syms = [], []
        for sid in word:
            sym = joint.symbols[sid]
            if sym.party == scenario.bounded_party.name:
                c_syms.append(c_tab.symbols.index(sym))
            else:
                ab_syms.append(free_tab.symbols.index(sym))
        try:
            return ab_index[tuple(ab_syms)], c_index[tuple(c_syms)]
        except KeyError:
            raise KeyError(f"word outside the hybrid truncation: {joint.label(word)}") from None

    return split(row), split(col)


# -- problem dump --------------------------------------------------------


def dump_problem(problem: RelaxationProblem, fh) -> None:
    """Sparse triplet text serialization for external cross-checks."""
    fh.write("# dimcert standard-form dump\n")
    fh.write(f"vars {problem.n}\nblock {problem.block_size}\n")
    fh.write(f"normalization {problem.norm_value!r}\n")
    fh.write("objective\n")
    for j, val in enumerate(problem.objective):
        if val != 0:
            fh.write(f"{j} {float(val)!r}\n")
    fh.write("norm_row\n")
    for j, val in enumerate(problem.norm_vector):
        if val != 0:
            fh.write(f"{j} {float(val)!r}\n")
    fh.write("psd_blocks\n")
    for j in range(problem.n):
        mat = problem.blocks[j]
        idx = np.nonzero(np.abs(mat) > 1e-14)
        for r, c in zip(*idx):
            if r <= c:
                fh.write(f"{j} {r} {c} {float(mat[r, c])!r}\n")
    fh.write("end\n")
