"""Variational lower bounds by alternating (see-saw) optimization.

Works directly on the target spaces: states are unit vectors on the
tensor product of the bounded dimensions and every measurement is a POVM
there.  Projective settings are updated in closed form (binary) or by
pairwise subspace reassignment (multi-outcome); dilated settings get the
exact POVM update, a small SDP.  Each update is monotone, so the best
value over restarts is a certified realizable lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .sampling import Field, haar_unitary, random_measurement, random_pure_state
from .words import (
    BellScenario,
    HybridScenario,
    Kind,
    Measurement,
    OperatorSymbol,
    Party,
    Scenario,
    SymbolTable,
    TracialScenario,
)


@dataclass
class VariationalPoint:
    """One see-saw run: realizable state(s) + measurements and their value."""

    value: float
    psi: Optional[np.ndarray]  # Bell state; None for tracial scenarios
    states: Optional[list[np.ndarray]]  # tracial preparations
    povms: dict[tuple[str, int], list[np.ndarray]]  # (party, setting) -> elements
    history: list[float]  # value after every full round, monotone
    restart: int = 0

    @property
    def rounds(self) -> int:
        return len(self.history)


class _Terms:
    """Functional terms flattened to raw symbol words, no algebraic
    reduction: POVM elements are not projectors, so only Hermiticity of
    the individual symbols may be used (row† = reversed row)."""

    def __init__(self, functional, table: SymbolTable):
        sym_id = {s: i for i, s in enumerate(table.symbols)}
        self.table = table
        self.words: list[tuple[tuple[int, ...], float]] = []
        for row, col, coeff in functional.terms:
            try:
                w = tuple(sym_id[s] for s in reversed(row)) + tuple(sym_id[s] for s in col)
            except KeyError as err:
                raise KeyError(f"{functional.name}: unknown symbol {err.args[0]}") from None
            self.words.append((w, float(coeff)))
        for w, _ in self.words:
            seen = set()
            for sid in w:
                s = table.symbols[sid]
                if s.kind != Kind.PROJECTOR:
                    continue
                key = (s.party, s.setting)
                if key in seen:
                    raise NotImplementedError(
                        "see-saw requires functionals linear in each measurement"
                    )
                seen.add(key)


def _herm(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def _top_eigvec(h: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_herm(h))
    return vecs[:, -1]


def _pos_projector(delta: np.ndarray) -> np.ndarray:
    """Projector onto the strictly positive eigenspace."""
    vals, vecs = np.linalg.eigh(_herm(delta))
    keep = vecs[:, vals > 0]
    return keep @ keep.conj().T


def random_povm(dim: int, outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random full-support POVM: normalized Wishart blocks."""
    gs = []
    for _ in range(outcomes):
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        gs.append(a @ a.conj().T)
    s = sum(gs)
    vals, vecs = np.linalg.eigh(s)
    inv_sqrt = (vecs * (1 / np.sqrt(vals))) @ vecs.conj().T
    return [inv_sqrt @ g @ inv_sqrt for g in gs]


def optimal_povm(mats: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Exact maximizer of sum_b tr(E_b M_b) over POVMs on C^dim.

    Realified conelp: each complex PSD constraint E_b >= 0 becomes the
    2dim x 2dim block [[X, -Y], [Y, X]] >= 0 with E_b = X + iY, and
    completeness is a dense equality row per Hermitian basis element.
    """
    from cvxopt import matrix, solvers

    dim = mats[0].shape[0]
    outcomes = len(mats)
    basis: list[np.ndarray] = []
    for i in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1j
            e[j, i] = -1j
            basis.append(e)
    nb = len(basis)  # dim^2
    n = outcomes * nb

    def realify(e: np.ndarray) -> np.ndarray:
        x, y = e.real, e.imag
        return np.block([[x, -y], [y, x]])

    r_basis = [realify(h) for h in basis]
    k2 = (2 * dim) ** 2
    g = np.zeros((outcomes * k2, n))
    for b in range(outcomes):
        for k in range(nb):
            g[b * k2 : (b + 1) * k2, b * nb + k] = -r_basis[k].ravel()
    c = np.zeros(n)
    for b in range(outcomes):
        hm = _herm(mats[b])
        for k in range(nb):
            c[b * nb + k] = -np.trace(basis[k] @ hm).real
    a = np.zeros((nb, n))
    for b in range(outcomes):
        a[:, b * nb : (b + 1) * nb] = np.eye(nb)
    rhs = np.zeros(nb)
    rhs[:dim] = 1.0  # identity = sum of the diagonal basis elements
    sol = solvers.conelp(
        matrix(c),
        matrix(g),
        matrix(np.zeros(outcomes * k2)),
        dims={"l": 0, "q": [], "s": [2 * dim] * outcomes},
        A=matrix(a),
        b=matrix(rhs),
        options={"show_progress": False, "abstol": 1e-10, "reltol": 1e-10, "maxiters": 200},
    )
    if sol["x"] is None:
        raise RuntimeError(f"POVM update failed: {sol['status']}")
    x = np.array(sol["x"]).ravel()
    out = []
    for b in range(outcomes):
        e = sum(x[b * nb + k] * basis[k] for k in range(nb))
        vals, vecs = np.linalg.eigh(_herm(e))
        out.append((vecs * np.clip(vals, 0, None)) @ vecs.conj().T)
    return out


def _pairwise_projective_update(
    projs: list[np.ndarray], grads: list[np.ndarray], sweeps: int = 3
) -> list[np.ndarray]:
    """Improve a complete projective measurement outcome pair by pair.

    For each pair the joint subspace is re-split along the positive
    eigenspace of the compressed gradient difference; each swap is an
    exact maximization on that subspace, so the objective never drops.
    """
    projs = [p.copy() for p in projs]
    n = len(projs)
    for _ in range(sweeps):
        for a in range(n):
            for b in range(a + 1, n):
                s = _herm(projs[a] + projs[b])
                vals, vecs = np.linalg.eigh(s)
                q = vecs[:, vals > 0.5]
                if q.shape[1] == 0:
                    continue
                delta = q.conj().T @ _herm(grads[a] - grads[b]) @ q
                dv, dw = np.linalg.eigh(_herm(delta))
                keep = dw[:, dv > 0]
                pa = (q @ keep) @ (q @ keep).conj().T
                projs[a] = pa
                projs[b] = q @ q.conj().T - pa
    return projs


class _SeesawState:
    """Mutable realization on the target spaces."""

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.scenario = scenario
        if isinstance(scenario, BellScenario):
            self.parties = list(scenario.parties)
            self.dims = [p.dim for p in self.parties]
            self.total = math.prod(self.dims)
            self.psi = random_pure_state(self.total, Field.COMPLEX, rng)
            self.states = None
        elif isinstance(scenario, TracialScenario):
            self.parties = [Party("T", scenario.dim, scenario.settings)]
            self.dims = [scenario.dim]
            self.total = scenario.dim
            self.psi = None
            self.states = [
                random_pure_state(scenario.dim, Field.COMPLEX, rng)
                for _ in range(scenario.preparations)
            ]
        else:
            raise TypeError(
                f"see-saw over {type(scenario).__name__} is not defined; "
                "instantiate the unbounded parties at a finite dimension first"
            )
        self.table = scenario.symbol_table()
        self.povms: dict[tuple[str, int], list[np.ndarray]] = {}
        self.settings: list[tuple[str, int, Measurement, int]] = []  # + party index
        for pi, p in enumerate(self.parties):
            for x, meas in enumerate(p.settings):
                self.settings.append((p.name, x, meas, pi))
                if meas.dilated:
                    self.povms[(p.name, x)] = random_povm(p.dim, meas.outcomes, rng)
                else:
                    while True:
                        ranks = rng.multinomial(p.dim, np.ones(meas.outcomes) / meas.outcomes)
                        if ranks.max() < p.dim or meas.outcomes == 1:
                            break
                    self.povms[(p.name, x)] = random_measurement(
                        p.dim, [int(r) for r in ranks], Field.COMPLEX, rng
                    )

    # symbol id -> matrix on the full target space
    def _embedded(self, sid: int) -> np.ndarray:
        s = self.table.symbols[sid]
        if s.kind == Kind.TARGET_IDENTITY:
            return np.eye(self.total)
        if s.kind == Kind.STATE_PREP:
            v = self.states[s.setting]
            return np.outer(v, v.conj())
        pi = next(i for i, p in enumerate(self.parties) if p.name == s.party)
        op = self.povms[(s.party, s.setting)][s.outcome]
        before = math.prod(self.dims[:pi])
        after = math.prod(self.dims[pi + 1 :])
        if before > 1:
            op = np.kron(np.eye(before), op)
        if after > 1:
            op = np.kron(op, np.eye(after))
        return op

    def _word_matrix(self, word: tuple[int, ...]) -> np.ndarray:
        m = np.eye(self.total, dtype=complex)
        for sid in word:
            m = m @ self._embedded(sid)
        return m

    def value(self, terms: _Terms) -> float:
        acc = 0.0
        for w, coeff in terms.words:
            m = self._word_matrix(w)
            if self.psi is not None:
                acc += coeff * (self.psi.conj() @ m @ self.psi).real
            else:
                acc += coeff * np.trace(m).real
        return acc

    def _setting_gradient(self, terms: _Terms, party: str, x: int, outcomes: int, pi: int):
        """Per-outcome linear coefficient operators, reduced to the local space."""
        grads = [np.zeros((self.total, self.total), dtype=complex) for _ in range(outcomes)]
        const = 0.0
        for w, coeff in terms.words:
            pos = [
                i
                for i, sid in enumerate(w)
                if terms.table.symbols[sid].kind == Kind.PROJECTOR
                and terms.table.symbols[sid].party == party
                and terms.table.symbols[sid].setting == x
            ]
            if not pos:
                m = self._word_matrix(w)
                const += coeff * (
                    (self.psi.conj() @ m @ self.psi).real
                    if self.psi is not None
                    else np.trace(m).real
                )
                continue
            i = pos[0]
            a = terms.table.symbols[w[i]].outcome
            pre = self._word_matrix(w[:i])
            suf = self._word_matrix(w[i + 1 :])
            if self.psi is not None:
                grads[a] += coeff * np.outer(suf @ self.psi, self.psi.conj() @ pre)
            else:
                grads[a] += coeff * (suf @ pre)
        # compress tr(E_a^global G_a) to the party's local factor
        before = math.prod(self.dims[:pi])
        after = math.prod(self.dims[pi + 1 :])
        d = self.dims[pi]
        local = []
        for g in grads:
            t = g.reshape(before, d, after, before, d, after)
            local.append(np.einsum("iajibj->ab", t))
        return local, const

    def update_setting(self, terms: _Terms, party: str, x: int, meas: Measurement, pi: int):
        grads, _ = self._setting_gradient(terms, party, x, meas.outcomes, pi)
        grads = [_herm(g) for g in grads]
        if meas.dilated:
            self.povms[(party, x)] = optimal_povm(grads)
        elif meas.outcomes == 2:
            p0 = _pos_projector(grads[0] - grads[1])
            self.povms[(party, x)] = [p0, np.eye(len(p0)) - p0]
        else:
            self.povms[(party, x)] = _pairwise_projective_update(
                self.povms[(party, x)], grads
            )

    def update_states(self, terms: _Terms):
        if self.psi is not None:
            h = np.zeros((self.total, self.total), dtype=complex)
            for w, coeff in terms.words:
                h += coeff * self._word_matrix(w)
            self.psi = _top_eigvec(h)
            return
        for xs in range(len(self.states)):
            h = np.zeros((self.total, self.total), dtype=complex)
            for w, coeff in terms.words:
                pos = [
                    i
                    for i, sid in enumerate(w)
                    if terms.table.symbols[sid].kind == Kind.STATE_PREP
                    and terms.table.symbols[sid].setting == xs
                ]
                if not pos:
                    continue
                i = pos[0]
                pre = self._word_matrix(w[:i])
                suf = self._word_matrix(w[i + 1 :])
                h += coeff * (suf @ pre)
            self.states[xs] = _top_eigvec(h)


def _run_once(
    scenario: Scenario,
    terms: _Terms,
    rng: np.random.Generator,
    max_rounds: int,
    rel_tol: float,
    stall: int,
) -> VariationalPoint:
    st = _SeesawState(scenario, rng)
    history = [st.value(terms)]
    flat = 0
    for _ in range(max_rounds):
        for party, x, meas, pi in st.settings:
            st.update_setting(terms, party, x, meas, pi)
        st.update_states(terms)
        v = st.value(terms)
        prev = history[-1]
        if v < prev - 1e-8:
            # a numerically sloppy POVM update may lose a hair; keep going
            v = prev
        history.append(v)
        scale = max(abs(v), 1.0)
        flat = flat + 1 if (v - prev) / scale < rel_tol else 0
        if flat >= stall:
            break
    return VariationalPoint(
        value=history[-1],
        psi=st.psi,
        states=st.states,
        povms=st.povms,
        history=history,
    )


def seesaw(
    scenario: Scenario,
    functional,
    seed: int = 0,
    restarts: int = 20,
    max_rounds: int = 500,
    rel_tol: float = 1e-12,
    stall: int = 3,
) -> VariationalPoint:
    """Best see-saw point over independent random restarts.

    The returned value is always achieved by an explicit finite-dimensional
    realization, hence a valid lower bound on the scenario's optimum.
    """
    if isinstance(scenario, HybridScenario):
        raise TypeError(
            "see-saw needs all parties bounded; use instantiate_hybrid() first"
        )
    terms = _Terms(functional, scenario.symbol_table())
    best: Optional[VariationalPoint] = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        point = _run_once(scenario, terms, rng, max_rounds, rel_tol, stall)
        point.restart = r
        if best is None or point.value > best.value:
            best = point
    return best


def instantiate_hybrid(scenario: HybridScenario, free_dim: int = 2) -> BellScenario:
    """Bound the free parties of a hybrid scenario at a finite dimension.

    Any value attainable in the instantiated Bell scenario lower-bounds the
    hybrid optimum.
    """
    parties = tuple(
        Party(p.name, free_dim, p.settings) for p in scenario.free_parties
    ) + (scenario.bounded_party,)
    return BellScenario(
        field=scenario.field, parties=parties, level=max(scenario.level_free, 1)
    )
