"""Operator symbols, canonical words and moment matrices.

A word is a tuple of symbol ids in canonical form: idempotent repeats
collapsed, orthogonal same-setting neighbours annihilated (the zero word is
represented by ``None``), and symbols of distinct parties sorted into a
fixed party order.  Every entry of a moment matrix depends only on the
canonical word of the cell, Gamma[v, w] = m(canon(v† w)), so a moment
matrix is fully described by one scalar per word class.  All span and SDP
machinery downstream works in these class coordinates.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from .sampling import (
    Field,
    povm_dilation_measurement,
    random_measurement,
    random_projector,
    random_pure_state,
)

WordT = tuple[int, ...]  # canonical word as symbol ids; None stands for the zero word


class Kind(IntEnum):
    PROJECTOR = 0
    STATE_PREP = 1
    TARGET_IDENTITY = 2


@dataclass(frozen=True)
class OperatorSymbol:
    party: str
    setting: int
    outcome: int
    kind: Kind = Kind.PROJECTOR

    def label(self) -> str:
        if self.kind == Kind.TARGET_IDENTITY:
            return f"{self.party}:J"
        if self.kind == Kind.STATE_PREP:
            return f"{self.party}:rho{self.setting}"
        return f"{self.party}:{self.setting},{self.outcome}"


@dataclass(frozen=True)
class Measurement:
    """One measurement setting: outcome count plus measurement model."""

    outcomes: int
    dilated: bool = False

    def __post_init__(self):
        if self.outcomes < 2:
            raise ValueError("a measurement needs at least 2 outcomes")


@dataclass(frozen=True)
class Party:
    name: str
    dim: Optional[int]  # None = unbounded (NPA block of a hybrid scenario)
    settings: tuple[Measurement, ...]

    def __post_init__(self):
        if self.dim is not None and self.dim < 1:
            raise ValueError(f"party {self.name}: dim must be >= 1")
        if self.dim is None and any(m.dilated for m in self.settings):
            raise ValueError(f"party {self.name}: dilation requires a bounded dimension")

    @property
    def ancilla_dim(self) -> int:
        dil = [m.outcomes for m in self.settings if m.dilated]
        return max(dil) if dil else 1

    @property
    def local_dim(self) -> int:
        return self.ancilla_dim * (self.dim or 0)


class SymbolTable:
    """Flat symbol list with the metadata the reduction rules need."""

    def __init__(self, symbols: Sequence[OperatorSymbol], party_order: Sequence[str]):
        self.symbols = list(symbols)
        self.party_order = list(party_order)
        self.party_idx = np.array(
            [self.party_order.index(s.party) for s in symbols], dtype=np.int32
        )
        # symbols annihilate iff same orthogonality group and different outcome
        groups: dict[tuple, int] = {}
        orth = []
        for s in symbols:
            if s.kind == Kind.PROJECTOR:
                key = (s.party, s.setting)
                orth.append(groups.setdefault(key, len(groups)))
            else:
                orth.append(-1)
        self.orth_group = np.array(orth, dtype=np.int32)
        self.outcome = np.array([s.outcome for s in symbols], dtype=np.int32)
        # the last outcome of every complete measurement is redundant
        # (it equals identity minus the rest) and is dropped from word
        # generation, as usual for NPA-style hierarchies
        max_out: dict[int, int] = {}
        for g, s in zip(orth, symbols):
            if g >= 0:
                max_out[g] = max(max_out.get(g, -1), s.outcome)
        self.generating = np.array(
            [
                not (g >= 0 and s.outcome == max_out[g])
                for g, s in zip(orth, symbols)
            ],
            dtype=bool,
        )

    def __len__(self) -> int:
        return len(self.symbols)

    def label(self, word: Optional[WordT]) -> str:
        if word is None:
            return "0"
        if not word:
            return "1"
        return " ".join(self.symbols[i].label() for i in word)


def _reduce_block(seq: Iterable[int], table: SymbolTable) -> Optional[WordT]:
    """Stack-pass reduction of a single-party symbol sequence."""
    orth = table.orth_group
    out_ = table.outcome
    stack: list[int] = []
    for s in seq:
        if stack:
            top = stack[-1]
            if top == s:
                continue
            g = orth[s]
            if g >= 0 and g == orth[top] and out_[s] != out_[top]:
                return None
        stack.append(s)
    return tuple(stack)


def split_parties(word: WordT, table: SymbolTable) -> tuple[WordT, ...]:
    """Per-party blocks of a word, in party order, preserving internal order."""
    blocks: list[list[int]] = [[] for _ in table.party_order]
    for s in word:
        blocks[table.party_idx[s]].append(s)
    return tuple(tuple(b) for b in blocks)


def canonical_reduce(seq: Iterable[int], table: SymbolTable) -> Optional[WordT]:
    """Canonical form of a symbol string; None is the zero word.

    Applies, to a fixed point: idempotence PP -> P, same-setting
    orthogonality PP' -> 0, and commutation of distinct parties (stable
    sort into party order).
    """
    blocks: list[list[int]] = [[] for _ in table.party_order]
    for s in seq:
        blocks[table.party_idx[s]].append(s)
    out: list[int] = []
    for b in blocks:
        red = _reduce_block(b, table)
        if red is None:
            return None
        out.extend(red)
    return tuple(out)


def word_adjoint(word: WordT, table: SymbolTable) -> WordT:
    """Adjoint of a canonical word (all symbols are Hermitian)."""
    return tuple(itertools.chain.from_iterable(b[::-1] for b in split_parties(word, table)))


def _party_words(table: SymbolTable, party: int, max_len: int) -> list[list[WordT]]:
    """Canonical words over one party's generating symbols, by length."""
    syms = [
        i
        for i in range(len(table))
        if table.party_idx[i] == party and table.generating[i]
    ]
    by_len: list[list[WordT]] = [[()]]
    orth, out_ = table.orth_group, table.outcome
    for _ in range(max_len):
        nxt = []
        for w in by_len[-1]:
            for s in syms:
                if w:
                    top = w[-1]
                    if top == s:
                        continue
                    g = orth[s]
                    if g >= 0 and g == orth[top] and out_[s] != out_[top]:
                        continue
                nxt.append(w + (s,))
        by_len.append(nxt)
    return by_len


def generate_words(
    table: SymbolTable,
    level: int,
    party_level_caps: Optional[Sequence[int]] = None,
    extra_words: Sequence[WordT] = (),
) -> list[WordT]:
    """All canonical nonzero words of length <= level over the generating
    symbols, plus every length-1 word (so probability functionals resolve
    for all outcomes).

    Identity first, then ordered by (length, lexicographic ids).  Optional
    per-party length caps bound each party's block independently (used by
    the hybrid construction); `extra_words` appends hand-picked monomials.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    n_parties = len(table.party_order)
    caps = list(party_level_caps) if party_level_caps is not None else [level] * n_parties
    per_party = [_party_words(table, p, min(level, caps[p])) for p in range(n_parties)]
    words: set[WordT] = set()
    for lens in itertools.product(*(range(min(level, caps[p]) + 1) for p in range(n_parties))):
        if sum(lens) > level:
            continue
        for combo in itertools.product(*(per_party[p][lens[p]] for p in range(n_parties))):
            words.add(tuple(itertools.chain.from_iterable(combo)))
    if level >= 1:
        for s in range(len(table)):
            words.add((s,))
    for w in extra_words:
        red = canonical_reduce(w, table)
        if red is not None:
            words.add(red)
    return sorted(words, key=lambda w: (len(w), w))


class MomentStructure:
    """Word list plus the class decomposition of the moment-matrix cells.

    cell_class[v, w] is the class id of canon(v† w), or -1 for the zero
    word.  Real (merged) classes pair each class with its adjoint; the real
    part of any moment matrix is constant on them.
    """

    def __init__(self, table: SymbolTable, words: Sequence[WordT]):
        self.table = table
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        n = len(self.words)
        blocks = [split_parties(w, table) for w in self.words]
        n_parties = len(table.party_order)
        cell = np.empty((n, n), dtype=np.int32)
        class_ids: dict[WordT, int] = {}
        class_words: list[WordT] = []
        caches: list[dict] = [dict() for _ in range(n_parties)]

        for i in range(n):
            bi = blocks[i]
            for j in range(n):
                bj = blocks[j]
                parts: list[int] = []
                zero = False
                for p in range(n_parties):
                    key = (bi[p], bj[p])
                    cache = caches[p]
                    got = cache.get(key)
                    if got is None and key not in cache:
                        got = _reduce_block(bi[p][::-1] + bj[p], table)
                        cache[key] = got
                    if got is None:
                        zero = True
                        break
                    parts.extend(got)
                if zero:
                    cell[i, j] = -1
                    continue
                u = tuple(parts)
                cid = class_ids.get(u)
                if cid is None:
                    cid = len(class_words)
                    class_ids[u] = cid
                    class_words.append(u)
                cell[i, j] = cid

        self.cell_class = cell
        self.class_words = class_words
        self.class_ids = class_ids
        self.n_classes = len(class_words)
        counts = np.bincount(cell[cell >= 0].ravel(), minlength=self.n_classes)
        self.class_cells = counts
        self.adjoint = np.array(
            [class_ids[word_adjoint(u, table)] for u in class_words], dtype=np.int32
        )
        # merged (real) classes: {u, u†} with total cell count as weight
        merged_of: dict[int, int] = {}
        merged_rep: list[int] = []
        merged_weight: list[int] = []
        for cid in range(self.n_classes):
            adj = int(self.adjoint[cid])
            rep = min(cid, adj)
            if rep not in merged_of:
                merged_of[rep] = len(merged_rep)
                merged_rep.append(rep)
                merged_weight.append(int(counts[rep]) + (int(counts[adj]) if adj != rep else 0))
        self.class_merged = np.array(
            [merged_of[min(c, int(self.adjoint[c]))] for c in range(self.n_classes)],
            dtype=np.int32,
        )
        self.merged_rep = np.array(merged_rep, dtype=np.int32)
        self.merged_weight = np.array(merged_weight, dtype=np.float64)
        self.n_merged = len(merged_rep)
        self.identity_class = class_ids[()]
        # merged classes whose two members differ (u != u†): these carry an
        # imaginary degree of freedom in Hermitian moment matrices
        self.nsa_merged = np.array(
            [i for i, rep in enumerate(self.merged_rep) if self.adjoint[rep] != rep],
            dtype=np.int32,
        )
        self._dag = None

    # -- evaluation ------------------------------------------------------

    def _eval_dag(self):
        """Suffix DAG over class representative words, grouped for batching."""
        if self._dag is not None:
            return self._dag
        node_of: dict[WordT, int] = {(): 0}
        node_words: list[WordT] = [()]
        for u in self.class_words:
            for k in range(len(u) - 1, -1, -1):
                suf = u[k:]
                if suf not in node_of:
                    node_of[suf] = len(node_words)
                    node_words.append(suf)
        order = sorted(range(len(node_words)), key=lambda i: len(node_words[i]))
        # schedule: per (length, symbol) batches of (node, tail) index arrays
        sched: list[tuple[int, np.ndarray, np.ndarray]] = []
        by_key: dict[tuple[int, int], tuple[list, list]] = {}
        for i in order:
            w = node_words[i]
            if not w:
                continue
            key = (len(w), w[0])
            tgt, src = by_key.setdefault(key, ([], []))
            tgt.append(i)
            src.append(node_of[w[1:]])
        for (length, sym) in sorted(by_key):
            tgt, src = by_key[(length, sym)]
            sched.append((sym, np.array(tgt), np.array(src)))
        class_nodes = np.array([node_of[u] for u in self.class_words])
        self._dag = (len(node_words), sched, class_nodes)
        return self._dag

    def moment_values(
        self, sym_mats: Sequence[np.ndarray], psi: Optional[np.ndarray]
    ) -> np.ndarray:
        """m[class] = <psi| u |psi> (Bell) or tr(u) (tracial) per class word."""
        n_nodes, sched, class_nodes = self._eval_dag()
        dim = sym_mats[0].shape[0]
        dtype = np.result_type(*(m.dtype for m in sym_mats), psi.dtype if psi is not None else float)
        if psi is not None:
            vecs = np.zeros((n_nodes, dim), dtype=dtype)
            vecs[0] = psi
            for sym, tgt, src in sched:
                vecs[tgt] = vecs[src] @ sym_mats[sym].T
            return vecs[class_nodes] @ psi.conj()
        mats = np.zeros((n_nodes, dim, dim), dtype=dtype)
        mats[0] = np.eye(dim, dtype=dtype)
        for sym, tgt, src in sched:
            mats[tgt] = sym_mats[sym] @ mats[src]
        return np.einsum("nii->n", mats[class_nodes])

    def real_coords(self, m: np.ndarray) -> np.ndarray:
        """Unweighted real class coordinates of Re(Gamma) built from m."""
        return np.asarray(m[self.merged_rep].real, dtype=np.float64)

    def real_weights(self) -> np.ndarray:
        """Cell multiplicities: tr(A^T B) = sum_c w_c a_c b_c on merged coords."""
        return self.merged_weight

    def hermitian_coords(self, m: np.ndarray) -> np.ndarray:
        """Realified coordinates of a Hermitian moment matrix.

        Layout: Re over all merged classes, then Im over the merged classes
        with u != u†.  With `hermitian_weights` this realifies tr(A† B)
        into a plain dot product.
        """
        re = np.asarray(m[self.merged_rep].real, dtype=np.float64)
        im = np.asarray(m[self.merged_rep[self.nsa_merged]].imag, dtype=np.float64)
        return np.concatenate([re, im])

    def hermitian_weights(self) -> np.ndarray:
        return np.concatenate([self.merged_weight, self.merged_weight[self.nsa_merged]])

    def class_values_from_real(self, coords: np.ndarray) -> np.ndarray:
        """Per-class values of the real symmetric matrix with merged coords."""
        return coords[self.class_merged]

    def class_values_from_hermitian(self, coords: np.ndarray) -> np.ndarray:
        """Per-class complex values of the Hermitian matrix with realified coords."""
        vals = np.zeros(self.n_classes, dtype=complex)
        vals[self.merged_rep] = coords[: self.n_merged]
        vals[self.merged_rep[self.nsa_merged]] += 1j * coords[self.n_merged :]
        adj_reps = self.adjoint[self.merged_rep[self.nsa_merged]]
        vals[adj_reps] = np.conj(vals[self.merged_rep[self.nsa_merged]])
        return vals

    def matrix_from_classes(self, values: np.ndarray) -> np.ndarray:
        """Scatter per-class values into the full words x words matrix."""
        out = values[np.clip(self.cell_class, 0, None)]
        out[self.cell_class < 0] = 0
        return out

    def matrix_from_real_coords(self, coords: np.ndarray) -> np.ndarray:
        return self.matrix_from_classes(coords[self.class_merged])


def npa_basis_matrices(struct: MomentStructure) -> dict[int, np.ndarray]:
    """The 0/1 matrices N_u, one per word class: (N_u)[v,w] = [canon(v†w) = u].

    Every nonzero cell belongs to exactly one N_u; together they partition
    the support of the moment matrix.
    """
    out = {}
    for cid in range(struct.n_classes):
        out[cid] = (struct.cell_class == cid).astype(np.float64)
    return out


# -- scenarios -----------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    field: Field = Field.COMPLEX

    def symbol_table(self) -> SymbolTable:
        raise NotImplementedError

    def words(self) -> list[WordT]:
        raise NotImplementedError

    def structure(self) -> MomentStructure:
        key = "_struct_cache"
        cached = getattr(self, key, None)
        if cached is None:
            cached = MomentStructure(self.symbol_table(), self.words())
            object.__setattr__(self, key, cached)
        return cached

    @property
    def normalization(self) -> float:
        raise NotImplementedError

    def sweepable_settings(self) -> list[tuple[str, int, int, int]]:
        """(party, setting, outcomes, dim) for every projective setting."""
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def content_hash(self) -> str:
        return hashlib.sha256(self.describe().encode()).hexdigest()[:16]


def _party_symbols(party: Party) -> list[OperatorSymbol]:
    syms = []
    for x, meas in enumerate(party.settings):
        for a in range(meas.outcomes):
            syms.append(OperatorSymbol(party.name, x, a))
    if any(m.dilated for m in party.settings):
        syms.append(OperatorSymbol(party.name, -1, 0, Kind.TARGET_IDENTITY))
    return syms


@dataclass(frozen=True)
class BellScenario(Scenario):
    """Bipartite (or multipartite, all parties bounded) Bell scenario."""

    parties: tuple[Party, ...] = ()
    level: int = 2
    extra_words: tuple[WordT, ...] = ()
    party_level_caps: Optional[tuple[int, ...]] = None  # intermediate levels

    def __post_init__(self):
        if len(self.parties) < 2:
            raise ValueError("a Bell scenario needs at least two parties")
        if any(p.dim is None for p in self.parties):
            raise ValueError("all Bell parties must have a bounded dimension")
        if self.party_level_caps is not None and len(self.party_level_caps) != len(
            self.parties
        ):
            raise ValueError("need one level cap per party")

    def symbol_table(self) -> SymbolTable:
        syms = []
        for p in self.parties:
            syms.extend(_party_symbols(p))
        return SymbolTable(syms, [p.name for p in self.parties])

    def words(self) -> list[WordT]:
        return generate_words(
            self.symbol_table(),
            self.level,
            party_level_caps=self.party_level_caps,
            extra_words=self.extra_words,
        )

    @property
    def normalization(self) -> float:
        return 1.0

    def sweepable_settings(self):
        out = []
        for p in self.parties:
            for x, meas in enumerate(p.settings):
                if not meas.dilated:
                    out.append((p.name, x, meas.outcomes, p.dim))
        return out

    def describe(self) -> str:
        parts = []
        for p in self.parties:
            ms = ",".join(f"{m.outcomes}{'d' if m.dilated else ''}" for m in p.settings)
            parts.append(f"{p.name}[{ms}]@{p.dim}")
        return (
            f"bell({';'.join(parts)};level={self.level};caps={self.party_level_caps};"
            f"field={self.field.value};extra={self.extra_words})"
        )


@dataclass(frozen=True)
class TracialScenario(Scenario):
    """Prepare-and-measure scenario evaluated against the unnormalized
    maximally mixed reference: moments are plain traces."""

    preparations: int = 2
    settings: tuple[Measurement, ...] = ()
    dim: int = 2
    level: int = 2
    extra_words: tuple[WordT, ...] = ()

    def __post_init__(self):
        if self.preparations < 1 or self.dim < 1:
            raise ValueError("need at least one preparation and dim >= 1")

    @property
    def ancilla_dim(self) -> int:
        dil = [m.outcomes for m in self.settings if m.dilated]
        return max(dil) if dil else 1

    @property
    def total_dim(self) -> int:
        return self.ancilla_dim * self.dim

    def symbol_table(self) -> SymbolTable:
        syms = [
            OperatorSymbol("T", x, 0, Kind.STATE_PREP) for x in range(self.preparations)
        ]
        for y, meas in enumerate(self.settings):
            for b in range(meas.outcomes):
                syms.append(OperatorSymbol("T", y, b))
        if any(m.dilated for m in self.settings):
            syms.append(OperatorSymbol("T", -1, 0, Kind.TARGET_IDENTITY))
        return SymbolTable(syms, ["T"])

    def words(self) -> list[WordT]:
        return generate_words(self.symbol_table(), self.level, extra_words=self.extra_words)

    @property
    def normalization(self) -> float:
        # trace of the identity on the (possibly dilated) carrier space
        return float(self.total_dim)

    def sweepable_settings(self):
        return [
            ("T", y, m.outcomes, self.dim)
            for y, m in enumerate(self.settings)
            if not m.dilated
        ]

    def describe(self) -> str:
        ms = ",".join(f"{m.outcomes}{'d' if m.dilated else ''}" for m in self.settings)
        return (
            f"tracial(prep={self.preparations};meas=[{ms}];dim={self.dim};"
            f"level={self.level};field={self.field.value};extra={self.extra_words})"
        )


@dataclass(frozen=True)
class HybridScenario(Scenario):
    """Tripartite scenario: unbounded parties handled by the dimension-free
    span, one bounded party by a sampled complex Hermitian span."""

    free_parties: tuple[Party, ...] = ()
    bounded_party: Party = None  # type: ignore[assignment]
    level_free: int = 1
    level_bounded: int = 2

    def __post_init__(self):
        if any(p.dim is not None for p in self.free_parties):
            raise ValueError("free parties must have dim=None")
        if self.bounded_party is None or self.bounded_party.dim is None:
            raise ValueError("the bounded party needs a finite dimension")

    def free_table(self) -> SymbolTable:
        syms = []
        for p in self.free_parties:
            syms.extend(_party_symbols(p))
        return SymbolTable(syms, [p.name for p in self.free_parties])

    def bounded_table(self) -> SymbolTable:
        return SymbolTable(
            _party_symbols(self.bounded_party), [self.bounded_party.name]
        )

    def free_structure(self) -> MomentStructure:
        table = self.free_table()
        return MomentStructure(table, generate_words(table, self.level_free))

    def bounded_structure(self) -> MomentStructure:
        table = self.bounded_table()
        return MomentStructure(table, generate_words(table, self.level_bounded))

    @property
    def normalization(self) -> float:
        return 1.0

    def sweepable_settings(self):
        p = self.bounded_party
        return [
            (p.name, x, m.outcomes, p.dim)
            for x, m in enumerate(p.settings)
            if not m.dilated
        ]

    def describe(self) -> str:
        parts = []
        for p in self.free_parties:
            ms = ",".join(str(m.outcomes) for m in p.settings)
            parts.append(f"{p.name}[{ms}]@inf")
        bp = self.bounded_party
        ms = ",".join(f"{m.outcomes}{'d' if m.dilated else ''}" for m in bp.settings)
        parts.append(f"{bp.name}[{ms}]@{bp.dim}")
        return (
            f"hybrid({';'.join(parts)};n_free={self.level_free};"
            f"n_bounded={self.level_bounded};field={self.field.value})"
        )


# -- rank vectors --------------------------------------------------------


@dataclass(frozen=True)
class RankVector:
    """Per projective setting (scenario order), the outcome ranks."""

    ranks: tuple[tuple[int, ...], ...]

    def __str__(self) -> str:
        return ";".join(",".join(str(r) for r in rs) for rs in self.ranks)

    @staticmethod
    def parse(text: str) -> "RankVector":
        return RankVector(
            tuple(tuple(int(r) for r in part.split(",")) for part in text.split(";"))
        )


def validate_ranks(scenario: Scenario, ranks: RankVector) -> None:
    settings = scenario.sweepable_settings()
    if len(ranks.ranks) != len(settings):
        raise ValueError(
            f"rank vector has {len(ranks.ranks)} settings, scenario has {len(settings)}"
        )
    for rs, (party, x, outcomes, dim) in zip(ranks.ranks, settings):
        if len(rs) != outcomes:
            raise ValueError(f"setting {party}:{x}: {len(rs)} ranks for {outcomes} outcomes")
        if any(r < 0 for r in rs) or sum(rs) != dim:
            raise ValueError(f"setting {party}:{x}: rank sum {sum(rs)} != dim {dim}")


def balanced_ranks(scenario: Scenario) -> RankVector:
    """Near-uniform rank split per setting; the generic full-support choice."""
    out = []
    for _, _, outcomes, dim in scenario.sweepable_settings():
        base, extra = divmod(dim, outcomes)
        out.append(tuple(base + (1 if i < extra else 0) for i in range(outcomes)))
    return RankVector(tuple(out))


def enumerate_rank_vectors(scenario: Scenario) -> list[RankVector]:
    """All rank assignments: per setting, compositions of dim into
    nonnegative outcome ranks.

    Combinations where some party's every setting is the trivial
    all-in-one-outcome measurement (so each of its measurements is an
    identity) are excluded.
    """
    settings = scenario.sweepable_settings()
    per_setting = []
    for _, _, outcomes, dim in settings:
        per_setting.append(list(_compositions(dim, outcomes)))
    out = []
    parties = sorted({party for party, *_ in settings})
    for combo in itertools.product(*per_setting):
        skip = False
        for pname in parties:
            idxs = [i for i, (party, *_) in enumerate(settings) if party == pname]
            if idxs and all(max(combo[i]) == sum(combo[i]) for i in idxs):
                skip = True
                break
        if not skip:
            out.append(RankVector(tuple(combo)))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# -- sampled realizations ------------------------------------------------


@dataclass
class SampledRealization:
    """Concrete state + operators on the (possibly dilated) carrier space."""

    scenario: Scenario
    sym_mats: list[np.ndarray]
    psi: Optional[np.ndarray]  # None for tracial scenarios
    ranks: Optional[RankVector]
    field: Field

    def validate(self) -> None:
        from .sampling import check_projective_measurement  # local import, test helper

        for m in self.sym_mats:
            assert np.abs(m @ m - m).max() < 1e-10
            assert np.abs(m - m.conj().T).max() < 1e-10
        if self.psi is not None:
            assert abs(np.linalg.norm(self.psi) - 1) < 1e-12
        if self.field is Field.REAL:
            for m in self.sym_mats:
                assert not np.iscomplexobj(m) or np.abs(m.imag).max() == 0


def _embed(op: np.ndarray, before: int, after: int) -> np.ndarray:
    out = op
    if before > 1:
        out = np.kron(np.eye(before), out)
    if after > 1:
        out = np.kron(out, np.eye(after))
    return out


def _party_local_ops(
    party: Party,
    setting_ranks: dict[int, tuple[int, ...]],
    field: Field,
    rng: np.random.Generator,
) -> dict[tuple[int, int], np.ndarray]:
    """Local-space operators for one bounded party, keyed by (setting, outcome).

    Key (-1, 0) is the target-space identity when the party has dilated
    settings.  The local space is C^anc (x) C^dim with the ancilla fixed to
    |0> in states.
    """
    anc, dim = party.ancilla_dim, party.dim
    ops: dict[tuple[int, int], np.ndarray] = {}
    for x, meas in enumerate(party.settings):
        if meas.dilated:
            d = meas.outcomes
            # block ranks (anc - d + 1, 1, ..., 1) * dim: Naimark covers every
            # POVM once the ancilla has at least d levels
            blocks = [anc - d + 1] + [1] * (d - 1)
            projs = random_measurement(anc * dim, [b * dim for b in blocks], field, rng)
            for a, p in enumerate(projs):
                ops[(x, a)] = p
        else:
            projs = random_measurement(dim, setting_ranks[x], field, rng)
            for a, p in enumerate(projs):
                ops[(x, a)] = _embed(p, anc, 1)
    if anc > 1:
        j = np.zeros((anc, anc))
        j[0, 0] = 1.0
        ops[(-1, 0)] = np.kron(j, np.eye(dim))
    return ops


def _ranks_by_setting(scenario: Scenario, ranks: RankVector) -> dict[tuple[str, int], tuple[int, ...]]:
    validate_ranks(scenario, ranks)
    return {
        (party, x): rs
        for rs, (party, x, _, _) in zip(ranks.ranks, scenario.sweepable_settings())
    }


def sample_bell_realization(
    scenario: BellScenario, ranks: RankVector, rng: np.random.Generator
) -> SampledRealization:
    """Random state + measurements for a Bell scenario at fixed ranks.

    Operators are returned on the global space, party-local operators
    padded with identities; the state carries fixed |0> ancillas on every
    dilated party.
    """
    by_setting = _ranks_by_setting(scenario, ranks)
    table = scenario.symbol_table()
    local_ops = []
    for p in scenario.parties:
        setting_ranks = {
            x: by_setting[(p.name, x)]
            for x, m in enumerate(p.settings)
            if not m.dilated
        }
        local_ops.append(_party_local_ops(p, setting_ranks, scenario.field, rng))
    local_dims = [p.local_dim for p in scenario.parties]
    sym_mats = []
    for s in table.symbols:
        pi = table.party_order.index(s.party)
        op = local_ops[pi][(s.setting, s.outcome)]
        before = math.prod(local_dims[:pi])
        after = math.prod(local_dims[pi + 1 :])
        sym_mats.append(_embed(op, before, after))
    # state on the target spaces, ancillas pinned to |0>
    target = random_pure_state(math.prod(p.dim for p in scenario.parties), scenario.field, rng)
    psi = target
    for pi, p in enumerate(scenario.parties):
        anc = p.ancilla_dim
        if anc > 1:
            e0 = np.zeros(anc)
            e0[0] = 1.0
            before = math.prod(local_dims[:pi])
            shape_after = psi.size // (before * p.dim)
            psi = psi.reshape(before, p.dim, shape_after)
            psi = np.einsum("a,ids->iads", e0, psi).reshape(-1)
    return SampledRealization(scenario, sym_mats, psi, ranks, scenario.field)


def sample_tracial_realization(
    scenario: TracialScenario, ranks: RankVector, rng: np.random.Generator
) -> SampledRealization:
    """Random rank-1 preparations and measurements for a tracial scenario."""
    by_setting = _ranks_by_setting(scenario, ranks)
    table = scenario.symbol_table()
    anc, dim = scenario.ancilla_dim, scenario.dim
    sym_mats: list[np.ndarray] = []
    meas_ops: dict[tuple[int, int], np.ndarray] = {}
    for y, meas in enumerate(scenario.settings):
        if meas.dilated:
            d = meas.outcomes
            blocks = [anc - d + 1] + [1] * (d - 1)
            projs = random_measurement(anc * dim, [b * dim for b in blocks], scenario.field, rng)
        else:
            projs = [
                _embed(p, anc, 1)
                for p in random_measurement(dim, by_setting[("T", y)], scenario.field, rng)
            ]
        for b, p in enumerate(projs):
            meas_ops[(y, b)] = p
    e0 = np.zeros(anc)
    e0[0] = 1.0
    for s in table.symbols:
        if s.kind == Kind.STATE_PREP:
            psi_x = random_pure_state(dim, scenario.field, rng)
            v = np.kron(e0, psi_x) if anc > 1 else psi_x
            sym_mats.append(np.outer(v, v.conj()))
        elif s.kind == Kind.TARGET_IDENTITY:
            j = np.outer(e0, e0)
            sym_mats.append(np.kron(j, np.eye(dim)))
        else:
            sym_mats.append(meas_ops[(s.setting, s.outcome)])
    return SampledRealization(scenario, sym_mats, None, ranks, scenario.field)


def sample_bounded_block_realization(
    scenario: HybridScenario, ranks: RankVector, rng: np.random.Generator
) -> SampledRealization:
    """State + measurements for the bounded party of a hybrid scenario.

    The block is kept complex: the tripartite span is generated by product
    states, so the bounded block's Hermitian moment matrices (not just
    their real parts) enter the tensor basis.
    """
    by_setting = _ranks_by_setting(scenario, ranks)
    p = scenario.bounded_party
    table = scenario.bounded_table()
    setting_ranks = {
        x: by_setting[(p.name, x)] for x, m in enumerate(p.settings) if not m.dilated
    }
    ops = _party_local_ops(p, setting_ranks, scenario.field, rng)
    sym_mats = [ops[(s.setting, s.outcome)] for s in table.symbols]
    anc = p.ancilla_dim
    target = random_pure_state(p.dim, scenario.field, rng)
    if anc > 1:
        e0 = np.zeros(anc)
        e0[0] = 1.0
        target = np.kron(e0, target)
    return SampledRealization(scenario, sym_mats, target, ranks, scenario.field)


def sample_realization(
    scenario: Scenario, ranks: RankVector, rng: np.random.Generator
) -> SampledRealization:
    if isinstance(scenario, BellScenario):
        return sample_bell_realization(scenario, ranks, rng)
    if isinstance(scenario, TracialScenario):
        return sample_tracial_realization(scenario, ranks, rng)
    if isinstance(scenario, HybridScenario):
        return sample_bounded_block_realization(scenario, ranks, rng)
    raise TypeError(f"cannot sample {type(scenario).__name__}")


@dataclass
class MomentMatrix:
    """Moment matrix over an explicit word list."""

    words: list[WordT]
    entries: np.ndarray
    normalization: float

    def check(self, tol_eig: float = 1e-9, tol_herm: float = 1e-10) -> None:
        g = self.entries
        assert np.abs(g - g.conj().T).max() < tol_herm, "moment matrix not Hermitian"
        lo = np.linalg.eigvalsh((g + g.conj().T) / 2).min()
        assert lo >= -tol_eig, f"moment matrix has eigenvalue {lo}"
        assert abs(g[0, 0] - self.normalization) < tol_herm


def evaluate_moment_matrix(
    realization: SampledRealization,
    struct: Optional[MomentStructure] = None,
) -> MomentMatrix:
    """Full moment matrix of a sampled realization.

    Bell entries are <psi| u† w |psi>; tracial entries tr(u† w); the
    bounded block of a hybrid scenario uses its local state.
    """
    scenario = realization.scenario
    if struct is None:
        struct = (
            scenario.bounded_structure()
            if isinstance(scenario, HybridScenario)
            else scenario.structure()
        )
    m = struct.moment_values(realization.sym_mats, realization.psi)
    norm = 1.0 if realization.psi is not None else scenario.normalization
    return MomentMatrix(struct.words, struct.matrix_from_classes(m), norm)
