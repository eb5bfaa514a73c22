"""Named scenarios and functionals with reference values.

Correlator-form inequalities (CHSH, the tripartite one) are expanded into
probability terms via A = E_0 - E_1.  Coefficient tables not derivable on
the spot (I3322 Collins-Gisin form, the Pironio facet) are locked by the
classical-bound enumeration tests plus their known quantum maxima.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .sampling import Field
from .sdp import LinearFunctional
from .words import (
    BellScenario,
    HybridScenario,
    Kind,
    Measurement,
    OperatorSymbol,
    Party,
    Scenario,
    TracialScenario,
)


@dataclass(frozen=True)
class ReferenceValue:
    label: str
    value: float
    tolerance: float
    provenance: str  # "analytic" | "literature" | "derived"


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    functional: LinearFunctional
    make_scenario: Callable[..., Scenario]
    default_dims: tuple[int, ...]
    default_level: int
    classical_bound: Optional[float]
    reference_values: tuple[ReferenceValue, ...] = ()

    def scenario(
        self,
        dims: Optional[Sequence[int]] = None,
        level: Optional[int] = None,
        field: Field = Field.COMPLEX,
    ) -> Scenario:
        d = tuple(dims) if dims is not None else self.default_dims
        if len(d) == 1 and len(self.default_dims) > 1:
            d = d * len(self.default_dims)
        if len(d) != len(self.default_dims):
            raise ValueError(
                f"{self.name}: expected {len(self.default_dims)} dimension(s), got {len(d)}"
            )
        return self.make_scenario(d, level if level is not None else self.default_level, field)


def _E(x: int, a: int) -> OperatorSymbol:
    return OperatorSymbol("A", x, a)


def _F(y: int, b: int) -> OperatorSymbol:
    return OperatorSymbol("B", y, b)


def _rho(x: int) -> OperatorSymbol:
    return OperatorSymbol("T", x, 0, Kind.STATE_PREP)


def _meas(y: int, b: int) -> OperatorSymbol:
    return OperatorSymbol("T", y, b)


def correlator_terms(
    p1: str, x: int, p2: str, z: int, coeff: float
) -> list[tuple[tuple, tuple, float]]:
    """Probability expansion of coeff * <O_x O_z> with O = E_0 - E_1."""
    out = []
    for a in (0, 1):
        for b in (0, 1):
            sign = -1.0 if (a + b) % 2 else 1.0
            out.append(
                ((OperatorSymbol(p1, x, a),), (OperatorSymbol(p2, z, b),), coeff * sign)
            )
    return out


# -- CHSH ----------------------------------------------------------------


def _chsh_functional() -> LinearFunctional:
    terms = []
    for x in (0, 1):
        for y in (0, 1):
            terms += correlator_terms("A", x, "B", y, -1.0 if x == y == 1 else 1.0)
    return LinearFunctional("chsh", tuple(terms))


def _chsh_scenario(dims, level, field):
    return BellScenario(
        field=field,
        parties=(
            Party("A", dims[0], (Measurement(2), Measurement(2))),
            Party("B", dims[-1], (Measurement(2), Measurement(2))),
        ),
        level=level,
    )


# -- I3322 ---------------------------------------------------------------

# Collins-Gisin normalization: classical maximum 0, qubit maximum 1/4,
# unconstrained quantum maximum ~0.2509.
_I3322_JOINT = ((1, 1, 1), (1, 1, -1), (1, -1, 0))  # coeff of P(00|x,y)
_I3322_MARG_A = (-1, 0, 0)  # coeff of P_A(0|x)
_I3322_MARG_B = (-2, -1, 0)  # coeff of P_B(0|y)


def _i3322_functional() -> LinearFunctional:
    terms = []
    for x in range(3):
        for y in range(3):
            if _I3322_JOINT[x][y]:
                terms.append(((_E(x, 0),), (_F(y, 0),), float(_I3322_JOINT[x][y])))
    for x in range(3):
        if _I3322_MARG_A[x]:
            terms.append(((), (_E(x, 0),), float(_I3322_MARG_A[x])))
    for y in range(3):
        if _I3322_MARG_B[y]:
            terms.append(((), (_F(y, 0),), float(_I3322_MARG_B[y])))
    return LinearFunctional("i3322", tuple(terms))


def _i3322_scenario(dims, level, field):
    return BellScenario(
        field=field,
        parties=(
            Party("A", dims[0], (Measurement(2),) * 3),
            Party("B", dims[-1], (Measurement(2),) * 3),
        ),
        level=level,
    )


# -- Pironio facet -------------------------------------------------------

# Facet of the local polytope with Alice: 3 binary settings, Bob: one
# binary and one ternary setting, in Collins-Gisin coordinates
# [P_A(0|x); P_B(0|0), P_B(0|1), P_B(1|1); P(00|x0), P(00|x1), P(01|x1)].
# Derived by exact vertex/facet computation over the 48 deterministic
# strategies; classical maximum 0, two-qubit POVM maximum (sqrt(2)-1)/2,
# two-qutrit maximum ~0.2532.
_PIRONIO_CG = (0, -1, 0, -1, -1, 0, 1, 0, -1, 1, 1, 1, -1, 1, 0)


def _pironio_functional() -> LinearFunctional:
    g = _PIRONIO_CG
    terms = []
    for x in range(3):
        if g[x]:
            terms.append(((), (_E(x, 0),), float(g[x])))
    for (y, b), co in zip(((0, 0), (1, 0), (1, 1)), g[3:6]):
        if co:
            terms.append(((), (_F(y, b),), float(co)))
    for x in range(3):
        for (y, b), co in zip(((0, 0), (1, 0), (1, 1)), g[6 + 3 * x : 9 + 3 * x]):
            if co:
                terms.append(((_E(x, 0),), (_F(y, b),), float(co)))
    return LinearFunctional("pironio", tuple(terms))


def _pironio_scenario(dims, level, field):
    da, db = dims[0], dims[-1]
    # the ternary setting needs a dilation whenever it cannot be projective
    dilated = db < 3
    return BellScenario(
        field=field,
        parties=(
            Party("A", da, (Measurement(2),) * 3),
            Party("B", db, (Measurement(2), Measurement(3, dilated=dilated))),
        ),
        level=level,
    )


# -- tripartite: CHSH_AC + CHSH_BC' --------------------------------------


def _tripartite_functional() -> LinearFunctional:
    terms = []
    for x in (0, 1):
        for z in (0, 1):
            s = -1.0 if x == z == 1 else 1.0
            terms += correlator_terms("A", x, "C", z, s)
            terms += correlator_terms("B", x, "C", z + 2, s)
    return LinearFunctional("tripartite", tuple(terms))


def _tripartite_scenario(dims, level, field):
    return HybridScenario(
        field=field,
        free_parties=(
            Party("A", None, (Measurement(2), Measurement(2))),
            Party("B", None, (Measurement(2), Measurement(2))),
        ),
        bounded_party=Party("C", dims[0], (Measurement(2),) * 4),
        level_free=1,
        level_bounded=level,
    )


# -- QRAC k -> log2(D) ---------------------------------------------------


def qrac_functional(k: int) -> LinearFunctional:
    """Average success probability of guessing bit y of x from one message.

    Uniform prior 1/(k 2^k); x runs over k-bit strings, x_y is bit y
    (least significant bit first).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    p = 1.0 / (k * 2**k)
    terms = []
    for x in range(2**k):
        for y in range(k):
            bit = (x >> y) & 1
            terms.append(((_rho(x),), (_meas(y, bit),), p))
    return LinearFunctional(f"qrac-{k}", tuple(terms))


def _qrac_scenario(k: int):
    def make(dims, level, field):
        return TracialScenario(
            field=field,
            preparations=2**k,
            settings=(Measurement(2),) * k,
            dim=dims[0],
            level=level,
        )

    return make


# -- mod-3 function ------------------------------------------------------


def mod3_target(x: int, y: int) -> int:
    return ((1 + 2 * (x == 3)) * y - x) % 3


def _mod3_functional() -> LinearFunctional:
    terms = []
    for x in range(4):
        for y in range(2):
            terms.append(((_rho(x),), (_meas(y, mod3_target(x, y)),), 1.0 / 8.0))
    return LinearFunctional("mod3", tuple(terms))


def _mod3_scenario(dims, level, field):
    d = dims[0]
    return TracialScenario(
        field=field,
        preparations=4,
        settings=(Measurement(3, dilated=d < 3), Measurement(3, dilated=d < 3)),
        dim=d,
        level=level,
    )


# -- classical bounds by exhaustive enumeration --------------------------


def bell_classical_bound(scenario: Scenario, functional: LinearFunctional) -> float:
    """Maximum over local deterministic strategies."""
    if isinstance(scenario, BellScenario):
        parties = scenario.parties
    elif isinstance(scenario, HybridScenario):
        parties = scenario.free_parties + (scenario.bounded_party,)
    else:
        raise TypeError("classical bound enumeration is for Bell-type scenarios")
    per_party = [
        list(itertools.product(*(range(m.outcomes) for m in p.settings)))
        for p in parties
    ]
    names = [p.name for p in parties]
    best = -math.inf
    for combo in itertools.product(*per_party):
        strat = {
            (names[i], x): a for i, assign in enumerate(combo) for x, a in enumerate(assign)
        }
        val = 0.0
        for row, col, coeff in functional.terms:
            ok = True
            for s in row + col:
                if s.kind == Kind.TARGET_IDENTITY:
                    continue
                if s.kind != Kind.PROJECTOR:
                    raise ValueError("Bell enumeration hit a non-measurement symbol")
                if strat[(s.party, s.setting)] != s.outcome:
                    ok = False
                    break
            if ok:
                val += coeff
        best = max(best, val)
    return best


def tracial_classical_bound(scenario: TracialScenario, functional: LinearFunctional) -> float:
    """Maximum over deterministic encodings into a classical dim-level message."""
    d = scenario.dim
    n_prep = scenario.preparations
    outcome_maps = [
        list(itertools.product(range(m.outcomes), repeat=d)) for m in scenario.settings
    ]
    # terms must be plain tr(rho_x F^y_b) pairs
    pairs = []
    for row, col, coeff in functional.terms:
        (r,) = row
        (c,) = col
        assert r.kind == Kind.STATE_PREP and c.kind == Kind.PROJECTOR
        pairs.append((r.setting, c.setting, c.outcome, coeff))
    best = -math.inf
    for enc in itertools.product(range(d), repeat=n_prep):
        for decs in itertools.product(*outcome_maps):
            val = sum(
                coeff for x, y, b, coeff in pairs if decs[y][enc[x]] == b
            )
            best = max(best, val)
    return best


# -- registry ------------------------------------------------------------


_SQRT2 = math.sqrt(2.0)

_REGISTRY: dict[str, Preset] = {}


def _register(preset: Preset) -> Preset:
    _REGISTRY[preset.name] = preset
    return preset


_register(
    Preset(
        name="chsh",
        description="CHSH correlator inequality, classical bound 2",
        functional=_chsh_functional(),
        make_scenario=_chsh_scenario,
        default_dims=(2, 2),
        default_level=2,
        classical_bound=2.0,
        reference_values=(
            ReferenceValue("quantum maximum (any dimension)", 2 * _SQRT2, 1e-5, "analytic"),
        ),
    )
)

_register(
    Preset(
        name="i3322",
        description="I3322 inequality (Collins-Gisin form), classical bound 0",
        functional=_i3322_functional(),
        make_scenario=_i3322_scenario,
        default_dims=(2, 2),
        default_level=2,
        classical_bound=0.0,
        reference_values=(
            ReferenceValue("two-qubit maximum", 0.25, 1e-5, "literature"),
            ReferenceValue("unconstrained quantum maximum", 0.2509, 2e-4, "literature"),
        ),
    )
)

_register(
    Preset(
        name="pironio",
        description="Pironio facet: Alice 3 binary settings, Bob binary + ternary",
        functional=_pironio_functional(),
        make_scenario=_pironio_scenario,
        default_dims=(2, 2),
        default_level=3,
        classical_bound=0.0,
        reference_values=(
            ReferenceValue("two-qubit POVM maximum", (_SQRT2 - 1) / 2, 1e-4, "literature"),
            ReferenceValue("two-qutrit maximum", 0.2532, 1e-3, "literature"),
        ),
    )
)

_register(
    Preset(
        name="tripartite",
        description="CHSH_AC + CHSH_BC' with unbounded A, B and bounded Charlie",
        functional=_tripartite_functional(),
        make_scenario=_tripartite_scenario,
        default_dims=(2,),
        default_level=2,
        classical_bound=4.0,
        reference_values=(
            ReferenceValue("qubit-Charlie maximum", 2 + 2 * _SQRT2, 1e-4, "literature"),
            ReferenceValue("unconstrained quantum maximum", 4 * _SQRT2, 1e-4, "literature"),
        ),
    )
)

for _k, _refs in (
    (2, (ReferenceValue("D=2 maximum", 0.5 + _SQRT2 / 4, 1e-6, "analytic"),
         ReferenceValue("D=3 maximum", 0.90450850, 1e-5, "literature"))),
    (3, (ReferenceValue("D=2 maximum", 0.788675, 1e-4, "literature"),
         ReferenceValue("D=3 maximum", 0.832273, 1e-4, "literature"),
         ReferenceValue("D=4 maximum", 0.908248, 1e-4, "literature"),
         ReferenceValue("D=5 maximum", 0.924445, 1e-4, "literature"),
         ReferenceValue("D=6 maximum", 0.954123, 4e-3, "literature"),
         ReferenceValue("D=7 maximum", 0.969841, 1e-4, "literature"))),
):
    _register(
        Preset(
            name=f"qrac-{_k}",
            description=f"QRAC {_k}->log2(D): guess bit y of a {_k}-bit string",
            functional=qrac_functional(_k),
            make_scenario=_qrac_scenario(_k),
            default_dims=(2,),
            default_level=2,
            classical_bound=None,
            reference_values=_refs,
        )
    )

_register(
    Preset(
        name="mod3",
        description="mod-3 guessing game, ternary measurements via dilation",
        functional=_mod3_functional(),
        make_scenario=_mod3_scenario,
        default_dims=(2,),
        default_level=2,
        classical_bound=None,
        reference_values=(
            ReferenceValue("D=2 maximum", 0.75, 1e-5, "literature"),
            ReferenceValue("D=3 maximum", 0.904508, 1e-4, "literature"),
        ),
    )
)


def preset_names() -> list[str]:
    return sorted(_REGISTRY)


def preset(name: str) -> Preset:
    key = name.lower()
    if key.startswith("qrac-"):
        # accept qrac-K and qrac-K-L (L = log2 of the intended dimension)
        parts = key.split("-")
        if len(parts) == 3 and parts[1].isdigit():
            key = f"qrac-{parts[1]}"
    if key == "mod-3":
        key = "mod3"
    if key not in _REGISTRY:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return _REGISTRY[key]
