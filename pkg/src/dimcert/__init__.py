"""Certified bounds on finite-dimensional quantum correlations.

Upper bounds come from SDP relaxations over sampled moment-matrix spans;
lower bounds from see-saw optimization.  See the README for the CLI.
"""

from .sampling import Field
from .sdp import (
    LinearFunctional,
    RankResult,
    RelaxationProblem,
    SolveResult,
    SolveStatus,
    SolverSettings,
    SweepReport,
    assemble_hybrid_tripartite,
    assemble_relaxation,
    rank_sweep,
    solve,
    upper_bound,
)
from .seesaw import VariationalPoint, instantiate_hybrid, seesaw
from .span import (
    MomentBasis,
    SpanExtractionError,
    dimension_free_span,
    extract_basis,
    load_basis,
    sample_span,
    save_basis,
)
from .presets import Preset, preset, preset_names, qrac_functional
from .words import (
    BellScenario,
    HybridScenario,
    Measurement,
    MomentStructure,
    Party,
    RankVector,
    Scenario,
    TracialScenario,
    balanced_ranks,
    enumerate_rank_vectors,
    evaluate_moment_matrix,
    sample_realization,
)

__version__ = "0.1.0"
