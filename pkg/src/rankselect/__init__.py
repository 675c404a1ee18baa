"""Rank selection for multivariate response regression ``Y = XA + E``."""

from .baselines import BswConfig, KfConfig, bsw, kf, sigma_tilde_sq
from .criterion import (
    CriterionInputs,
    RankSelection,
    criterion_trace,
    diagnostics,
    grs,
    k_cap,
    max_admissible_rank,
    oracle_bounds,
    select_rank,
)
from .errors import (
    ConfigError,
    DegenerateTie,
    InfeasibleVarianceEstimate,
    InvalidMatrix,
    NoAdmissibleRank,
    NotAvailable,
    RankOutOfRange,
    RankSelectError,
    ShapeError,
    TraceInvariantError,
    ZeroDesign,
)
from .linalg import ProjectionOp, SvdFactors, projection, singular_values, svd, truncate
from .moments import SingularMoments, get_kf_norms, get_moments
from .selftune import SelfTuneTrace, sstrs, strs, strs_db
from .simulate import SimScenario, make_instance

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
