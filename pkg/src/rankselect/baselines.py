"""Comparator rank selectors.

BSW counts singular values of PY above a fixed threshold ``mu`` that needs a
noise-variance estimate; KF minimizes a self-normalized residual ratio with a
Monte-Carlo penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .criterion import CriterionInputs, argmin_smallest
from .errors import InfeasibleVarianceEstimate, NoAdmissibleRank
from .linalg import ProjectionOp
from .moments import get_kf_norms, get_moments

MC_EXPECTED_D1SQ = "mc_expected_d1sq"
DETERMINISTIC = "deterministic"


def sigma_tilde_sq(Y, P: ProjectionOp) -> float:
    """Unbiased variance estimate ``||Y - PY||^2 / ((n - q) m)``."""
    Y = linalg.as_matrix(Y, "Y")
    n, m = Y.shape
    if n <= P.rank_q:
        raise InfeasibleVarianceEstimate(f"n = {n} <= q = {P.rank_q}: no residual degrees of freedom")
    return linalg.fro_sq(Y - linalg.project(P, Y)) / ((n - P.rank_q) * m)


def bsw_select(d_sq, mu: float) -> int:
    """Number of ``d_k^2(PY) >= mu``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return int(np.count_nonzero(np.asarray(d_sq) >= mu))


@dataclass(frozen=True)
class BswConfig:
    C: float
    mu_mode: str = MC_EXPECTED_D1SQ

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.mu_mode not in (MC_EXPECTED_D1SQ, DETERMINISTIC):
            raise ValueError(f"unknown mu_mode {self.mu_mode!r}")

    def mu(self, q: int, m: int, sigma_sq: float, mc_draws: int | None = None, seed: int | None = None) -> float:
        if self.mu_mode == DETERMINISTIC:
            return self.C * (m + q) * sigma_sq
        kw = {k: v for k, v in (("mc_draws", mc_draws), ("seed", seed)) if v is not None}
        return self.C * get_moments(q, m, **kw).S1 * sigma_sq


def bsw(Y, P: ProjectionOp, cfg: BswConfig, inputs: CriterionInputs | None = None, **mc) -> int:
    inp = inputs if inputs is not None else CriterionInputs.from_data(Y, P, 1.0)
    s2 = sigma_tilde_sq(Y, P)
    if s2 == 0.0:
        return int(np.count_nonzero(inp.d_sq > 0))
    return bsw_select(inp.d_sq, cfg.mu(inp.q, inp.m, s2, **mc))


@dataclass(frozen=True)
class KfConfig:
    C: float
    g_norm_sq: np.ndarray  # (E ||G||_(2,k))^2 for k = 1..N

    def __post_init__(self):
        g = np.asarray(self.g_norm_sq, dtype=np.float64)
        if np.any(np.diff(g) < 0):
            raise ValueError("g_norm_sq must be nondecreasing in k")
        object.__setattr__(self, "g_norm_sq", g)

    @classmethod
    def for_shape(cls, q: int, m: int, C: float = 2.0, **mc) -> "KfConfig":
        return cls(C, get_kf_norms(q, m, **mc))


def kf_admissible(n: int, m: int, cfg: KfConfig, N: int) -> int:
    """Largest k with ``nm - 1 - C g_k >= 1`` (``g_0 = 0``)."""
    g = np.concatenate([[0.0], cfg.g_norm_sq[:N]])
    ok = n * m - 1 - cfg.C * g >= 1
    if not ok[0]:
        raise NoAdmissibleRank("nm - 1 < 1: no admissible rank")
    return int(np.flatnonzero(ok)[-1])


def kf_select(d_sq, resid_sq: float, n: int, m: int, cfg: KfConfig) -> int:
    """Smallest minimizer of ``||Y - (PY)_k||^2 / (nm - 1 - C (E||G||_(2,k))^2)``."""
    inp = CriterionInputs(np.asarray(d_sq, dtype=np.float64), resid_sq, n, m, 1.0)
    top = kf_admissible(n, m, cfg, min(inp.N, len(cfg.g_norm_sq)))
    g = np.concatenate([[0.0], cfg.g_norm_sq[:top]])
    ratio = inp.numerators()[: top + 1] / (n * m - 1 - cfg.C * g)
    return argmin_smallest(ratio)


def kf(Y, P: ProjectionOp, cfg: KfConfig, inputs: CriterionInputs | None = None) -> int:
    inp = inputs if inputs is not None else CriterionInputs.from_data(Y, P, 1.0)
    return kf_select(inp.d_sq, inp.resid_sq, inp.n, inp.m, cfg)
