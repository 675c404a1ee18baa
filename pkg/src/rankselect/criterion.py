"""Variable-threshold rank criterion and its closed-form minimizer.

For a tuning constant ``lam`` the criterion is::

    sigma_k^2 = ||Y - (PY)_k||^2 / (n m - lam k),   k = 0..K_lam

and its minimizer counts the singular values of PY above the variable
threshold ``lam * sigma_k^2``. All quantities come from one SVD of PY: the
numerators are ``||Y - PY||^2`` plus suffix sums of ``d_j^2(PY)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import DegenerateTie, RankOutOfRange, ShapeError
from .linalg import ProjectionOp

# Trace values within TIE_RTOL * sigma_0^2 of the minimum count as ties.
# Keeps round-off on a zero-residual plateau from pushing the argmin past r.
TIE_RTOL = 1e-12


def k_cap(n: int, m: int, q: int, lam: float) -> int:
    """Largest admissible rank ``floor((nm - 1)/lam) ∧ m ∧ q``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return int(max(0, min(math.floor((n * m - 1) / lam), m, q)))


@dataclass(frozen=True)
class CriterionInputs:
    """Sufficient statistics of (Y, P) for the criterion at a given ``lam``.

    ``d_sq`` holds ``d_j^2(PY)`` for ``j = 1..N`` with ``N = q ∧ m``.
    """

    d_sq: np.ndarray
    resid_sq: float
    n: int
    m: int
    lam: float
    q: int | None = None

    def __post_init__(self):
        d = np.asarray(self.d_sq, dtype=np.float64)
        if d.ndim != 1:
            raise ShapeError("d_sq must be one-dimensional")
        if np.any(d < 0) or np.any(np.diff(d) > 1e-12 * max(1.0, float(d[0]) if d.size else 1.0)):
            raise ValueError("d_sq must be nonnegative and nonincreasing")
        object.__setattr__(self, "d_sq", d)
        if self.resid_sq < 0:
            raise ValueError("resid_sq must be nonnegative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.q is None:
            object.__setattr__(self, "q", len(d))

    @classmethod
    def from_data(cls, Y, P: ProjectionOp | None, lam: float) -> "CriterionInputs":
        """Build inputs from a response matrix and projector.

        With ``P=None`` the criterion runs on Y itself (the ``Y = A + E`` model),
        so the residual ``||Y - PY||^2`` is zero and q is the row count.
        """
        Y = linalg.as_matrix(Y, "Y")
        n, m = Y.shape
        if P is None:
            d = linalg.singular_values(Y)
            return cls(d**2, 0.0, n, m, lam, q=n)
        C = P.coords(Y)
        resid = linalg.fro_sq(Y - P.basis @ C)
        d = linalg.singular_values(C) if P.rank_q else np.zeros(0)
        return cls(d[: min(P.rank_q, m)] ** 2, resid, n, m, lam, q=P.rank_q)

    def with_lambda(self, lam: float) -> "CriterionInputs":
        return replace(self, lam=lam)

    @property
    def N(self) -> int:
        return len(self.d_sq)

    @property
    def nm(self) -> int:
        return self.n * self.m

    @property
    def K(self) -> int:
        return k_cap(self.n, self.m, self.N, self.lam)

    def numerators(self) -> np.ndarray:
        """``||Y - (PY)_k||^2`` for ``k = 0..N``."""
        tail = np.concatenate([np.cumsum(self.d_sq[::-1])[::-1], [0.0]])
        return self.resid_sq + tail


def criterion_trace(inp: CriterionInputs, upto: int | None = None) -> np.ndarray:
    """``sigma_k^2`` for ``k = 0..K_lam`` (or ``0..upto``)."""
    K = inp.K if upto is None else upto
    if K > inp.N:
        raise RankOutOfRange(f"k={K} exceeds N={inp.N}")
    k = np.arange(K + 1)
    denom = inp.nm - inp.lam * k
    if np.any(denom <= 0):
        raise RankOutOfRange("criterion denominator is non-positive inside the range")
    return inp.numerators()[: K + 1] / denom


def argmin_smallest(values: np.ndarray, lo: int = 0, scale: float | None = None) -> int:
    """Smallest index ``k >= lo`` attaining the minimum up to the tie tolerance."""
    v = np.asarray(values[lo:], dtype=np.float64)
    if scale is None:
        scale = float(values[0])
    tol = TIE_RTOL * abs(scale)
    return lo + int(np.flatnonzero(v <= v.min() + tol)[0])


def closed_form_count(inp: CriterionInputs, trace: np.ndarray | None = None) -> int:
    """``sum_{k=1}^{K} 1{d_k^2(PY) >= lam * sigma_k^2}``."""
    if trace is None:
        trace = criterion_trace(inp)
    K = len(trace) - 1
    return int(np.count_nonzero(inp.d_sq[:K] >= inp.lam * trace[1:]))


@dataclass(frozen=True)
class RankSelection:
    k_hat: int
    sigma_sq_trace: np.ndarray
    K: int
    lam: float
    k_closed_form: int

    def to_dict(self) -> dict:
        return {
            "k_hat": self.k_hat,
            "K": self.K,
            "lambda": self.lam,
            "k_closed_form": self.k_closed_form,
            "sigma_sq_trace": [float(s) for s in self.sigma_sq_trace],
        }


def select_rank(inp: CriterionInputs) -> RankSelection:
    """Minimize the criterion over ``0..K_lam``, ties broken to the smallest k."""
    trace = criterion_trace(inp)
    k_hat = argmin_smallest(trace)
    k_cf = closed_form_count(inp, trace)
    if k_cf != k_hat:
        warnings.warn(
            f"closed-form count {k_cf} differs from criterion argmin {k_hat} (tied input)",
            DegenerateTie,
            stacklevel=2,
        )
    return RankSelection(k_hat, trace, len(trace) - 1, inp.lam, k_cf)


def grs(Y, P: ProjectionOp | None, lam: float) -> RankSelection:
    return select_rank(CriterionInputs.from_data(Y, P, lam))


def sigma_r_hat_sq(inp: CriterionInputs, r: int) -> float:
    """``||Y - (PY)_r||^2 / (nm - lam r)``; requires ``r <= K_lam``."""
    if not 0 <= r <= inp.K:
        raise RankOutOfRange(f"r={r} outside [0, K={inp.K}]")
    return float(inp.numerators()[r] / (inp.nm - inp.lam * r))


def max_admissible_rank(n: int, m: int, q: int, lam: float, delta: float) -> int:
    """Largest r with ``r < delta/(1+delta) * nm/lam`` and ``r <= m ∧ q``.

    Any such r keeps ``nm / (nm - lam r) <= 1 + delta``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = delta / (1.0 + delta) * n * m / lam
    r = math.ceil(x) - 1
    return int(max(0, min(r, m, q, k_cap(n, m, q, lam))))


def rho_bound(n: int, m: int, lam: float, r: int) -> float:
    """``nm / (nm - lam r)``."""
    return n * m / (n * m - lam * r)


@dataclass(frozen=True)
class DiagnosticsReport:
    K_lambda: int
    rho: float
    max_admissible_rank: int | None = None
    sigma_r_hat_sq: float | None = None


def diagnostics(inp: CriterionInputs, delta: float | None = None, r: int | None = None) -> DiagnosticsReport:
    K = inp.K
    return DiagnosticsReport(
        K_lambda=K,
        rho=rho_bound(inp.n, inp.m, inp.lam, K),
        max_admissible_rank=None if delta is None else max_admissible_rank(inp.n, inp.m, inp.q, inp.lam, delta),
        sigma_r_hat_sq=None if r is None else sigma_r_hat_sq(inp, r),
    )


@dataclass(frozen=True)
class OracleReport:
    lhs: float  # ||(PY)_k_hat - XA||^2
    rhs_rank_known: float  # 4 r d_1^2(PE)
    rank_known_applies: bool  # k_hat == r
    rank_known_holds: bool
    C: float
    rhs_general: float
    general_event: bool  # lam >= C d_1^2(PE) / sigma_hat^2 with C > 2
    general_holds: bool


def oracle_bounds(Y, P: ProjectionOp, XA, E, k_hat: int, r: int, lam: float, C: float | None = None) -> OracleReport:
    """Evaluate both fit bounds for a simulated instance with known XA and E.

    ``C`` defaults to the largest constant for which the general bound's event
    holds, ``lam * sigma_hat^2 / d_1^2(PE)``.
    """
    Y = linalg.as_matrix(Y, "Y")
    XA = linalg.as_matrix(XA, "XA")
    E = linalg.as_matrix(E, "E")
    n, m = Y.shape
    F = linalg.svd(P.coords(Y))
    fit = P.basis @ linalg.truncate(F, k_hat)
    lhs = linalg.fro_sq(fit - XA)
    d1_pe_sq = float(linalg.singular_values(P.coords(E))[0] ** 2) if P.rank_q else 0.0
    rhs1 = 4.0 * r * d1_pe_sq

    sigma_sq = linalg.fro_sq(E) / (n * m)
    if C is None:
        C = lam * sigma_sq / d1_pe_sq if d1_pe_sq > 0 else math.inf
    event = C > 2 and lam * sigma_sq >= C * d1_pe_sq * (1 - 1e-12)
    K = k_cap(n, m, min(P.rank_q, m), lam)
    rho = rho_bound(n, m, lam, K)
    if math.isfinite(C) and C > 2:
        a = (C + 2) / (C - 2)
        d_xa_sq = linalg.singular_values(XA) ** 2
        tails = np.concatenate([np.cumsum(d_xa_sq[::-1])[::-1], [0.0]])
        ks = np.arange(K + 1)
        tails_k = tails[np.minimum(ks, len(tails) - 1)]
        rhs2 = a * float(np.min((a + 8 * (rho - 1)) * tails_k + 3 * rho * lam * sigma_sq * ks))
    else:
        rhs2 = math.inf
    slack = 1e-9 * max(1.0, lhs)
    return OracleReport(
        lhs=lhs,
        rhs_rank_known=rhs1,
        rank_known_applies=k_hat == r,
        rank_known_holds=lhs <= rhs1 + slack,
        C=C,
        rhs_general=rhs2,
        general_event=bool(event),
        general_holds=lhs <= rhs2 + slack,
    )
