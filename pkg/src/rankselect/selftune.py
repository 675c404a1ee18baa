"""Self-tuning rank selection.

Starting from a conservative ``lam_0`` the selected rank ``k_t`` is used to
shrink the tuning constant, and the criterion is re-minimized over
``k_t..K_{t+1}``. The loop stops when the rank no longer changes. Three
update rules are provided:

* ``strs``    -- Monte-Carlo singular moments ``S_j`` of a q x m Gaussian matrix.
* ``sstrs``   -- closed-form bracket ``(m∧q)/2 - k`` (skinny / ``Y = A + E``).
* ``strs_db`` -- deterministic singular-value bounds in place of ``S_j``.

Only one SVD of PY is computed; every step reuses its suffix sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg
from .criterion import CriterionInputs, argmin_smallest, criterion_trace, k_cap
from .errors import ShapeError, TraceInvariantError
from .linalg import ProjectionOp
from .moments import SingularMoments

DEFAULT_EPS = 0.05

STRS = "STRS"
SSTRS = "SSTRS"
DB = "STRS-DB"


@dataclass(frozen=True)
class TuneStep:
    t: int
    lam: float
    K: int
    k: int
    R: float | None = None  # R_t, U_t computed from k_t (None when unused)
    U: float | None = None


@dataclass
class SelfTuneTrace:
    variant: str
    epsilon: float
    steps: list[TuneStep] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    @property
    def k_final(self) -> int:
        return self.steps[-1].k

    @property
    def lam_final(self) -> float:
        return self.steps[-1].lam

    @property
    def lam0(self) -> float:
        return self.steps[0].lam

    @property
    def k0(self) -> int:
        return self.steps[0].k

    def lambdas(self) -> list[float]:
        return [s.lam for s in self.steps]

    def ranks(self) -> list[int]:
        return [s.k for s in self.steps]

    def violations(self, N: int | None = None) -> list[str]:
        out = []
        lams, ks = self.lambdas(), self.ranks()
        if any(b >= a for a, b in zip(lams, lams[1:])):
            out.append(f"lambda not strictly decreasing: {lams}")
        if any(b < a for a, b in zip(ks, ks[1:])):
            out.append(f"rank decreased: {ks}")
        if N is not None and len(self.steps) > N + 1:
            out.append(f"{len(self.steps)} steps exceeds N + 1 = {N + 1}")
        terminal_ok = ks[0] == 0 if len(ks) == 1 else ks[-1] == ks[-2]
        if not terminal_ok and self.stop_reason != "no_decrease":
            out.append(f"terminal step does not repeat the rank: {ks}")
        return out

    def check(self, N: int | None = None) -> None:
        bad = self.violations(N)
        if bad:
            raise TraceInvariantError("; ".join(bad))

    def summary(self) -> str:
        return " ".join(f"{s.lam:.4g}:{s.k}" for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "epsilon": self.epsilon,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "k_final": self.k_final,
            "steps": [
                {"t": s.t, "lambda": s.lam, "K": s.K, "k": s.k, "R": s.R, "U": s.U} for s in self.steps
            ],
        }


UpdateRule = Callable[[int], "tuple[float, float | None, float | None]"]


def _iterate(inp: CriterionInputs, lam0: float, update: UpdateRule, variant: str, eps: float) -> SelfTuneTrace:
    trace = SelfTuneTrace(variant, eps)
    inp = inp.with_lambda(lam0)
    sig = criterion_trace(inp)
    k = argmin_smallest(sig)
    lam = lam0
    trace.steps.append(TuneStep(0, lam0, len(sig) - 1, k))
    if k == 0:
        trace.converged, trace.stop_reason = True, "k0_zero"
        trace.check(inp.N)
        return trace

    t = 0
    while True:
        lam_next, R, U = update(k)
        trace.steps[-1] = TuneStep(t, lam, trace.steps[-1].K, k, R, U)
        K_next = k_cap(inp.n, inp.m, inp.N, lam_next)
        if lam_next >= lam or K_next < k:
            # only when R_t = 0 (n = q with 2k >= N): the update cannot shrink lam
            trace.converged, trace.stop_reason = True, "no_decrease"
            break
        sig = criterion_trace(inp.with_lambda(lam_next))
        k_next = argmin_smallest(sig, lo=k, scale=sig[0])
        t += 1
        trace.steps.append(TuneStep(t, lam_next, K_next, k_next))
        if k_next == k:
            trace.converged, trace.stop_reason = True, "fixpoint"
            break
        lam, k = lam_next, k_next
        if t > inp.N + 1:  # unreachable: k strictly increases and is bounded by N
            break
    trace.check(inp.N)
    return trace


# ---------------------------------------------------------------------------
# update rules
# ---------------------------------------------------------------------------


def strs_update(k: int, n: int, m: int, q: int, eps: float, moments: SingularMoments) -> tuple[float, float, float]:
    """``lam_{t+1} = nm / ((1-eps) R_t / U_t + k_t)`` with Monte-Carlo R_t, U_t."""
    R = (n - q) * m + moments.tail(2 * k + 1)
    U = max(moments.S1, moments.s(2 * k + 1) + moments.s(2 * k + 2))
    return n * m / ((1 - eps) * R / U + k), R, U


def sstrs_update(k: int, n: int, m: int, q: int, eps: float) -> tuple[float, float, None]:
    bracket = max(min(m, q) / 2 - k, 0.0)
    return n * m / ((1 - eps) * bracket + k), bracket, None


def db_update(k: int, n: int, m: int, q: int, eps: float) -> tuple[float, float, float]:
    """Update from deterministic bounds on the singular values of a q x m Gaussian."""
    M, N = max(m, q), min(m, q)
    edge = (math.sqrt(m) + math.sqrt(q)) ** 2 + 1
    if 2 * k >= N:
        R = float((n - q) * m)
        return n * m / ((1 - eps) * R / edge + k), R, edge
    j_top = np.arange(1, 2 * k + 1)
    j_low = np.arange(2 * k + 1, N + 1)
    R1 = n * m - np.sum((math.sqrt(M) + np.sqrt(N - j_top + 1)) ** 2) - 2 * k
    R2 = (n - q) * m + np.sum((math.sqrt(M) - np.sqrt(j_low)) ** 2)
    R = float(max(R1, R2))
    j_pair = np.arange(2 * k + 1, 2 * k + 3)
    U = float(max(edge, np.sum((math.sqrt(M) + np.sqrt(np.maximum(N - j_pair + 1, 0))) ** 2) + 2))
    return n * m / ((1 - eps) * R / U + k), R, U


# ---------------------------------------------------------------------------
# procedures
# ---------------------------------------------------------------------------


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")


def strs_lambda0(moments: SingularMoments, eps: float = DEFAULT_EPS) -> float:
    return 2 * (1 + eps) * moments.S1


def strs(
    Y,
    P: ProjectionOp,
    eps: float = DEFAULT_EPS,
    moments: SingularMoments | None = None,
    lambda0: float | None = None,
    inputs: CriterionInputs | None = None,
) -> SelfTuneTrace:
    """Self-tuning rank selection with Monte-Carlo moments.

    ``lambda0`` overrides the default start ``2 (1 + eps) S_1``. Pass
    precomputed ``inputs`` to skip the SVD of PY.
    """
    _check_eps(eps)
    inp = inputs if inputs is not None else CriterionInputs.from_data(Y, P, 1.0)
    n, m, q = inp.n, inp.m, inp.q
    if moments is None:
        from .moments import get_moments

        moments = get_moments(q, m)
    if (moments.q, moments.m) != (q, m):
        raise ShapeError(f"moments are for {moments.q}x{moments.m}, problem needs {q}x{m}")
    lam0 = strs_lambda0(moments, eps) if lambda0 is None else lambda0
    return _iterate(inp, lam0, lambda k: strs_update(k, n, m, q, eps, moments), STRS, eps)


def sstrs(Y, eps: float = DEFAULT_EPS, q: int | None = None) -> SelfTuneTrace:
    """Simplified self-tuning on ``(Y)_k`` directly (no projection).

    ``q`` defaults to the row count of Y. For ``Y = XA + E`` with n close to q,
    pass ``P(Y)`` and ``q = P.rank_q``.
    """
    _check_eps(eps)
    Y = linalg.as_matrix(Y, "Y")
    n, m = Y.shape
    q = n if q is None else q
    d_sq = linalg.singular_values(Y) ** 2
    N = min(q, m, len(d_sq))
    inp = CriterionInputs(d_sq[:N], float(np.sum(d_sq[N:])), n, m, 1.0, q=q)
    lam0 = 2 * (1 + eps) * max(m, q)
    return _iterate(inp, lam0, lambda k: sstrs_update(k, n, m, q, eps), SSTRS, eps)


def strs_db(
    Y, P: ProjectionOp, eps: float = DEFAULT_EPS, inputs: CriterionInputs | None = None
) -> SelfTuneTrace:
    """Self-tuning with deterministic bounds; no Monte-Carlo constants needed."""
    _check_eps(eps)
    inp = inputs if inputs is not None else CriterionInputs.from_data(Y, P, 1.0)
    n, m, q = inp.n, inp.m, inp.q
    lam0 = 2 * (1 + eps) * (math.sqrt(m) + math.sqrt(q)) ** 2
    return _iterate(inp, lam0, lambda k: db_update(k, n, m, q, eps), DB, eps)
