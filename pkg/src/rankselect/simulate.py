"""Synthetic data for ``Y = XA + E`` and ``Y = A + E``.

Design rows are N(0, Sigma) with ``Sigma_ij = eta^|i-j|`` when n >= p, and
``X = X1 X2 Sigma^{1/2}`` (rank q) when n < p. The coefficient matrix is
``A = b0 M1 M2`` of rank r, optionally with a polynomially decaying tail of
singular values (approximately low rank).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import linalg, rng
from .errors import ConfigError
from .linalg import ProjectionOp

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
UNIFORM = "uniform"
ERROR_LAWS = (GAUSSIAN, STUDENT_T, UNIFORM)


@dataclass(frozen=True)
class ApproxLowRank:
    gamma: float
    beta: int


@dataclass(frozen=True)
class SimScenario:
    n: int
    m: int
    p: int
    q: int
    r: int
    eta: float = 0.1
    b0: float = 1.0
    sigma: float = 1.0
    error_law: str = GAUSSIAN
    nu: float | None = None
    approx_low_rank: ApproxLowRank | None = None
    seed: int = 0
    design: str = "random"  # "identity" gives the model Y = A + E (p = q = n)
    standardize: bool = False

    def __post_init__(self):
        if isinstance(self.approx_low_rank, dict):
            object.__setattr__(self, "approx_low_rank", ApproxLowRank(**self.approx_low_rank))
        if self.design not in ("random", "identity"):
            raise ConfigError(f"unknown design {self.design!r}")
        if self.design == "identity" and not (self.p == self.q == self.n):
            raise ConfigError("identity design requires p = q = n")
        if self.design == "random" and self.n >= self.p and self.q != self.p:
            raise ConfigError("with n >= p the design has full column rank: q must equal p")
        if self.design == "random" and self.n < self.p and self.q > self.n:
            raise ConfigError("q cannot exceed n")
        if not 0 <= self.r <= min(self.q, self.m):
            raise ConfigError(f"r = {self.r} must lie in [0, q ∧ m = {min(self.q, self.m)}]")
        if not 0 <= self.eta < 1:
            raise ConfigError("eta must lie in [0, 1)")
        if self.error_law not in ERROR_LAWS:
            raise ConfigError(f"unsupported error law {self.error_law!r}")
        if self.error_law == STUDENT_T and (self.nu is None or self.nu < 5):
            raise ConfigError("student_t errors need nu >= 5")

    @property
    def high_dimensional(self) -> bool:
        return self.n < self.p

    def with_(self, **kw) -> "SimScenario":
        d = asdict(self)
        d.update(kw)
        return SimScenario(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimScenario":
        return cls.from_dict(json.loads(text))


def ar_covariance(p: int, eta: float) -> np.ndarray:
    idx = np.arange(p)
    return eta ** np.abs(idx[:, None] - idx[None, :])


def gen_design(sc: SimScenario, gen: np.random.Generator) -> np.ndarray:
    if sc.design == "identity":
        return np.eye(sc.n)
    L = np.linalg.cholesky(ar_covariance(sc.p, sc.eta))
    if not sc.high_dimensional:
        return gen.standard_normal((sc.n, sc.p)) @ L.T
    X1 = gen.standard_normal((sc.n, sc.q))
    X2 = gen.standard_normal((sc.q, sc.p))
    return X1 @ (X2 @ L.T)


def gen_coefficient(sc: SimScenario, gen: np.random.Generator) -> np.ndarray:
    if sc.r == 0:
        return np.zeros((sc.p, sc.m))
    A = sc.b0 * (gen.standard_normal((sc.p, sc.r)) @ gen.standard_normal((sc.r, sc.m)))
    if sc.approx_low_rank is None:
        return A
    F = linalg.svd(A)
    d = F.singular_values.copy()
    g, beta, r = sc.approx_low_rank.gamma, sc.approx_low_rank.beta, sc.r
    j = np.arange(r + 1, len(d) + 1)
    d[r:] = d[r - 1] * g * (j - r + 1.0) ** (-beta)
    return (F.left_vectors * d) @ F.right_vectors


def gen_noise(
    shape: tuple[int, int],
    sigma: float,
    law: str,
    gen: np.random.Generator,
    nu: float | None = None,
    standardize: bool = False,
) -> np.ndarray:
    if law == GAUSSIAN:
        E = gen.standard_normal(shape)
    elif law == STUDENT_T:
        if nu is None or nu < 5:
            raise ConfigError("student_t errors need nu >= 5")
        E = gen.standard_t(nu, size=shape)
        if standardize:
            E /= math.sqrt(nu / (nu - 2))
    elif law == UNIFORM:
        E = gen.uniform(-math.sqrt(3), math.sqrt(3), size=shape)
    else:
        raise ConfigError(f"unsupported error law {law!r}")
    return sigma * E


def scenario_noise(sc: SimScenario, gen: np.random.Generator) -> np.ndarray:
    return gen_noise((sc.n, sc.m), sc.sigma, sc.error_law, gen, sc.nu, sc.standardize)


@dataclass
class Instance:
    scenario: SimScenario
    X: np.ndarray
    A: np.ndarray
    XA: np.ndarray
    P: ProjectionOp
    d_XA: np.ndarray
    snr: float = float("nan")
    extras: dict = field(default_factory=dict)

    def response(self, E: np.ndarray) -> np.ndarray:
        return self.XA + E


def make_design(sc: SimScenario) -> tuple[np.ndarray, ProjectionOp]:
    """Design and projector for ``(scenario, seed)``; independent of r."""
    X = gen_design(sc, rng.stream(sc.seed, rng.DESIGN))
    P = ProjectionOp.identity(sc.n) if sc.design == "identity" else linalg.projection(X)
    return X, P


def make_instance(
    sc: SimScenario,
    X: np.ndarray | None = None,
    P: ProjectionOp | None = None,
    snr_draws: int = 0,
) -> Instance:
    """X is fixed per (scenario, seed); A is regenerated per r."""
    if X is None or P is None:
        X, P = make_design(sc)
    A = gen_coefficient(sc, rng.stream(sc.seed, rng.COEF, sc.r))
    XA = X @ A
    inst = Instance(sc, X, A, XA, P, linalg.singular_values(XA))
    if snr_draws and sc.r >= 1:
        inst.snr = snr(inst, snr_draws, rng.stream(sc.seed, rng.SNR, sc.r))
    return inst


def expected_d1_pe(P: ProjectionOp, sc: SimScenario, draws: int, gen: np.random.Generator) -> float:
    vals = [linalg.singular_values(P.coords(scenario_noise(sc, gen)))[0] for _ in range(draws)]
    return float(np.mean(vals))


def snr(inst: Instance, mc_draws: int, gen: np.random.Generator) -> float:
    """``d_r(XA) / E[d_1(PE)]`` with the expectation estimated by Monte Carlo."""
    r = inst.scenario.r
    if r < 1:
        raise ValueError("SNR is undefined for r = 0")
    return float(inst.d_XA[r - 1] / expected_d1_pe(inst.P, inst.scenario, mc_draws, gen))


def tune_b0(sc: SimScenario, ranks, target_snr: float, snr_draws: int = 50) -> float:
    """Smallest b0 giving SNR >= target_snr for every r in ``ranks``.

    SNR is linear in b0, so one pass at b0 = 1 suffices.
    """
    base = sc.with_(b0=1.0, r=max(ranks))
    X, P = make_design(base)
    denom = expected_d1_pe(P, base, snr_draws, rng.stream(sc.seed, rng.SNR, 10**6))
    worst = min(make_instance(base.with_(r=r), X, P).d_XA[r - 1] for r in ranks if r >= 1)
    return target_snr * denom / worst


# ---------------------------------------------------------------------------
# matrix CSV: first line "rows,cols", then one matrix row per line
# ---------------------------------------------------------------------------


def write_matrix_csv(M, path: Path | str) -> None:
    M = np.asarray(M, dtype=np.float64)
    buf = io.StringIO()
    buf.write(f"{M.shape[0]},{M.shape[1]}\n")
    np.savetxt(buf, M, delimiter=",", fmt="%.17g")
    Path(path).write_text(buf.getvalue())


def read_matrix_csv(path: Path | str) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    head = lines[0].split(",")
    body = lines
    dims = None
    if len(head) == 2 and all(h.strip().isdigit() for h in head):
        dims = tuple(int(h) for h in head)
        body = lines[1:]
    M = np.loadtxt(body, delimiter=",", ndmin=2)
    if dims is not None:
        if dims[0] * dims[1] == 0 and M.size == 0:
            return np.zeros(dims)
        if M.shape != dims:
            # a 2-column numeric first row that was actually data
            M = np.loadtxt(lines, delimiter=",", ndmin=2)
    return M
