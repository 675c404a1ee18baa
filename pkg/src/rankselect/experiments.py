"""Replication harness for the simulation study.

A grid is a list of :class:`Cell` objects, one per (scenario, true rank). Each
cell fixes X (per scenario and seed) and A (per rank), draws ``reps`` noise
matrices from per-replication streams, and runs every requested method on the
same responses. Cells are independent, so they can be farmed out to worker
processes without changing any result.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import linalg, rng
from . import simulate as sim
from .baselines import BswConfig, KfConfig, bsw, kf
from .criterion import CriterionInputs, select_rank
from .errors import InfeasibleVarianceEstimate, NotAvailable
from .linalg import ProjectionOp
from .moments import DEFAULT_MC_DRAWS, DEFAULT_SEED, get_kf_norms, get_moments
from .selftune import DEFAULT_EPS, sstrs, strs, strs_db

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class ReplicationRecord:
    scenario_id: str
    replication: int
    method: str
    selected_rank: int | None
    true_rank: int
    b0: float
    snr: float | None = None
    fit_err: float | None = None
    pred_err: float | None = None
    d1_pe: float | None = None
    lam0: float | None = None
    lam_final: float | None = None
    n_steps: int | None = None
    lam_trace: str = ""
    K_lambda: int | None = None
    grs_lam0_rank: int | None = None
    lam_dominance: int | None = None
    wall_time: float = 0.0

    def key(self):
        return (self.scenario_id, self.true_rank, self.b0, self.replication, self.method)


RECORD_FIELDS = [f.name for f in fields(ReplicationRecord)]


def _cell_value(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def write_records_csv(records, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version", *RECORD_FIELDS])
        for rec in records:
            w.writerow([SCHEMA_VERSION, *(_cell_value(getattr(rec, f)) for f in RECORD_FIELDS)])


_INT_FIELDS = {"replication", "selected_rank", "true_rank", "n_steps", "K_lambda", "grs_lam0_rank", "lam_dominance"}
_STR_FIELDS = {"scenario_id", "method", "lam_trace"}


def read_records_csv(path: Path) -> list[ReplicationRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row.pop("schema_version")) != SCHEMA_VERSION:
                raise ValueError(f"unsupported schema in {path}")
            kw = {}
            for k, v in row.items():
                if k in _STR_FIELDS:
                    kw[k] = v
                elif v == "":
                    kw[k] = None
                elif k in _INT_FIELDS:
                    kw[k] = int(v)
                else:
                    kw[k] = float(v)
            if kw.get("wall_time") is None:
                kw["wall_time"] = 0.0
            out.append(ReplicationRecord(**kw))
    return out


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


class Fitted:
    """One SVD of PY shared by every method run on a replication."""

    def __init__(self, Y: np.ndarray, P: ProjectionOp):
        self.Y, self.P = Y, P
        C = P.coords(Y)
        self.F = linalg.svd(C) if P.rank_q else None
        n, m = Y.shape
        d = self.F.singular_values if self.F is not None else np.zeros(0)
        resid = linalg.fro_sq(Y - P.basis @ C)
        self.inputs = CriterionInputs(d[: min(P.rank_q, m)] ** 2, resid, n, m, 1.0, q=P.rank_q)

    def mean(self, k: int) -> np.ndarray:
        if k == 0 or self.F is None:
            return np.zeros_like(self.Y)
        return self.P.basis @ linalg.truncate(self.F, k)


def fit_mean(Y, P: ProjectionOp, k: int, XA=None, X=None, A=None):
    """``(PY)_k`` plus the fit error ``||XhatA - XA||/sqrt(nm)`` and, when X has
    full column rank, the coefficient error ``||hatA - A||/sqrt(pm)``."""
    Y = linalg.as_matrix(Y, "Y")
    fitted = Fitted(Y, P)
    if not 0 <= k <= fitted.inputs.N:
        raise linalg.RankOutOfRange(f"k={k} outside [0, {fitted.inputs.N}]")
    XhatA = fitted.mean(k)
    n, m = Y.shape
    fit_err = None if XA is None else math.sqrt(linalg.fro_sq(XhatA - XA) / (n * m))
    pred_err = None
    if A is not None:
        pred_err = coefficient_error(X, XhatA, A)
    return XhatA, fit_err, pred_err


def coefficient_error(X, XhatA, A) -> float:
    X = np.asarray(X)
    p = X.shape[1]
    if linalg.numerical_rank(X) < p:
        raise NotAvailable("X'X is singular: coefficient matrix is not identifiable")
    Ahat = np.linalg.lstsq(X, XhatA, rcond=None)[0]
    return math.sqrt(linalg.fro_sq(Ahat - A) / (p * A.shape[1]))


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


@dataclass
class Cell:
    scenario_id: str
    scenario: sim.SimScenario  # includes the true rank r
    methods: tuple[str, ...]
    reps: int
    eps: float = DEFAULT_EPS
    mc_draws: int = DEFAULT_MC_DRAWS
    moments_seed: int = DEFAULT_SEED
    pred_err: bool = False


def grs_lambda(m: int, q: int, eps: float) -> float:
    """Fixed tuning constant for one-shot GRS: ``2 (1 + eps) (sqrt m + sqrt q)^2``."""
    return 2 * (1 + eps) * (math.sqrt(m) + math.sqrt(q)) ** 2


_design_memo: dict = {}


def _design(sc: sim.SimScenario):
    key = (sc.with_(r=0, b0=1.0, approx_low_rank=None, error_law=sim.GAUSSIAN, nu=None),)
    if key not in _design_memo:
        _design_memo.clear()
        _design_memo[key] = sim.make_design(sc)
    return _design_memo[key]


def _parse_method(name: str) -> tuple[str, float | None]:
    for prefix in ("BSW-", "KF-"):
        if name.startswith(prefix):
            return prefix[:-1], float(name[len(prefix) :])
    return name, None


def run_cell(cell: Cell) -> list[ReplicationRecord]:
    sc = cell.scenario
    X, P = _design(sc)
    inst = sim.make_instance(sc, X, P)
    n, m, q, r = sc.n, sc.m, P.rank_q, sc.r
    methods = cell.methods
    need_moments = any(_parse_method(mt)[0] in ("STRS", "BSW") for mt in methods)
    mom = get_moments(q, m, cell.mc_draws, cell.moments_seed) if need_moments else None
    records: list[ReplicationRecord] = []
    d1s = []
    for i in range(cell.reps):
        E = sim.scenario_noise(sc, rng.stream(sc.seed, rng.NOISE, r, i))
        Y = inst.XA + E
        fitted = Fitted(Y, P)
        d1_pe = float(linalg.singular_values(P.coords(E))[0]) if q else 0.0
        d1s.append(d1_pe)
        traces = {}
        for name in methods:
            t0 = time.perf_counter()
            kind, C = _parse_method(name)
            rec = ReplicationRecord(cell.scenario_id, i, name, None, r, sc.b0, d1_pe=d1_pe)
            if kind == "GRS":
                lam = grs_lambda(m, q, cell.eps)
                sel = select_rank(fitted.inputs.with_lambda(lam))
                rec.selected_rank, rec.lam0, rec.lam_final, rec.K_lambda = sel.k_hat, lam, lam, sel.K
            elif kind in ("STRS", "STRS-DB", "SSTRS"):
                if kind == "STRS":
                    tr = strs(Y, P, cell.eps, mom, inputs=fitted.inputs)
                    rec.grs_lam0_rank = select_rank(fitted.inputs.with_lambda(tr.lam0)).k_hat
                elif kind == "STRS-DB":
                    tr = strs_db(Y, P, cell.eps, inputs=fitted.inputs)
                else:
                    tr = sstrs(linalg.project(P, Y), cell.eps, q=q)
                traces[kind] = tr
                rec.selected_rank = tr.k_final
                rec.lam0, rec.lam_final, rec.n_steps = tr.lam0, tr.lam_final, len(tr.steps)
                rec.lam_trace = tr.summary()
                rec.K_lambda = tr.steps[0].K
            elif kind == "BSW":
                try:
                    rec.selected_rank = bsw(Y, P, BswConfig(C), inputs=fitted.inputs, mc_draws=cell.mc_draws, seed=cell.moments_seed)
                except InfeasibleVarianceEstimate:
                    rec.selected_rank = None
            elif kind == "KF":
                cfg = KfConfig(C, get_kf_norms(q, m, cell.mc_draws, cell.moments_seed))
                rec.selected_rank = kf(Y, P, cfg, inputs=fitted.inputs)
            else:
                raise ValueError(f"unknown method {name!r}")
            if rec.selected_rank is not None:
                XhatA = fitted.mean(rec.selected_rank)
                rec.fit_err = math.sqrt(linalg.fro_sq(XhatA - inst.XA) / (n * m))
                if cell.pred_err and sc.design == "random" and not sc.high_dimensional:
                    rec.pred_err = coefficient_error(X, XhatA, inst.A)
            rec.wall_time = time.perf_counter() - t0
            records.append(rec)
        if "STRS" in traces and "STRS-DB" in traces:
            mc, db = traces["STRS"].lambdas(), traces["STRS-DB"].lambdas()
            dom = int(all(b >= a * (1 - 1e-12) for a, b in zip(mc, db)))
            for rec in records[-len(methods) :]:
                if rec.method == "STRS-DB":
                    rec.lam_dominance = dom
    if r >= 1:
        s = float(inst.d_XA[r - 1] / np.mean(d1s)) if np.mean(d1s) > 0 else float("inf")
        for rec in records:
            rec.snr = s
    return records


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass
class GridSpec:
    scenario_id: str
    base: sim.SimScenario
    ranks: list[int]
    methods: tuple[str, ...]
    b0s: list[float] | None = None  # sweep b0 instead of (or in addition to) r
    target_snr: float | None = None  # raise b0 until every r >= 1 reaches this SNR


@dataclass
class ExperimentConfig:
    name: str
    grids: list[GridSpec]
    reps: int = 200
    eps: float = DEFAULT_EPS
    mc_draws: int = DEFAULT_MC_DRAWS
    moments_seed: int = DEFAULT_SEED
    seed: int = 0
    x_axis: str = "r"
    pred_err: bool = False
    extras: dict = field(default_factory=dict)


def scenario_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def build_cells(cfg: ExperimentConfig) -> list[Cell]:
    cells = []
    for gi, g in enumerate(cfg.grids):
        base = g.base.with_(seed=scenario_seed(cfg.seed, gi))
        if g.target_snr is not None and any(r >= 1 for r in g.ranks):
            tuned = sim.tune_b0(base, [r for r in g.ranks if r >= 1], g.target_snr, snr_draws=50)
            base = base.with_(b0=max(base.b0, tuned))
        for b0 in g.b0s or [base.b0]:
            for r in g.ranks:
                cells.append(
                    Cell(
                        g.scenario_id,
                        base.with_(r=r, b0=b0),
                        g.methods,
                        cfg.reps,
                        cfg.eps,
                        cfg.mc_draws,
                        cfg.moments_seed,
                        cfg.pred_err,
                    )
                )
    return cells


def run_cells(cells: list[Cell], workers: int = 1) -> list[ReplicationRecord]:
    # warm the moment caches in the parent so workers only read
    for c in cells:
        kinds = {_parse_method(mt)[0] for mt in c.methods}
        X, P = _design(c.scenario)
        if kinds & {"STRS", "BSW"}:
            get_moments(P.rank_q, c.scenario.m, c.mc_draws, c.moments_seed)
        if "KF" in kinds:
            get_kf_norms(P.rank_q, c.scenario.m, c.mc_draws, c.moments_seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(run_cell, cells))
    else:
        chunks = [run_cell(c) for c in cells]
    records = [rec for chunk in chunks for rec in chunk]
    return sorted(records, key=ReplicationRecord.key)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass
class SummaryRow:
    scenario_id: str
    method: str
    true_rank: int
    b0: float
    reps: int
    recovery_rate: float | None
    mean_rank: float | None
    snr: float | None
    mean_fit_err: float | None
    mean_pred_err: float | None
    mean_lam_final: float | None


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate(records) -> list[SummaryRow]:
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.scenario_id, rec.method, rec.true_rank, rec.b0), []).append(rec)
    rows = []
    for (sid, method, r, b0), recs in sorted(groups.items()):
        ranks = [x.selected_rank for x in recs]
        if any(k is None for k in ranks):
            rate = mean_rank = None
        else:
            rate = float(Fraction(sum(k == r for k in ranks), len(ranks)))
            mean_rank = float(Fraction(sum(ranks), len(ranks)))
        rows.append(
            SummaryRow(
                sid,
                method,
                r,
                b0,
                len(recs),
                rate,
                mean_rank,
                recs[0].snr,
                _mean([x.fit_err for x in recs]),
                _mean([x.pred_err for x in recs]),
                _mean([x.lam_final for x in recs]),
            )
        )
    return rows


SUMMARY_FIELDS = [f.name for f in fields(SummaryRow)]


def write_summary_csv(rows, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version", *SUMMARY_FIELDS])
        for row in rows:
            w.writerow([SCHEMA_VERSION, *(_cell_value(getattr(row, f)) for f in SUMMARY_FIELDS)])


@dataclass
class ExperimentReport:
    name: str
    records: list[ReplicationRecord]
    summary: list[SummaryRow]
    files: list[Path] = field(default_factory=list)


def render_plots(name: str, summary, out_dir: Path, x_axis: str = "r") -> list[Path]:
    from .svgplot import line_chart, scatter_chart

    files = []
    by_sid: dict = {}
    for row in summary:
        by_sid.setdefault(row.scenario_id, []).append(row)
    xkey = "true_rank" if x_axis == "r" else "b0"
    for sid, rows in by_sid.items():
        methods = sorted({r.method for r in rows})
        for metric, label in (
            ("recovery_rate", "rank recovery rate"),
            ("mean_rank", "mean selected rank"),
            ("mean_fit_err", "fit error"),
            ("mean_pred_err", "coefficient error"),
        ):
            series = {}
            for mt in methods:
                pts = [(getattr(r, xkey), getattr(r, metric)) for r in rows if r.method == mt]
                pts = [(x, y) for x, y in pts if y is not None]
                if pts:
                    series[mt] = sorted(pts)
            if not series:
                continue
            f = out_dir / f"{name}_{sid}_{metric}.svg"
            f.write_text(line_chart(series, title=f"{sid}: {label}", xlabel="r" if x_axis == "r" else "b0", ylabel=label))
            files.append(f)
        series = {}
        for mt in methods:
            pts = [(r.snr, r.recovery_rate) for r in rows if r.method == mt and r.snr is not None and r.recovery_rate is not None]
            if pts:
                series[mt] = sorted(pts)
        if series:
            f = out_dir / f"{name}_{sid}_recovery_vs_snr.svg"
            f.write_text(scatter_chart(series, title=f"{sid}: recovery vs SNR", xlabel="SNR", ylabel="rank recovery rate"))
            files.append(f)
    return files


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None, workers: int = 1, plots: bool = True) -> ExperimentReport:
    records = run_cells(build_cells(cfg), workers)
    summary = aggregate(records)
    report = ExperimentReport(cfg.name, records, summary)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_records_csv(records, out_dir / f"{cfg.name}_records.csv")
        write_summary_csv(summary, out_dir / f"{cfg.name}_summary.csv")
        report.files += [out_dir / f"{cfg.name}_records.csv", out_dir / f"{cfg.name}_summary.csv"]
        if plots:
            report.files += render_plots(cfg.name, summary, out_dir, cfg.x_axis)
    return report


# ---------------------------------------------------------------------------
# tightness of the signal condition
# ---------------------------------------------------------------------------


@dataclass
class TightnessRow:
    pair: int
    n: int
    m: int
    p: int
    q: int
    r: int
    eta: float
    b0: float
    d_r_xa: float
    lam: float | None  # largest grid value recovering r; None when none does
    sqrt_lam_sigma_r: float | None
    gap: float | None  # sqrt(lam) sigma_r - d_1(PE)
    d1_pe: float


def tightness_sweep(scenarios: list[sim.SimScenario], grid) -> list[TightnessRow]:
    """For each (X, A) pair and one noise draw, the largest grid ``lam`` whose
    criterion minimizer equals the true rank."""
    grid = sorted(float(g) for g in grid)
    if grid[0] < 1:
        raise ValueError("grid values must be >= 1")
    rows = []
    for i, sc in enumerate(scenarios):
        inst = sim.make_instance(sc)
        P, r = inst.P, sc.r
        E = sim.scenario_noise(sc, rng.stream(sc.seed, rng.NOISE, r, 0))
        fitted = Fitted(inst.XA + E, P)
        d1_pe = float(linalg.singular_values(P.coords(E))[0])
        best = None
        for lam in grid:
            inp = fitted.inputs.with_lambda(lam)
            if inp.K >= r and select_rank(inp).k_hat == r:
                best = lam
        row = TightnessRow(i, sc.n, sc.m, sc.p, sc.q, r, sc.eta, sc.b0, float(inst.d_XA[r - 1]), best, None, None, d1_pe)
        if best is not None:
            inp = fitted.inputs.with_lambda(best)
            s = math.sqrt(best * inp.numerators()[r] / (inp.nm - best * r))
            row.sqrt_lam_sigma_r, row.gap = s, s - d1_pe
            if row.gap > row.d_r_xa * (1 + 1e-9) + 1e-9:
                raise AssertionError(f"pair {i}: recovery at lam={best} contradicts the Weyl bound")
        rows.append(row)
    return rows


def default_tightness_scenarios(seed: int = 0, count: int = 40) -> list[sim.SimScenario]:
    """Pairs varying (b0, eta, n, m, p, q, r) around the low- and high-dimensional settings."""
    g = rng.stream(seed, rng.INSTANCE)
    out = []
    for i in range(count):
        if i % 2 == 0:
            n, m, p = int(g.integers(100, 201)), int(g.integers(20, 41)), int(g.integers(10, 31))
            q = p
            b0 = float(g.uniform(0.05, 0.3))
        else:
            n, m, p = int(g.integers(80, 121)), int(g.integers(20, 41)), int(g.integers(130, 181))
            q = int(g.integers(15, 26))
            b0 = float(g.uniform(0.01, 0.07))
        r = int(g.integers(1, min(q, m) // 2 + 1))
        eta = float(g.uniform(0.05, 0.6))
        out.append(sim.SimScenario(n=n, m=m, p=p, q=q, r=r, eta=eta, b0=b0, seed=scenario_seed(seed, i)))
    return out


def write_rows_csv(rows, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(rows[0])]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version", *names])
        for row in rows:
            w.writerow([SCHEMA_VERSION, *(_cell_value(getattr(row, f)) for f in names)])


# ---------------------------------------------------------------------------
# singular-value ratio study
# ---------------------------------------------------------------------------


@dataclass
class RatioRow:
    j: int
    mean_ratio: float  # average of d_j(PE)/d_j(Z) over pairs
    ratio_of_means: float  # mean d_j(PE) / mean d_j(Z)
    mean_d_pe: float
    mean_d_z: float


def ratio_study(sc: sim.SimScenario, pairs: int = 100, P: ProjectionOp | None = None) -> list[RatioRow]:
    """Compare singular values of PE (scenario error law, unit variance) with a
    q x m standard Gaussian Z, pair by pair."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if P is None:
        _, P = sim.make_design(sc)
    q, m = P.rank_q, sc.m
    gen_e = rng.stream(sc.seed, rng.PAIRS, 0)
    gen_z = rng.stream(sc.seed, rng.PAIRS, 1)
    d_pe = np.empty((pairs, min(q, m)))
    d_z = np.empty_like(d_pe)
    for i in range(pairs):
        E = sim.gen_noise((sc.n, m), 1.0, sc.error_law, gen_e, sc.nu, standardize=True)
        d_pe[i] = linalg.singular_values(P.coords(E))[: min(q, m)]
        d_z[i] = linalg.singular_values(gen_z.standard_normal((q, m)))
    mean_ratio = np.mean(d_pe / d_z, axis=0)
    rom = d_pe.mean(axis=0) / d_z.mean(axis=0)
    return [
        RatioRow(j + 1, float(mean_ratio[j]), float(rom[j]), float(d_pe[:, j].mean()), float(d_z[:, j].mean()))
        for j in range(len(rom))
    ]


@dataclass
class RatioCase:
    n: int
    p: int
    q: int
    m: int
    eta: float
    nu: float
    j: int
    mean_ratio: float
    ratio_of_means: float
    mean_d_pe: float
    mean_d_z: float
