"""Built-in experiment grids and JSON config loading."""

from __future__ import annotations

import json
from pathlib import Path

from . import simulate as sim
from .errors import ConfigError
from .experiments import ExperimentConfig, GridSpec

BSW_CS = ("BSW-0.7", "BSW-0.9", "BSW-1.1", "BSW-1.3", "BSW-1.5")

LOW_DIM = sim.SimScenario(n=150, m=30, p=20, q=20, r=0, eta=0.1)
HIGH_DIM = sim.SimScenario(n=100, m=30, p=150, q=20, r=0, eta=0.1)
RANGE_EXT = sim.SimScenario(n=50, m=50, p=300, q=30, r=0, eta=0.1, b0=2.0)


def _t(sc: sim.SimScenario, nu: float) -> sim.SimScenario:
    return sc.with_(error_law=sim.STUDENT_T, nu=nu)


def exp1() -> list[GridSpec]:
    methods = (*BSW_CS, "STRS")
    grids = [GridSpec(f"low_b{b}", LOW_DIM.with_(b0=b), list(range(21)), methods) for b in (0.15, 0.20, 0.25)]
    grids += [GridSpec(f"high_b{b}", HIGH_DIM.with_(b0=b), list(range(21)), methods) for b in (0.03, 0.05, 0.07)]
    return grids


def exp2(snr_target: float = 3.3) -> list[GridSpec]:
    base = sim.SimScenario(n=150, m=30, p=200, q=143, r=0, eta=0.1, b0=0.011)
    grids = [
        GridSpec(f"q{q}", base.with_(q=q), list(range(23)), ("BSW-1.1", "BSW-1.3", "STRS")) for q in (143, 145, 147, 149)
    ]
    for n in (50, 100, 150):
        for m in (50, 125, 200):
            sc = sim.SimScenario(n=n, m=m, p=200, q=n, r=0, eta=0.1, b0=0.011)
            ranks = list(range(min(n, m, 50) + 1))
            grids.append(GridSpec(f"nq{n}_m{m}", sc, ranks, ("BSW-1.1", "STRS"), target_snr=snr_target))
    return grids


def exp3() -> list[GridSpec]:
    return [
        GridSpec("low_b0.25", LOW_DIM.with_(b0=0.25), list(range(21)), ("GRS", "STRS")),
        GridSpec("high_b0.07", HIGH_DIM.with_(b0=0.07), list(range(21)), ("GRS", "STRS")),
        GridSpec("range_ext", RANGE_EXT, list(range(31)), ("GRS", "STRS")),
    ]


def exp4() -> list[GridSpec]:
    r16 = list(range(16))
    grids = [GridSpec("xa_t6", _t(sim.SimScenario(n=150, m=100, p=250, q=150, r=0, b0=0.002), 6), r16, ("GRS", "STRS"))]
    for nu in (6, 8, 10):
        grids.append(GridSpec(f"tall_t{nu}", _t(sim.SimScenario(n=300, m=50, p=400, q=280, r=0, b0=0.0015), nu), r16, ("SSTRS",)))
        grids.append(GridSpec(f"wide_t{nu}", _t(sim.SimScenario(n=80, m=400, p=150, q=60, r=0, b0=0.003), nu), r16, ("SSTRS",)))
    r21 = list(range(21))
    for nu in (6, 8, 10):
        for n, m in ((500, 80), (80, 500)):
            sc = sim.SimScenario(n=n, m=m, p=n, q=n, r=0, b0=0.25, design="identity")
            grids.append(GridSpec(f"identity_n{n}_m{m}_t{nu}", _t(sc, nu), r21, ("SSTRS",)))
    return grids


def exp5() -> list[GridSpec]:
    low = sim.SimScenario(n=150, m=30, p=30, q=30, r=0, b0=0.15)
    high = sim.SimScenario(n=100, m=30, p=150, q=30, r=0, b0=0.015)
    return [
        GridSpec(f"{tag}_t{nu}", _t(sc, nu), list(range(21)), ("STRS",))
        for tag, sc in (("low", low), ("high", high))
        for nu in (6, 8, 10)
    ]


def mc_vs_db() -> list[GridSpec]:
    low = sim.SimScenario(n=300, m=50, p=50, q=50, r=0, b0=0.1)
    high = sim.SimScenario(n=200, m=60, p=300, q=30, r=0, b0=0.003)
    laws = (("uniform", dict(error_law=sim.UNIFORM)), ("t6", dict(error_law=sim.STUDENT_T, nu=6)))
    return [
        GridSpec(f"{tag}_{lname}", sc.with_(**kw), list(range(16)), ("STRS", "STRS-DB"))
        for tag, sc in (("low", low), ("high", high))
        for lname, kw in laws
    ]


def kf_compare() -> list[GridSpec]:
    sc = sim.SimScenario(n=300, m=40, p=35, q=35, r=0, b0=20.0)
    return [GridSpec("kf", sc, list(range(10, 36)), ("KF-2", "STRS"))]


def fit_study() -> list[GridSpec]:
    methods = ("STRS", "KF-2", "BSW-1.3")
    low = sim.SimScenario(n=200, m=50, p=50, q=50, r=10)
    high = sim.SimScenario(n=150, m=50, p=300, q=50, r=10)
    low_b = [round(0.02 + 0.002 * i, 4) for i in range(14)]
    high_b = [round(0.0015 + 0.0001 * i, 5) for i in range(16)]
    approx = sim.ApproxLowRank(gamma=0.8, beta=1)
    grids = []
    for suffix, alr in (("exact", None), ("approx", approx)):
        grids.append(GridSpec(f"low_{suffix}", low.with_(approx_low_rank=alr), [10], methods, low_b))
        grids.append(GridSpec(f"high_{suffix}", high.with_(approx_low_rank=alr), [10], methods, high_b))
    return grids


BUILTIN = {
    "exp1": (exp1, 200, {}),
    "exp2": (exp2, 200, {}),
    "exp3": (exp3, 200, {}),
    "exp4": (exp4, 200, {}),
    "exp5": (exp5, 200, {}),
    "mc-vs-db": (mc_vs_db, 200, {}),
    "kf-compare": (kf_compare, 200, {}),
    "fit-study": (fit_study, 100, {"x_axis": "b0", "pred_err": True}),
}


def builtin(name: str, **overrides) -> ExperimentConfig:
    if name not in BUILTIN:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(BUILTIN)}")
    make, reps, extra = BUILTIN[name]
    cfg = ExperimentConfig(name=name, grids=make(), reps=reps, **extra)
    return apply_overrides(cfg, **overrides)


def apply_overrides(cfg: ExperimentConfig, methods=None, **kw) -> ExperimentConfig:
    for k, v in kw.items():
        if v is not None:
            setattr(cfg, k, v)
    if methods:
        for g in cfg.grids:
            g.methods = tuple(methods)
    return cfg


def load_config(path: Path | str) -> ExperimentConfig:
    """JSON config: ``{"name", "reps", "seed", "grids": [{"scenario_id",
    "scenario": {...}, "ranks": [...], "methods": [...], "b0s": [...], "target_snr": x}]}``."""
    raw = json.loads(Path(path).read_text())
    try:
        grids = [
            GridSpec(
                g["scenario_id"],
                sim.SimScenario.from_dict({"r": 0, **g["scenario"]}),
                list(g["ranks"]),
                tuple(g["methods"]),
                g.get("b0s"),
                g.get("target_snr"),
            )
            for g in raw["grids"]
        ]
    except KeyError as exc:
        raise ConfigError(f"config missing field {exc}") from None
    known = {"reps", "eps", "mc_draws", "moments_seed", "seed", "x_axis", "pred_err"}
    return ExperimentConfig(name=raw.get("name", Path(path).stem), grids=grids, **{k: raw[k] for k in known & raw.keys()})
