"""Command-line entry point: ``rankselect <subcommand>``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import configs, linalg, rng
from . import experiments as ex
from . import moments as mom
from . import simulate as sim
from .criterion import CriterionInputs, select_rank
from .errors import RankSelectError
from .selftune import DEFAULT_EPS, sstrs, strs, strs_db


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--mc-draws", type=int, default=None)


def _cmd_select(a) -> int:
    Y = sim.read_matrix_csv(a.y)
    P = linalg.projection(sim.read_matrix_csv(a.x)) if a.x else linalg.ProjectionOp.identity(Y.shape[0])
    eps = DEFAULT_EPS if a.eps is None else a.eps
    method = a.method.upper()
    kw = {"mc_draws": a.mc_draws or mom.DEFAULT_MC_DRAWS, "seed": mom.DEFAULT_SEED if a.seed is None else a.seed}
    if method == "GRS":
        lam = a.lam if a.lam is not None else ex.grs_lambda(Y.shape[1], P.rank_q, eps)
        sel = select_rank(CriterionInputs.from_data(Y, P, lam))
        out = {"method": "GRS", **sel.to_dict()}
    else:
        if method == "STRS":
            tr = strs(Y, P, eps, mom.get_moments(P.rank_q, Y.shape[1], **kw), lambda0=a.lam)
        elif method == "STRS-DB":
            tr = strs_db(Y, P, eps)
        elif method == "SSTRS":
            tr = sstrs(linalg.project(P, Y), eps, q=P.rank_q)
        else:
            raise SystemExit(f"unknown method {a.method!r}")
        out = {"method": method, "rank": tr.k_final, "trace": tr.to_dict()}
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def _cmd_simulate(a) -> int:
    sc = sim.SimScenario.from_json(Path(a.scenario).read_text()) if a.scenario else sim.SimScenario(
        n=a.n, m=a.m, p=a.p, q=a.q, r=a.r, eta=a.eta, b0=a.b0, seed=a.seed or 0
    )
    inst = sim.make_instance(sc)
    gen = rng.stream(sc.seed, rng.NOISE, sc.r, a.replication)
    Y = inst.XA + sim.scenario_noise(sc, gen)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim.write_matrix_csv(Y, out / "Y.csv")
    sim.write_matrix_csv(inst.X, out / "X.csv")
    sim.write_matrix_csv(inst.A, out / "A.csv")
    (out / "scenario.json").write_text(sc.to_json() + "\n")
    print(f"wrote Y.csv X.csv A.csv scenario.json to {out}")
    return 0


def _cmd_moments(a) -> int:
    draws = a.mc_draws or mom.DEFAULT_MC_DRAWS
    seed = mom.DEFAULT_SEED if a.seed is None else a.seed
    path = mom.default_cache_path()
    if a.q is None:
        print(f"cache: {path}")
        if path.exists():
            keys = sorted({tuple(line.split(",")[i] for i in (0, 1, 4, 5)) for line in path.read_text().splitlines()[1:]})
            for q, m, d, s in keys:
                print(f"q={q} m={m} mc_draws={d} seed={s}")
        return 0
    S = mom.get_moments(a.q, a.m, draws, seed)
    if a.kf:
        mom.get_kf_norms(a.q, a.m, draws, seed)
    print(f"q={a.q} m={a.m} mc_draws={draws} seed={seed} S_1={S.S1:.6g}")
    for j, s in enumerate(S.S, 1):
        print(f"{j},{s:.10g}")
    return 0


def _cmd_experiment(a) -> int:
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if a.name == "tightness":
        scen = ex.default_tightness_scenarios(a.seed or 0, a.reps or 40)
        rows = ex.tightness_sweep(scen, range(10, 2001, 10))
        ex.write_rows_csv(rows, out / "tightness.csv")
        _tightness_plot(rows, out / "tightness.svg")
        print(f"{len(rows)} pairs -> {out / 'tightness.csv'}")
        return 0
    if a.name == "ratio":
        rows_all = []
        for n, p, q, m in ((150, 250, 50, 50), (50, 40, 40, 150)):
            for eta in (0.1, 0.3, 0.5, 0.7, 0.9):
                for nu in (5, 8, 12):
                    sc = sim.SimScenario(n=n, m=m, p=p, q=q, r=0, eta=eta, error_law=sim.STUDENT_T, nu=nu, seed=a.seed or 0)
                    for row in ex.ratio_study(sc, a.reps or 100):
                        rows_all.append(ex.RatioCase(n, p, q, m, eta, nu, **asdict(row)))
        ex.write_rows_csv(rows_all, out / "ratio.csv")
        _ratio_plot(rows_all, out)
        print(f"{len(rows_all)} rows -> {out / 'ratio.csv'}")
        return 0
    cfg = configs.load_config(a.name) if Path(a.name).suffix == ".json" else configs.builtin(a.name)
    cfg = configs.apply_overrides(
        cfg, methods=a.methods.split(",") if a.methods else None, seed=a.seed, reps=a.reps, eps=a.eps, mc_draws=a.mc_draws
    )
    rep = ex.run_experiment(cfg, out, workers=a.workers)
    for f in rep.files:
        print(f)
    return 0


def _tightness_plot(rows, path: Path) -> None:
    from .svgplot import scatter_chart

    ok = [r for r in rows if r.lam is not None]
    series = {
        "sqrt(lam) sigma_r": [(r.d_r_xa, r.sqrt_lam_sigma_r) for r in ok],
        "minus d1(PE)": [(r.d_r_xa, r.gap) for r in ok],
        "d_r(XA)": [(r.d_r_xa, r.d_r_xa) for r in ok],
    }
    path.write_text(scatter_chart(series, "largest recovering lambda", "d_r(XA)", "value"))


def _ratio_plot(rows, out: Path) -> None:
    from .svgplot import line_chart

    cases = sorted({(r.n, r.p, r.q, r.m) for r in rows})
    for n, p, q, m in cases:
        series = {}
        for r in rows:
            if (r.n, r.p, r.q, r.m) == (n, p, q, m):
                series.setdefault(f"eta={r.eta} nu={r.nu:g}", []).append((r.j, r.ratio_of_means))
        (out / f"ratio_n{n}_p{p}_q{q}_m{m}.svg").write_text(line_chart(series, f"n={n} p={p} q={q} m={m}", "j", "E d_j(PE) / E d_j(Z)"))


def _cmd_report(a) -> int:
    records = [rec for f in a.records for rec in ex.read_records_csv(f)]
    rows = ex.aggregate(records)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_summary_csv(rows, out / f"{a.name}_summary.csv")
    for f in ex.render_plots(a.name, rows, out, a.x_axis):
        print(f)
    print(out / f"{a.name}_summary.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rankselect", description="Rank selection for multivariate response regression.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("select", help="select the rank for Y (and optional design X) read from CSV")
    p.add_argument("y")
    p.add_argument("x", nargs="?")
    p.add_argument("--method", default="STRS", help="GRS, STRS, STRS-DB or SSTRS")
    p.add_argument("--lam", type=float, default=None, help="GRS lambda or STRS starting lambda")
    _common(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("simulate", help="write one simulated instance as CSV")
    p.add_argument("--scenario", help="scenario JSON file; overrides the size flags")
    for k, v in (("n", 150), ("m", 30), ("p", 20), ("q", 20), ("r", 5)):
        p.add_argument(f"--{k}", type=int, default=v)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--b0", type=float, default=0.25)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("moments", help="build or list the singular-moment cache")
    p.add_argument("--q", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--kf", action="store_true", help="also build the KF norm table")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mc-draws", type=int, default=None)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("experiment", help="run a built-in grid or a JSON config")
    p.add_argument("name", help=f"one of {', '.join([*configs.BUILTIN, 'tightness', 'ratio'])} or a .json config")
    _common(p)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--methods", default=None, help="comma-separated, e.g. STRS,GRS,BSW-1.1,KF-2")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="aggregate record CSVs into a summary and plots")
    p.add_argument("records", nargs="+")
    p.add_argument("--name", default="report")
    p.add_argument("--x-axis", choices=("r", "b0"), default="r")
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RankSelectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
