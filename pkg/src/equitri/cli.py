"""Command-line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from . import config_surface as cs
from . import ff_triangles as ff
from . import stationary_phase as sp
from .fractal_lab import correlation as corr
from .fractal_lab import measures as fm
from .fractal_lab.spectrum import grid_fourier
from .reports import (EXIT_BUDGET, EXIT_FAILURE, EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, RunConfig, RunReport,
                      Timer, to_csv, to_json)


class UsageError(Exception):
    pass


def _floats(s):
    return [float(x) for x in s]


# ---------------------------------------------------------------------------
# handlers return (payload, csv_rows or None)


def cmd_ff_census(a):
    field = ff.PrimeField(a.q)
    if a.size is None:
        census = ff.full_space_census(field, a.d, a.budget)
    else:
        E = ff.FFSubset.random(field, a.d, a.size, np.random.default_rng(a.seed))
        census = ff.equilateral_census(E, a.budget)
    rows = ff.census_rows(census, a.seed)
    return {"total": census.total, "isotropic": census.isotropic, "rows": rows}, rows


def cmd_ff_obstruction(a):
    rows = []
    for q in ff.primes_up_to(a.qmax):
        if q == 2:
            rows.append({"q": 2, "d": a.d, "sqrt3_exists": None, "triangle_exists": None,
                         "triangles": None, "status": "unsupported: characteristic 2"})
            continue
        r = ff.obstruction_check(ff.PrimeField(q), a.d, a.budget)
        rows.append({"q": q, "d": a.d, "sqrt3_exists": r.sqrt3_exists,
                     "triangle_exists": r.full_space_triangle_exists, "triangles": r.triangles,
                     "status": r.status})
    return {"rows": rows}, rows


def cmd_ff_threshold(a):
    res = ff.threshold_experiment(ff.PrimeField(a.q), a.d, a.sizes, a.trials, a.seed, a.budget)
    rows = [{"q": a.q, "d": a.d, "size": r.size, "mean_fraction": r.mean_fraction,
             "above_threshold": r.above_threshold, "threshold": r.threshold, "seed": r.seed,
             "trials": a.trials} for r in res]
    return {"rows": rows}, rows


def _pair(a) -> cs.FreqPair:
    if len(a.xi) != a.d or len(a.eta) != a.d:
        raise UsageError("--xi and --eta need exactly d components")
    return cs.FreqPair(np.array(a.xi), np.array(a.eta))


def cmd_sigma_hat(a):
    pair = _pair(a)
    qs = cs.QuadratureSpec(sphere_nodes=a.nodes, mc_samples=a.samples, seed=a.seed)
    out = {"d": a.d, "xi": a.xi, "eta": a.eta, "method": a.method}
    if a.method == "quad":
        v = cs.sigma_hat_quad(pair, qs)
        out["nodes"] = cs.quad_node_count(pair, qs)
    elif a.method == "mc":
        m = cs.sigma_hat_mc(pair, qs)
        v = m.value
        out.update(stderr=m.stderr, samples=m.samples, seed=m.seed)
    else:
        if a.d != 2:
            raise UsageError("--method exact needs --d 2")
        v = complex(cs.sigma_hat_exact_2d(pair.xi, pair.eta))
    out["value"] = {"re": v.real, "im": v.imag}
    return out, None


def cmd_decay_fit(a):
    rep = cs.decay_exponent_fit(_pair(a), a.R_grid, cs.QuadratureSpec(sphere_nodes=a.nodes))
    rep.meta["baseline_slope"] = -(a.d - 1) / 2
    return rep, None


def cmd_fractal_build(a):
    spec = fm.CantorSpec.from_mask(a.d, a.keep, a.depth, a.base)
    mu = fm.build_cantor(spec, a.n)
    if a.out is None:
        raise UsageError("fractal-build needs --out for the measure file")
    fm.save_measure(a.out, mu)
    return {"file": a.out, "d": mu.d, "N": mu.N, "s_nominal": mu.s_nominal,
            "keep_pattern": spec.keep_pattern, "depth": a.depth, "base": a.base,
            "c_mu_estimate": mu.c_mu_estimate}, None


def _load(a) -> fm.GridMeasure:
    p = Path(a.measure)
    if not p.exists():
        raise FileNotFoundError(f"measure file {p} does not exist")
    return fm.load_measure(p)


def cmd_triple_corr(a):
    mu = _load(a)
    if a.delta is not None:
        mud = fm.mollify(mu, a.delta, a.oversample)
        spec = grid_fourier(mud, size=corr._padded_size(mud), hat_order=1)
        spec.meta["delta"] = a.delta
    else:
        mud = None
        spec = grid_fourier(mu, size=2 * mu.N)
    nu = corr.triple_correlation_freq(spec, corr.t_grid_for(a.t0, a.nt),
                                      cs.SigmaEvaluator(mu.d), a.rcut)
    out = {"nu": nu, "seed": a.seed}
    if a.spatial:
        if mud is None:
            raise UsageError("--spatial needs --delta")
        out["spatial"] = corr.triple_correlation_space(mud, a.t0, a.rotations, a.seed,
                                                       corr.t_grid_for(a.t0, a.nt))
    return out, None


def cmd_tail_scan(a):
    mu = _load(a)
    spec = grid_fourier(mu, oversample=a.oversample)
    return corr.tail_bound_scan(spec, cs.SigmaEvaluator(mu.d), a.R_list, a.t, s=mu.s_nominal), None


def cmd_positivity(a):
    mu = _load(a)
    rep = corr.positivity_report(mu, a.deltas, a.t0, cs.SigmaEvaluator(mu.d), a.rcut,
                                 a.rotations, a.seed)
    rows = [dict(r, verdict=rep.verdict, nu_error=rep.nu_error, t0=a.t0, seed=a.seed)
            for r in rep.rows]
    return rep, rows


def cmd_sp_verify(a):
    res = sp.verify_battery(a.d, a.seed, a.trials, a.chart_points)
    return {"d": a.d, "seed": a.seed, "trials": a.trials,
            "all_pass": all(v["pass"] for v in res.values()), "invariants": res}, None


def cmd_lemma_int(a):
    scan = sp.lemma_int_scan(a.d, a.rho_grid, a.samples, a.seed)
    rows = [{"rho": r.rho, "value": r.value, "stderr": r.stderr, "ratio": r.ratio,
             "d": r.d, "seed": r.seed, "samples": a.samples} for r in scan["results"]]
    return {"rows": rows, "ratio_spread": scan["ratio_spread"], "exponent": scan["exponent"]}, rows


def cmd_accept(a):
    return acceptance.acceptance_suite(a.profile, a.only), None


# ---------------------------------------------------------------------------


def _profile(s: str) -> str:
    if s not in acceptance.PROFILES:
        raise argparse.ArgumentTypeError(f"profile must be one of {acceptance.PROFILES}")
    return s


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="equitri", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, fmt="json", **kw):
        s = sub.add_parser(name, **kw)
        s.set_defaults(func=fn)
        s.add_argument("--out", help="output file (default: stdout)")
        s.add_argument("--format", choices=("csv", "json"), default=fmt)
        s.add_argument("--seed", type=int, default=0)
        return s

    s = add("ff-census", cmd_ff_census, "csv", help="equilateral triangle census in F_q^d")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--size", type=int, help="random subset size (default: the full space)")
    s.add_argument("--budget", type=int, default=ff.DEFAULT_BUDGET)

    s = add("ff-obstruction", cmd_ff_obstruction, "csv", help="sqrt(3) obstruction table")
    s.add_argument("--qmax", type=int, required=True)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--budget", type=int, default=ff.DEFAULT_BUDGET)

    s = add("ff-threshold", cmd_ff_threshold, "csv", help="class coverage of random subsets")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--sizes", type=int, nargs="+", required=True)
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--budget", type=int, default=ff.DEFAULT_BUDGET)

    for name, fn in (("sigma-hat", cmd_sigma_hat), ("decay-fit", cmd_decay_fit)):
        s = add(name, fn)
        s.add_argument("--d", type=int, required=True)
        s.add_argument("--xi", type=float, nargs="+", required=True)
        s.add_argument("--eta", type=float, nargs="+", required=True)
        s.add_argument("--nodes", type=int, help="explicit nodes per great circle")
        if name == "sigma-hat":
            s.add_argument("--method", choices=("quad", "mc", "exact"), default="quad")
            s.add_argument("--samples", type=int, default=100_000)
        else:
            s.add_argument("--R-grid", dest="R_grid", type=float, nargs="+",
                           default=[4, 8, 16, 32, 64])

    s = add("fractal-build", cmd_fractal_build, help="build and save a Cantor grid measure")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--keep", type=lambda x: int(x, 0), required=True,
                   help="bitmask over the base^d subcells, row-major")
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--n", type=int, required=True, help="cells per axis")
    s.add_argument("--base", type=int, default=2)

    s = add("triple-corr", cmd_triple_corr, help="frequency-side configuration integral")
    s.add_argument("--measure", required=True)
    s.add_argument("--rcut", type=float)
    s.add_argument("--t0", type=float, default=0.25)
    s.add_argument("--delta", type=float)
    s.add_argument("--oversample", type=int, default=4)
    s.add_argument("--nt", type=int, default=corr.N_T)
    s.add_argument("--spatial", action="store_true", help="also run the spatial oracle")
    s.add_argument("--rotations", type=int, default=128)

    s = add("tail-scan", cmd_tail_scan, help="absolute tail sums beyond R")
    s.add_argument("--measure", required=True)
    s.add_argument("--R-list", dest="R_list", type=float, nargs="+", required=True)
    s.add_argument("--t", type=float, default=0.5)
    s.add_argument("--oversample", type=int, default=2)

    s = add("positivity", cmd_positivity, "csv", help="spatial vs frequency table over delta")
    s.add_argument("--measure", required=True)
    s.add_argument("--deltas", type=float, nargs="+", required=True)
    s.add_argument("--t0", type=float, default=0.25)
    s.add_argument("--rcut", type=float)
    s.add_argument("--rotations", type=int, default=64)

    s = add("sp-verify", cmd_sp_verify, help="local-chart algebra checks")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--chart-points", dest="chart_points", type=int, default=10_000)

    s = add("lemma-int", cmd_lemma_int, "csv", help="annulus integral over a rho grid")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--rho-grid", dest="rho_grid", type=float, nargs="+", default=[8, 16, 32, 64])
    s.add_argument("--samples", type=int, default=100_000)

    s = add("accept", cmd_accept, help="run the acceptance battery")
    s.add_argument("--profile", type=_profile, default="quick")
    s.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    return p


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    params = {k: v for k, v in vars(a).items() if k not in ("func", "command", "out", "format")}
    cfg = RunConfig(a.command, params, a.out, a.format)
    report = RunReport(cfg)
    # fractal-build writes the measure itself; its report goes to stdout
    out = None if a.command == "fractal-build" else a.out
    code = EXIT_OK
    rows = None
    with Timer() as tm:
        try:
            report.payload, rows = a.func(a)
        except UsageError as exc:
            parser.print_usage(sys.stderr)
            print(f"equitri: error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        except (ff.BudgetExceeded, corr.PairBudgetExceeded) as exc:
            report.status, code = "budget_abort", EXIT_BUDGET
            report.warnings.append(str(exc))
        except (ValueError, FileNotFoundError, cs.QuadratureRefusal, sp.StratumUnderflow) as exc:
            report.status, code = "refused", EXIT_PRECONDITION
            report.warnings.append(f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # anything unexpected still leaves a report behind
            report.status, code = "error", EXIT_FAILURE
            report.warnings.append(f"{type(exc).__name__}: {exc}")
    if a.command == "accept" and code == EXIT_OK and report.payload["passed"] < report.payload["total"]:
        report.status, code = "criteria_failed", EXIT_FAILURE
        report.warnings.append(f"{report.payload['total'] - report.payload['passed']} criteria failed")
    report.wall_time = tm.elapsed
    if a.format == "csv" and rows is not None and code == EXIT_OK:
        _emit(to_csv(rows, {"version": cfg.version}), out)
    else:
        _emit(to_json(report), out)
    if code != EXIT_OK:
        print(f"equitri: {report.status}: {report.warnings[-1]}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
