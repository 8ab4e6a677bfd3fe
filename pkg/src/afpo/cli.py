"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 computation or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import Cara2Params, expected_taxes, sensitivity_sweep, solve_zeta
from .config import OUTPUT_ENV, _take, config_from_dict, load_config, resolve_output_dir
from .disutility import DisutilityFn
from .errors import AfpoError, InputError
from .io import load_regions, read_matrix, read_table, write_table
from .pipeline import run_pipeline, simulate_only, transfers_for
from .solver import SolverConfig, solve

__all__ = ["main", "build_parser"]

EXIT_USAGE = 1
EXIT_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_cara2_flags(p: argparse.ArgumentParser, p0: float = 0.2) -> None:
    g = p.add_argument_group("two-region parameters")
    g.add_argument("--w1", type=float, default=4.5, help="wealth of region 1 (default 4.5)")
    g.add_argument("--w2", type=float, default=10.0, help="wealth of region 2 (default 10)")
    g.add_argument("--gamma1", type=float, default=1.0, help="risk tolerance of region 1 (default 1)")
    g.add_argument("--gamma2", type=float, default=2.0, help="risk tolerance of region 2 (default 2)")
    g.add_argument("--mu2", type=float, default=4.0, help="expected residual claim of region 2 (default 4)")
    g.add_argument("--mu1", type=float, default=None,
                   help="expected residual claim of region 1 (default: mean aggregate loss minus mu2)")
    g.add_argument("--p0", type=float, default=p0, help=f"probability of zero aggregate loss (default {p0})")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None,
                   help=f"output directory (default: config value, then ${OUTPUT_ENV}, then ./afpo_out)")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads for simulation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afpo", description="Actuarially fair Pareto-optimal sharing of residual "
                                              "catastrophe losses.")
    parser.add_argument("--version", action="version", version=f"afpo {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("simulate", help="simulate storm losses and settle them with the insurer")
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--export-losses", action="store_true", help="also write the full loss matrix")
    _common(p)

    p = sub.add_parser("solve", help="fit a fair Pareto rule to residual-claim samples")
    p.add_argument("--samples", required=True,
                   help="CSV of per-scenario residual claims; one column per region id")
    p.add_argument("--regions", required=True, help="region file (id,name,wealth,cx,cy)")
    p.add_argument("--premiums", default=None,
                   help="premiums.csv from a simulate run; capacities become wealth minus premium")
    p.add_argument("--config", default=None,
                   help="JSON with optional 'solver' and 'disutility' blocks, or a full run config")
    p.add_argument("--grid-points", type=int, default=512, help="rows of the rule grid output (default 512)")
    _common(p)

    p = sub.add_parser("analytic", help="closed-form two-region CARA rule")
    _add_cara2_flags(p)

    p = sub.add_parser("sensitivity", help="closed-form weights along a parameter sweep")
    p.add_argument("--vary", choices=["mu", "gamma"], required=True,
                   help="mu: ratio mu2/mu1 at fixed total; gamma: ratio gamma2/gamma1")
    p.add_argument("--min", dest="lo", type=float, default=0.1, help="first ratio (default 0.1)")
    p.add_argument("--max", dest="hi", type=float, default=10.0, help="last ratio (default 10)")
    p.add_argument("--steps", type=int, default=100, help="number of ratios (default 100)")
    p.add_argument("--output", default=None, help="CSV path (default: stdout)")
    _add_cara2_flags(p)

    p = sub.add_parser("compare", help="full run: fit both sharing rules and compare mechanisms")
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--no-cache", action="store_true", help="ignore cached stage results")
    _common(p)

    p = sub.add_parser("transfers", help="per-region transfers in one event")
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=int, help="index of a simulated scenario")
    src.add_argument("--event", help="CSV with columns id,loss describing a fixed event")
    p.add_argument("--mechanism", choices=["hybrid", "pure_sharing"], default="hybrid",
                   help="sharing mechanism (default hybrid)")
    p.add_argument("--output", default=None, help="CSV path (default: stdout)")
    _common(p)
    return parser


def _params(a) -> Cara2Params:
    return Cara2Params(w1=a.w1, w2=a.w2, gamma1=a.gamma1, gamma2=a.gamma2, mu2=a.mu2,
                       mu1=a.mu1, p0=a.p0)


def _run_config(a):
    cfg = load_config(a.config)
    if getattr(a, "threads", None):
        cfg = replace(cfg, threads=a.threads)
    if getattr(a, "export_losses", False):
        cfg = replace(cfg, export_losses=True)
    return cfg


def _cmd_analytic(a) -> int:
    p = _params(a)
    sol = solve_zeta(p)
    et = expected_taxes(sol)
    print(f"case={sol.case_id}")
    print(f"zeta={float(sol.zeta)!r}")
    print(f"alpha1={float(sol.alpha1)!r}")
    print(f"alpha2={float(sol.alpha2)!r}")
    print(f"M={float(p.M)!r}")
    print(f"lower={float(sol.lower)!r}")
    print(f"upper={float(sol.upper)!r}")
    print(f"slope1={float(sol.slope1)!r}")
    print(f"expected_tax1={float(et[0])!r} mu1={float(p.mu1)!r}")
    print(f"expected_tax2={float(et[1])!r} mu2={float(p.mu2)!r}")
    return 0


def _cmd_sensitivity(a) -> int:
    p = _params(a)
    rows = sensitivity_sweep(p, a.vary, a.lo, a.hi, a.steps)
    header = ["ratio", "case", "alpha1", "alpha2", "zeta", "status"]
    body = [(r.ratio, "" if r.case is None else r.case,
             "" if math.isnan(r.alpha1) else r.alpha1,
             "" if math.isnan(r.alpha2) else r.alpha2,
             "" if math.isnan(r.zeta) else r.zeta, r.status) for r in rows]
    meta = {"vary": a.vary, "w1": p.w1, "w2": p.w2, "gamma1": p.gamma1, "gamma2": p.gamma2,
            "mu1": p.mu1, "mu2": p.mu2, "p0": p.p0}
    if a.output:
        write_table(a.output, header, body, meta)
    else:
        import csv

        sys.stdout.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([repr(v) if isinstance(v, float) else v for v in row] for row in body)
    return 0


def _cmd_simulate(a) -> int:
    cfg = _run_config(a)
    man = simulate_only(cfg, a.out)
    out = resolve_output_dir(cfg, a.out)
    print(f"k={man.k:.6g} K={man.K:.6g} solvency_share={man.solvency_share:.4f} "
          f"classes={json.dumps(man.class_counts, sort_keys=True)}")
    print(f"outputs in {out}")
    return 0


def _solver_inputs(path: str | None):
    if path is None:
        return SolverConfig(), {"kind": "cara", "gamma": 1.0}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "regions_path" in raw:
        cfg = config_from_dict(raw, base_dir=Path(path).parent)
        return cfg.solver, cfg.disutility
    d = _take(raw, {"solver", "disutility"}, "solve config")
    solver = SolverConfig(**_take(d.get("solver", {}), set(SolverConfig.__dataclass_fields__), "solver"))
    return solver, d.get("disutility", {"kind": "cara", "gamma": 1.0})


def _cmd_solve(a) -> int:
    regions = load_regions(a.regions)
    ids = [r.id for r in regions]
    header, eps = read_matrix(a.samples)
    missing = [i for i in ids if i not in header]
    if missing:
        raise InputError(f"{a.samples}: no column for regions {missing[:5]}")
    eps = eps[:, [header.index(i) for i in ids]]
    caps = np.array([r.wealth for r in regions])
    if a.premiums:
        _, ph, rows = read_table(a.premiums)
        prem = {r[ph.index("id")]: float(r[ph.index("premium")]) for r in rows}
        caps = caps - np.array([prem[i] for i in ids])
    solver_cfg, dis = _solver_inputs(a.config)
    fns = [DisutilityFn.from_dict(dis, anchor=float(c)) if dis.get("kind") == "power"
           else DisutilityFn.from_dict(dis) for c in caps]
    res = solve(eps, caps, fns, solver_cfg)
    out = resolve_output_dir(None, a.out)
    rule = res.rule
    meta = {"n_samples": eps.shape[0], "converged": res.converged, "reason": res.reason}
    write_table(out / "alpha.csv", ["id", "alpha", "lambda_entry", "lambda_max", "layering_level"],
                zip(ids, rule.alpha, rule.lam_entry, rule.lam_max, rule.layering), meta)
    s, T, lam = rule.grid_table(a.grid_points)
    write_table(out / "rule_grid.csv", ["s", "lambda", *ids],
                ((si, li, *ti) for si, li, ti in zip(s, lam, T)), meta)
    write_table(out / "trace.csv", ["iteration", "max_abs_eta", "delta_alpha", "step"],
                ((int(r[0]), r[1], r[2], r[3]) for r in res.trace), meta)
    write_table(out / "fairness.csv", ["id", "mean_eps", "expected_tax", "eta"],
                zip(ids, res.gap.mean_eps, res.gap.expected_tax, res.gap.eta), meta)
    if res.warning:
        print(f"warning: {res.warning}", file=sys.stderr)
    print(f"converged={res.converged} reason={res.reason} iterations={res.iterations} "
          f"relative_gap={res.gap.relative:.3e}")
    print(f"outputs in {out}")
    return 0


def _cmd_compare(a) -> int:
    cfg = _run_config(a)
    man = run_pipeline(cfg, a.out, use_cache=not a.no_cache)
    out = resolve_output_dir(cfg, a.out)
    for kind, f in man.fits.items():
        print(f"{kind}: converged={f['converged']} iterations={f['iterations']} "
              f"relative_gap={f['relative_gap']} kkt_violations={f['kkt_violations']}")
    print(f"solvency_share={man.solvency_share:.4f} wall_time={man.wall_time}s")
    print(f"outputs in {out}")
    return 0


def _cmd_transfers(a) -> int:
    cfg = _run_config(a)
    rep, sample = transfers_for(cfg, scenario=a.scenario, event=a.event, kind=a.mechanism, out=a.out)
    ids = [r.id for r in load_regions(cfg.regions_file())]
    meta = {"mechanism": a.mechanism, "class": sample.cls.label, "S": repr(sample.S),
            "S_eps": repr(float(rep.epsilon.sum()))}
    header = ["region", "epsilon", "tax", "net"]
    body = list(zip(ids, rep.epsilon, rep.tax, rep.net))
    if a.output:
        write_table(a.output, header, body, meta)
    else:
        import csv

        sys.stdout.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows((i, repr(float(e)), repr(float(t)), repr(float(n))) for i, e, t, n in body)
    return 0


COMMANDS = {
    "analytic": _cmd_analytic,
    "sensitivity": _cmd_sensitivity,
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "compare": _cmd_compare,
    "transfers": _cmd_transfers,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("afpo: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (AfpoError, OSError, json.JSONDecodeError) as exc:
        print(f"afpo: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
