"""Command line interface.

Exit codes: 0 when every verdict passes, 1 when any verdict fails, 2 on
configuration or input errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bounds, chaos, lemmas, sampling
from .chaos import ChaosElement
from .experiments import SCHEMA, ConfigError, load_spec, load_summary, run_experiment
from .experiments.output import _plain
from .kernels import Kernel, contract, contraction_identity_check, norm

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config)")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads for grid points")
    parser.add_argument("--out-dir", default=d("out"), help="directory for CSV/JSON outputs")
    parser.add_argument("--config", default=d(None), help="JSON experiment config")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _element(args) -> ChaosElement:
    if getattr(args, "element", None):
        return ChaosElement.from_json(_load_json(args.element))
    if getattr(args, "kernel", None):
        return chaos.integral_from_kernel(Kernel.from_json(_load_json(args.kernel[0])))
    raise ConfigError("give --element or --kernel")


def _emit(obj) -> None:
    print(json.dumps(_plain(obj), sort_keys=True, indent=2))


def cmd_contract(args) -> int:
    f = Kernel.from_json(_load_json(args.kernel))
    g = Kernel.from_json(_load_json(args.kernel2)) if args.kernel2 else f
    if args.r is not None:
        h = contract(f, g, args.r)
        _emit({"r": args.r, "norm": norm(h), "kernel": h.to_json()})
        return EXIT_OK
    rep = contraction_identity_check(f, g)
    _emit(rep.__dict__)
    ok = rep.relative_gap <= 1e-10 and rep.lower_bound_slack >= -1e-9 * max(abs(rep.lhs), 1e-300)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_chaos(args) -> int:
    F = _element(args)
    out = {"grades": sorted(F.grades()), "mean": chaos.expectation(F), "variance": chaos.variance(F)}
    if len(F.grades()) == 1 and 0 not in F.grades():
        q = F.homogeneous_grade()
        k4 = chaos.fourth_cumulant(F)
        out.update(q=q, E4=chaos.moment4(F), kappa4=k4, rho=chaos.rho(F),
                   var_gamma=chaos.variance(chaos.gamma(F, F)))
        if out["variance"] > 0:
            out["b1"], out["b2"] = bounds.univariate_bound(q, out["variance"], max(k4, 0.0))
    _emit(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    F = _element(args)
    G = ChaosElement.from_json(_load_json(args.element2)) if args.element2 else F
    reports = {"gamma_variance": lemmas.verify_gamma_variance(F, G), "square_covariance": lemmas.verify_square_covariance(F, G),
               "vector_fourth_moment": lemmas.verify_vector_fourth_moment([F, G] if G is not F else [F])}
    _emit({k: {"ok": r.ok, "checks": [c.as_row() for c in r.checks]} for k, r in reports.items()})
    return EXIT_OK if all(r.ok for r in reports.values()) else EXIT_FAIL


def cmd_simulate(args) -> int:
    if not args.kernel:
        raise ConfigError("simulate needs at least one --kernel")
    ks = [Kernel.from_json(_load_json(p)) for p in args.kernel]
    seed = 0 if args.seed is None else args.seed
    try:
        x = sampling.sample_homogeneous_sums(ks, args.driver, args.n, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = sampling.write_samples_csv(out / f"samples_{args.driver}_seed{seed}.csv", x, ks, seed)
    print(path)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.print_schema:
        print(json.dumps(SCHEMA, sort_keys=True, indent=2))
        return EXIT_OK
    if not args.config:
        raise ConfigError("experiment needs --config")
    spec = load_spec(args.config, seed=args.seed)
    _, report, paths = run_experiment(spec, args.out_dir, threads=args.threads)
    failed = sum(1 for r in report.rows if not r.get("verdict", True)) + sum(
        1 for c in report.checks if not c["verdict"])
    print(f"{spec.name}: {'PASS' if report.verdict else 'FAIL'} ({len(report.rows)} rows, {failed} failing) "
          f"-> {paths['json']}")
    return EXIT_OK if report.verdict else EXIT_FAIL


def cmd_report(args) -> int:
    files = [Path(p) for p in args.files] or sorted(Path(args.out_dir).glob("*.json"))
    if not files:
        raise ConfigError(f"no JSON reports found in {args.out_dir}")
    ok = True
    for path in files:
        try:
            s = load_summary(path)
            verdict, name = bool(s["verdict"]), s["name"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"{path} is not a report: {exc}") from exc
        ok &= verdict
        bad = [c["name"] for c in s.get("checks", []) if not c["verdict"]]
        print(f"{'PASS' if verdict else 'FAIL'}  {name:<20} rows={s['n_rows']:<5} failed_rows={s['failed_rows']}"
              + (f" failed_checks={','.join(bad)}" if bad else ""))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poissonfmt", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("contract", help="contractions and the product-norm identity for kernel JSON files")
    _common(p, True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--kernel2")
    p.add_argument("-r", "--r", type=int)
    p.set_defaults(func=cmd_contract)

    p = sub.add_parser("chaos", help="exact moments, kappa4, rho and bounds of a chaos element")
    _common(p, True)
    p.add_argument("--element")
    p.add_argument("--kernel", action="append")
    p.set_defaults(func=cmd_chaos)

    p = sub.add_parser("verify", help="exact spectral inequalities for one or two elements")
    _common(p, True)
    p.add_argument("--element")
    p.add_argument("--element2")
    p.add_argument("--kernel", action="append")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="sample homogeneous sums to CSV")
    _common(p, True)
    p.add_argument("--kernel", action="append", default=[])
    p.add_argument("--driver", default="poisson", choices=sorted(sampling.DRIVERS))
    p.add_argument("-n", type=int, default=100_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run an experiment config")
    _common(p, True)
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize JSON reports")
    _common(p, True)
    p.add_argument("files", nargs="*")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
