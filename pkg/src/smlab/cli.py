"""Command line interface ``smlab``.

Exit codes: 0 when every pass flag is true, 1 on a failed task or check,
2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from ._validation import ValidationError
from .dyadic import build_dyadic_system, dump_dyadic, load_dyadic, verify_dyadic
from .lattice import read_field_csv, write_field_csv
from .maximal import dimension_sweep
from .scenario import (
    ConfigError,
    Scenario,
    load_scenario,
    report_json,
    report_merge,
    run_scenario,
    run_task,
)
from .space import build_model_space, doubling_constant, parse_matrix_text, read_space, write_space
from .spectral import HormanderNormParams, Multiplier, apply_multiplier, hormander_norm, spectral_decompose

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_ESTIMATE_TASKS = {
    "ge": "ge-fit",
    "gge": "gge-check",
    "complex": "complex-profile",
    "dispersive": "dispersive",
    "rbound": "rbound-profile",
    "square": "square-test",
    "cz": "cz",
}


def bundled_scenario(name: str = "cycle_z32") -> Path:
    """Path of a scenario shipped with the package."""
    return Path(str(resources.files("smlab") / "scenarios" / f"{name}.toml"))


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _kv(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def _threads(args) -> int | None:
    env = os.environ.get("SMLAB_THREADS")
    return int(env) if env else getattr(args, "threads", None)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _scenario(args) -> Scenario:
    path = args.config or bundled_scenario()
    sc = load_scenario(path)
    if args.seed is not None:
        sc.seed = args.seed
    return sc


# --------------------------------------------------------------------------
# handlers


def cmd_run(args) -> int:
    sc = _scenario(args)
    ok, reports = run_scenario(sc, args.out, threads=_threads(args), log=lambda s: print(s, file=sys.stderr))
    if args.out is None:
        sys.stdout.write(report_json({"scenario": sc.name, "reports": reports}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    sc = _scenario(args)
    sc.tasks = [{"type": "verify-all"}]
    ok, reports = run_scenario(sc, args.out, threads=_threads(args), log=lambda s: print(s, file=sys.stderr))
    if args.out is None:
        sys.stdout.write(report_json(reports[0]))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_space_build(args) -> int:
    params = _kv(args.param)
    if args.seed is not None:
        params.setdefault("seed", args.seed)
    space = build_model_space(args.kind, **params)
    if args.out:
        write_space(space, args.out)
    else:
        from .space import format_matrix_text

        sys.stdout.write(format_matrix_text(space.mu, space.dist))
    return EXIT_OK


def cmd_space_check(args) -> int:
    space = read_space(args.file)
    prof = doubling_constant(space)
    info = {"n": space.n, "diameter": space.diameter, "C_D": prof.C_D, "d": prof.d, "C_d": prof.C_d,
            "d_min": prof.d_min, "C_cmp": prof.C_cmp}
    _emit(report_json(info), args.out)
    return EXIT_OK


def cmd_dyadic_build(args) -> int:
    space = read_space(args.space)
    system = build_dyadic_system(space, args.delta, args.seed or 0)
    _emit(dump_dyadic(system), args.out)
    return EXIT_OK


def cmd_dyadic_verify(args) -> int:
    space = read_space(args.space)
    system = load_dyadic(Path(args.dyadic), space)
    rep = verify_dyadic(system, C1_max=args.C1_max)
    info = {"pass": rep.passed, "c1": rep.c1, "C1": rep.C1, "failures": rep.failures}
    _emit(report_json(info), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_maximal_sweep(args) -> int:
    space = read_space(args.space)
    reps = dimension_sweep(space, args.p, args.s, args.dims, args.trials, args.seed or 0, threads=_threads(args))
    lines = ["m,p,s,ratio"] + [f"{m},{args.p!r},{args.s!r},{r.ratio!r}" for m, r in zip(args.dims, reps)]
    _emit("\n".join(lines) + "\n", args.out)
    ratios = [r.ratio for r in reps]
    return EXIT_OK if max(ratios) <= args.ceiling * ratios[0] else EXIT_FAIL


def _multiplier(args) -> Multiplier:
    return Multiplier.from_spec({"name": args.multiplier, **_kv(args.param)})


def _operator(args):
    space = read_space(args.space)
    _, matrix = parse_matrix_text(Path(args.operator).read_text())
    return spectral_decompose(matrix, space)


def cmd_spectral_hnorm(args) -> int:
    f = _multiplier(args)
    norms = {f"{b:g}": hormander_norm(f, HormanderNormParams(beta=b)) for b in args.beta}
    _emit(report_json({"multiplier": f.name, "norm": norms}), args.out)
    return EXIT_OK


def cmd_spectral_apply(args) -> int:
    A = _operator(args)
    field = read_field_csv(args.field, A.n)
    out = apply_multiplier(_multiplier(args), A, field)
    if args.out:
        write_field_csv(out, args.out)
    else:
        write_field_csv(out, sys.stdout)
    return EXIT_OK


def cmd_spectral_pl(args) -> int:
    sc = _scenario(args)
    task = {"type": "paley-littlewood", "p": args.p if args.p is not None else sc.p}
    if args.s is not None:
        task["Y"] = {"kind": "sequence", "s": args.s, "m": args.m}
    report, _ = run_task(sc, task, {"threads": _threads(args)})
    _emit(report_json(report), args.out)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_estimates(args) -> int:
    sc = _scenario(args)
    kind = _ESTIMATE_TASKS[args.kind]
    task = next((dict(t) for t in sc.tasks if t.get("type") == kind), {"type": kind})
    task.update(_kv(args.param))
    report, files = run_task(sc, task, {"threads": _threads(args)})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{kind}.json").write_text(report_json(report))
        for name, text in files.items():
            (out / f"{kind}_{name}").write_text(text)
    else:
        sys.stdout.write(report_json(report))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_report_merge(args) -> int:
    reports = []
    for path in args.reports:
        data = json.loads(Path(path).read_text())
        reports.extend(data["reports"] if "reports" in data else [data])
    ok, text = report_merge(reports)
    _emit(text, args.out)
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (default: bundled cycle_z32)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads (SMLAB_THREADS overrides)")

    parser = argparse.ArgumentParser(prog="smlab", description="Spectral multiplier laboratory on finite metric measure spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run every task of a scenario")
    p.add_argument("scenario", nargs="?", help="scenario file (same as --config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="run the property battery on a scenario")
    p.set_defaults(func=cmd_verify)

    sp = sub.add_parser("space", help="metric measure spaces").add_subparsers(dest="action", required=True)
    p = sp.add_parser("build", parents=[common], help="build a model space")
    p.add_argument("kind", choices=["cycle", "path", "torus", "cloud", "euclidean"])
    p.add_argument("--param", "-P", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_space_build)
    p = sp.add_parser("check", parents=[common], help="validate a space file and print its doubling profile")
    p.add_argument("file")
    p.set_defaults(func=cmd_space_check)

    dp = sub.add_parser("dyadic", help="dyadic systems").add_subparsers(dest="action", required=True)
    p = dp.add_parser("build", parents=[common])
    p.add_argument("space")
    p.add_argument("--delta", type=float, default=0.5)
    p.set_defaults(func=cmd_dyadic_build)
    p = dp.add_parser("verify", parents=[common])
    p.add_argument("space")
    p.add_argument("dyadic")
    p.add_argument("--C1-max", dest="C1_max", type=float, default=4.0)
    p.set_defaults(func=cmd_dyadic_verify)

    mp = sub.add_parser("maximal", help="maximal operator probes").add_subparsers(dest="action", required=True)
    p = mp.add_parser("sweep", parents=[common], help="dimension sweep; CSV m,p,s,ratio")
    p.add_argument("space")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--s", type=float, default=1.5)
    p.add_argument("--dims", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("--ceiling", type=float, default=4.0)
    p.set_defaults(func=cmd_maximal_sweep)

    spp = sub.add_parser("spectral", help="spectral calculus").add_subparsers(dest="action", required=True)
    p = spp.add_parser("hnorm", parents=[common], help="Hormander norm of a built-in multiplier")
    p.add_argument("multiplier")
    p.add_argument("--beta", type=float, nargs="+", default=[1.5])
    p.add_argument("--param", "-P", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_spectral_hnorm)
    p = spp.add_parser("apply", parents=[common], help="apply f(A) to a field CSV")
    p.add_argument("space")
    p.add_argument("operator")
    p.add_argument("field")
    p.add_argument("--multiplier", default="heat")
    p.add_argument("--param", "-P", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_spectral_apply)
    p = spp.add_parser("pl", parents=[common], help="Paley-Littlewood ratios on the scenario operator")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(func=cmd_spectral_pl)

    ep = sub.add_parser("estimates", help="kernel estimates and R-bounds")
    ep_sub = ep.add_subparsers(dest="kind", required=True)
    for kind in _ESTIMATE_TASKS:
        p = ep_sub.add_parser(kind, parents=[common])
        p.add_argument("--param", "-P", action="append", metavar="KEY=VALUE", help="task parameter override")
        p.set_defaults(func=cmd_estimates)

    rp = sub.add_parser("report", help="report utilities").add_subparsers(dest="action", required=True)
    p = rp.add_parser("merge", parents=[common], help="merge JSON reports into a CSV summary")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scenario", None) and not args.config:
        args.config = args.scenario
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"smlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, OSError) as exc:
        print(f"smlab: {exc}", file=sys.stderr)
        return EXIT_FAIL if isinstance(exc, ValidationError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
