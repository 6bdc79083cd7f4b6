"""Scenario files, task execution and reports.

A scenario is a TOML file::

    name = "cycle_z32"
    seed = 0

    [space]                 # kind + parameters, or file = "space.txt"
    kind = "cycle"
    n = 32

    [operator]              # kind + parameters, or file = "operator.txt"
    kind = "graph_laplacian"

    [lattice]
    p = 4
    Y = { kind = "sequence", s = "3/2", m = 8 }
    exponents = ["3/2", 2]  # declared (pY, qY); optional

    [[tasks]]
    type = "ge-fit"
    t_grid = { min = 0.1, max = 10, num = 17 }

Relative file paths resolve against the scenario file.  Every task writes a
JSON report (and CSV data where relevant) to the output directory; reports
contain no timestamps or paths, so reruns with the same seeds are
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import estimates as est
from ._validation import ValidationError, spawn_seeds
from .dyadic import build_dyadic_system, conditional_expectation, k_of_r, verify_dyadic
from .lattice import LatticeSpec, _parse_exponent, admissible_exponents, alpha, bochner_norm
from .maximal import dimension_sweep, m_hl, m_hl_q, probe_field
from .space import MetricMeasureSpace, build_model_space, doubling_constant, parse_matrix_text, read_space
from .spectral import (
    HormanderNormParams,
    Multiplier,
    apply_multiplier,
    build_operator,
    build_partition,
    calculus_apply,
    hormander_norm,
    membership_check,
    paley_littlewood,
    spectral_decompose,
)

__all__ = [
    "SCHEMA_VERSION",
    "TASK_TYPES",
    "ConfigError",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "run_task",
    "report_json",
    "report_merge",
]

SCHEMA_VERSION = 1
TASK_TYPES = (
    "dyadic-verify",
    "maximal-sweep",
    "hormander-norm",
    "ge-fit",
    "gge-check",
    "complex-profile",
    "dispersive",
    "rbound-profile",
    "square-test",
    "paley-littlewood",
    "cz",
    "verify-all",
)


class ConfigError(ValidationError):
    """Malformed or incomplete scenario configuration (CLI exit code 2)."""


@dataclass
class Scenario:
    name: str
    seed: int
    space_spec: dict
    operator_spec: dict
    lattice: dict
    tasks: list
    base_dir: Path = field(default_factory=Path.cwd)
    _space: MetricMeasureSpace | None = field(default=None, repr=False)
    _operator: object = field(default=None, repr=False)

    @property
    def space(self) -> MetricMeasureSpace:
        if self._space is None:
            spec = dict(self.space_spec)
            if "file" in spec:
                self._space = read_space(self.base_dir / spec["file"], name=spec.get("name"))
            else:
                kind = spec.pop("kind", None)
                if kind is None:
                    raise ConfigError("[space] needs 'kind' or 'file'")
                self._space = build_model_space(kind, **spec)
        return self._space

    @property
    def operator(self):
        if self._operator is None:
            spec = dict(self.operator_spec or {"kind": "graph_laplacian"})
            if "file" in spec:
                _, matrix = parse_matrix_text((self.base_dir / spec["file"]).read_text())
            else:
                matrix = build_operator(spec.pop("kind"), self.space, **spec)
            self._operator = spectral_decompose(matrix, self.space)
        return self._operator

    @property
    def operator_label(self) -> str:
        spec = self.operator_spec or {"kind": "graph_laplacian"}
        return str(spec.get("kind", spec.get("file")))

    @property
    def p(self) -> float:
        return float(_parse_exponent(self.lattice.get("p", 2)))

    @property
    def Y(self) -> LatticeSpec:
        return LatticeSpec.from_dict(self.lattice.get("Y", {"kind": "sequence", "s": 2, "m": 1}))

    @property
    def exponents(self) -> tuple[float, float]:
        ex = self.lattice.get("exponents")
        if ex is None:
            return admissible_exponents(self.Y)
        return float(_parse_exponent(ex[0])), float(_parse_exponent(ex[1]))


def parse_scenario(text: str, base_dir=None) -> Scenario:
    """Parse scenario TOML; syntax errors become :class:`ConfigError` with line/column."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if "space" not in data:
        raise ConfigError("missing [space] section")
    tasks = data.get("tasks", [])
    if not isinstance(tasks, list):
        raise ConfigError("'tasks' must be an array of tables")
    for i, t in enumerate(tasks):
        if not isinstance(t, dict) or t.get("type") not in TASK_TYPES:
            raise ConfigError(f"task {i}: unknown or missing type {t.get('type') if isinstance(t, dict) else t!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return Scenario(str(data.get("name", "scenario")), seed, dict(data["space"]), dict(data.get("operator", {})),
                    dict(data.get("lattice", {})), tasks, Path(base_dir) if base_dir else Path.cwd())


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file {path} not found")
    return parse_scenario(path.read_text(), path.parent)


# --------------------------------------------------------------------------
# reports


def _clean(obj):
    """JSON-safe, deterministic conversion (numpy scalars, tuples, non-finite floats)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _report(sc: Scenario, task: str, params: dict, fitted: dict, residual, passed: bool, seed, **extra) -> dict:
    rep = {
        "schema": SCHEMA_VERSION,
        "scenario": sc.name,
        "task": task,
        "operator": sc.operator_label,
        "params": params,
        "fitted": fitted,
        "residual": residual,
        "pass": bool(passed),
        "seed": seed,
    }
    rep.update(extra)
    return rep


def _grid(spec, default) -> np.ndarray:
    if spec is None:
        return np.asarray(default, dtype=float)
    if isinstance(spec, dict):
        scale = spec.get("scale", "log")
        fn = np.geomspace if scale == "log" else np.linspace
        return fn(float(spec["min"]), float(spec["max"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# tasks


def _task_dyadic(sc, t, seed, ctx):
    delta = float(t.get("delta", 0.5))
    system = build_dyadic_system(sc.space, delta, seed)
    rep = verify_dyadic(system, C1_max=float(t.get("C1_max", 4.0)))
    ctx["dyadic"] = system
    fitted = {"c1": rep.c1, "C1": rep.C1, "levels": len(system.levels)}
    return _report(sc, "dyadic-verify", {"delta": delta}, fitted, None, rep.passed, seed,
                   diagnostics=rep.failures), {}


def _task_sweep(sc, t, seed, ctx):
    p = float(_parse_exponent(t.get("p", sc.p)))
    s = float(_parse_exponent(t.get("s", sc.Y.s)))
    dims = [int(m) for m in t.get("dims", [1, 2, 4, 8, 16, 32, 64])]
    trials = int(t.get("trials", 64))
    ceiling = float(t.get("ceiling", 4.0))
    reps = dimension_sweep(sc.space, p, s, dims, trials, seed, threads=ctx.get("threads"))
    ratios = [r.ratio for r in reps]
    growth = max(ratios) / ratios[0] if ratios[0] > 0 else math.inf
    rows = [(m, p, s, r) for m, r in zip(dims, ratios)]
    report = _report(sc, "maximal-sweep", {"p": p, "s": s, "m": max(dims), "dims": dims, "trials": trials},
                     {"ratio_m1": ratios[0], "ratio_max": max(ratios), "growth": growth}, None,
                     growth <= ceiling, seed)
    return report, {"sweep.csv": _csv(rows, ["m", "p", "s", "ratio"])}


def _task_hnorm(sc, t, seed, ctx):
    f = Multiplier.from_spec(t.get("multiplier", {"name": "heat", "z": 1.0}))
    betas = [float(b) for b in np.atleast_1d(t.get("beta", [1.0, 1.5, 2.0]))]
    norms = {f"{b:g}": hormander_norm(f, HormanderNormParams(beta=b), warn=False) for b in betas}
    fitted = {"norm": norms}
    ok = all(math.isfinite(v) for v in norms.values())
    if t.get("membership", False):
        rows = membership_check(f, betas)
        fitted["finite"] = {f"{r['beta']:g}": r["finite"] for r in rows}
    return _report(sc, "hormander-norm", {"multiplier": f.name, "beta": betas}, fitted, None, ok, seed), {}


def _ge(sc, t, ctx):
    if "ge" not in ctx:
        m = float(t.get("m", 2.0))
        ctx["ge"] = est.fit_gaussian(sc.operator, m, _grid(t.get("t_grid"), np.geomspace(0.1, 10, 17)),
                                     _grid(t.get("c_grid"), est.DEFAULT_C_GRID), C_max=float(t.get("C_max", 1e6)))
    return ctx["ge"]


def _task_ge(sc, t, seed, ctx):
    ctx.pop("ge", None)
    fit = _ge(sc, t, ctx)
    ok = fit.passed
    fitted = {"C": fit.C, "c": fit.c}
    if t.get("implication", True):
        implied, C2, c2, res2 = est.ge_implies_gge(fit, sc.operator)
        fitted.update({"gge1_C": C2, "gge1_c": c2, "gge1_residual": res2, "gge1_pass": implied})
        ok = ok and implied
    return _report(sc, "ge-fit", {"m": fit.m, "t_grid": fit.t_grid}, fitted, fit.residual, ok, seed), {}


def _task_gge(sc, t, seed, ctx):
    p0, m = float(t.get("p0", 1.0)), float(t.get("m", 2.0))
    g = est.check_gge(sc.operator, p0, m, _grid(t.get("t_grid"), np.geomspace(0.1, 10, 17)),
                      _grid(t.get("c_grid"), est.DEFAULT_C_GRID), seed=seed)
    return _report(sc, "gge-check", {"p0": p0, "m": m, "mode": g.mode}, {"C": g.C, "c": g.c}, g.residual,
                   g.passed, seed), {}


def _task_complex(sc, t, seed, ctx):
    fit = _ge(sc, t, ctx)
    thetas = _grid(t.get("thetas"), np.linspace(0.0, 1.45, 12))
    prof = est.complex_time_profile(sc.operator, fit, thetas, slack=float(t.get("slack", 0.5)))
    r2_min = float(t.get("r2_min", 0.9))
    ok = prof.passed and prof.r2 >= r2_min
    fitted = {"d_hat": prof.d_hat, "r2": prof.r2, "d": prof.d, "C_hat": math.exp(prof.log_C)}
    rows = list(zip(prof.thetas, prof.s))
    return (_report(sc, "complex-profile", {"m": fit.m, "slack": prof.slack, "r2_min": r2_min}, fitted, None, ok, seed),
            {"complex.csv": _csv(rows, ["theta", "s"])})


def _task_dispersive(sc, t, seed, ctx):
    d = float(t.get("d", doubling_constant(sc.space).d))
    res = est.dispersive_check(sc.operator, d, _grid(t.get("t_grid"), np.geomspace(0.05, 20, 40)))
    fitted = {"e_hat": res.e_hat, "C": res.C, "cutoff_t": float(res.t_grid[res.cutoff - 1])}
    ok = math.isfinite(res.e_hat) and math.isfinite(res.C)
    rows = list(zip(res.t_grid, res.norms))
    return _report(sc, "dispersive", {"d": d}, fitted, None, ok, seed), {"dispersive.csv": _csv(rows, ["t", "norm"])}


def _task_rbound(sc, t, seed, ctx):
    p = float(_parse_exponent(t.get("p", sc.p)))
    Y = LatticeSpec.from_dict(t["Y"]) if "Y" in t else sc.Y
    ex = tuple(float(_parse_exponent(v)) for v in t["exponents"]) if "exponents" in t else sc.exponents
    slack = float(t.get("slack", 0.1))
    prof = est.semigroup_rbound_profile(sc.operator, p, Y, _grid(t.get("thetas"), np.linspace(0.0, 1.45, 8)),
                                        _grid(t.get("t_grid"), np.geomspace(0.1, 10, 5)), int(t.get("trials", 32)),
                                        int(t.get("K", 4)), seed, exponents=ex, threads=ctx.get("threads"))
    env = prof.envelope(slack)
    ok = bool(np.all(prof.r_hat <= env * (1 + 1e-12)))
    fitted = {"C_hat": prof.C_hat, "alpha_hat": prof.alpha_hat, "alpha_d": prof.envelope_alpha,
              "alpha_tilde_d": prof.envelope_alpha_tilde, "consistent": prof.consistent}
    params = {"p": p, "s": Y.s, "m": Y.dim, "pY": ex[0], "qY": ex[1], "slack": slack}
    return (_report(sc, "rbound-profile", params, fitted, float(np.max(prof.r_hat / env - 1)), ok, seed),
            {"rbound.csv": _csv(prof.rows(slack), ["theta", "r_hat", "envelope"])})


def _task_square(sc, t, seed, ctx):
    p = float(_parse_exponent(t.get("p", sc.p)))
    Y = LatticeSpec.from_dict(t["Y"]) if "Y" in t else sc.Y
    pY, qY = sc.exponents
    d = doubling_constant(sc.space).d
    beta = float(t.get("beta", alpha(p, pY, qY) * d + 0.6))
    fams, K = int(t.get("families", 200)), int(t.get("K", 8))
    vals = est.multiplier_square_batch(sc.operator, p, Y, beta, fams, K, seed)
    half = fams // 2
    a, b = float(vals[:half].max()), float(vals[half:].max())
    stable = max(a, b) <= 2 * min(a, b)
    ok = bool(np.all(np.isfinite(vals))) and stable
    fitted = {"C_hat": float(vals.max()), "C_half1": a, "C_half2": b}
    return _report(sc, "square-test", {"p": p, "s": Y.s, "m": Y.dim, "beta": beta, "families": fams, "K": K},
                   fitted, None, ok, seed), {}


def _pl_batch(A, p, Y, fields, K_part):
    part = build_partition(-K_part, K_part)
    out = []
    for f in fields:
        r = paley_littlewood(A.project_range(f), A, p, Y, part)
        out.append((r.ratio_phi, r.ratio_psi))
    return np.array(out)


def _task_pl(sc, t, seed, ctx):
    p = float(_parse_exponent(t.get("p", sc.p)))
    Y = LatticeSpec.from_dict(t["Y"]) if "Y" in t else sc.Y
    count = int(t.get("fields", 50))
    A = sc.operator
    lam = A.eigenvalues[A.eigenvalues > 0]
    K_part = int(t.get("K", max(3, math.ceil(max(abs(math.log2(lam.min())), abs(math.log2(lam.max())))) + 2)))
    fields = [np.random.default_rng(s).standard_normal((sc.space.n, Y.dim)) for s in spawn_seeds(seed, count)]
    r = _pl_batch(A, p, Y, fields, K_part)
    spread = float((r.max(axis=0) / r.min(axis=0)).max())
    ok = bool(np.all(np.isfinite(r))) and spread <= 1.2
    fitted = {"phi_min": r[:, 0].min(), "phi_max": r[:, 0].max(), "psi_min": r[:, 1].min(),
              "psi_max": r[:, 1].max(), "spread": spread}
    return _report(sc, "paley-littlewood", {"p": p, "s": Y.s, "m": Y.dim, "fields": count, "K": K_part},
                   fitted, None, ok, seed), {}


def _cz_batch(space, system, count, seed):
    rows = []
    for s in spawn_seeds(seed, count):
        rng = np.random.default_rng(s)
        f = rng.standard_normal(space.n) * (rng.random(space.n) < 0.3) * 10.0
        if not np.any(f):
            f[0] = 1.0
        lam = float((np.abs(f) * space.mu).sum() / space.total_mass * rng.uniform(1.1, 8.0))
        cz = est.cz_decompose(space, system, f, lam)
        rows.append(cz)
    return rows


def _task_cz(sc, t, seed, ctx):
    system = ctx.get("dyadic") or build_dyadic_system(sc.space, float(t.get("delta", 0.5)), seed)
    count = int(t.get("pairs", 100))
    rows = _cz_batch(sc.space, system, count, seed)
    c_sum = np.array([r.c_sum for r in rows])
    half = count // 2
    a, b = float(c_sum[:half].max()), float(c_sum[half:].max())
    ok = all(r.passed for r in rows) and max(a, b) <= 2 * min(a, b)
    fitted = {"c_g": max(r.c_g for r in rows), "overlap": max(r.overlap for r in rows),
              "c_mass": max(r.c_mass for r in rows), "c_sum": float(c_sum.max()), "c_sum_half1": a,
              "c_sum_half2": b}
    return _report(sc, "cz", {"pairs": count}, fitted, max(r.reconstruction_error for r in rows), ok, seed), {}


def _task_verify_all(sc, t, seed, ctx):
    """Property battery on the scenario's space and operator."""
    space, A = sc.space, sc.operator
    checks = {}
    system = build_dyadic_system(space, 0.5, seed)
    checks["dyadic"] = verify_dyadic(system).passed
    rng = np.random.default_rng(spawn_seeds(seed, 1)[0])
    rs = 10.0 ** rng.uniform(-3, 3, 1000)
    ds = rng.uniform(1e-3, 0.5, 1000)
    checks["k_of_r"] = all(d * r <= 4 * d ** k_of_r(r, d) < r for r, d in zip(rs, ds))
    f = rng.standard_normal((space.n, 3))
    ok = True
    for a, b in zip(system.levels[:-1], system.levels[1:]):
        Eb = conditional_expectation(system, b, f)
        ok &= np.allclose(conditional_expectation(system, b, Eb), Eb, atol=1e-12)
        ok &= np.allclose(conditional_expectation(system, a, Eb), conditional_expectation(system, a, f), atol=1e-12)
        ok &= abs(float((space.mu[:, None] * (Eb - f)).sum())) <= 1e-10
    checks["conditional_expectation"] = bool(ok)
    checks["m_hl_q"] = bool(np.allclose(m_hl_q(space, 2.0, f), m_hl(space, np.abs(f) ** 2) ** 0.5, rtol=1e-12))
    lam = A.eigenvalues[A.eigenvalues > 0]
    if lam.size:
        K_part = max(3, math.ceil(max(abs(math.log2(lam.min())), abs(math.log2(lam.max())))) + 2)
        part = build_partition(-K_part - 2, K_part + 2)
        heat = Multiplier.heat(1.0)
        g = A.project_range(f)
        diff = np.abs(calculus_apply(heat, A, part, K_part, g) - apply_multiplier(heat, A, g)).max()
        checks["calculus"] = bool(diff <= 1e-8)
    fit = _ge(sc, t, ctx)
    checks["ge_fit"] = fit.passed
    checks["ge_implies_gge"] = est.ge_implies_gge(fit, A)[0]
    T = A.function_matrix(np.exp(-0.5 * A.eigenvalues))
    rb = est.r_bound_estimate([T], 2.0, LatticeSpec.sequence(2, 2), space, 8, 2, seed)
    checks["rbound_singleton"] = bool(abs(rb - np.abs(np.exp(-0.5 * A.eigenvalues)).max()) <= 1e-9)
    cz = _cz_batch(space, system, 10, seed)
    checks["cz"] = all(r.passed for r in cz)
    return _report(sc, "verify-all", {}, {"checks": checks}, None, all(checks.values()), seed), {}


_TASKS = {
    "dyadic-verify": _task_dyadic,
    "maximal-sweep": _task_sweep,
    "hormander-norm": _task_hnorm,
    "ge-fit": _task_ge,
    "gge-check": _task_gge,
    "complex-profile": _task_complex,
    "dispersive": _task_dispersive,
    "rbound-profile": _task_rbound,
    "square-test": _task_square,
    "paley-littlewood": _task_pl,
    "cz": _task_cz,
    "verify-all": _task_verify_all,
}


def run_task(sc: Scenario, task: dict, ctx: dict | None = None) -> tuple[dict, dict]:
    """Run one task; returns ``(report, {csv_name: text})``."""
    ctx = {} if ctx is None else ctx
    kind = task.get("type")
    if kind not in _TASKS:
        raise ConfigError(f"unknown task type {kind!r}")
    seed = int(task.get("seed", sc.seed))
    return _TASKS[kind](sc, task, seed, ctx)


def run_scenario(sc: Scenario, out_dir=None, *, threads: int | None = None, log=None) -> tuple[bool, list[dict]]:
    """Run every task in order, writing ``NN_<task>.json`` (and CSV companions) to ``out_dir``."""
    ctx = {"threads": threads}
    reports = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for i, task in enumerate(sc.tasks):
        try:
            report, files = run_task(sc, task, ctx)
        except ConfigError:
            raise
        except (ValidationError, ValueError, KeyError) as exc:
            report = _report(sc, task.get("type"), {}, {}, None, False, task.get("seed", sc.seed),
                             diagnostics=[f"{type(exc).__name__}: {exc}"])
            files = {}
        reports.append(report)
        if log is not None:
            log(f"[{'PASS' if report['pass'] else 'FAIL'}] {i:02d} {report['task']}")
        if out is not None:
            stem = f"{i:02d}_{task['type']}"
            (out / f"{stem}.json").write_text(report_json(report))
            for name, text in files.items():
                (out / f"{stem}_{name}").write_text(text)
    return all(r["pass"] for r in reports), reports


# --------------------------------------------------------------------------
# merging


def _sort_value(v):
    try:
        return (0, float(v))
    except (TypeError, ValueError):
        return (1, math.inf)


def report_merge(reports: list[dict]) -> tuple[bool, str]:
    """One CSV row per ``(scenario, task)`` sorted by ``(p, s, m)``; returns ``(all_pass, csv_text)``."""
    if not reports:
        return True, _csv([], ["scenario", "task", "p", "s", "m", "pass", "headline"])
    versions = {r.get("schema") for r in reports}
    if len(versions) != 1:
        raise ValidationError(f"schema mismatch: {sorted(map(str, versions))}")
    rows = []
    for r in reports:
        prm = r.get("params", {})
        headline = ";".join(f"{k}={v}" for k, v in sorted(r.get("fitted", {}).items())
                            if not isinstance(v, (dict, list)))
        rows.append((r.get("scenario"), r.get("task"), prm.get("p", ""), prm.get("s", ""), prm.get("m", ""),
                     str(bool(r.get("pass"))).lower(), headline))
    rows.sort(key=lambda x: (_sort_value(x[2]), _sort_value(x[3]), _sort_value(x[4]), str(x[0]), str(x[1])))
    return all(bool(r.get("pass")) for r in reports), _csv(rows, ["scenario", "task", "p", "s", "m", "pass", "headline"])
