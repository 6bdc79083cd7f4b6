"""Lattice-valued Hardy-Littlewood maximal operators and boundedness probes."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import ValidationError, check_exponent, check_field, spawn_seeds
from .dyadic import AdjacentFamily, dyadic_maximal
from .lattice import LatticeSpec, bochner_norm
from .space import MetricMeasureSpace, scan_radii

__all__ = [
    "MaximalReport",
    "UncoveredBallError",
    "m_hl",
    "m_hl_q",
    "n_q_r",
    "domination_check",
    "semigroup_domination",
    "norm_probe",
    "dimension_sweep",
    "probe_field",
]


class UncoveredBallError(ValidationError):
    pass


def _ball_sup(space: MetricMeasureSpace, g: np.ndarray) -> np.ndarray:
    """``max_r V(x,r)^{-1} sum_{B(x,r)} mu g`` over every distinct ball, for ``g >= 0``."""
    order, sd, cm = space._sorted
    weighted = g[order] * space.mu[order][..., None]
    avg = np.cumsum(weighted, axis=1) / cm[..., None]
    # a prefix is a ball only where the next sorted distance is strictly larger
    ends = np.ones(sd.shape, dtype=bool)
    ends[:, :-1] = sd[:, 1:] != sd[:, :-1]
    avg[~ends] = -np.inf
    return avg.max(axis=1)


def m_hl(space: MetricMeasureSpace, f) -> np.ndarray:
    """``M_HL f(x, w) = sup_r V(x, r)^{-1} sum_{y in B(x, r)} mu(y) |f(y, w)|``."""
    f = check_field(f, space.n)
    return _ball_sup(space, np.abs(f))


def m_hl_q(space: MetricMeasureSpace, q: float, f) -> np.ndarray:
    """``M^q_HL f = sup_r N_{q,r} f``."""
    q = check_exponent(q, name="q", high=math.inf, high_open=True)
    f = check_field(f, space.n)
    return _ball_sup(space, np.abs(f) ** q) ** (1.0 / q)


def n_q_r(space: MetricMeasureSpace, q: float, r: float, f) -> np.ndarray:
    """Local ``L^q`` ball average ``N_{q,r} f``; the ball maximum for ``q = inf``."""
    q = check_exponent(q, name="q")
    if not r > 0:
        raise ValidationError("r must be > 0")
    f = check_field(f, space.n)
    inside = space.dist <= r
    a = np.abs(f)
    if math.isinf(q):
        return np.where(inside[:, :, None], a[None, :, :], 0.0).max(axis=1)
    w = inside * space.mu[None, :]
    vol = w.sum(axis=1)
    return ((w @ a**q) / vol[:, None]) ** (1.0 / q)


def domination_check(space: MetricMeasureSpace, family: AdjacentFamily, f) -> float:
    """Smallest ``c`` with ``M_HL f <= c * sum_m M_{D^m}(|f|)`` pointwise."""
    if not family.covers_all:
        raise UncoveredBallError(f"{len(family.uncovered)} balls have no covering cube")
    f = check_field(f, space.n)
    top = m_hl(space, f)
    bottom = sum(dyadic_maximal(s, np.abs(f)) for s in family.systems)
    pos = top > 0
    if not pos.any():
        return 0.0
    if np.any(bottom[pos] <= 0):
        return math.inf
    return float((top[pos] / bottom[pos]).max())


def semigroup_domination(space: MetricMeasureSpace, kernels, radii, f, q0: float = 1.0,
                         q1: float = math.inf) -> float:
    """Measured constant in ``N_{q1, rho(t)}(T_t f) <= C M^{q0}_HL f``.

    ``kernels`` are kernel matrices ``p_t(x, y)`` (so ``T_t f = sum_y mu(y) p_t(x, y) f(y)``)
    and ``radii`` the matching ``rho(t)``.
    """
    f = check_field(f, space.n)
    bottom = m_hl_q(space, q0, f)
    best = 0.0
    for kern, rho in zip(kernels, radii):
        tf = (np.asarray(kern) * space.mu[None, :]) @ f
        top = n_q_r(space, q1, rho, tf)
        pos = top > 1e-14 * max(1.0, float(top.max()))
        if not pos.any():
            continue
        if np.any(bottom[pos] <= 0):
            return math.inf
        best = max(best, float((top[pos] / bottom[pos]).max()))
    return best


@dataclass
class MaximalReport:
    """Empirical lower bound for an operator norm on ``L^p(Y)``."""

    operator: str
    p: float
    Y: LatticeSpec
    ratio: float
    trials: int
    seed: object
    ratios: list[float] = field(default_factory=list)
    best_field: np.ndarray | None = field(default=None, repr=False)


def probe_field(space: MetricMeasureSpace, dim: int, rng: np.random.Generator, kind: int) -> np.ndarray:
    """Probe field: Gaussian (kind 0), indicator of a ball in random columns (1), point mass (2)."""
    n = space.n
    if kind % 3 == 0:
        return rng.standard_normal((n, dim))
    cols = rng.random(dim) < 0.5
    if not cols.any():
        cols[rng.integers(dim)] = True
    x0 = rng.integers(n)
    if kind % 3 == 1:
        radii = scan_radii(space)
        rows = space.dist[x0] <= radii[rng.integers(radii.size)]
    else:
        rows = np.zeros(n, dtype=bool)
        rows[x0] = True
    amp = rng.random(dim) + 0.5
    return np.outer(rows, cols * amp).astype(float)


def _resolve_threads(threads: int | None) -> int:
    import os

    env = os.environ.get("SMLAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(threads or 1))


def norm_probe(operator: Callable[[np.ndarray], np.ndarray] | str, p: float, Y: LatticeSpec,
               space: MetricMeasureSpace, trials: int = 64, seed=0, *, threads: int | None = None,
               extra_fields=(), name: str | None = None) -> MaximalReport:
    """Largest ``||T f||_{L^p(Y)} / ||f||_{L^p(Y)}`` over seeded probe fields.

    ``operator`` is a callable on ``(n, dim)`` fields or one of ``'identity'``,
    ``'m_hl'``, ``'m_hl_q:<q>'``.  ``extra_fields`` are evaluated in addition
    to the random ones.  The result is a lower bound on the operator norm and
    does not depend on the thread count.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    p = check_exponent(p, name="p")
    label = name or (operator if isinstance(operator, str) else getattr(operator, "__name__", "operator"))
    op = _named_operator(operator, space)
    seeds = spawn_seeds(seed, trials)

    def one(i):
        f = probe_field(space, Y.dim, np.random.default_rng(seeds[i]), i)
        return _ratio(op, p, Y, space, f), f

    workers = _resolve_threads(threads)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]
    for f in extra_fields:
        results.append((_ratio(op, p, Y, space, check_field(f, space.n)), f))
    ratios = [r for r, _ in results]
    best = int(np.argmax(ratios))
    return MaximalReport(str(label), p, Y, float(ratios[best]), trials, seed, ratios, results[best][1])


def _ratio(op, p, Y, space, f) -> float:
    den = bochner_norm(p, Y, f, space)
    if den == 0:
        return 0.0
    return bochner_norm(p, Y, op(f), space) / den


def _named_operator(operator, space):
    if callable(operator):
        return operator
    if operator == "identity":
        return lambda f: f
    if operator == "m_hl":
        return lambda f: m_hl(space, f)
    if isinstance(operator, str) and operator.startswith("m_hl_q:"):
        q = float(operator.split(":", 1)[1])
        return lambda f: m_hl_q(space, q, f)
    raise ValidationError(f"unknown operator {operator!r}")


def dimension_sweep(space: MetricMeasureSpace, p: float, s: float, dims=(1, 2, 4, 8, 16, 32, 64),
                    trials: int = 64, seed=0, *, operator="m_hl", threads: int | None = None) -> list[MaximalReport]:
    """Norm probes of ``operator`` on ``L^p(l^s_m)`` for increasing ``m``.

    The best field found at the previous dimension is zero-padded and
    re-evaluated, so recorded ratios are nondecreasing in ``m`` (``l^s_m``
    embeds isometrically into ``l^s_{m'}`` for ``m <= m'``).
    """
    reports = []
    carry = None
    for i, m in enumerate(dims):
        Y = LatticeSpec.sequence(s, m)
        extra = ()
        if carry is not None:
            padded = np.zeros((space.n, m), dtype=carry.dtype)
            padded[:, : carry.shape[1]] = carry
            extra = (padded,)
        rep = norm_probe(operator, p, Y, space, trials, (seed, i) if not isinstance(seed, tuple) else seed + (i,),
                         threads=threads, extra_fields=extra,
                         name=operator if isinstance(operator, str) else None)
        carry = rep.best_field
        reports.append(rep)
    return reports
