"""Kernel estimate fitters, Calderon-Zygmund decomposition and R-bound probes.

Everything here produces *measured* constants on a finite space: Gaussian
type bounds are fitted and re-verified on a grid, R-bounds are estimated
from below by seeded random search and compared against fitted envelopes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import ValidationError, check_exponent, check_field, spawn_seeds
from .dyadic import DyadicSystem
from .lattice import LatticeSpec, alpha, alpha_tilde, square_function_norm
from .maximal import _resolve_threads, probe_field
from .space import MetricMeasureSpace, doubling_constant, volumes
from .spectral import Multiplier, SpectralOperator, hormander_norm, HormanderNormParams, semigroup_kernel

__all__ = [
    "DegenerateGridError",
    "HeightTooLowError",
    "GaussianFit",
    "GgeParams",
    "ComplexTimeProfile",
    "DispersiveFit",
    "CzDecomposition",
    "RBoundProfile",
    "SquareTestResult",
    "fit_gaussian",
    "check_gge",
    "ge_implies_gge",
    "complex_time_profile",
    "dispersive_check",
    "cz_decompose",
    "r_bound_estimate",
    "semigroup_rbound_profile",
    "multiplier_square_test",
    "random_multiplier_family",
    "multiplier_square_batch",
]

DEFAULT_C_GRID = np.geomspace(1e-2, 2.0, 40)


class DegenerateGridError(ValidationError):
    pass


class HeightTooLowError(ValidationError):
    pass


def _check_grid(values, name: str, *, positive: bool = True) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise DegenerateGridError(f"{name} must be a nonempty finite grid")
    if positive and np.any(arr <= 0):
        raise DegenerateGridError(f"{name} must be positive")
    return arr


def _exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


def _gamma(m: float) -> float:
    if m < 2:
        raise ValidationError("m must be >= 2")
    return m / (m - 1.0)


# --------------------------------------------------------------------------
# Gaussian estimates


@dataclass
class GaussianFit:
    """Fitted ``|p_t(x, y)| <= C V(x, r_t)^{-1} exp(-c (dist/r_t)^{m/(m-1)})`` with ``r_t = t^{1/m}``.

    ``residual`` is the largest ``log|p| - log(bound)`` over the grid and
    ``feasible`` lists every ``(c, C)`` pair evaluated.
    """

    m: float
    C: float
    c: float
    t_grid: np.ndarray
    residual: float
    C_max: float
    feasible: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.residual <= 0 and self.C <= self.C_max

    @property
    def flagged(self) -> bool:
        """True when the best constant exceeds ``C_max``."""
        return self.C > self.C_max


def _log_terms(kernels, space: MetricMeasureSpace, t_grid, m, vol_power: float = 1.0):
    """Stacked ``log|p| + vol_power * log V(x, r_t)`` and ``(dist/r_t)^gamma`` over the grid."""
    gam = _gamma(m)
    r = t_grid ** (1.0 / m)
    V = volumes(space, r)  # (n, T)
    logs, expo = [], []
    for i, K in enumerate(kernels):
        a = np.abs(K)
        with np.errstate(divide="ignore"):
            la = np.log(a)
        logs.append(la + vol_power * np.log(V[:, i])[:, None])
        expo.append((space.dist / r[i]) ** gam)
    return np.stack(logs), np.stack(expo)


def _best_constants(logq: np.ndarray, expo: np.ndarray, c_grid: np.ndarray):
    mask = np.isfinite(logq)
    lq, ex = logq[mask], expo[mask]
    if lq.size == 0:
        return [(float(c), 0.0) for c in c_grid]
    out = []
    for c in c_grid:
        out.append((float(c), float(np.max(lq + c * ex))))
    return out


def fit_gaussian(A: SpectralOperator, m: float = 2.0, t_grid=None, c_grid=None, *,
                 space: MetricMeasureSpace | None = None, C_max: float = 1e6,
                 kernel_method: str = "auto") -> GaussianFit:
    """Fit Gaussian constants on a time grid.

    For every ``c`` in ``c_grid`` the smallest feasible ``C`` is the grid max of
    ``|p_t(x, y)| V(x, r_t) exp(c (dist/r_t)^{m/(m-1)})``; the pair minimizing
    ``C e^c`` is returned.  The search runs in log space and ``C`` is inflated
    by a relative ``1e-12`` so that the re-verified residual is ``<= 0``.
    """
    space = A.space if space is None else space
    t_grid = _check_grid(np.geomspace(0.1, 10, 17) if t_grid is None else t_grid, "t-grid")
    c_grid = _check_grid(DEFAULT_C_GRID if c_grid is None else c_grid, "c-grid")
    kernels = [semigroup_kernel(A, t, kernel_method) for t in t_grid]
    logq, expo = _log_terms(kernels, space, t_grid, m)
    pairs = _best_constants(logq, expo, c_grid)
    c_best, logC = min(pairs, key=lambda cl: cl[1] + cl[0])
    C = _exp(logC) * (1 + 1e-12)
    mask = np.isfinite(logq)
    residual = float(np.max(logq[mask] + c_best * expo[mask]) - math.log(C)) if mask.any() else -math.inf
    feasible = [(c, _exp(lc) * (1 + 1e-12)) for c, lc in pairs]
    return GaussianFit(float(m), C, c_best, t_grid, residual, float(C_max), feasible)


# --------------------------------------------------------------------------
# generalised Gaussian estimates


@dataclass
class GgeParams:
    """Fitted ball-localized ``L^{p0} -> L^{p0'}`` bound.

    ``lower`` and ``upper`` hold the per ``(t, x, y)`` localized norms (equal
    in exact mode); the fit uses ``upper``.
    """

    p0: float
    m: float
    C: float
    c: float
    mode: str
    residual: float
    C_max: float
    lower: np.ndarray = field(repr=False, default=None)
    upper: np.ndarray = field(repr=False, default=None)

    @property
    def p0_conjugate(self) -> float:
        return math.inf if self.p0 == 1 else self.p0 / (self.p0 - 1)

    @property
    def passed(self) -> bool:
        return self.residual <= 0 and self.C <= self.C_max


def _local_norm_1inf(K: np.ndarray, balls: np.ndarray) -> np.ndarray:
    """``max_{u in B_x, v in B_y} |K(u, v)|`` for all ``(x, y)``."""
    a = np.abs(K)
    m1 = np.where(balls[:, :, None], a[None, :, :], 0.0).max(axis=1)  # (x, v)
    return np.where(balls[None, :, :], m1[:, None, :], 0.0).max(axis=2)


def _local_norm_22(K: np.ndarray, balls: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Largest singular value of ``1_{B_x} T 1_{B_y}`` on ``L^2(mu)``."""
    n = K.shape[0]
    sq = np.sqrt(mu)
    W = sq[:, None] * K * sq[None, :]
    out = np.zeros((n, n))
    for x in range(n):
        bx = balls[x]
        for y in range(n):
            sub = W[np.ix_(bx, balls[y])]
            out[x, y] = np.linalg.norm(sub, 2)
    return out


def _local_norm_sampled(K, balls, mu, p0, rng, samples: int) -> np.ndarray:
    q = p0 / (p0 - 1)
    n = K.shape[0]
    out = np.zeros((n, n))
    M = K * mu[None, :]
    for x in range(n):
        bx = balls[x]
        for y in range(n):
            by = balls[y]
            f = rng.standard_normal((int(by.sum()), samples))
            f = np.hstack([f, np.eye(int(by.sum()))])
            tf = M[np.ix_(bx, by)] @ f
            num = (np.abs(tf) ** q * mu[bx][:, None]).sum(axis=0) ** (1 / q)
            den = (np.abs(f) ** p0 * mu[by][:, None]).sum(axis=0) ** (1 / p0)
            out[x, y] = float((num / den).max())
    return out


def check_gge(A: SpectralOperator, p0: float = 1.0, m: float = 2.0, t_grid=None, c_grid=None, *,
              space: MetricMeasureSpace | None = None, C_max: float = 1e6, samples: int = 16,
              seed=0, kernel_method: str = "auto") -> GgeParams:
    """Fit ``||1_{B(x,r_t)} T_t 1_{B(y,r_t)}||_{p0 -> p0'} <= C V(x, r_t)^{-(1/p0 - 1/p0')} exp(-c (dist/r_t)^gamma)``.

    ``p0 = 1`` and ``p0 = 2`` (the ``L^2`` endpoint) are exact.  For ``1 < p0 < 2`` the lower bound
    comes from random search and the upper bound from Riesz-Thorin
    interpolation ``||T||_{1->inf}^{1-theta} ||T||_{2->2}^theta`` with
    ``theta = 2(1 - 1/p0)``; the fit uses the upper bound.
    """
    p0 = float(p0)
    if not 1 <= p0 <= 2:
        raise ValidationError("p0 must lie in [1, 2]")
    space = A.space if space is None else space
    t_grid = _check_grid(np.geomspace(0.1, 10, 17) if t_grid is None else t_grid, "t-grid")
    c_grid = _check_grid(DEFAULT_C_GRID if c_grid is None else c_grid, "c-grid")
    gam = _gamma(m)
    q_exp = 1.0 / p0 - (0.0 if p0 == 1 else 1.0 - 1.0 / p0)
    mode = "exact" if p0 in (1.0, 2.0) else "interpolated"
    rng = np.random.default_rng(spawn_seeds(seed, 1)[0])
    lows, ups, logq, expo = [], [], [], []
    for t in t_grid:
        K = semigroup_kernel(A, t, kernel_method)
        r = t ** (1.0 / m)
        balls = space.dist <= r
        n1 = _local_norm_1inf(K, balls)
        if p0 == 1:
            lo = up = n1
        elif p0 == 2:
            lo = up = _local_norm_22(K, balls, space.mu)
        else:
            n2 = _local_norm_22(K, balls, space.mu)
            theta = 2.0 * (1.0 - 1.0 / p0)
            up = n1 ** (1 - theta) * n2**theta
            lo = _local_norm_sampled(K, balls, space.mu, p0, rng, samples)
        V = volumes(space, [r])[:, 0]
        with np.errstate(divide="ignore"):
            logq.append(np.log(up) + q_exp * np.log(V)[:, None])
        expo.append((space.dist / r) ** gam)
        lows.append(lo)
        ups.append(up)
    logq, expo = np.stack(logq), np.stack(expo)
    pairs = _best_constants(logq, expo, c_grid)
    c_best, logC = min(pairs, key=lambda cl: cl[1] + cl[0])
    C = _exp(logC) * (1 + 1e-12)
    mask = np.isfinite(logq)
    residual = float(np.max(logq[mask] + c_best * expo[mask]) - math.log(C)) if mask.any() else -math.inf
    return GgeParams(p0, float(m), C, c_best, mode, residual, float(C_max), np.stack(lows), np.stack(ups))


def ge_implies_gge(fit: GaussianFit, A: SpectralOperator, *, space: MetricMeasureSpace | None = None,
                   kernel_method: str = "auto") -> tuple[bool, float, float, float]:
    """Check the GGE(1, m) bound implied by a passing Gaussian fit.

    For ``u in B(x, r)``, ``v in B(y, r)`` doubling gives ``V(u, r) >= V(x, r)/C_D``
    and ``dist(u, v) >= dist(x, y) - 2r``; with ``gamma = m/(m-1)`` this yields
    ``C' = C C_D exp(c 2^gamma)`` and ``c' = c 2^{1-gamma}``.  Returns
    ``(passed, C', c', residual)``.
    """
    space = A.space if space is None else space
    if not fit.passed:
        return False, math.nan, math.nan, math.nan
    gam = _gamma(fit.m)
    C_D = doubling_constant(space).C_D
    C2 = fit.C * C_D * math.exp(fit.c * 2.0**gam) * (1 + 1e-12)
    c2 = fit.c * 2.0 ** (1.0 - gam)
    worst = -math.inf
    for t in fit.t_grid:
        K = semigroup_kernel(A, t, kernel_method)
        r = t ** (1.0 / fit.m)
        balls = space.dist <= r
        n1 = _local_norm_1inf(K, balls)
        V = volumes(space, [r])[:, 0]
        bound = C2 / V[:, None] * np.exp(-c2 * (space.dist / r) ** gam)
        pos = n1 > 0
        if pos.any():
            worst = max(worst, float(np.max(np.log(n1[pos]) - np.log(bound[pos]))))
    return worst <= 0, C2, c2, worst


# --------------------------------------------------------------------------
# complex time and dispersive decay


@dataclass
class ComplexTimeProfile:
    """``s(theta)`` and the regression ``log s = log C_hat + d_hat * (-log cos theta)``."""

    thetas: np.ndarray
    s: np.ndarray
    d_hat: float
    log_C: float
    r2: float
    d: float
    slack: float

    @property
    def passed(self) -> bool:
        return bool(self.d_hat <= self.d + self.slack)


def complex_time_profile(A: SpectralOperator, fit: GaussianFit, thetas=None, radii=None, *,
                         space: MetricMeasureSpace | None = None, d: float | None = None,
                         slack: float = 0.5) -> ComplexTimeProfile:
    """Complex-time Gaussian profile.

    For each ``theta``, ``s(theta)`` is the max over ``|z|`` and ``(x, y)`` of
    ``|p_z(x, y)| (V(x, rho) V(y, rho))^{1/2} exp(c (dist/|z|^{1/m})^gamma cos theta)``
    with ``rho = (|z| / cos(theta)^{m-1})^{1/m}`` and ``c`` from the real-time fit.
    """
    if not fit.passed:
        raise ValidationError("complex_time_profile requires a passing Gaussian fit")
    space = A.space if space is None else space
    thetas = _check_grid(np.linspace(0.0, 1.45, 12) if thetas is None else thetas, "theta-grid", positive=False)
    if np.any(np.abs(thetas) >= np.pi / 2):
        raise DegenerateGridError("theta must lie in (-pi/2, pi/2)")
    radii = _check_grid(fit.t_grid if radii is None else radii, "|z|-grid")
    m, gam, c = fit.m, _gamma(fit.m), fit.c
    d = doubling_constant(space).d if d is None else float(d)
    s = np.zeros(thetas.size)
    for i, th in enumerate(thetas):
        cs = math.cos(th)
        best = 0.0
        for rz in radii:
            K = np.abs(semigroup_kernel(A, rz * np.exp(1j * th)))
            rho = (rz / cs ** (m - 1)) ** (1.0 / m)
            V = volumes(space, [rho])[:, 0]
            w = np.sqrt(V[:, None] * V[None, :]) * np.exp(c * (space.dist / rz ** (1.0 / m)) ** gam * cs)
            best = max(best, float((K * w).max()))
        s[i] = best
    x = -np.log(np.cos(thetas))
    y = np.log(s)
    if np.ptp(x) == 0:
        raise DegenerateGridError("theta-grid needs at least two distinct |theta|")
    slope, icpt = np.polyfit(x, y, 1)
    pred = icpt + slope * x
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ComplexTimeProfile(thetas, s, float(slope), float(icpt), r2, d, slack)


@dataclass
class DispersiveFit:
    """``||e^{itA}||_{1 -> inf}`` on a time grid with a power-law fit below the cutoff."""

    t_grid: np.ndarray
    norms: np.ndarray
    cutoff: int
    e_hat: float
    C: float
    d: float


def dispersive_check(A: SpectralOperator | Callable, d: float, t_grid=None, *, cutoff: str | None = "first_min") -> DispersiveFit:
    """Fit ``max_{x,y} |p_{it}(x, y)| ~ C |t|^{-e}``.

    ``A`` may be a decomposed operator or a callable ``t -> kernel matrix``.
    With ``cutoff='first_min'`` the fit stops at the first local minimum of
    the norm curve over increasing ``|t|`` (finite spectra recur).  ``C`` is
    the smallest constant with ``norm <= C |t|^{-d/2}`` on the fitted range.
    """
    t_grid = np.asarray(np.geomspace(0.05, 20, 40) if t_grid is None else t_grid, dtype=float)
    if t_grid.size < 2 or np.any(t_grid == 0):
        raise DegenerateGridError("t-grid needs two nonzero times")
    order = np.argsort(np.abs(t_grid))
    t_grid = t_grid[order]
    kern = A if callable(A) and not isinstance(A, SpectralOperator) else (lambda t: semigroup_kernel(A, 1j * t))
    norms = np.array([float(np.abs(kern(t)).max()) for t in t_grid])
    end = t_grid.size
    if cutoff == "first_min":
        for i in range(1, t_grid.size - 1):
            if norms[i] < norms[i - 1] and norms[i] <= norms[i + 1]:
                end = i + 1
                break
    end = max(end, 2)
    lt, ln = np.log(np.abs(t_grid[:end])), np.log(norms[:end])
    slope = np.polyfit(lt, ln, 1)[0]
    C = float(np.max(norms[:end] * np.abs(t_grid[:end]) ** (d / 2.0)))
    return DispersiveFit(t_grid, norms, end, float(-slope), C, float(d))


# --------------------------------------------------------------------------
# Calderon-Zygmund decomposition


@dataclass
class CzDecomposition:
    """``f = g + sum_i f_i`` at height ``lam`` with the measured constants.

    ``cubes`` are ``(k, j)`` pairs; ``balls`` the boolean masks of ``B_i``.
    """

    lam: float
    g: np.ndarray
    parts: list
    cubes: list
    balls: list
    c_g: float
    overlap: int
    c_mass: float
    c_sum: float
    reconstruction_error: float
    support_ok: bool

    @property
    def passed(self) -> bool:
        return self.reconstruction_error <= 1e-12 and self.support_ok and all(
            math.isfinite(v) for v in (self.c_g, self.c_mass, self.c_sum))


def cz_decompose(space: MetricMeasureSpace, system: DyadicSystem, f, lam: float) -> CzDecomposition:
    """Calderon-Zygmund decomposition along a dyadic system.

    Bad cubes are the maximal dyadic cubes whose ``|f|`` average exceeds
    ``lam``; ``f_i = (f - avg_Q f) 1_Q`` and ``B_i = B(z_Q, C1 delta^k)``.
    """
    f = np.asarray(f)
    if f.ndim != 1 or f.shape[0] != space.n:
        raise ValidationError("f must be a scalar field of length n")
    mu = space.mu
    l1 = float((np.abs(f) * mu).sum())
    lam = float(lam)
    if not lam > l1 / space.total_mass:
        raise HeightTooLowError("height must exceed ||f||_1 / mu(Omega)")
    covered = np.zeros(space.n, dtype=bool)
    parts, cubes, balls = [], [], []
    for li, k in enumerate(system.levels):
        scale = system.delta**k
        for j, pts in enumerate(system.cubes[li]):
            pts = np.asarray(pts)
            if covered[pts].any():
                continue
            mass = mu[pts].sum()
            if (np.abs(f[pts]) * mu[pts]).sum() / mass > lam:
                avg = (f[pts] * mu[pts]).sum() / mass
                part = np.zeros_like(f, dtype=np.result_type(f, float))
                part[pts] = f[pts] - avg
                covered[pts] = True
                parts.append(part)
                cubes.append((int(k), j))
                z = system.centers[li][j]
                balls.append(space.dist[z] <= system.C1 * scale * (1 + 1e-12))
    g = f - sum(parts) if parts else f.astype(np.result_type(f, float)).copy()
    recon = float(np.abs(g + sum(parts) - f).max()) if parts else 0.0
    c_g = float(np.abs(g).max()) / lam
    support_ok = all(not np.any((p != 0) & ~b) for p, b in zip(parts, balls))
    overlap = int(np.sum(balls, axis=0).max()) if balls else 0
    c_mass = max((float((np.abs(p) * mu).sum()) / (lam * mu[b].sum()) for p, b in zip(parts, balls)), default=0.0)
    c_sum = sum(float(mu[b].sum()) for b in balls) * lam / l1 if l1 > 0 else 0.0
    return CzDecomposition(lam, g, parts, cubes, balls, c_g, overlap, c_mass, c_sum, recon, support_ok)


# --------------------------------------------------------------------------
# R-bounds


def _top_right_singular(T: np.ndarray, mu: np.ndarray) -> np.ndarray:
    sq = np.sqrt(mu)
    W = sq[:, None] * T / sq[None, :]
    _, _, vh = np.linalg.svd(W)
    return vh[0].conj() / sq


def r_bound_estimate(operators: Sequence[np.ndarray], p: float, Y: LatticeSpec, space: MetricMeasureSpace,
                     trials: int = 64, K: int = 4, seed=0, *, threads: int | None = None,
                     structured: bool = True) -> float:
    """Seeded lower bound on the square-function R-bound of ``{T_1, ..., T_J}``.

    Each trial draws ``K`` selections ``j_k`` and ``K`` probe fields and
    records ``||(sum_k |T_{j_k} f_k|^2)^{1/2}|| / ||(sum_k |f_k|^2)^{1/2}||``
    in ``L^p(Y)``.  ``operators`` are ``n x n`` matrices acting by ``f -> T f``.
    With ``structured`` each operator is also tried alone on its top
    ``L^2(mu)`` singular vector, which makes the singleton estimate on
    ``L^2(l^2)`` equal ``||T||``, and on the focusing fields ``T^* delta_x``.
    """
    ops = [np.asarray(T) for T in operators]
    if not ops:
        raise ValidationError("empty operator family")
    p = check_exponent(p, name="p")
    if K < 1 or trials < 0:
        raise ValidationError("K >= 1 and trials >= 0 required")
    n = space.n
    seeds = spawn_seeds(seed, trials)

    def ratio(sel, fields):
        num = square_function_norm(p, Y, np.stack([ops[j] @ f for j, f in zip(sel, fields)]), space)
        den = square_function_norm(p, Y, np.stack(fields), space)
        return num / den if den > 0 else 0.0

    def one(i):
        rng = np.random.default_rng(seeds[i])
        sel = rng.integers(len(ops), size=K)
        fields = [probe_field(space, Y.dim, rng, int(rng.integers(3))) for _ in range(K)]
        return ratio(sel, fields)

    workers = _resolve_threads(threads)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(one, range(trials)))
    else:
        vals = [one(i) for i in range(trials)]
    if structured:
        mu = space.mu
        for j, T in enumerate(ops):
            u = _top_right_singular(T, mu)
            f = np.zeros((n, Y.dim), dtype=u.dtype)
            f[:, 0] = u
            vals.append(ratio([j], [f]))
            # focusing fields T^* delta_x, with T^* the L^2(mu) adjoint
            adj = (T.conj().T * mu[None, :]) / mu[:, None]
            for x in range(n):
                f = np.zeros((n, Y.dim), dtype=adj.dtype)
                f[:, 0] = adj[:, x]
                vals.append(ratio([j], [f]))
    return float(max(vals))


@dataclass
class RBoundProfile:
    """Per-angle R-bound estimates with the fitted envelope ``C_hat cos(theta)^{-alpha_hat}``."""

    thetas: np.ndarray
    r_hat: np.ndarray
    C_hat: float
    alpha_hat: float
    envelope_alpha: float
    envelope_alpha_tilde: float
    d: float

    def envelope(self, slack: float = 0.1) -> np.ndarray:
        return self.C_hat * np.cos(self.thetas) ** (-(self.envelope_alpha + slack))

    @property
    def consistent(self) -> bool:
        return self.alpha_hat <= self.envelope_alpha + 0.1

    def rows(self, slack: float = 0.1) -> list[tuple[float, float, float]]:
        return list(zip(self.thetas.tolist(), self.r_hat.tolist(), self.envelope(slack).tolist()))


def semigroup_rbound_profile(A: SpectralOperator, p: float, Y: LatticeSpec, thetas=None, t_grid=None,
                             trials: int = 32, K: int = 4, seed=0, *, exponents: tuple[float, float] | None = None,
                             d: float | None = None, threads: int | None = None) -> RBoundProfile:
    """R-bound profile of ``{exp(-t e^{i theta} A) : t in t_grid}`` over ``theta``.

    ``C_hat`` is the estimate at the smallest ``|theta|`` and ``alpha_hat`` the
    least exponent with ``R_hat(theta) <= C_hat cos(theta)^{-alpha_hat}`` on the
    grid.  Envelopes are ``alpha(p, pY, qY) d`` and ``alpha_tilde d``; ``exponents``
    gives the declared ``(pY, qY)`` (default: admissible exponents of ``Y``).
    """
    from .lattice import admissible_exponents

    thetas = _check_grid(np.linspace(0.0, 1.45, 8) if thetas is None else thetas, "theta-grid", positive=False)
    t_grid = _check_grid(np.geomspace(0.1, 10, 5) if t_grid is None else t_grid, "t-grid")
    space = A.space
    d = doubling_constant(space).d if d is None else float(d)
    pY, qY = admissible_exponents(Y) if exponents is None else exponents
    seeds = spawn_seeds(seed, thetas.size)
    r_hat = np.zeros(thetas.size)
    for i, th in enumerate(thetas):
        ops = [A.function_matrix(np.exp(-t * np.exp(1j * th) * A.eigenvalues)) for t in t_grid]
        r_hat[i] = r_bound_estimate(ops, p, Y, space, trials, K, seeds[i], threads=threads)
    i0 = int(np.argmin(np.abs(thetas)))
    C_hat = float(r_hat[i0])
    x = -np.log(np.cos(thetas))
    a_hat = 0.0
    for i in range(thetas.size):
        if x[i] > 0 and r_hat[i] > C_hat:
            a_hat = max(a_hat, math.log(r_hat[i] / C_hat) / x[i])
    return RBoundProfile(thetas, r_hat, C_hat, float(a_hat), alpha(p, pY, qY) * d,
                         alpha_tilde(p, pY, qY) * d, d)


# --------------------------------------------------------------------------
# square-function multiplier test


@dataclass
class SquareTestResult:
    C_hat: float
    numerator: float
    denominator: float
    sup_norm: float


def multiplier_square_test(A: SpectralOperator, p: float, Y: LatticeSpec, multipliers, fields, beta: float,
                           *, norms=None, params: HormanderNormParams | None = None) -> SquareTestResult:
    """``||(sum |m_k(A) f_k|^2)^{1/2}|| / (sup_k ||m_k||_{H^beta_2} ||(sum |f_k|^2)^{1/2}||)``."""
    fields = [check_field(f, A.n) for f in fields]
    if len(fields) != len(multipliers):
        raise ValidationError("one field per multiplier required")
    if norms is None:
        prm = params or HormanderNormParams(beta=beta)
        norms = [hormander_norm(mk, prm, warn=False) for mk in multipliers]
    sup = float(max(norms))
    lam = A.eigenvalues
    out = [A.synthesize(np.asarray(mk(lam)), A.coefficients(f)) for mk, f in zip(multipliers, fields)]
    num = square_function_norm(p, Y, np.stack(out), A.space)
    den = square_function_norm(p, Y, np.stack(fields), A.space)
    if den == 0 or sup == 0:
        raise ValidationError("zero denominator")
    return SquareTestResult(num / (sup * den), num, den, sup)


def random_multiplier_family(rng: np.random.Generator, K: int, log2_range: tuple[float, float],
                             max_terms: int = 3) -> list[Multiplier]:
    """``K`` random superpositions of dilated bumps with centers ``2^s``, ``s`` uniform in ``log2_range``.

    Each multiplier is normalized to sup-norm one on its bump grid.
    """
    fam = []
    lo, hi = log2_range
    for _ in range(K):
        terms = int(rng.integers(1, max_terms + 1))
        m = None
        total = 0.0
        for _ in range(terms):
            a = float(rng.uniform(0.2, 1.0)) * (1 if rng.random() < 0.5 else -1)
            total += abs(a)
            b = Multiplier.bump(2.0 ** float(rng.uniform(lo, hi))) * a
            m = b if m is None else m + b
        fam.append(m * (1.0 / total))
    return fam


def multiplier_square_batch(A: SpectralOperator, p: float, Y: LatticeSpec, beta: float, families: int = 200,
                            K: int = 8, seed=0, *, params: HormanderNormParams | None = None) -> np.ndarray:
    """``C_hat`` for ``families`` seeded random multiplier families with random probe fields."""
    lam = A.eigenvalues[A.eigenvalues > 0]
    rng_range = (math.log2(lam.min()) - 1, math.log2(lam.max()) + 1) if lam.size else (-1.0, 1.0)
    prm = params or HormanderNormParams(beta=beta, r_min=2.0 ** rng_range[0], r_max=2.0 ** rng_range[1])
    out = np.zeros(families)
    for i, s in enumerate(spawn_seeds(seed, families)):
        rng = np.random.default_rng(s)
        fam = random_multiplier_family(rng, K, rng_range)
        fields = [probe_field(A.space, Y.dim, rng, int(rng.integers(3))) for _ in range(K)]
        out[i] = multiplier_square_test(A, p, Y, fam, fields, beta, params=prm).C_hat
    return out
