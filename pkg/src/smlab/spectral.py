"""Spectral calculus of mu-self-adjoint positive operators on finite spaces.

Covers the eigendecomposition in the weighted inner product, multiplier
functions and ``f(A)``, complex-time semigroup kernels, Hormander and
Mihlin norms of multipliers, dyadic partitions of unity and the
partition-based calculus, Paley-Littlewood square functions and
Hormander-class membership diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from ._validation import ValidationError, check_field, check_square
from .lattice import LatticeSpec, bochner_norm, square_function
from .space import MetricMeasureSpace

__all__ = [
    "NotSelfAdjointError",
    "NegativeSpectrumError",
    "GridUndersamplingWarning",
    "SpectrumNotCoveredWarning",
    "SpectralOperator",
    "Multiplier",
    "HormanderNormParams",
    "DyadicPartition",
    "PaleyLittlewoodResult",
    "spectral_decompose",
    "build_operator",
    "apply_multiplier",
    "semigroup_kernel",
    "window",
    "hormander_norm",
    "hormander_profile",
    "hormander_norm_integer",
    "mihlin_norm",
    "build_partition",
    "calculus_apply",
    "calculus_residual",
    "paley_littlewood",
    "membership_check",
]

SELF_ADJOINT_TOL = 1e-10
NEGATIVE_TOL = 1e-10


class NotSelfAdjointError(ValidationError):
    pass


class NegativeSpectrumError(ValidationError):
    pass


class GridUndersamplingWarning(UserWarning):
    pass


class SpectrumNotCoveredWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """``A = sum_i lambda_i v_i <v_i, .>_mu`` with mu-orthonormal eigenvectors ``v_i``."""

    matrix: np.ndarray
    space: MetricMeasureSpace
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kernel_tol: float = 0.0

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def kernel_mask(self) -> np.ndarray:
        """Eigenvalues treated as exact zeros (the mu-kernel of ``A``)."""
        return self.eigenvalues == 0.0

    def coefficients(self, field_: np.ndarray) -> np.ndarray:
        """``<v_i, f>_mu`` for every eigenvector, shape ``(n, m)``."""
        return self.eigenvectors.T @ (self.space.mu[:, None] * field_)

    def synthesize(self, weights: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ (weights[:, None] * coeffs)

    def function_matrix(self, values) -> np.ndarray:
        """Matrix of ``f(A)`` given ``f(lambda_i)``."""
        values = np.asarray(values)
        return (self.eigenvectors * values[None, :]) @ (self.eigenvectors.T * self.space.mu[None, :])

    def project_range(self, field_) -> np.ndarray:
        f = check_field(field_, self.n)
        w = (~self.kernel_mask).astype(float)
        return self.synthesize(w, self.coefficients(f))

    @property
    def is_metzler(self) -> bool:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return bool(np.all(off <= 0))


def spectral_decompose(matrix, space: MetricMeasureSpace, *, tol: float = SELF_ADJOINT_TOL) -> SpectralOperator:
    """Eigendecomposition of a mu-self-adjoint positive semidefinite matrix.

    The symmetric matrix ``D^{1/2} A D^{-1/2}`` (``D = diag(mu)``) is
    diagonalized; eigenvectors are mapped back with ``D^{-1/2}`` and are
    therefore orthonormal for ``<f, g>_mu = sum mu f conj(g)``.  Eigenvalues
    within ``tol * max(1, ||A||)`` of zero are set to exactly zero.
    """
    A = check_square(matrix, space.n)
    mu = space.mu
    DA = mu[:, None] * A
    scale = max(1.0, float(np.abs(DA).max()))
    if np.abs(DA - DA.T).max() > tol * scale:
        raise NotSelfAdjointError("matrix is not self-adjoint in L^2(mu)")
    sq = np.sqrt(mu)
    S = sq[:, None] * A / sq[None, :]
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    anorm = max(1.0, float(np.abs(lam).max()))
    if lam.min() < -NEGATIVE_TOL * anorm:
        raise NegativeSpectrumError(f"eigenvalue {lam.min():.3e} below zero")
    lam = np.where(np.abs(lam) <= tol * anorm, 0.0, lam)
    lam = np.maximum(lam, 0.0)
    V = U / sq[:, None]
    op = SpectralOperator(A.copy(), space, lam, V, tol * anorm)
    recon = op.function_matrix(lam)
    if np.abs(recon - A).max() > 1e-9 * max(1.0, float(np.abs(A).max())):
        raise ValidationError("spectral reconstruction failed")
    return op


def build_operator(kind: str, space: MetricMeasureSpace, **params) -> np.ndarray:
    """Model generator matrices (not yet decomposed).

    ``graph_laplacian`` (``radius``, default the minimum distance) and
    ``kernel_laplacian`` (``eps``) build ``Af(x) = sum_y w(x, y) mu(y) (f(x) - f(y))``
    with a symmetric weight ``w``; ``zero`` and ``identity`` are what they
    say; ``far_coupling`` is the rank-one ``v <v, .>_mu`` with ``v = e_a - e_b``
    for the two points realizing the diameter.
    """
    n, mu, dist = space.n, space.mu, space.dist
    if kind == "graph_laplacian":
        radius = params.get("radius", space.min_positive_distance)
        w = ((dist > 0) & (dist <= radius)).astype(float)
    elif kind == "kernel_laplacian":
        eps = float(params.get("eps", 0.2))
        w = np.exp(-((dist / eps) ** 2))
        np.fill_diagonal(w, 0.0)
    elif kind == "zero":
        return np.zeros((n, n))
    elif kind == "identity":
        return np.eye(n)
    elif kind == "far_coupling":
        a, b = np.unravel_index(np.argmax(dist), dist.shape)
        v = np.zeros(n)
        v[a], v[b] = 1.0, -1.0
        return float(params.get("strength", 1.0)) * np.outer(v, v * mu)
    else:
        raise ValidationError(f"unknown operator kind {kind!r}")
    wm = w * mu[None, :]
    return np.diag(wm.sum(axis=1)) - wm


# --------------------------------------------------------------------------
# multipliers


def _fd_derivative(func: Callable, t: np.ndarray, k: int) -> np.ndarray:
    """Central finite difference of order ``k`` with a relative step."""
    t = np.asarray(t, dtype=float)
    if k == 0:
        return func(t)
    c = min(np.finfo(float).eps ** (1.0 / (k + 2)), 0.5 / k)
    h = c * np.maximum(np.abs(t), 1e-12)
    total = 0.0
    for j in range(k + 1):
        total = total + (-1) ** j * math.comb(k, j) * func(t + (k / 2 - j) * h)
    return total / h**k


@dataclass(frozen=True)
class Multiplier:
    """A spectral multiplier ``f : [0, inf) -> C``.

    ``func`` must accept numpy arrays.  ``derivatives`` optionally maps an
    order ``k`` to an exact derivative; other orders fall back to central
    differences.  ``support`` is an interval outside of which ``f`` vanishes
    on ``(0, inf)`` and ``breakpoints`` lists points where ``f`` is not smooth.
    """

    name: str
    func: Callable
    params: dict = field(default_factory=dict)
    derivatives: dict = field(default_factory=dict, repr=False)
    support: tuple[float, float] | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.func(lam)

    @property
    def f0(self) -> complex:
        return complex(np.asarray(self.func(np.array([0.0])))[0])

    def derivative(self, k: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if k in self.derivatives:
            return self.derivatives[k](t)
        return _fd_derivative(self.func, t, k)

    def dilate(self, c: float) -> "Multiplier":
        """``lambda -> f(c lambda)``."""
        c = float(c)
        f = self.func
        ders = {k: (lambda t, d=d, k=k: c**k * d(c * t)) for k, d in self.derivatives.items()}
        sup = None if self.support is None else (self.support[0] / c, self.support[1] / c)
        return Multiplier(f"{self.name}(x{c:g})", lambda t: f(c * t), {**self.params, "dilation": c},
                          ders, sup, tuple(b / c for b in self.breakpoints))

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            f = self.func
            ders = {k: (lambda t, d=d: other * d(t)) for k, d in self.derivatives.items()}
            return Multiplier(f"{other}*{self.name}", lambda t: other * f(t), dict(self.params), ders,
                              self.support, self.breakpoints)
        f, g = self.func, other.func
        return Multiplier(f"({self.name})*({other.name})", lambda t: f(t) * g(t),
                          breakpoints=self.breakpoints + other.breakpoints,
                          support=_intersect(self.support, other.support))

    __rmul__ = __mul__

    def __add__(self, other):
        f, g = self.func, other.func
        ders = {k: (lambda t, a=self.derivatives[k], b=other.derivatives[k]: a(t) + b(t))
                for k in set(self.derivatives) & set(other.derivatives)}
        return Multiplier(f"({self.name})+({other.name})", lambda t: f(t) + g(t), derivatives=ders,
                          breakpoints=self.breakpoints + other.breakpoints,
                          support=_union(self.support, other.support))

    # built-ins ------------------------------------------------------------

    @classmethod
    def identity(cls) -> "Multiplier":
        return cls("identity", lambda t: np.asarray(t, dtype=float),
                   derivatives={1: lambda t: np.ones_like(t), 2: lambda t: np.zeros_like(t)})

    @classmethod
    def constant(cls, c: complex = 1.0) -> "Multiplier":
        ders = {k: (lambda t: np.zeros_like(t)) for k in range(1, 9)}
        return cls(f"constant({c})", lambda t: np.full(np.shape(t), c), {"c": c}, ders)

    @classmethod
    def heat(cls, z: complex = 1.0) -> "Multiplier":
        ders = {k: (lambda t, k=k: (-z) ** k * np.exp(-z * t)) for k in range(1, 9)}
        return cls(f"heat({z})", lambda t: np.exp(-z * t), {"z": z}, ders)

    @classmethod
    def imaginary(cls, t: float = 1.0) -> "Multiplier":
        ders = {k: (lambda lam, k=k: (1j * t) ** k * np.exp(1j * t * lam)) for k in range(1, 9)}
        return cls(f"imaginary({t})", lambda lam: np.exp(1j * t * lam), {"t": t}, ders)

    @classmethod
    def wave_resolvent(cls, delta: float, t: float = 1.0) -> "Multiplier":
        def f(lam):
            lam = np.asarray(lam, dtype=float)
            return (1.0 + lam) ** (-delta) * np.exp(1j * t * np.sqrt(np.maximum(lam, 0.0)))

        return cls(f"wave_resolvent({delta},{t})", f, {"delta": delta, "t": t})

    @classmethod
    def bochner_riesz(cls, delta: float, u: float = 1.0) -> "Multiplier":
        def f(t):
            return np.maximum(1.0 - np.asarray(t, dtype=float) / u, 0.0) ** delta

        def der(k):
            coef = np.prod([delta - i for i in range(k)]) * (-1.0 / u) ** k

            def d(t):
                base = 1.0 - np.asarray(t, dtype=float) / u
                out = np.zeros_like(base)
                pos = base > 0
                out[pos] = coef * base[pos] ** (delta - k)
                return out

            return d

        return cls(f"bochner_riesz({delta},{u})", f, {"delta": delta, "u": u},
                   {k: der(k) for k in range(1, 9)}, (0.0, u), (u,))

    @classmethod
    def bump(cls, center: float = 1.0) -> "Multiplier":
        """The canonical window dilated to ``[center/2, 2 center]`` (times 4/5)."""
        c = float(center)
        return cls(f"bump({c:g})", lambda t: window(np.asarray(t, dtype=float) * 1.25 / c),
                   {"center": c}, support=(0.4 * c, 1.6 * c))

    @classmethod
    def from_spec(cls, spec: dict | str) -> "Multiplier":
        """Build from ``{"name": ..., params}`` or a bare name."""
        if isinstance(spec, str):
            spec = {"name": spec}
        spec = dict(spec)
        name = spec.pop("name")
        table = {
            "identity": cls.identity,
            "constant": cls.constant,
            "heat": cls.heat,
            "imaginary": cls.imaginary,
            "wave_resolvent": cls.wave_resolvent,
            "bochner_riesz": cls.bochner_riesz,
            "bump": cls.bump,
        }
        if name not in table:
            raise ValidationError(f"unknown multiplier {name!r}")
        if "z" in spec and isinstance(spec["z"], (list, tuple)):
            spec["z"] = complex(*spec["z"])
        try:
            return table[name](**spec)
        except TypeError as exc:
            raise ValidationError(f"bad parameters for multiplier {name!r}: {exc}") from None


def _intersect(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return (max(a[0], b[0]), min(a[1], b[1]))


def _union(a, b):
    if a is None or b is None:
        return None
    return (min(a[0], b[0]), max(a[1], b[1]))


def _as_values(f, lam) -> np.ndarray:
    vals = np.asarray(f(lam))
    if vals.shape != lam.shape:
        vals = np.broadcast_to(vals, lam.shape)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("multiplier is not finite on the spectrum")
    return vals


def apply_multiplier(f, A: SpectralOperator, field_) -> np.ndarray:
    """``f(A) field`` column by column (the extension ``f(A) x Id_Y``).

    ``f(0)`` acts on the mu-kernel of ``A``.
    """
    fld = check_field(field_, A.n)
    vals = _as_values(f, A.eigenvalues)
    return A.synthesize(vals, A.coefficients(fld))


def _taylor_expm(M: np.ndarray, shift: complex = 0.0) -> np.ndarray:
    """``exp(M - shift I)`` by scaling and squaring of the Taylor series.

    The scalar factor ``exp(-shift / 2^j)`` is applied before squaring so that
    large shifts neither overflow nor underflow.
    """
    nrm = float(np.abs(M).sum(axis=0).max()) if M.size else 0.0
    j = max(0, math.ceil(math.log2(nrm / 0.5))) if nrm > 0.5 else 0
    X = M / 2.0**j
    out = np.eye(M.shape[0], dtype=X.dtype)
    term = np.eye(M.shape[0], dtype=X.dtype)
    for k in range(1, 40):
        term = term @ X / k
        out = out + term
        if np.abs(term).max() <= 1e-18 * np.abs(out).max():
            break
    out = out * np.exp(-shift / 2.0**j)
    for _ in range(j):
        out = out @ out
    return out


def semigroup_kernel(A: SpectralOperator, z: complex, method: str = "spectral") -> np.ndarray:
    """Kernel ``p_z(x, y) = (exp(-z A))_{xy} / mu(y)``, so that ``T_z f(x) = sum_y mu(y) p_z(x, y) f(y)``.

    ``method='series'`` evaluates ``exp(-z s) exp(z (s I - A))`` with ``s``
    the largest diagonal entry by scaling and squaring; for generators with
    nonpositive off-diagonal entries and real ``z`` all terms are
    nonnegative, so tiny kernel entries keep full relative accuracy.
    ``method='auto'`` picks the series for that case and the spectral sum
    otherwise.
    """
    z = complex(z)
    if z.real < 0:
        raise ValidationError("Re z must be >= 0")
    if method == "auto":
        method = "series" if (z.imag == 0 and A.is_metzler) else "spectral"
    if method == "spectral":
        w = np.exp(-z * A.eigenvalues)
        K = (A.eigenvectors * w[None, :]) @ A.eigenvectors.T
    elif method == "series":
        s = float(np.diag(A.matrix).max()) if A.n else 0.0
        B = s * np.eye(A.n) - A.matrix
        M = z * B if z.imag else z.real * B
        K = _taylor_expm(M, z * s if z.imag else z.real * s) / A.space.mu[None, :]
    else:
        raise ValidationError(f"unknown method {method!r}")
    if z.imag == 0:
        K = K.real
    return K


# --------------------------------------------------------------------------
# Hormander and Mihlin norms


def window(t) -> np.ndarray:
    """Canonical smooth bump supported in ``(1/2, 2)``: ``exp(1 - 1/(1 - u^2))``, ``u = (4t - 5)/3``."""
    t = np.asarray(t, dtype=float)
    u = (4.0 * t - 5.0) / 3.0
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class HormanderNormParams:
    """Discretization of the Hormander norm.

    ``R`` runs over ``2^{j/steps_per_octave}`` covering ``[r_min, r_max]``
    padded by ``pad_octaves`` on both sides; each windowed function is
    sampled with ``n_grid`` points on ``[0, interval)`` and zero padded by
    ``padding`` before the discrete Fourier transform.
    """

    beta: float
    r_min: float = 2.0**-8
    r_max: float = 2.0**8
    steps_per_octave: int = 8
    pad_octaves: int = 2
    n_grid: int = 2**12
    padding: int = 4
    interval: float = 4.0
    tail_tol: float = 1e-6

    def __post_init__(self):
        if not self.beta > 0.5:
            raise ValidationError("beta must be > 1/2")
        if self.n_grid < 2**10:
            raise ValidationError("n_grid must be >= 2^10")

    def r_grid(self) -> np.ndarray:
        s = self.steps_per_octave
        lo = math.floor(math.log2(self.r_min) * s) - self.pad_octaves * s
        hi = math.ceil(math.log2(self.r_max) * s) + self.pad_octaves * s
        return 2.0 ** (np.arange(lo, hi + 1) / s)


def _sobolev_sq(g: np.ndarray, h: float, padding: int, beta: float):
    """Discrete ``sum (1 + xi^2)^beta |g_hat(xi)|^2 d xi`` per row; also the weighted density.

    ``g_hat = h (2 pi)^{-1/2} DFT(g)`` approximates the unitary Fourier
    transform at ``xi = 2 pi k / (n h)``.  Real rows use the half spectrum
    with doubled weights for the conjugate-symmetric frequencies.
    """
    n = g.shape[-1] * padding
    dxi = 2.0 * np.pi / (n * h)
    if np.isrealobj(g):
        spec = np.fft.rfft(g, n=n, axis=-1)
        xi = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
        mult = np.full(xi.size, 2.0)
        mult[0] = 1.0
        if n % 2 == 0:
            mult[-1] = 1.0
    else:
        spec = np.fft.fft(g, n=n, axis=-1)
        xi = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        mult = np.ones(xi.size)
    weight = mult * (1.0 + xi**2) ** beta * (h * h / (2.0 * np.pi)) * dxi
    dens = (spec.real**2 + spec.imag**2) * weight
    return dens.sum(axis=-1), dens, xi


def _windowed_samples(f, R: np.ndarray, params: HormanderNormParams):
    h = params.interval / params.n_grid
    t = np.arange(params.n_grid) * h
    w = window(t)
    inside = w > 0
    ti = t[inside]
    g = np.zeros((R.size, params.n_grid), dtype=complex)
    g[:, inside] = w[inside][None, :] * np.asarray(f((R[:, None] * ti[None, :]).ravel())).reshape(R.size, -1)
    if not np.any(g.imag):
        g = g.real
    return g, h


def hormander_profile(f, params: HormanderNormParams, R: np.ndarray | None = None, *,
                      warn: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``(R, ||phi f(R .)||_{W^beta_2})`` on the discretized grid."""
    R = params.r_grid() if R is None else np.asarray(R, dtype=float)
    sup = getattr(f, "support", None)
    vals = np.zeros(R.size)
    if sup is not None:
        # phi f(R .) vanishes unless R (1/2, 2) meets the support
        live = (R * 2.0 > sup[0]) & (R * 0.5 < sup[1])
    else:
        live = np.ones(R.size, dtype=bool)
    if not live.any():
        return R, vals
    chunk = max(1, 2**22 // (params.n_grid * params.padding))
    tail_energy = 0.0
    for start in range(0, int(live.sum()), chunk):
        idx = np.flatnonzero(live)[start : start + chunk]
        g, h = _windowed_samples(f, R[idx], params)
        total, dens, xi = _sobolev_sq(g, h, params.padding, params.beta)
        vals[idx] = np.sqrt(total)
        high = np.abs(xi) > 0.5 * np.abs(xi).max()
        tail_energy = max(tail_energy, float(dens[:, high].sum(axis=-1).max()))
    # relative to the largest windowed energy, so nearly empty windows do not trigger it
    peak = float(np.max(vals)) ** 2
    tail = tail_energy / peak if peak > 0 else 0.0
    if warn and tail > params.tail_tol:
        warnings.warn(f"windowed multiplier has tail energy fraction {tail:.2e}; "
                      "refine n_grid", GridUndersamplingWarning, stacklevel=3)
    return R, vals


def _window_norm(params: HormanderNormParams) -> float:
    h = params.interval / params.n_grid
    g = window(np.arange(params.n_grid) * h)[None, :]
    return math.sqrt(float(_sobolev_sq(g, h, params.padding, params.beta)[0][0]))


def hormander_norm(f, params: HormanderNormParams | None = None, *, beta: float | None = None,
                   warn: bool = True, **kw) -> float:
    """``|f(0)| + sup_R ||phi f(R .)||_{W^beta_2}`` on the discretized R-grid.

    The limit ``R -> 0``, where ``phi f(R .) -> f(0) phi``, joins the sup so
    that the value does not depend on where the grid starts.
    """
    if params is None:
        if beta is None:
            raise ValidationError("give params or beta")
        params = HormanderNormParams(beta=beta, **kw)
    f0 = abs(complex(np.asarray(f(np.array([0.0])))[0]))
    _, vals = hormander_profile(f, params, warn=warn)
    sup = max(float(vals.max(initial=0.0)), f0 * _window_norm(params))
    return f0 + sup


def hormander_norm_integer(f: Multiplier, beta: int, *, r_min: float = 2.0**-10, r_max: float = 2.0**10,
                           steps_per_octave: int = 4) -> float:
    """``(|f(0)|^2 + sum_{k <= beta} sup_R int_R^{2R} |t^k f^(k)(t)|^2 dt/t)^{1/2}``.

    Integrals use adaptive quadrature in ``s = log t``; ``sup_R`` runs over a
    log grid of ``R``.
    """
    if int(beta) != beta or beta < 1:
        raise ValidationError("beta must be a positive integer")
    beta = int(beta)
    if not isinstance(f, Multiplier):
        f = Multiplier("callable", f)
    lo = math.floor(math.log2(r_min) * steps_per_octave)
    hi = math.ceil(math.log2(r_max) * steps_per_octave)
    Rs = 2.0 ** (np.arange(lo, hi + 1) / steps_per_octave)
    total = abs(f.f0) ** 2
    for k in range(beta + 1):
        def integrand(s, k=k):
            t = math.exp(s)
            v = complex(np.asarray(f.derivative(k, np.array([t])))[0])
            return abs(t**k * v) ** 2

        best = 0.0
        for R in Rs:
            a, b = math.log(R), math.log(2 * R)
            pts = [math.log(p) for p in f.breakpoints if p > 0 and a < math.log(p) < b]
            val, _ = integrate.quad(integrand, a, b, points=pts or None, limit=200)
            best = max(best, val)
        total += best
    return math.sqrt(total)


def mihlin_norm(f: Multiplier, N: int, t_grid=None) -> float:
    """``max_{k <= N} sup_t t^k |f^(k)(t)|`` over a log grid of ``t > 0``."""
    if N < 0:
        raise ValidationError("N must be >= 0")
    if not isinstance(f, Multiplier):
        f = Multiplier("callable", f)
    t = 2.0 ** (np.arange(-320, 321) / 16.0) if t_grid is None else np.asarray(t_grid, dtype=float)
    best = 0.0
    for k in range(N + 1):
        vals = np.abs(t**k * np.asarray(f.derivative(k, t)))
        best = max(best, float(np.nanmax(vals)))
    return best


# --------------------------------------------------------------------------
# dyadic partition and calculus


@dataclass(frozen=True)
class DyadicPartition:
    """``phi_k(t) = phi_0(2^{-k} t)`` for ``k_min <= k <= k_max`` with ``sum_k phi_k = 1``.

    ``phi_0 = psi / sum_j psi(2^{-j} .)`` with ``psi`` the canonical window.
    """

    k_min: int
    k_max: int

    @staticmethod
    def phi0(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        tp = t[pos]
        base = np.floor(np.log2(tp))
        denom = np.zeros_like(tp)
        # psi(2^-j t) can be nonzero only for j in {base-1, base, base+1}
        for off in (-1, 0, 1, 2):
            denom += window(tp * 2.0 ** (-(base + off)))
        out[pos] = window(tp) / denom
        return out

    def phi(self, k: int, t) -> np.ndarray:
        return self.phi0(np.asarray(t, dtype=float) * 2.0 ** (-k))

    def psi(self, n: int, t) -> np.ndarray:
        """``psi_n = phi_n`` for ``n >= 1`` and ``psi_0 = sum_{n <= 0} phi_n`` (so ``psi_0(0) = 1``)."""
        t = np.asarray(t, dtype=float)
        if n >= 1:
            return self.phi(n, t)
        tail = sum(self.phi(j, t) for j in range(1, max(self.k_max, 1) + 2))
        return np.where(t > 0, 1.0 - tail, 1.0)

    def total(self, t, K: int | None = None) -> np.ndarray:
        ks = range(self.k_min, self.k_max + 1) if K is None else range(-K, K + 1)
        return sum(self.phi(k, t) for k in ks)

    @property
    def covered(self) -> tuple[float, float]:
        """Interval on which ``sum_{k_min}^{k_max} phi_k = 1``."""
        return 2.0 ** (self.k_min + 1), 2.0 ** (self.k_max - 1)


def build_partition(k_min: int = -20, k_max: int = 20) -> DyadicPartition:
    if k_max - k_min < 2:
        raise ValidationError("partition needs at least three levels")
    return DyadicPartition(int(k_min), int(k_max))


def calculus_residual(A: SpectralOperator, partition: DyadicPartition, K: int) -> float:
    """``max |sum_{|k| <= K} phi_k(lambda) - 1|`` over the nonzero spectrum."""
    lam = A.eigenvalues[A.eigenvalues > 0]
    if lam.size == 0:
        return 0.0
    return float(np.abs(partition.total(lam, K) - 1.0).max())


def calculus_apply(f, A: SpectralOperator, partition: DyadicPartition, K: int, field_, *,
                   return_residual: bool = False):
    """``sum_{|k| <= K} (phi_k f)(A) field``.

    Agrees with ``f(A) field`` on the range of ``A`` once
    ``[2^{1-K}, 2^{K-1}]`` contains the nonzero spectrum; a
    :class:`SpectrumNotCoveredWarning` is issued otherwise.
    """
    fld = check_field(field_, A.n)
    lam = A.eigenvalues
    fv = _as_values(f, lam)
    weights = np.zeros(lam.shape, dtype=complex if np.iscomplexobj(fv) else float)
    for k in range(-K, K + 1):
        weights = weights + partition.phi(k, lam) * fv
    out = A.synthesize(weights, A.coefficients(fld))
    res = calculus_residual(A, partition, K)
    if res > 1e-10:
        warnings.warn(f"partition levels |k| <= {K} do not cover the spectrum (residual {res:.2e})",
                      SpectrumNotCoveredWarning, stacklevel=2)
    return (out, res) if return_residual else out


@dataclass
class PaleyLittlewoodResult:
    norm: float
    square_norm_phi: float
    square_norm_psi: float

    @property
    def ratio_phi(self) -> float:
        return self.square_norm_phi / self.norm if self.norm else math.nan

    @property
    def ratio_psi(self) -> float:
        return self.square_norm_psi / self.norm if self.norm else math.nan


def paley_littlewood(f_field, A: SpectralOperator, p: float, Y: LatticeSpec,
                     partition: DyadicPartition) -> PaleyLittlewoodResult:
    """Norm of ``f`` against the square functions of ``phi_n(A) f`` and ``psi_n(A) f``."""
    fld = check_field(f_field, A.n)
    lam = A.eigenvalues
    nz = lam[lam > 0]
    if nz.size:
        lo, hi = partition.covered
        if nz.min() < lo or nz.max() > hi:
            warnings.warn("partition does not cover the spectrum", SpectrumNotCoveredWarning, stacklevel=2)
    coeffs = A.coefficients(fld)
    phis = [A.synthesize(partition.phi(k, lam), coeffs) for k in range(partition.k_min, partition.k_max + 1)]
    psis = [A.synthesize(partition.psi(k, lam), coeffs) for k in range(0, max(partition.k_max, 0) + 1)]
    space = A.space
    return PaleyLittlewoodResult(
        bochner_norm(p, Y, fld, space),
        bochner_norm(p, Y, square_function(np.stack(phis)), space),
        bochner_norm(p, Y, square_function(np.stack(psis)), space),
    )


# --------------------------------------------------------------------------
# membership diagnostics


def _band_slope(f, R: float, beta: float, n_grid: int, octaves: int = 5) -> tuple[float, float]:
    """Log2-slope of the Sobolev energy per frequency octave below the top octave, and its top share."""
    params = HormanderNormParams(beta=beta, n_grid=n_grid)
    g, h = _windowed_samples(f, np.array([R]), params)
    total, dens, xi = _sobolev_sq(g, h, params.padding, beta)
    axi = np.abs(xi)
    top = axi.max() / 2.0
    energies = []
    for j in range(octaves):
        hi, lo = top / 2**j, top / 2 ** (j + 1)
        energies.append(float(dens[0, (axi > lo) & (axi <= hi)].sum()))
    energies = np.array(energies[::-1])
    share = energies[-1] / float(total[0]) if total[0] > 0 else 0.0
    if np.any(energies <= 0):
        return -np.inf, share
    slope = np.polyfit(np.arange(octaves), np.log2(energies), 1)[0]
    return float(slope), share


def membership_check(f, betas, *, r_base: float = 2.0**6, r_ext: float = 2.0**20,
                     growth_limit: float = 10.0, slope_limit: float = 0.1,
                     band_n_grid: int = 2**14, band_slope_limit: float = -0.1,
                     band_share_floor: float = 1e-12) -> list[dict]:
    """Finite/infinite flags for ``||f||_{H^beta_2}`` at each ``beta``.

    Two divergence mechanisms are probed.  Growth in ``R``: the sup over the
    R-grid extended from ``r_base`` to ``r_ext`` grows by more than
    ``growth_limit`` or the profile keeps growing over the last four
    octaves (log-log slope above ``slope_limit``).  Local roughness: under
    grid refinement the Sobolev energy per frequency octave stops decaying
    (slope above ``band_slope_limit``) while carrying a non-negligible share.
    """
    rows = []
    for beta in betas:
        params = HormanderNormParams(beta=float(beta), r_min=2.0**-6, r_max=r_ext, pad_octaves=0)
        R, prof = hormander_profile(f, params, warn=False)
        base = float(prof[R <= r_base].max(initial=0.0))
        ext = float(prof.max(initial=0.0))
        growth = ext / base if base > 0 else (math.inf if ext > 0 else 1.0)
        last = R >= r_ext / 16
        pos = prof[last] > 0
        slope = float(np.polyfit(np.log2(R[last][pos]), np.log2(prof[last][pos]), 1)[0]) if pos.sum() > 2 else 0.0
        coarse = R[:: params.steps_per_octave // 2]
        band = -np.inf
        for Rc in coarse[coarse <= r_base]:
            s, share = _band_slope(f, float(Rc), float(beta), band_n_grid)
            if share > band_share_floor:
                band = max(band, s)
        finite = growth <= growth_limit and slope <= slope_limit and band <= band_slope_limit
        rows.append({"beta": float(beta), "finite": bool(finite), "growth": growth,
                     "r_slope": slope, "band_slope": band, "norm_base": base})
    return rows
