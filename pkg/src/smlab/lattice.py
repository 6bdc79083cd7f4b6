"""Lattice norms, Bochner norms, square functions and Rademacher averages.

The lattice ``Y`` lives over a finite index set with counting measure.
Fields are arrays of shape ``(n, dim)`` indexed by ``(x, omega)``; stacks of
fields have shape ``(K, n, dim)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ValidationError, as_rng, check_exponent, check_field, check_fields
from .space import MetricMeasureSpace

__all__ = [
    "LatticeSpec",
    "ExponentTriple",
    "lattice_norm",
    "bochner_norm",
    "square_function",
    "square_function_norm",
    "rademacher_norm",
    "alpha",
    "alpha_tilde",
    "admissible_exponents",
    "convexity_defect",
    "read_field_csv",
    "write_field_csv",
]

EXACT_RADEMACHER_MAX = 16


@dataclass(frozen=True)
class LatticeSpec:
    """Finite-dimensional Banach lattice ``Y``.

    ``sequence``: ``l^s_m``.  ``mixed``: ``l^s_m(l^2_inner_m)`` with the inner
    index running fastest.  ``convexified``: the ``p``-convexification
    ``base^p`` with norm ``|| |z|^{1/p} ||_base^p``.
    """

    kind: str
    s: float = 2.0
    m: int = 1
    inner_m: int = 1
    base: "LatticeSpec | None" = None
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sequence", "mixed", "convexified"):
            raise ValidationError(f"unknown lattice kind {self.kind!r}")
        if self.kind == "convexified":
            if self.base is None:
                raise ValidationError("convexified lattice needs a base")
            check_exponent(self.p, name="p", high=math.inf, high_open=True)
            if self.p > self.base.convexity:
                raise ValidationError(
                    f"base lattice is not {self.p}-convex (convexity exponent {self.base.convexity})"
                )
        else:
            check_exponent(self.s, name="s")
            if self.m < 1 or self.inner_m < 1:
                raise ValidationError("lattice dimensions must be >= 1")

    @classmethod
    def sequence(cls, s: float, m: int) -> "LatticeSpec":
        return cls("sequence", s=float(s), m=int(m))

    @classmethod
    def mixed(cls, s: float, m: int, inner_m: int) -> "LatticeSpec":
        return cls("mixed", s=float(s), m=int(m), inner_m=int(inner_m))

    @classmethod
    def convexified(cls, base: "LatticeSpec", p: float) -> "LatticeSpec":
        return cls("convexified", base=base, p=float(p))

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        kind = d.get("kind", "sequence")
        if kind == "convexified":
            return cls.convexified(cls.from_dict(d["base"]), d["p"])
        if kind == "mixed":
            return cls.mixed(_parse_exponent(d["s"]), d["m"], d.get("inner_m", 2))
        return cls.sequence(_parse_exponent(d["s"]), d.get("m", 1))

    def to_dict(self) -> dict:
        if self.kind == "convexified":
            return {"kind": self.kind, "base": self.base.to_dict(), "p": self.p}
        out = {"kind": self.kind, "s": self.s, "m": self.m}
        if self.kind == "mixed":
            out["inner_m"] = self.inner_m
        return out

    @property
    def dim(self) -> int:
        if self.kind == "convexified":
            return self.base.dim
        return self.m * (self.inner_m if self.kind == "mixed" else 1)

    @property
    def convexity(self) -> float:
        """Largest ``p`` for which the lattice is ``p``-convex with constant 1."""
        if self.kind == "sequence":
            return self.s
        if self.kind == "mixed":
            return min(self.s, 2.0)
        return self.base.convexity / self.p

    @property
    def concavity(self) -> float:
        """Smallest ``q`` for which the lattice is ``q``-concave with constant 1."""
        if self.kind == "sequence":
            return self.s
        if self.kind == "mixed":
            return max(self.s, 2.0)
        return self.base.concavity / self.p

    def __str__(self) -> str:
        if self.kind == "sequence":
            return f"l^{self.s:g}_{self.m}"
        if self.kind == "mixed":
            return f"l^{self.s:g}_{self.m}(l^2_{self.inner_m})"
        return f"({self.base})^{self.p:g}"


def _parse_exponent(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        if "/" in v:
            a, b = v.split("/")
            return float(a) / float(b)
    return float(v)


def _lp(values: np.ndarray, s: float, axis=-1) -> np.ndarray:
    a = np.abs(values)
    if math.isinf(s):
        return a.max(axis=axis) if a.shape[axis] else np.zeros(a.shape[:axis])
    if s == 2.0:
        return np.sqrt((a * a).sum(axis=axis))
    if s == 1.0:
        return a.sum(axis=axis)
    return (a**s).sum(axis=axis) ** (1.0 / s)


def lattice_norm(Y: LatticeSpec, y) -> np.ndarray | float:
    """Norm of ``y`` in ``Y`` along the last axis; leading axes are batched."""
    y = np.asarray(y)
    if y.shape[-1] != Y.dim:
        raise ValidationError(f"last axis must have length {Y.dim}, got {y.shape[-1]}")
    if Y.kind == "sequence":
        out = _lp(y, Y.s)
    elif Y.kind == "mixed":
        inner = _lp(y.reshape(y.shape[:-1] + (Y.m, Y.inner_m)), 2.0)
        out = _lp(inner, Y.s)
    else:
        out = lattice_norm(Y.base, np.abs(y) ** (1.0 / Y.p)) ** Y.p
    return float(out) if np.ndim(out) == 0 else out


def _weighted_lp(values: np.ndarray, mu: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(values.max())
    return float((mu * values**p).sum() ** (1.0 / p))


def bochner_norm(p: float, Y: LatticeSpec, f, space: MetricMeasureSpace) -> float:
    """``( sum_x mu(x) ||f(x, .)||_Y^p )^{1/p}`` (maximum for ``p = inf``)."""
    p = check_exponent(p, name="p")
    f = check_field(f, space.n)
    return _weighted_lp(np.asarray(lattice_norm(Y, f)), space.mu, p)


def square_function(fields) -> np.ndarray:
    """Pointwise ``(sum_k |f_k|^2)^{1/2}`` of a ``(K, n, dim)`` stack."""
    fields = np.asarray(fields)
    return np.sqrt((np.abs(fields) ** 2).sum(axis=0))


def square_function_norm(p: float, Y: LatticeSpec, fields, space: MetricMeasureSpace) -> float:
    """``|| (sum_k |f_k|^2)^{1/2} ||_{L^p(Y)}``."""
    fields = check_fields(fields, space.n)
    return bochner_norm(p, Y, square_function(fields), space)


def _norms_of_rows(p, Y, stacked: np.ndarray, space) -> np.ndarray:
    """Bochner norms of a batch ``(B, n, dim)``."""
    ln = np.asarray(lattice_norm(Y, stacked))
    if math.isinf(p):
        return ln.max(axis=1)
    return ((space.mu[None, :] * ln**p).sum(axis=1)) ** (1.0 / p)


def rademacher_norm(p: float, Y: LatticeSpec, fields, space: MetricMeasureSpace, *,
                    mode: str = "exact", n_samples: int = 4096, seed=0,
                    moment: float = 1.0) -> float:
    """``( E || sum_k eps_k f_k ||^moment )^{1/moment}`` in ``L^p(Y)``.

    ``mode='exact'`` averages over all ``2^K`` sign patterns (``K <= 16``);
    ``mode='montecarlo'`` uses ``n_samples`` seeded draws.
    """
    p = check_exponent(p, name="p")
    fields = check_fields(fields, space.n)
    K = fields.shape[0]
    flat = fields.reshape(K, -1)
    if mode == "exact":
        if K > EXACT_RADEMACHER_MAX:
            raise ValidationError(f"exact mode supports K <= {EXACT_RADEMACHER_MAX}, got {K}")
        # eps and -eps give the same norm, so fix eps_1 = +1
        patterns = np.array(list(itertools.product((1.0, -1.0), repeat=K - 1)), dtype=float).reshape(2 ** (K - 1), K - 1)
        signs = np.hstack([np.ones((patterns.shape[0], 1)), patterns])
    elif mode == "montecarlo":
        rng = as_rng(seed)
        signs = rng.choice((-1.0, 1.0), size=(n_samples, K))
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    total = 0.0
    chunk = max(1, 2**20 // max(1, flat.shape[1]))
    for start in range(0, signs.shape[0], chunk):
        block = signs[start : start + chunk] @ flat
        norms = _norms_of_rows(p, Y, block.reshape(-1, space.n, fields.shape[2]), space)
        total += float((norms**moment).sum())
    return (total / signs.shape[0]) ** (1.0 / moment)


@dataclass(frozen=True)
class ExponentTriple:
    """``(p, pY, qY)`` with ``p`` in (1, inf), ``pY`` in (1, 2], ``qY`` in [2, inf)."""

    p: float
    pY: float
    qY: float

    def __post_init__(self):
        check_exponent(self.p, name="p", low_open=True, high_open=True)
        check_exponent(self.pY, name="pY", low_open=True, high=2.0)
        check_exponent(self.qY, name="qY", low=2.0, high_open=True)


def alpha(p: float, pY: float, qY: float) -> float:
    """Length of the convex hull of ``1/p, 1/pY, 1/qY, 1/2``."""
    ExponentTriple(p, pY, qY)
    return max(1 / p, 1 / pY, 0.5) - min(1 / p, 1 / qY, 0.5)


def alpha_tilde(p: float, pY: float, qY: float) -> float:
    """``max(|1/p - 1/2|, |1/pY - 1/2|, |1/qY - 1/2|)``; never exceeds :func:`alpha`."""
    ExponentTriple(p, pY, qY)
    return max(abs(1 / p - 0.5), abs(1 / pY - 0.5), abs(1 / qY - 0.5))


def admissible_exponents(Y: LatticeSpec) -> tuple[float, float]:
    """Limiting convexity/concavity exponents ``(pY, qY)`` declared for ``Y``.

    ``pY = min(convexity, 2)`` and ``qY = max(concavity, 2)``; any
    ``pY' < pY`` and ``qY' > qY`` are admissible as well.
    """
    pY = min(Y.convexity, 2.0)
    qY = max(Y.concavity, 2.0)
    if pY <= 1 or math.isinf(qY):
        raise ValidationError(f"{Y} has no convexity/concavity exponents in (1, 2] x [2, inf)")
    return pY, qY


def convexity_defect(Y: LatticeSpec, p: float, samples=None, *, n_vectors: int = 8,
                     trials: int = 200, seed=0) -> float:
    """Empirical ``p``-convexity constant of ``Y``.

    ``samples`` is a collection ``(N, dim)`` or a batch ``(B, N, dim)``; the
    result is the largest ratio ``||(sum |x_i|^p)^{1/p}||_Y / (sum ||x_i||_Y^p)^{1/p}``.
    Without samples a seeded random search over Gaussian collections,
    sparse collections and the unit-vector basis is run.
    """
    p = check_exponent(p, name="p", high=math.inf, high_open=True)
    if samples is None:
        rng = as_rng(seed)
        batches = [rng.standard_normal((trials, n_vectors, Y.dim))]
        sparse = rng.standard_normal((trials, n_vectors, Y.dim))
        sparse *= rng.random((trials, n_vectors, Y.dim)) < 0.2
        batches.append(sparse)
        batches.append(np.eye(Y.dim)[None])
        best = 0.0
        for b in batches:
            best = max(best, convexity_defect(Y, p, b))
        return best
    x = np.asarray(samples)
    if x.ndim == 2:
        x = x[None]
    lhs = np.asarray(lattice_norm(Y, (np.abs(x) ** p).sum(axis=1) ** (1.0 / p)))
    rhs = (np.asarray(lattice_norm(Y, x)) ** p).sum(axis=1) ** (1.0 / p)
    keep = rhs > 0
    if not keep.any():
        return 1.0
    return float((lhs[keep] / rhs[keep]).max())


def write_field_csv(f, path) -> None:
    """Write a field as rows ``x_index, omega_index, re, im`` to a path or text stream."""
    f = np.asarray(f)
    if f.ndim == 1:
        f = f[:, None]
    if hasattr(path, "write"):
        _write_rows(f, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(f, fh)


def _write_rows(f: np.ndarray, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x_index", "omega_index", "re", "im"])
    for x in range(f.shape[0]):
        for o in range(f.shape[1]):
            v = complex(f[x, o])
            w.writerow([x, o, repr(v.real), repr(v.imag)])


def read_field_csv(path, n: int | None = None, m: int | None = None) -> np.ndarray:
    """Read a field written by :func:`write_field_csv`; returns real data when all imaginary parts vanish."""
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["x_index", "omega_index", "re", "im"]:
            raise ValidationError(f"unexpected CSV header {header}")
        for row in reader:
            if row:
                rows.append((int(row[0]), int(row[1]), float(row[2]), float(row[3])))
    n = n if n is not None else 1 + max(r[0] for r in rows)
    m = m if m is not None else 1 + max(r[1] for r in rows)
    out = np.zeros((n, m), dtype=complex)
    for x, o, re_, im_ in rows:
        out[x, o] = complex(re_, im_)
    return out.real.copy() if not np.any(out.imag) else out
