"""Finite metric measure spaces of homogeneous type.

A space is a finite point set ``{0, ..., n-1}`` with a distance matrix and
positive point masses.  Balls are closed.  Because the volume function
``r -> V(x, r)`` is a right-continuous step function that only jumps at
realized distances, suprema over ``r > 0`` are computed exactly from the
finite set of distinct distances.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._validation import ValidationError, as_rng, check_positive

__all__ = [
    "MetricMeasureSpace",
    "DoublingProfile",
    "InvalidMetricError",
    "ball",
    "volume",
    "volumes",
    "annulus",
    "doubling_constant",
    "volume_comparability",
    "scan_radii",
    "build_model_space",
    "read_space",
    "write_space",
]

TRIANGLE_TOL = 1e-12
DIMENSION_LAMBDAS = 2.0 ** (np.arange(1, 17) / 4.0)
DIMENSION_CD_CAP = 16.0


class InvalidMetricError(ValidationError):
    """The distance matrix or the weights do not define a metric measure space."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """Finite metric measure space ``(Omega, dist, mu)``.

    Parameters
    ----------
    dist : ndarray of shape (n, n)
        Symmetric distance matrix with zero diagonal.
    mu : ndarray of shape (n,)
        Strictly positive point masses.
    name : str
        Free-form label used in reports.
    """

    dist: np.ndarray
    mu: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "dist", _frozen(self.dist))
        object.__setattr__(self, "mu", _frozen(self.mu))
        validate_metric(self.dist, self.mu)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @cached_property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    @cached_property
    def min_positive_distance(self) -> float:
        pos = self.dist[self.dist > 0]
        return float(pos.min()) if pos.size else math.inf

    @cached_property
    def distinct_distances(self) -> np.ndarray:
        """Sorted distinct distance values, starting with 0."""
        return _frozen(np.unique(self.dist))

    @cached_property
    def _sorted(self):
        order = np.argsort(self.dist, axis=1, kind="stable")
        sd = np.take_along_axis(self.dist, order, axis=1)
        cm = np.cumsum(self.mu[order], axis=1)
        return order, sd, cm

    def __repr__(self) -> str:
        return f"MetricMeasureSpace(name={self.name!r}, n={self.n})"


def validate_metric(dist: np.ndarray, mu: np.ndarray, tol: float = TRIANGLE_TOL) -> None:
    """Raise :class:`InvalidMetricError` unless ``(dist, mu)`` is a valid space."""
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise InvalidMetricError(f"distance matrix must be square, got {dist.shape}")
    n = dist.shape[0]
    if mu.shape != (n,):
        raise InvalidMetricError(f"weights must have shape ({n},), got {mu.shape}")
    if n == 0:
        raise InvalidMetricError("space must contain at least one point")
    if not (np.all(np.isfinite(dist)) and np.all(np.isfinite(mu))):
        raise InvalidMetricError("non-finite distances or weights")
    if np.any(mu <= 0):
        raise InvalidMetricError("weights must be strictly positive")
    if np.any(np.diag(dist) != 0):
        raise InvalidMetricError("dist(x, x) must be 0")
    if np.any(dist < 0):
        raise InvalidMetricError("distances must be nonnegative")
    if not np.array_equal(dist, dist.T):
        raise InvalidMetricError("distance matrix must be symmetric")
    off = dist + np.eye(n)
    if np.any(off == 0):
        i, j = np.argwhere(off == 0)[0]
        raise InvalidMetricError(f"duplicate points {i} and {j} (zero distance)")
    scale = tol * max(1.0, float(dist.max()))
    for z in range(n):
        via = dist[:, z][:, None] + dist[z, :][None, :]
        if np.any(dist > via + scale):
            x, y = np.argwhere(dist > via + scale)[0]
            raise InvalidMetricError(
                f"triangle inequality violated: d({x},{y}) > d({x},{z}) + d({z},{y})"
            )


@dataclass(frozen=True)
class DoublingProfile:
    """Doubling diagnostics of a finite space.

    ``C_D`` is the exact doubling constant ``sup V(x, 2r) / V(x, r)``.
    ``d`` is the least-squares homogeneous dimension with the tightened
    companion constant ``C_d``; ``d_min`` is the smallest exponent for which
    the bound holds with a constant at most 16.  ``C_cmp`` is the two-sided
    volume comparability constant for nearby centers.
    """

    C_D: float
    d: float
    C_d: float
    d_min: float
    C_cmp: float


def ball(space: MetricMeasureSpace, x: int, r: float) -> np.ndarray:
    """Indices of the closed ball ``{y : dist(x, y) <= r}``."""
    check_positive(r, name="r", strict=False)
    return np.flatnonzero(space.dist[x] <= r)


def volume(space: MetricMeasureSpace, x: int, r: float) -> float:
    """``V(x, r) = mu(B(x, r))``."""
    check_positive(r, name="r", strict=False)
    return float(space.mu[space.dist[x] <= r].sum())


def volumes(space: MetricMeasureSpace, radii, *, open_balls: bool = False) -> np.ndarray:
    """Volumes ``V(x, r)`` for every point and every radius, shape ``(n, len(radii))``.

    With ``open_balls=True`` the strict inequality ``dist < r`` is used.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    _, sd, cm = space._sorted
    side = "left" if open_balls else "right"
    out = np.empty((space.n, radii.size))
    for x in range(space.n):
        idx = np.searchsorted(sd[x], radii, side=side)
        out[x] = np.where(idx > 0, cm[x][np.maximum(idx - 1, 0)], 0.0)
    return out


def scan_radii(space: MetricMeasureSpace) -> np.ndarray:
    """Positive realized distances together with the midpoints between consecutive ones.

    The first midpoint lies between 0 and the smallest positive distance, so
    the singleton balls are represented.
    """
    d = space.distinct_distances
    if d.size == 1:
        return np.array([1.0])
    mids = 0.5 * (d[:-1] + d[1:])
    return np.unique(np.concatenate([d[1:], mids]))


def annulus(space: MetricMeasureSpace, x: int, r: float, k: int) -> np.ndarray:
    """Annular shell ``B(x, (k+1) r)`` minus ``B(x, k r)`` for ``k >= 1``; ``A(x, r, 0) = B(x, r)``.

    The shells for ``k = 0, 1, 2, ...`` are pairwise disjoint and cover the space.
    """
    check_positive(r, name="r")
    if k < 0:
        raise ValidationError("k must be a nonnegative integer")
    d = space.dist[x]
    if k == 0:
        return np.flatnonzero(d <= r)
    return np.flatnonzero((d <= (k + 1) * r) & (d > k * r))


def _exact_doubling(space: MetricMeasureSpace) -> float:
    d = space.distinct_distances
    if d.size == 1:
        return 1.0
    # On [d_i, d_{i+1}) the inner volume is constant and the outer one
    # increases toward the open-ball volume at 2 d_{i+1}.
    inner = volumes(space, d[:-1])
    outer = volumes(space, 2.0 * d[1:], open_balls=True)
    return float(max(1.0, (outer / inner).max()))


def _dimension_fit(space: MetricMeasureSpace) -> tuple[float, float, float]:
    radii = scan_radii(space)
    base = volumes(space, radii)
    logs = np.log(DIMENSION_LAMBDAS)
    worst = np.array(
        [np.log((volumes(space, lam * radii) / base).max()) for lam in DIMENSION_LAMBDAS]
    )
    slope = np.polyfit(logs, worst, 1)[0]
    d = max(0.0, float(slope))
    C_d = float(max(1.0, np.exp((worst - d * logs).max())))
    d_min = float(max(0.0, ((worst - math.log(DIMENSION_CD_CAP)) / logs).max()))
    return d, C_d, d_min


def volume_comparability(space: MetricMeasureSpace) -> float:
    """Smallest ``C`` with ``V(y, r) <= C V(x, r)`` whenever ``dist(x, y) <= r``."""
    radii = scan_radii(space)
    vols = volumes(space, radii)
    best = 1.0
    for j, r in enumerate(radii):
        close = space.dist <= r
        v = vols[:, j]
        ratio = v[None, :] / v[:, None]
        best = max(best, float(ratio[close].max()))
    return best


def doubling_constant(space: MetricMeasureSpace) -> DoublingProfile:
    """Full :class:`DoublingProfile` of ``space``."""
    d, C_d, d_min = _dimension_fit(space)
    return DoublingProfile(
        C_D=_exact_doubling(space),
        d=d,
        C_d=C_d,
        d_min=d_min,
        C_cmp=volume_comparability(space),
    )


def _cycle_dist(n: int) -> np.ndarray:
    i = np.arange(n)
    diff = np.abs(i[:, None] - i[None, :])
    return np.minimum(diff, n - diff).astype(float)


def build_model_space(kind: str, *, mu=None, name: str | None = None, **params) -> MetricMeasureSpace:
    """Construct a model space.

    Kinds
    -----
    ``cycle`` (``n``)
        The cycle graph Z_n with its graph metric.
    ``path`` (``n``)
        The path graph on ``n`` vertices.
    ``torus`` (``n``, ``dim``)
        The discrete torus (Z_n)^dim with the l^1 graph metric.
    ``cloud`` (``points`` or ``n``, ``dim``, ``seed``)
        Euclidean point cloud; random points in the unit cube when
        ``points`` is not given.
    ``custom`` (``dist``)
        Arbitrary distance matrix.

    Counting measure is used unless ``mu`` is given.
    """
    kind = kind.lower()
    if kind == "cycle":
        n = int(params["n"])
        dist = _cycle_dist(n)
        label = f"cycle-Z{n}"
    elif kind == "path":
        n = int(params["n"])
        i = np.arange(n, dtype=float)
        dist = np.abs(i[:, None] - i[None, :])
        label = f"path-{n}"
    elif kind == "torus":
        n = int(params["n"])
        dim = int(params.get("dim", 2))
        grid = np.indices((n,) * dim).reshape(dim, -1).T
        c = _cycle_dist(n)
        dist = np.zeros((grid.shape[0],) * 2)
        for a in range(dim):
            dist += c[grid[:, a][:, None], grid[:, a][None, :]]
        label = f"torus-{n}^{dim}"
    elif kind in ("cloud", "euclidean"):
        pts = params.get("points")
        if pts is None:
            rng = as_rng(params.get("seed", 0))
            pts = rng.random((int(params["n"]), int(params.get("dim", 2))))
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        label = f"cloud-{pts.shape[0]}"
    elif kind == "custom":
        dist = np.asarray(params["dist"], dtype=float)
        label = "custom"
    else:
        raise ValidationError(f"unknown space kind {kind!r}")
    n = dist.shape[0]
    weights = np.ones(n) if mu is None else np.asarray(mu, dtype=float)
    return MetricMeasureSpace(dist, weights, name=name or label)


def _data_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def parse_matrix_text(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse the ``n`` / weights / matrix text format into ``(weights, matrix)``."""
    lines = _data_lines(text)
    if not lines:
        raise ValidationError("empty space file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValidationError(f"bad header line {lines[0]!r}") from exc
    if len(lines) != 1 + 2 * n:
        raise ValidationError(f"expected {1 + 2 * n} data lines, found {len(lines)}")
    mu = np.array([float(v) for v in lines[1 : n + 1]])
    rows = [np.array(line.split(), dtype=float) for line in lines[n + 1 :]]
    if any(r.size != n for r in rows):
        raise ValidationError("every matrix row must have n entries")
    return mu, np.vstack(rows) if n else np.zeros((0, 0))


def format_matrix_text(mu: np.ndarray, matrix: np.ndarray, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    n = mu.shape[0]
    buf.write(f"{n}\n")
    for w in mu:
        buf.write(f"{float(w):.17g}\n")
    for row in matrix:
        buf.write(" ".join(f"{float(v):.17g}" for v in row) + "\n")
    return buf.getvalue()


def read_space(path, name: str | None = None) -> MetricMeasureSpace:
    text = Path(path).read_text()
    mu, dist = parse_matrix_text(text)
    return MetricMeasureSpace(dist, mu, name=name or Path(path).stem)


def write_space(space: MetricMeasureSpace, path) -> None:
    Path(path).write_text(format_matrix_text(space.mu, space.dist, comment=f"space {space.name}"))
