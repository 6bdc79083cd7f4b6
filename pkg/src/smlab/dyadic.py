"""Dyadic systems on finite spaces of homogeneous type.

Systems are built level by level with greedy nets: inside every parent cube
the parent's center is kept and further centers are added in a seeded random
order whenever they are at least ``delta**k`` away from all centers already
chosen.  Points then join the nearest center of their parent cube.  The
achieved containment constants are measured and stored instead of being
assumed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._validation import ValidationError, check_field, spawn_seeds
from .space import MetricMeasureSpace, scan_radii

__all__ = [
    "DeltaOutOfRangeError",
    "DyadicSystem",
    "DyadicReport",
    "AdjacentFamily",
    "build_dyadic_system",
    "verify_dyadic",
    "k_of_r",
    "conditional_expectation",
    "conditional_expectation_q",
    "dyadic_maximal",
    "build_adjacent_family",
    "dump_dyadic",
    "load_dyadic",
]


class DeltaOutOfRangeError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class DyadicSystem:
    """Nested partitions ``D_k`` of a finite space.

    ``cubes[i]`` lists the point-index arrays of the cubes at level
    ``levels[i]``; ``centers[i][j]`` is the center point of cube ``j`` and
    ``parents[i][j]`` the index of its parent cube at level ``levels[i-1]``
    (``-1`` at the top level).  ``c1`` and ``C1`` are the achieved
    containment constants ``B(z, c1 delta^k) in Q in B(z, C1 delta^k)``.
    """

    space: MetricMeasureSpace
    delta: float
    levels: list[int]
    cubes: list[list[np.ndarray]]
    centers: list[np.ndarray]
    parents: list[np.ndarray]
    c1: float = math.inf
    C1: float = 0.0
    seed: object = None

    def level_index(self, k: int) -> int:
        try:
            return self.levels.index(int(k))
        except ValueError:
            raise ValidationError(f"level {k} not in system levels {self.levels[0]}..{self.levels[-1]}") from None

    @cached_property
    def _labels(self) -> list[np.ndarray]:
        out = []
        for cubes in self.cubes:
            lab = np.full(self.space.n, -1, dtype=int)
            for j, q in enumerate(cubes):
                lab[q] = j
            out.append(lab)
        return out

    def labels(self, k: int) -> np.ndarray:
        """Cube index of every point at level ``k``."""
        return self._labels[self.level_index(k)]

    def cube_masses(self, k: int) -> np.ndarray:
        i = self.level_index(k)
        return np.array([self.space.mu[q].sum() for q in self.cubes[i]])

    @property
    def n_cubes(self) -> list[int]:
        return [len(c) for c in self.cubes]


@dataclass
class DyadicReport:
    passed: bool
    partition_ok: bool
    nesting_ok: bool
    positive_measure_ok: bool
    centers_ok: bool
    c1: float
    C1: float
    per_level: list[dict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def k_of_r(r: float, delta: float) -> int:
    """Smallest integer ``k`` with ``delta**k < r / 4``.

    It satisfies ``delta * r <= 4 * delta**k < r``.
    """
    if not r > 0:
        raise ValidationError("r must be > 0")
    if not 0 < delta < 1:
        raise DeltaOutOfRangeError("delta must lie in (0, 1)")
    target = r / 4.0
    k = math.floor(math.log(target) / math.log(delta)) + 1
    while delta ** (k - 1) < target:
        k -= 1
    while not delta**k < target:
        k += 1
    return k


def _level_range(space: MetricMeasureSpace, delta: float) -> tuple[int, int]:
    diam = space.diameter
    k_top = math.floor(math.log(diam) / math.log(delta))
    while delta**k_top < diam:
        k_top -= 1
    while delta ** (k_top + 1) >= diam:
        k_top += 1
    half_min = space.min_positive_distance / 2.0
    k_bottom = k_top
    while not delta**k_bottom < half_min:
        k_bottom += 1
    return k_top, k_bottom


def _containment(space: MetricMeasureSpace, cubes, centers, scale: float) -> tuple[float, float]:
    """Achieved (c1, C1) for one level."""
    C1 = 0.0
    c1 = math.inf
    n = space.n
    for q, z in zip(cubes, centers):
        dz = space.dist[z]
        C1 = max(C1, float(dz[q].max()) / scale)
        outside = np.ones(n, dtype=bool)
        outside[q] = False
        if outside.any():
            min_out = float(dz[outside].min())
            inside = dz[q]
            r_in = float(inside[inside < min_out].max())
            # closed ball of this radius stays inside the cube
            c1 = min(c1, 0.5 * (r_in + min_out) / scale)
    return c1, C1


def build_dyadic_system(space: MetricMeasureSpace, delta: float = 0.5, seed=0) -> DyadicSystem:
    """Greedy-net dyadic system with seeded center order."""
    if not (isinstance(delta, (int, float)) and 0 < delta <= 0.5):
        raise DeltaOutOfRangeError(f"delta must lie in (0, 1/2], got {delta}")
    n = space.n
    if n == 1:
        one = np.array([0])
        return DyadicSystem(space, float(delta), [0], [[one]], [one.copy()],
                            [np.array([-1])], math.inf, 0.0, seed)
    rng = np.random.default_rng(seed)
    k_top, k_bottom = _level_range(space, delta)
    dist = space.dist
    rank = np.empty(n, dtype=int)
    rank[rng.permutation(n)] = np.arange(n)
    top_center = int(np.argmin(rank))
    levels = [k_top]
    cubes = [[np.arange(n)]]
    centers = [np.array([top_center])]
    parents = [np.array([-1])]
    for k in range(k_top + 1, k_bottom + 1):
        scale = delta**k
        rank[rng.permutation(n)] = np.arange(n)
        new_cubes, new_centers, new_parents = [], [], []
        for pj, (pq, pz) in enumerate(zip(cubes[-1], centers[-1])):
            others = pq[pq != pz]
            cand = np.concatenate([[pz], others[np.argsort(rank[others], kind="stable")]])
            chosen: list[int] = []
            for y in cand:
                if not chosen or dist[y, chosen].min() >= scale:
                    chosen.append(int(y))
            chosen_arr = np.sort(np.array(chosen))
            owner = np.argmin(dist[np.ix_(pq, chosen_arr)], axis=1)
            for ci, z in enumerate(chosen_arr):
                new_cubes.append(np.sort(pq[owner == ci]))
                new_centers.append(z)
                new_parents.append(pj)
        levels.append(k)
        cubes.append(new_cubes)
        centers.append(np.array(new_centers))
        parents.append(np.array(new_parents))
    c1, C1 = math.inf, 0.0
    for k, qs, zs in zip(levels, cubes, centers):
        lc1, lC1 = _containment(space, qs, zs, delta**k)
        c1, C1 = min(c1, lc1), max(C1, lC1)
    return DyadicSystem(space, float(delta), levels, cubes, centers, parents, c1, C1, seed)


def verify_dyadic(system: DyadicSystem, space: MetricMeasureSpace | None = None, *,
                  c1_min: float = 0.0, C1_max: float = math.inf) -> DyadicReport:
    """Check partition, nesting, positive measure and containment of ``system``.

    Failures are collected in the report; nothing is raised.
    """
    space = space if space is not None else system.space
    n = space.n
    failures: list[str] = []
    per_level = []
    partition_ok = nesting_ok = measure_ok = centers_ok = True
    prev_mem = None
    c1_all, C1_all = math.inf, 0.0
    for i, (k, qs, zs) in enumerate(zip(system.levels, system.cubes, system.centers)):
        mem = np.zeros((len(qs), n), dtype=bool)
        for j, q in enumerate(qs):
            mem[j, q] = True
        counts = mem.sum(axis=0)
        if np.any(counts != 1):
            partition_ok = False
            bad = np.flatnonzero(counts != 1)
            failures.append(f"level {k}: points {bad.tolist()} covered {counts[bad].tolist()} times")
        masses = mem.astype(float) @ space.mu
        if np.any(masses <= 0):
            measure_ok = False
            failures.append(f"level {k}: empty cube")
        for j, z in enumerate(zs):
            if not mem[j, z]:
                centers_ok = False
                failures.append(f"level {k}: center {z} not in cube {j}")
        if prev_mem is not None:
            inter = mem.astype(int) @ prev_mem.T.astype(int)
            sizes = mem.sum(axis=1)
            for j in range(len(qs)):
                hits = np.flatnonzero(inter[j] > 0)
                if hits.size != 1 or inter[j, hits[0]] != sizes[j]:
                    nesting_ok = False
                    failures.append(f"level {k}: cube {j} not nested in a single parent")
        lc1, lC1 = _containment(space, qs, zs, system.delta**k) if measure_ok and centers_ok else (0.0, math.inf)
        per_level.append({"level": k, "cubes": len(qs), "c1": lc1, "C1": lC1})
        c1_all, C1_all = min(c1_all, lc1), max(C1_all, lC1)
        prev_mem = mem
    if c1_all <= c1_min:
        failures.append(f"achieved c1={c1_all:.4g} not above threshold {c1_min}")
    if C1_all > C1_max:
        failures.append(f"achieved C1={C1_all:.4g} above threshold {C1_max}")
    passed = not failures
    return DyadicReport(passed, partition_ok, nesting_ok, measure_ok, centers_ok,
                        c1_all, C1_all, per_level, failures)


def _average(labels: np.ndarray, mu: np.ndarray, f: np.ndarray) -> np.ndarray:
    ncubes = labels.max() + 1
    sums = np.zeros((ncubes, f.shape[1]), dtype=f.dtype)
    np.add.at(sums, labels, mu[:, None] * f)
    masses = np.bincount(labels, weights=mu, minlength=ncubes)
    return (sums / masses[:, None])[labels]


def conditional_expectation(system: DyadicSystem, k: int, f) -> np.ndarray:
    """``E_k f(x, w) = mu(Q)^{-1} sum_{y in Q} mu(y) f(y, w)`` for the cube ``Q`` containing ``x``."""
    f = check_field(f, system.space.n)
    return _average(system.labels(k), system.space.mu, f)


def conditional_expectation_q(system: DyadicSystem, k: int, q: float, f) -> np.ndarray:
    """``L^q`` cube average ``(E_k |f|^q)^{1/q}``."""
    if not 1 <= q < math.inf:
        raise ValidationError("q must lie in [1, inf)")
    f = check_field(f, system.space.n)
    return _average(system.labels(k), system.space.mu, np.abs(f) ** q) ** (1.0 / q)


def dyadic_maximal(system: DyadicSystem, f) -> np.ndarray:
    """``M_D f(x, w) = max_k |E_k f(x, w)|`` over all levels of the system."""
    f = check_field(f, system.space.n)
    out = np.zeros(f.shape)
    for k in system.levels:
        np.maximum(out, np.abs(conditional_expectation(system, k, f)), out=out)
    return out


@dataclass
class AdjacentFamily:
    """Finitely many dyadic systems covering every ball by a comparable cube."""

    systems: list[DyadicSystem]
    achieved_K: float
    uncovered: list[tuple[int, float]] = field(default_factory=list)
    dilation: float | None = None

    @property
    def covers_all(self) -> bool:
        return not self.uncovered


def _cover_ratios(space: MetricMeasureSpace, systems, radii, dilation):
    """Best ``mu(Q)/mu(B)`` for every ball ``B(x, r)``; ``inf`` when uncovered."""
    order, sd, cm = space._sorted
    n = space.n
    best = np.full((n, radii.size), math.inf)
    for x in range(n):
        cnt = np.searchsorted(sd[x], radii, side="right")
        vol = cm[x][cnt - 1]
        for system in systems:
            for i, lab in enumerate(system._labels):
                lx = lab[order[x]]
                change = np.flatnonzero(lx != lx[0])
                prefix = change[0] if change.size else n
                q = system.cubes[i][lx[0]]
                ok = cnt <= prefix
                if dilation is not None:
                    ok &= space.dist[x, q].max() <= dilation * radii
                mass = space.mu[q].sum()
                best[x] = np.where(ok, np.minimum(best[x], mass / vol), best[x])
    return best


def build_adjacent_family(space: MetricMeasureSpace, delta: float = 0.5, m_systems: int = 3,
                          seed=0, *, dilation: float | None = None) -> AdjacentFamily:
    """Build ``m_systems`` independently seeded systems and measure the covering constant.

    Every ball ``B(x, r)`` with ``r`` in the scanned radii must lie in some
    cube ``Q`` of some system; ``achieved_K`` is the worst best ratio
    ``mu(Q)/mu(B)``.  With ``dilation`` set, a cube only counts when it also
    lies in ``B(x, dilation * r)``.  Uncovered balls are listed and make
    ``achieved_K`` infinite.
    """
    if m_systems < 1:
        raise ValidationError("m_systems must be >= 1")
    seeds = spawn_seeds(seed, m_systems)
    systems = [build_dyadic_system(space, delta, s) for s in seeds]
    radii = scan_radii(space)
    best = _cover_ratios(space, systems, radii, dilation)
    bad = np.argwhere(~np.isfinite(best))
    uncovered = [(int(x), float(radii[j])) for x, j in bad]
    K = math.inf if uncovered else float(best.max())
    return AdjacentFamily(systems, K, uncovered, dilation)


def dump_dyadic(system: DyadicSystem, path=None) -> str:
    """Text listing ``level k: cube_id -> [points], center z``."""
    lines = [f"# dyadic system on {system.space.name}, seed {system.seed}",
             f"delta {system.delta!r}"]
    for k, qs, zs in zip(system.levels, system.cubes, system.centers):
        for j, (q, z) in enumerate(zip(qs, zs)):
            pts = ", ".join(str(int(p)) for p in q)
            lines.append(f"level {k}: {j} -> [{pts}], center {int(z)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


_LINE = re.compile(r"^level\s+(-?\d+)\s*:\s*(\d+)\s*->\s*\[([^\]]*)\]\s*,\s*center\s+(\d+)\s*$")


def load_dyadic(text_or_path, space: MetricMeasureSpace) -> DyadicSystem:
    """Parse a dump back into a system (parents are recovered from nesting).

    The result is not validated; run :func:`verify_dyadic` on it.
    """
    text = str(text_or_path)
    if "\n" not in text and Path(text).exists():
        text = Path(text).read_text()
    delta = None
    by_level: dict[int, dict[int, tuple[np.ndarray, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("delta"):
            delta = float(line.split()[1])
            continue
        m = _LINE.match(line)
        if not m:
            raise ValidationError(f"line {lineno}: cannot parse {raw!r}")
        k, j = int(m.group(1)), int(m.group(2))
        pts = np.array([int(t) for t in m.group(3).split(",") if t.strip()], dtype=int)
        by_level.setdefault(k, {})[j] = (pts, int(m.group(4)))
    if delta is None:
        raise ValidationError("missing 'delta' line")
    levels = sorted(by_level)
    cubes, centers, parents = [], [], []
    prev_lab = None
    for k in levels:
        entries = by_level[k]
        ids = sorted(entries)
        qs = [entries[j][0] for j in ids]
        cubes.append(qs)
        centers.append(np.array([entries[j][1] for j in ids]))
        if prev_lab is None:
            parents.append(np.full(len(qs), -1))
        else:
            parents.append(np.array([prev_lab[q[0]] if q.size else -1 for q in qs]))
        prev_lab = np.full(space.n, -1)
        for j, q in enumerate(qs):
            prev_lab[q] = j
    c1, C1 = math.inf, 0.0
    return DyadicSystem(space, delta, levels, cubes, centers, parents, c1, C1, None)
