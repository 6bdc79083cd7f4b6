import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smlab.dyadic import (
    DeltaOutOfRangeError,
    DyadicSystem,
    build_adjacent_family,
    build_dyadic_system,
    conditional_expectation,
    conditional_expectation_q,
    dump_dyadic,
    dyadic_maximal,
    k_of_r,
    load_dyadic,
    verify_dyadic,
)
from smlab.space import build_model_space, volume


def test_k_of_r_examples():
    assert k_of_r(1.0, 0.5) == 3
    assert k_of_r(4.0, 0.5) == 1


@settings(max_examples=300, deadline=None)
@given(logr=st.floats(-3, 3), delta=st.floats(1e-3, 0.5))
def test_k_of_r_inequality(logr, delta):
    r = 10.0**logr
    k = k_of_r(r, delta)
    assert delta * r <= 4 * delta**k < r


def test_delta_out_of_range(z8):
    with pytest.raises(DeltaOutOfRangeError):
        build_dyadic_system(z8, 1.5)


def test_single_point_system():
    one = build_model_space("custom", dist=[[0.0]])
    system = build_dyadic_system(one, 0.5)
    assert all(len(c) == 1 for c in system.cubes)
    assert verify_dyadic(system).partition_ok
    assert build_adjacent_family(one, 0.5, 2).achieved_K == 1


def test_z8_singleton_level(z8):
    system = build_dyadic_system(z8, 0.5, seed=0)
    assert sorted(int(c[0]) for c in system.cubes[-1]) == list(range(8))
    assert all(len(c) == 1 for c in system.cubes[-1])
    assert len(system.cubes[0]) == 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cloud_system_verifies(seed):
    cloud = build_model_space("cloud", n=20, dim=2, seed=seed)
    rep = verify_dyadic(build_dyadic_system(cloud, 0.5, seed))
    assert rep.partition_ok and rep.nesting_ok and rep.positive_measure_ok
    assert rep.c1 > 0


def test_torus_containment():
    torus = build_model_space("torus", n=4, dim=2)
    rep = verify_dyadic(build_dyadic_system(torus, 0.5, 0))
    assert rep.passed and rep.C1 <= 2


def test_broken_system_flagged(z8):
    system = build_dyadic_system(z8, 0.5, 0)
    cubes = [list(c) for c in system.cubes]
    li = next(i for i, c in enumerate(cubes) if len(c) >= 2)
    cubes[li] = [np.asarray(c) for c in cubes[li]]
    cubes[li][1] = np.concatenate([cubes[li][1], cubes[li][0][:1]])
    broken = DyadicSystem(z8, system.delta, system.levels, cubes, system.centers, system.parents,
                          system.c1, system.C1, system.seed)
    rep = verify_dyadic(broken)
    assert not rep.partition_ok and not rep.passed and rep.failures


def test_conditional_expectation_hand_case():
    path4 = build_model_space("path", n=4)
    system = build_dyadic_system(path4, 0.5, 0)
    k = next(k for k, c in zip(system.levels, system.cubes) if len(c) == 2)
    np.testing.assert_allclose(conditional_expectation(system, k, [1, 0, 0, 0]).ravel(), [0.5, 0.5, 0, 0])
    np.testing.assert_allclose(conditional_expectation_q(system, k, 2, [1, 0, 0, 0]).ravel(),
                               [math.sqrt(0.5), math.sqrt(0.5), 0, 0])


def test_conditional_expectation_identities(rng):
    space = build_model_space("cloud", n=40, dim=2, seed=3)
    system = build_dyadic_system(space, 0.5, 0)
    for _ in range(20):
        f = rng.standard_normal((40, 3))
        for i, k in enumerate(system.levels):
            Ek = conditional_expectation(system, k, f)
            np.testing.assert_allclose(conditional_expectation(system, k, Ek), Ek, atol=1e-12)
            np.testing.assert_allclose((space.mu[:, None] * Ek).sum(0), (space.mu[:, None] * f).sum(0), atol=1e-10)
            assert np.all(np.abs(Ek) <= conditional_expectation_q(system, k, 2.0, f) + 1e-12)
            for l in system.levels[i:]:
                El = conditional_expectation(system, l, f)
                np.testing.assert_allclose(conditional_expectation(system, k, El), Ek, atol=1e-12)
    c = np.full((40, 2), 3.0)
    np.testing.assert_allclose(conditional_expectation(system, system.levels[1], c), c)
    np.testing.assert_allclose(conditional_expectation(system, system.levels[-1], f), f)


def test_dyadic_maximal_properties(z8, rng):
    system = build_dyadic_system(z8, 0.5, 0)
    c = np.full((8, 1), 2.0)
    np.testing.assert_allclose(dyadic_maximal(system, c), c)
    f = rng.standard_normal((8, 2))
    assert np.all(dyadic_maximal(system, f) >= np.abs(f) - 1e-12)


def test_adjacent_family(z8):
    fam = build_adjacent_family(z8, 0.5, 3, seed=0)
    assert fam.covers_all and math.isfinite(fam.achieved_K)
    # every ball sits in a cube of some system with comparable mass
    for x in range(8):
        for r in z8.distinct_distances[1:]:
            best = math.inf
            ball = set(np.flatnonzero(z8.dist[x] <= r))
            for s in fam.systems:
                for cubes in s.cubes:
                    for q in cubes:
                        if ball <= set(q.tolist()):
                            best = min(best, z8.mu[q].sum() / volume(z8, x, r))
            assert best <= fam.achieved_K + 1e-12


def test_adjacent_family_negative_control():
    path4 = build_model_space("path", n=4)
    fam = build_adjacent_family(path4, 0.5, 1, seed=0, dilation=1.5)
    assert not fam.covers_all and fam.uncovered


def test_dump_load_roundtrip(z8, tmp_path):
    system = build_dyadic_system(z8, 0.5, 1)
    text = dump_dyadic(system)
    back = load_dyadic(text, z8)
    assert back.levels == system.levels
    for a, b in zip(back.cubes, system.cubes):
        assert [sorted(q.tolist()) for q in a] == [sorted(q.tolist()) for q in b]
    assert verify_dyadic(back).passed
