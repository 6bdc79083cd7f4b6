import math

import numpy as np
import pytest

from smlab.dyadic import build_adjacent_family
from smlab.lattice import LatticeSpec
from smlab.maximal import (
    UncoveredBallError,
    dimension_sweep,
    domination_check,
    m_hl,
    m_hl_q,
    n_q_r,
    norm_probe,
    semigroup_domination,
)
from smlab.space import build_model_space
from smlab.spectral import semigroup_kernel


@pytest.fixture(scope="module")
def path4():
    return build_model_space("path", n=4)


def test_hand_case(path4):
    f = np.array([1.0, 0, 0, 0])
    np.testing.assert_allclose(m_hl(path4, f).ravel(), [1, 1 / 3, 1 / 4, 1 / 4], rtol=0, atol=1e-15)
    np.testing.assert_allclose(m_hl_q(path4, 2, f).ravel(), [1, 1 / math.sqrt(3), 0.5, 0.5], atol=1e-15)


def test_pointwise_properties(z8, rng):
    f, g = rng.standard_normal((2, 8, 3))
    Mf, Mg = m_hl(z8, f), m_hl(z8, g)
    assert np.all(Mf >= np.abs(f) - 1e-12)
    assert np.all(m_hl(z8, f + g) <= Mf + Mg + 1e-12)
    np.testing.assert_allclose(m_hl(z8, -2.5 * f), 2.5 * Mf)
    assert np.all(m_hl(z8, f * rng.random(f.shape)) <= Mf + 1e-12)
    np.testing.assert_allclose(m_hl_q(z8, 1, f), Mf)
    for q in (1.5, 2, 3):
        np.testing.assert_allclose(m_hl_q(z8, q, f), m_hl(z8, np.abs(f) ** q) ** (1 / q), rtol=1e-12)
    assert np.all(m_hl_q(z8, 1.5, f) <= m_hl_q(z8, 3, f) + 1e-12)
    for r in z8.distinct_distances[1:]:
        assert np.all(n_q_r(z8, 2, r, f) <= m_hl_q(z8, 2, f) + 1e-12)
    assert np.all(n_q_r(z8, math.inf, 1, f) >= np.abs(f))


def test_domination(z8, rng):
    one = build_model_space("custom", dist=[[0.0]])
    fam1 = build_adjacent_family(one, 0.5, 1)
    assert domination_check(one, fam1, [[2.0]]) == pytest.approx(1.0)
    fam = build_adjacent_family(z8, 0.5, 3, seed=0)
    assert domination_check(z8, fam, np.ones((8, 2))) <= 1
    c = domination_check(z8, fam, rng.standard_normal((8, 4)))
    assert 0 < c < math.inf


def test_domination_uncovered():
    path4 = build_model_space("path", n=4)
    fam = build_adjacent_family(path4, 0.5, 1, dilation=1.5)
    with pytest.raises(UncoveredBallError):
        domination_check(path4, fam, np.ones(4))


def test_semigroup_domination(z32_laplacian, z32, rng):
    ts = [0.5, 2.0, 8.0]
    kernels = [semigroup_kernel(z32_laplacian, t) for t in ts]
    C = semigroup_domination(z32, kernels, [t**0.5 for t in ts], rng.standard_normal((32, 2)))
    assert 0 < C < 50


def test_norm_probe_examples(z8):
    Y = LatticeSpec.sequence(1.5, 3)
    assert norm_probe("identity", 3, Y, z8, trials=8).ratio == pytest.approx(1.0)
    one = build_model_space("custom", dist=[[0.0]])
    assert norm_probe("m_hl", 2, LatticeSpec.sequence(2, 1), one, trials=4).ratio == pytest.approx(1.0)


def test_norm_probe_thread_independent(z8, monkeypatch):
    Y = LatticeSpec.sequence(2, 2)
    a = norm_probe("m_hl", 3, Y, z8, trials=12, seed=5, threads=1)
    b = norm_probe("m_hl", 3, Y, z8, trials=12, seed=5, threads=4)
    assert a.ratios == b.ratios


def test_dimension_sweep_nondecreasing(z32):
    reps = dimension_sweep(z32, 3, 1.5, dims=(1, 2, 4, 8), trials=8, seed=0)
    ratios = [r.ratio for r in reps]
    assert all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= 4 * ratios[0]
