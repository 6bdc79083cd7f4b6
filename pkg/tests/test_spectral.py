import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from smlab.lattice import LatticeSpec
from smlab.space import build_model_space
from smlab.spectral import (
    HormanderNormParams,
    Multiplier,
    NegativeSpectrumError,
    NotSelfAdjointError,
    SpectrumNotCoveredWarning,
    apply_multiplier,
    build_operator,
    build_partition,
    calculus_apply,
    calculus_residual,
    hormander_norm,
    hormander_norm_integer,
    membership_check,
    mihlin_norm,
    paley_littlewood,
    semigroup_kernel,
    spectral_decompose,
    window,
)


def _weighted_space():
    mu = np.array([1.0, 2.0, 0.5, 1.5, 1.0, 3.0])
    return build_model_space("path", n=6, mu=mu)


def test_decompose_examples(z32):
    assert np.all(spectral_decompose(np.eye(32), z32).eigenvalues == 1)
    A = spectral_decompose(build_operator("graph_laplacian", z32), z32)
    expect = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(32) / 32))
    np.testing.assert_allclose(A.eigenvalues, expect, atol=1e-12)
    ws = _weighted_space()
    assert np.all(spectral_decompose(np.zeros((6, 6)), ws).eigenvalues == 0)


def test_mu_orthonormal_and_self_adjoint(rng):
    ws = _weighted_space()
    M = build_operator("graph_laplacian", ws)
    A = spectral_decompose(M, ws)
    V = A.eigenvectors
    np.testing.assert_allclose(V.T @ (ws.mu[:, None] * V), np.eye(6), atol=1e-10)
    f, g = rng.standard_normal((2, 6))
    assert np.sum(ws.mu * (M @ f) * g) == pytest.approx(np.sum(ws.mu * f * (M @ g)), rel=1e-10)


def test_decompose_errors(z8):
    bad = np.zeros((8, 8))
    bad[0, 1] = 1
    with pytest.raises(NotSelfAdjointError):
        spectral_decompose(bad, z8)
    with pytest.raises(NegativeSpectrumError):
        spectral_decompose(-np.eye(8), z8)


def test_apply_multiplier_examples(z32_laplacian, rng):
    A = z32_laplacian
    f = rng.standard_normal((32, 3))
    np.testing.assert_allclose(apply_multiplier(Multiplier.identity(), A, f), A.matrix @ f, atol=1e-12)
    np.testing.assert_allclose(apply_multiplier(Multiplier.heat(0), A, f), f, atol=1e-12)
    heat, br = Multiplier.heat(0.7), Multiplier.bochner_riesz(2, 3)
    lhs = apply_multiplier(heat * br, A, f)
    rhs = apply_multiplier(heat, A, apply_multiplier(br, A, f))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
    np.testing.assert_allclose(apply_multiplier(heat + br, A, f),
                               apply_multiplier(heat, A, f) + apply_multiplier(br, A, f), atol=1e-10)


def test_operator_norm_is_sup_of_multiplier(z32_laplacian):
    A = z32_laplacian
    m = Multiplier.wave_resolvent(0.5, 1.0)
    F = A.function_matrix(m(A.eigenvalues))
    # operator norm on L^2(mu) via power iteration on F^H F
    x = np.ones(32) + np.arange(32) / 32
    for _ in range(500):
        x = F.conj().T @ (F @ x)
        x /= np.linalg.norm(x)
    est = np.linalg.norm(F @ x)
    assert est == pytest.approx(np.abs(m(A.eigenvalues)).max(), rel=1e-8)


def test_semigroup_kernel_examples(z8):
    A = spectral_decompose(build_operator("graph_laplacian", z8), z8)
    np.testing.assert_allclose(semigroup_kernel(A, 0), np.eye(8), atol=1e-14)
    oracle = scipy.linalg.expm(-A.matrix)
    for method in ("spectral", "series", "auto"):
        np.testing.assert_allclose(semigroup_kernel(A, 1.0, method), oracle, atol=1e-9)
    for t in (0.1, 1.0, 10.0):
        np.testing.assert_allclose(semigroup_kernel(A, t).sum(axis=1), 1, atol=1e-12)


def test_kernel_weighted_measure():
    ws = _weighted_space()
    A = spectral_decompose(build_operator("graph_laplacian", ws), ws)
    np.testing.assert_allclose(semigroup_kernel(A, 0), np.diag(1 / ws.mu), atol=1e-12)
    K = semigroup_kernel(A, 2.0)
    np.testing.assert_allclose((K * ws.mu[None, :]).sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(semigroup_kernel(A, 2.0, "series"), K, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0, 3), b=st.floats(-3, 3), c=st.floats(0, 3), d=st.floats(-3, 3))
def test_semigroup_law(a, b, c, d):
    space = build_model_space("cycle", n=8)
    A = spectral_decompose(build_operator("graph_laplacian", space), space)
    z, w = complex(a, b), complex(c, d)
    lhs = semigroup_kernel(A, z + w)
    rhs = semigroup_kernel(A, z) @ semigroup_kernel(A, w)  # counting measure
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_window_support():
    t = np.linspace(0, 3, 3001)
    w = window(t)
    assert np.all(w[(t <= 0.5) | (t >= 2)] == 0)
    assert np.all(w[(t > 0.51) & (t < 1.99)] > 0)
    assert window(np.array([1.25]))[0] == pytest.approx(1.0)


def test_hormander_norm_zero_and_homogeneity():
    params = HormanderNormParams(beta=1.5)
    assert hormander_norm(Multiplier.constant(0), params) == 0
    f = Multiplier.heat(1)
    n1 = hormander_norm(f, params)
    n2 = hormander_norm(lambda t: -3 * f(t), params)
    assert n2 == pytest.approx(3 * n1, rel=1e-12)


def test_hormander_dilation_invariance():
    params = HormanderNormParams(beta=2.0)
    f = Multiplier.bump(1.0)
    base = hormander_norm(f, params)
    for j in (-8, 3, 8):
        c = 2 ** (j / 8)
        assert hormander_norm(f.dilate(c), params) == pytest.approx(base, rel=1e-6)


def test_bochner_riesz_u_independence():
    params = HormanderNormParams(beta=1.5)
    vals = [hormander_norm(Multiplier.bochner_riesz(2.0, u), params) for u in (0.25, 1.0, 4.0)]
    assert max(vals) / min(vals) - 1 < 1e-6


def test_hormander_monotone_in_beta():
    f = Multiplier.wave_resolvent(1.5, 1.0)
    vals = [hormander_norm(f, beta=b) for b in (0.75, 1.0, 1.5, 2.0, 3.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_hormander_integer_examples():
    assert hormander_norm_integer(Multiplier.constant(0), 1) == 0
    f = Multiplier.heat(1)
    v1, v2 = hormander_norm_integer(f, 1), hormander_norm_integer(f, 2)
    assert 0 < v1 <= v2 < math.inf


def test_hormander_integer_calibration():
    family = [Multiplier.heat(1), Multiplier.bump(1.0), Multiplier.bochner_riesz(2.0, 1.0),
              Multiplier.wave_resolvent(1.5, 1.0)]
    ratios = [hormander_norm_integer(f, 1) / hormander_norm(f, beta=1.0) for f in family]
    assert max(ratios) / min(ratios) < 10


def test_mihlin_examples():
    assert mihlin_norm(Multiplier.constant(2.5), 2) == pytest.approx(2.5)
    assert mihlin_norm(Multiplier.constant(0), 2) == 0
    assert mihlin_norm(Multiplier.heat(1), 1) >= 1 / math.e - 1e-6


def test_partition_examples():
    P = build_partition(-10, 10)
    assert P.total(np.array([1.0]))[0] == pytest.approx(1, abs=1e-12)
    t = np.geomspace(*P.covered, 2000)
    assert np.abs(P.total(t) - 1).max() < 1e-10
    for k in (-3, 0, 4):
        np.testing.assert_array_equal(P.phi(k, t), P.phi0(t * 2.0**-k))
        s = np.geomspace(2.0 ** (k - 3), 2.0 ** (k + 3), 4000)
        vals = P.phi(k, s)
        assert np.all(vals[(s <= 2.0 ** (k - 1)) | (s >= 2.0 ** (k + 1))] == 0)
    assert P.psi(0, np.array([0.0]))[0] == 1
    lo = np.geomspace(2.0**-9, 2.0**9, 500)
    total = P.psi(0, lo) + sum(P.psi(n, lo) for n in range(1, 11))
    np.testing.assert_allclose(total, 1, atol=1e-10)


def test_calculus_agrees_with_direct(z32_laplacian, rng):
    A = z32_laplacian
    P = build_partition()
    f = A.project_range(rng.standard_normal((32, 2)))
    for mult in (Multiplier.heat(1), Multiplier.bochner_riesz(2, 1), Multiplier.identity()):
        out = calculus_apply(mult, A, P, 6, f)
        np.testing.assert_allclose(out, apply_multiplier(mult, A, f), atol=1e-9)
    np.testing.assert_allclose(calculus_apply(Multiplier.constant(1), A, P, 6, f), f, atol=1e-10)
    with pytest.warns(SpectrumNotCoveredWarning):
        _, res = calculus_apply(Multiplier.heat(1), A, P, 1, f, return_residual=True)
    assert res > 0
    assert calculus_residual(A, P, 6) < 1e-10


def test_paley_littlewood_examples(z32_laplacian, rng):
    one = build_model_space("custom", dist=[[0.0]])
    A1 = spectral_decompose(np.eye(1), one)
    P = build_partition(-6, 6)
    res = paley_littlewood([[2.0, -1.0]], A1, 2, LatticeSpec.sequence(2, 2), P)
    lam1 = math.sqrt(sum(P.phi(k, np.array([1.0]))[0] ** 2 for k in range(-6, 7)))
    assert res.ratio_phi == pytest.approx(lam1, rel=1e-12)
    A = z32_laplacian
    H = LatticeSpec.sequence(2, 2)
    zero = paley_littlewood(np.zeros((32, 2)), A, 2, H, P)
    assert (zero.norm, zero.square_norm_phi, zero.square_norm_psi) == (0, 0, 0)
    for _ in range(5):
        r = paley_littlewood(A.project_range(rng.standard_normal((32, 2))), A, 2, H, P)
        for q in (r.ratio_phi, r.ratio_psi):
            assert 1 / math.sqrt(3) <= q <= math.sqrt(3)


def test_membership_examples():
    rows = membership_check(Multiplier.wave_resolvent(1.0, 1.0), [2.0])
    assert rows[0]["finite"]
    rows = membership_check(Multiplier.wave_resolvent(0.5, 1.0), [2.0])
    assert not rows[0]["finite"]
    rows = membership_check(Multiplier.constant(1.0), [1.0, 3.0])
    assert all(r["finite"] for r in rows)
    assert membership_check(Multiplier.bochner_riesz(1.75, 1.0), [2.0])[0]["finite"]
    assert not membership_check(Multiplier.bochner_riesz(0.75, 1.0), [2.0])[0]["finite"]


def test_multiplier_specs():
    m = Multiplier.from_spec({"name": "bochner_riesz", "delta": 2, "u": 1})
    assert m(np.array([0.0, 0.5, 2.0])).tolist() == [1.0, 0.25, 0.0]
    assert Multiplier.from_spec("identity")(np.array([3.0]))[0] == 3.0
    with pytest.raises(Exception):
        Multiplier.from_spec({"name": "heat", "bogus": 1})


def test_series_kernel_long_time(z32_laplacian):
    for t in (100.0, 1e3, 1e5):
        np.testing.assert_allclose(semigroup_kernel(z32_laplacian, t, "series"),
                                   semigroup_kernel(z32_laplacian, t), atol=1e-12)
