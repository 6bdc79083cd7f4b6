import math

import numpy as np
import pytest

from smlab.dyadic import build_dyadic_system
from smlab.estimates import (
    DegenerateGridError,
    HeightTooLowError,
    check_gge,
    complex_time_profile,
    cz_decompose,
    dispersive_check,
    fit_gaussian,
    ge_implies_gge,
    multiplier_square_batch,
    multiplier_square_test,
    r_bound_estimate,
    semigroup_rbound_profile,
)
from smlab.lattice import LatticeSpec
from smlab.space import build_model_space, volumes
from smlab.spectral import (
    Multiplier,
    build_operator,
    semigroup_kernel,
    spectral_decompose,
)

T_GRID = np.geomspace(0.1, 10, 12)


@pytest.fixture(scope="module")
def ge_fit(z32_laplacian):
    return fit_gaussian(z32_laplacian, 2, T_GRID)


def _independent_ge_scan(A, fit):
    """Re-verify the fitted bound at every (t, x, y) without the fitter's code path."""
    space = A.space
    gamma = fit.m / (fit.m - 1)
    worst = -math.inf
    for t in fit.t_grid:
        r = t ** (1 / fit.m)
        K = semigroup_kernel(A, t)
        V = volumes(space, [r])[:, 0]
        bound = fit.C / V[:, None] * np.exp(-fit.c * (space.dist / r) ** gamma)
        worst = max(worst, float((np.abs(K) / bound).max()))
    return worst


def test_ge_fit_passes_and_reverifies(z32_laplacian, ge_fit):
    assert ge_fit.passed and ge_fit.residual <= 0
    assert _independent_ge_scan(z32_laplacian, ge_fit) <= 1 + 1e-12
    assert len(ge_fit.feasible) > 1


def test_ge_zero_operator(z32):
    A = spectral_decompose(np.zeros((32, 32)), z32)
    fit = fit_gaussian(A, 2, T_GRID)
    r = T_GRID.max() ** 0.5
    expect = float((volumes(z32, [r])[:, 0] / z32.mu).max())
    assert fit.C == pytest.approx(expect, rel=1e-9)


def test_ge_far_coupling_flagged(z32):
    A = spectral_decompose(build_operator("far_coupling", z32), z32)
    fit = fit_gaussian(A, 2, T_GRID)
    assert fit.flagged and not fit.passed


def test_ge_degenerate_grid(z32_laplacian):
    with pytest.raises(DegenerateGridError):
        fit_gaussian(z32_laplacian, 2, [])
    with pytest.raises(DegenerateGridError):
        fit_gaussian(z32_laplacian, 2, [-1.0, 1.0])


def test_ge_implies_gge(z32_laplacian, ge_fit):
    ok, C2, c2, residual = ge_implies_gge(ge_fit, z32_laplacian)
    assert ok and residual <= 0
    gge = check_gge(z32_laplacian, 1, 2, T_GRID)
    assert gge.passed


def test_gge_long_time(z32_laplacian):
    gge = check_gge(z32_laplacian, 1, 2, np.array([50.0, 200.0, 1000.0]))
    assert gge.passed


def test_gge_modes(z32_laplacian):
    exact2 = check_gge(z32_laplacian, 2, 2, T_GRID[::3])
    assert exact2.mode == "exact" and exact2.passed
    mid = check_gge(z32_laplacian, 1.5, 2, T_GRID[::3], samples=8)
    assert mid.mode != "exact"
    assert np.all(mid.lower <= mid.upper * (1 + 1e-9))


def test_gge_single_point():
    one = build_model_space("custom", dist=[[0.0]], mu=[2.0])
    A = spectral_decompose(np.zeros((1, 1)), one)
    assert check_gge(A, 1, 2, [1.0, 2.0]).passed


def test_complex_profile(z32_laplacian, ge_fit):
    prof = complex_time_profile(z32_laplacian, ge_fit, np.linspace(0, 1.45, 8))
    assert prof.s[0] <= ge_fit.C * (1 + 1e-9)
    assert math.isfinite(prof.d_hat) and 0 <= prof.r2 <= 1
    assert prof.passed


def test_dispersive_examples(z32_laplacian):
    small = dispersive_check(z32_laplacian, 1, np.array([1e-6, 2e-6]))
    assert small.norms[0] == pytest.approx(1.0, rel=1e-5)
    ts = np.geomspace(0.5, 50, 20)
    synth = dispersive_check(lambda t: np.full((3, 3), abs(t) ** -0.75), 1.5, ts, cutoff=None)
    assert synth.e_hat == pytest.approx(0.75, abs=1e-6)
    fit = dispersive_check(z32_laplacian, 1)
    assert 2 <= fit.cutoff <= fit.t_grid.size and math.isfinite(fit.e_hat)


def test_cz_spike_example(z8):
    system = build_dyadic_system(z8, 0.5, 0)
    f = np.zeros(8)
    f[2] = 40.0
    cz = cz_decompose(z8, system, f, 20.0)
    assert len(cz.cubes) == 1
    assert cz.c_mass <= 2 and cz.passed
    np.testing.assert_allclose(cz.g + sum(cz.parts), f, atol=1e-12)


def test_cz_no_bad_cubes(z8, rng):
    system = build_dyadic_system(z8, 0.5, 0)
    f = rng.uniform(-1, 1, 8)
    cz = cz_decompose(z8, system, f, 1.0)
    assert cz.cubes == [] and np.array_equal(cz.g, f)


def test_cz_properties(rng):
    space = build_model_space("cloud", n=40, dim=2, seed=2)
    system = build_dyadic_system(space, 0.5, 0)
    for _ in range(10):
        f = rng.standard_normal(40) * (rng.random(40) < 0.3) * 10
        l1 = float((space.mu * np.abs(f)).sum())
        lam = 2 * l1 / space.total_mass + 0.5
        cz = cz_decompose(space, system, f, lam)
        assert cz.passed and cz.reconstruction_error <= 1e-12
        assert np.all(np.abs(cz.g) <= cz.c_g * lam + 1e-12)
        for part, ball in zip(cz.parts, cz.balls):
            assert np.all(part[~ball] == 0)
            assert abs(float((space.mu * part).sum())) < 1e-10
        assert sum(float(space.mu[b].sum()) for b in cz.balls) <= cz.c_sum * l1 / lam + 1e-9


def test_cz_height_too_low(z8):
    system = build_dyadic_system(z8, 0.5, 0)
    with pytest.raises(HeightTooLowError):
        cz_decompose(z8, system, np.ones(8), 0.5)


def test_r_bound_examples(z8, z32_laplacian):
    H = LatticeSpec.sequence(2, 2)
    assert r_bound_estimate([np.eye(8)] * 3, 2, H, z8, trials=8) == pytest.approx(1.0)
    J = 3
    est = r_bound_estimate([j * np.eye(8) for j in range(1, J + 1)], 2, H, z8, trials=16)
    assert est == pytest.approx(J, rel=1e-9)
    A = z32_laplacian
    T = A.function_matrix(Multiplier.wave_resolvent(0.5, 1.0)(A.eigenvalues))
    norm = float(np.abs(Multiplier.wave_resolvent(0.5, 1.0)(A.eigenvalues)).max())
    single = r_bound_estimate([T], 2, H, A.space, trials=8)
    assert abs(single - norm) <= 1e-9


def test_r_bound_monotone_in_family(z32_laplacian):
    A = z32_laplacian
    Y = LatticeSpec.sequence(1.5, 4)
    ops = [semigroup_kernel(A, t) for t in (0.5, 2.0)]
    a = r_bound_estimate(ops, 3, Y, A.space, trials=8, seed=1)
    b = r_bound_estimate(ops + [semigroup_kernel(A, 1j)], 3, Y, A.space, trials=8, seed=1)
    assert b >= a - 1e-12


def test_rbound_profile_examples(z32, z32_laplacian):
    H = LatticeSpec.sequence(2, 2)
    prof = semigroup_rbound_profile(z32_laplacian, 2, H, np.array([0.0]), trials=4)
    assert prof.r_hat[0] <= 1 + 1e-9
    zero = spectral_decompose(np.zeros((32, 32)), z32)
    prof0 = semigroup_rbound_profile(zero, 3, LatticeSpec.sequence(1.5, 4), np.linspace(0, 1.4, 4), trials=4)
    assert prof0.alpha_hat == pytest.approx(0.0, abs=1e-12)


def test_square_test_examples(z32_laplacian, rng):
    A = z32_laplacian
    Y = LatticeSpec.sequence(1.5, 2)
    f = rng.standard_normal((32, 2))
    res = multiplier_square_test(A, 3, Y, [Multiplier.constant(1.0)], [f], 1.0)
    assert res.C_hat <= 1 + 1e-12
    # eigenvector at lambda = 0 against multipliers vanishing there
    v = np.outer(A.eigenvectors[:, 0], [1.0, 0.5])
    res0 = multiplier_square_test(A, 3, Y, [Multiplier.bump(2.0)], [v], 1.0)
    assert res0.numerator == pytest.approx(0.0, abs=1e-12)
    br = [Multiplier.bochner_riesz(2.0, u) for u in (0.5, 1.0, 2.0)]
    res_br = multiplier_square_test(A, 3, Y, br, [rng.standard_normal((32, 2)) for _ in br], 1.0)
    assert 0 < res_br.C_hat < math.inf


def test_square_batch_deterministic(z32_laplacian):
    Y = LatticeSpec.sequence(1.5, 2)
    a = multiplier_square_batch(z32_laplacian, 3, Y, 1.5, families=3, K=3, seed=7)
    b = multiplier_square_batch(z32_laplacian, 3, Y, 1.5, families=3, K=3, seed=7)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a)) and np.all(a > 0)
