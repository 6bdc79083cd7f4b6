import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from smlab.dyadic import build_dyadic_system
from smlab.estimators import (
    CalderonZygmund,
    DoublingProfiler,
    GaussianEstimateFitter,
    HardyLittlewoodMaximal,
    SpectralMultiplier,
)
from smlab.maximal import m_hl_q
from smlab.spectral import Multiplier, apply_multiplier, build_operator


def test_doubling_profiler(z8):
    est = DoublingProfiler().fit(z8.dist)
    assert est.C_D_ == 3
    vols = est.transform(z8.dist)
    assert vols.shape[0] == 8
    assert clone(est).get_params() == {"radii": None}


def test_maximal_transformer(z8, rng):
    f = rng.standard_normal((8, 2))
    est = HardyLittlewoodMaximal(z8, q=2)
    with pytest.raises(NotFittedError):
        est.transform(f)
    np.testing.assert_array_equal(est.fit().transform(f), m_hl_q(z8, 2, f))


def test_spectral_multiplier(z32, z32_laplacian, rng):
    f = rng.standard_normal((32, 2))
    M = build_operator("graph_laplacian", z32)
    est = SpectralMultiplier(z32, {"name": "heat", "z": 0.5})
    out = est.fit(M).transform(f)
    np.testing.assert_allclose(out, apply_multiplier(Multiplier.heat(0.5), z32_laplacian, f))


def test_gaussian_fitter(z32):
    est = GaussianEstimateFitter(z32, t_grid=np.geomspace(0.1, 10, 6)).fit(build_operator("graph_laplacian", z32))
    assert est.fit_.passed and est.score() >= 0 and est.C_ > 0


def test_cz_transformer(z8):
    system = build_dyadic_system(z8, 0.5, 0)
    f = np.zeros(8)
    f[2] = 40.0
    est = CalderonZygmund(system, 20.0).fit()
    g = est.transform(f)
    np.testing.assert_allclose(g + sum(est.decomposition_.parts), f, atol=1e-12)
