import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smlab.space import (
    InvalidMetricError,
    MetricMeasureSpace,
    annulus,
    ball,
    build_model_space,
    doubling_constant,
    format_matrix_text,
    parse_matrix_text,
    read_space,
    scan_radii,
    volume,
    volume_comparability,
    volumes,
    write_space,
)


def _brute_doubling(space):
    """Sup of V(x,2r)/V(x,r) over a dense radius scan (left limits included via tiny offsets)."""
    d = space.distinct_distances
    radii = np.concatenate([d[d > 0], d[d > 0] - 1e-9, (d[:-1] + d[1:]) / 2, d[d > 0] / 2 - 1e-9])
    radii = radii[radii > 0]
    best = 1.0
    for x in range(space.n):
        for r in radii:
            best = max(best, volume(space, x, 2 * r) / volume(space, x, r))
    return best


def test_ball_on_z8(z8):
    assert sorted(ball(z8, 0, 1).tolist()) == [0, 1, 7]
    assert ball(z8, 3, 0).tolist() == [3]
    assert len(ball(z8, 2, z8.diameter)) == 8


def test_volume_on_z8(z8):
    assert volume(z8, 0, 1) == 3
    assert volume(z8, 5, 0) == 1
    assert volume(z8, 5, 100) == z8.total_mass


def test_doubling_examples(z8):
    assert doubling_constant(z8).C_D == 3
    two = build_model_space("custom", dist=[[0, 1], [1, 0]])
    assert doubling_constant(two).C_D == 2
    one = build_model_space("custom", dist=[[0.0]])
    assert doubling_constant(one).C_D == 1
    assert volume_comparability(one) == 1


@pytest.mark.parametrize("kind,params", [("cycle", {"n": 9}), ("path", {"n": 7}), ("torus", {"n": 3, "dim": 2}),
                                         ("cloud", {"n": 15, "dim": 2, "seed": 4})])
def test_doubling_matches_dense_scan(kind, params):
    space = build_model_space(kind, **params)
    prof = doubling_constant(space)
    assert prof.C_D == pytest.approx(_brute_doubling(space), rel=1e-12)
    # the bound holds at every scanned radius
    r = scan_radii(space)
    assert np.all(volumes(space, 2 * r) <= prof.C_D * volumes(space, r) * (1 + 1e-12))


def test_dimension_fit_bound_holds():
    space = build_model_space("torus", n=5, dim=2)
    prof = doubling_constant(space)
    assert prof.d >= 0 and prof.C_d >= 1 and prof.d_min <= prof.d + 1e-12 or prof.C_d <= 16
    r = scan_radii(space)
    for j in range(1, 17):
        lam = 2 ** (j / 4)
        ratio = volumes(space, lam * r) / volumes(space, r)
        assert np.all(ratio <= prof.C_d * lam**prof.d * (1 + 1e-9))


def test_annulus_examples(z8):
    assert sorted(annulus(z8, 0, 1, 1).tolist()) == [2, 6]
    assert sorted(annulus(z8, 0, 1, 0).tolist()) == sorted(ball(z8, 0, 1).tolist())
    assert annulus(z8, 0, 10, 3).size == 0


@settings(max_examples=30, deadline=None)
@given(x=st.integers(0, 7), r=st.floats(0.3, 5.0))
def test_annuli_partition_space(x, r):
    space = build_model_space("cycle", n=8)
    seen = []
    for k in range(0, 40):
        seen.extend(annulus(space, x, r, k).tolist())
    assert sorted(seen) == list(range(8))


def test_volume_comparability_examples(z8):
    assert volume_comparability(z8) == 1
    mu = np.ones(8)
    mu[0] = 2
    space = build_model_space("cycle", n=8, mu=mu)
    C = volume_comparability(space)
    radii = scan_radii(space)
    worst = 1.0
    for r in radii:
        V = volumes(space, [r])[:, 0]
        close = space.dist <= r
        ratios = V[None, :] / V[:, None]
        worst = max(worst, ratios[close].max())
    assert C == pytest.approx(worst)
    assert C > 1


def test_ball_monotone(rng):
    space = build_model_space("cloud", n=30, dim=2, seed=1)
    for x in range(0, 30, 7):
        r1, r2 = sorted(rng.uniform(0, 1, 2))
        assert set(ball(space, x, r1)) <= set(ball(space, x, r2))


def test_triangle_violation_rejected():
    dist = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    with pytest.raises(InvalidMetricError):
        MetricMeasureSpace(dist, np.ones(3))


def test_invalid_inputs_rejected():
    with pytest.raises(InvalidMetricError):
        MetricMeasureSpace(np.array([[0, 1], [2, 0]], dtype=float), np.ones(2))
    with pytest.raises(InvalidMetricError):
        MetricMeasureSpace(np.array([[0, 1], [1, 0]], dtype=float), np.array([1.0, 0.0]))


def test_model_spaces():
    torus = build_model_space("torus", n=4, dim=2)
    assert torus.n == 16 and torus.diameter == 4
    cloud = build_model_space("cloud", n=50, dim=2, seed=0)
    D = cloud.dist
    for i, j, k in itertools.product(range(0, 50, 9), repeat=3):
        assert D[i, j] <= D[i, k] + D[k, j] + 1e-12


def test_text_roundtrip(tmp_path):
    mu = np.array([1.0, 2.5, 0.25])
    space = build_model_space("path", n=3, mu=mu)
    path = tmp_path / "s.txt"
    write_space(space, path)
    back = read_space(path)
    np.testing.assert_array_equal(back.dist, space.dist)
    np.testing.assert_array_equal(back.mu, mu)
    text = "# comment\n" + format_matrix_text(mu, space.dist)
    m2, d2 = parse_matrix_text(text)
    np.testing.assert_array_equal(d2, space.dist)
