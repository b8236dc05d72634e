import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plda_map.lnorm import LnConfig, length_normalize, normalize_latent, scale_factor, surface_residual
from plda_map.plda import PldaModel
from plda_map.shrinkage import EpsilonEstimate, Provenance, map_epsilon


def test_on_surface_scale_is_one():
    cfg = LnConfig([3.0, 1.0])
    # 4^2/4 + 0 = 4 = 2 * p... pick a point with sum y^2/(eps+1) = 2
    y = np.array([2.0, np.sqrt(2.0)])  # 4/4 + 2/2 = 2
    assert scale_factor(cfg, y) == pytest.approx(1.0)


def test_zero_eps_hand_value():
    p = 4
    cfg = LnConfig(np.zeros(p))
    y = np.full(p, 2.0)  # |y|^2 = 16 = 4p
    assert scale_factor(cfg, y) == pytest.approx(0.5)


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        scale_factor(LnConfig([1.0, 1.0]), [0.0, 0.0])
    model = PldaModel([1.0, 2.0], np.eye(2), [1.0, 1.0])
    with pytest.raises(ValueError):
        length_normalize(model, LnConfig([1.0, 1.0]), [1.0, 2.0])


@given(
    y=arrays(float, 6, elements=st.floats(-50, 50)).filter(lambda v: np.abs(v).max() > 1e-3),
    eps=arrays(float, 6, elements=st.floats(0, 100)),
)
def test_surface_membership(y, eps):
    cfg = LnConfig(eps)
    out = normalize_latent(cfg, y)
    assert surface_residual(cfg, out) < 1e-9
    assert np.max(np.abs(normalize_latent(cfg, out) - out)) <= 1e-9 * max(1.0, np.abs(out).max())


def test_length_normalize_is_latent_scaled():
    model = PldaModel([1.0, -1.0, 0.0], [[2.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]], [4.0, 1.0, 0.1])
    cfg = LnConfig(model.epsilon)
    x = np.array([3.0, 0.5, 1.2])
    y = model.to_latent(x)
    out = length_normalize(model, cfg, x)
    assert out == pytest.approx(scale_factor(cfg, y) * y)
    # scaling the latent input leaves the output unchanged
    x2 = model.from_latent(3.7 * y)
    assert length_normalize(model, cfg, x2) == pytest.approx(out, rel=1e-12)


def test_on_surface_vector_unchanged():
    model = PldaModel.identity([3.0, 1.0])
    y = np.array([2.0, np.sqrt(2.0)])
    assert length_normalize(model, LnConfig(model.epsilon), y) == pytest.approx(y, rel=1e-12)


def test_ln_map_prior_dominated_closed_form():
    p = 5
    rng = np.random.default_rng(0)
    ml = EpsilonEstimate(rng.random(p) * 10, Provenance.ML_EM, 100)
    eps_map = map_epsilon(ml, 1e15, 1.0)
    model = PldaModel.identity(ml.epsilon)
    x = rng.standard_normal(p)
    out = length_normalize(model, LnConfig(eps_map), x)
    assert out == pytest.approx(np.sqrt(p / (x @ x) * 2) * x, rel=1e-9)


def test_batch_rows_independent():
    cfg = LnConfig([2.0, 0.5])
    ys = np.array([[1.0, 2.0], [-3.0, 0.1], [0.2, 0.2]])
    batch = normalize_latent(cfg, ys)
    for row, out in zip(ys, batch):
        assert normalize_latent(cfg, row) == pytest.approx(out, rel=1e-15)


def test_map_discounts_large_variance():
    # where MAP lowers eps_j, LN/MAP divides by a smaller lambda_j
    ml = EpsilonEstimate(np.array([25.0, 4.0, 0.3]), Provenance.ML_EM, 60)
    shrunk = map_epsilon(ml, 60, 1.0)
    lam_ml = LnConfig(ml).total_variance
    lam_map = LnConfig(shrunk).total_variance
    lower = shrunk.epsilon < ml.epsilon
    assert np.array_equal(lower, [True, True, False])
    assert np.all(lam_map[lower] < lam_ml[lower])
