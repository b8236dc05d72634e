import numpy as np
import pytest

from oracles import sample_plda
from plda_map.data import LabeledDataset
from plda_map.errors import SingularCovarianceError
from plda_map.lda import fit_lda, load_lda, save_lda
from plda_map.plda import accumulate_stats, train_ml


def test_two_class_axis_direction():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((200, 2)) + [5.0, 0.0]
    b = rng.standard_normal((200, 2)) - [5.0, 0.0]
    data = LabeledDataset([0] * 200 + [1] * 200, np.vstack([a, b]))
    lda = fit_lda(data, 1)
    direction = lda.basis[0] / np.linalg.norm(lda.basis[0])
    assert abs(direction[0]) == pytest.approx(1.0, abs=0.02)


def test_full_rank_pass_through_preserves_structure(balanced_data):
    lda = fit_lda(balanced_data, balanced_data.dim)
    assert lda.d_out == lda.d_in == 3
    stats = accumulate_stats(balanced_data)
    # within scatter becomes I and between becomes diagonal: a rotation of the whitened space
    W = lda.basis @ stats.within_scatter @ lda.basis.T
    B = lda.basis @ stats.between_scatter @ lda.basis.T
    assert W == pytest.approx(np.eye(3), abs=1e-10)
    assert B == pytest.approx(np.diag(np.diag(B)), abs=1e-10)
    # PLDA is affine-equivariant, so the pass-through leaves epsilon unchanged
    before = train_ml(balanced_data).epsilon
    after = train_ml(balanced_data.transform(lda.apply)).epsilon
    assert after == pytest.approx(before, rel=1e-6)


def test_reduction_keeps_top_directions():
    rng = np.random.default_rng(1)
    labels, x = sample_plda(rng, [9.0, 0.01, 0.01, 4.0], K=300, n=5)
    lda = fit_lda(LabeledDataset(labels, x), 2)
    assert lda.d_out == 2
    assert np.all(np.diff(lda.eigenvalues) <= 0)
    # the two informative axes are 0 and 3
    weight = np.abs(lda.basis) / np.linalg.norm(lda.basis, axis=1, keepdims=True)
    assert set(np.argmax(weight, axis=1)) == {0, 3}


def test_identical_class_means_deterministic():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((40, 3))
    labels = np.repeat(np.arange(8), 5)
    for k in range(8):
        x[labels == k] -= x[labels == k].mean(axis=0)
    data = LabeledDataset(labels, x)
    a, b = fit_lda(data, 2), fit_lda(data, 2)
    assert np.allclose(a.eigenvalues, 0, atol=1e-12)
    assert np.array_equal(a.basis, b.basis)


def test_dimension_limits():
    rng = np.random.default_rng(3)
    labels, x = sample_plda(rng, [1.0] * 5, K=3, n=10)
    data = LabeledDataset(labels, x)
    with pytest.raises(ValueError):
        fit_lda(data, 3)  # K - 1 = 2
    assert fit_lda(data, 5).d_out == 5
    assert fit_lda(data, 2).d_out == 2


def test_singular_within():
    x = np.random.default_rng(4).standard_normal((30, 2))
    x[:, 1] = 0.0
    with pytest.raises(SingularCovarianceError):
        fit_lda(LabeledDataset(np.repeat(np.arange(6), 5), x), 1)


def test_file_round_trip(balanced_data, tmp_path):
    lda = fit_lda(balanced_data, 2)
    save_lda(lda, tmp_path / "lda.txt")
    back = load_lda(tmp_path / "lda.txt")
    assert np.array_equal(back.basis, lda.basis)
    assert np.array_equal(back.mean, lda.mean)
    assert np.array_equal(back.apply(balanced_data.vectors), lda.apply(balanced_data.vectors))
