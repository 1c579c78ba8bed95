import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fracslice.estimators import ProjectedDensityEstimator, RegimeClassifier
from fracslice.groups import coordinate_subspace
from fracslice.ifs import attractor_atoms, cantor_ifs
from fracslice.slice import LABELS


def test_uniform_atoms_have_unit_density():
    X = (np.arange(4096)[:, None] + 0.5) / 4096
    est = ProjectedDensityEstimator(resolution=1 / 4096).fit(X)
    out = est.transform([[0.3], [0.6]])
    assert out.shape == (2, 2)
    np.testing.assert_allclose(out, 1.0, atol=0.05)
    assert np.all(out[:, 0] <= out[:, 1])


def test_projection_to_axis_matches_marginal():
    rng = np.random.default_rng(0)
    X = np.column_stack([(np.arange(2048) + 0.5) / 2048, rng.random(2048)])
    V = coordinate_subspace(2, [1])  # project onto the first coordinate
    est = ProjectedDensityEstimator(subspace=V, resolution=1 / 2048).fit(X)
    assert est.exponent_ == 1 and est.n_features_in_ == 2
    np.testing.assert_allclose(est.transform([[0.5, 0.9]]), 1.0, atol=0.05)


def test_sample_weight_is_normalized():
    mu = attractor_atoms(cantor_ifs(0.25), 8)
    a = ProjectedDensityEstimator(resolution=mu.resolution).fit(mu.points)
    b = ProjectedDensityEstimator(resolution=mu.resolution).fit(mu.points, sample_weight=np.full(mu.n_atoms, 3.0))
    np.testing.assert_allclose(a.transform([[0.0]]), b.transform([[0.0]]))


def test_estimator_api():
    est = ProjectedDensityEstimator(levels=5)
    assert clone(est).get_params()["levels"] == 5
    with pytest.raises(NotFittedError):
        est.transform([[0.0]])
    with pytest.raises(TypeError):
        ProjectedDensityEstimator(subspace="x").fit(np.zeros((3, 2)))


def test_regime_classifier():
    X = np.vstack([np.ones(40), 1.5 ** np.arange(40), 1.5 ** -np.arange(40.0)])
    clf = RegimeClassifier().fit()
    assert list(clf.classes_) == list(LABELS)
    np.testing.assert_array_equal(clf.predict(X), LABELS[:3])
    assert RegimeClassifier(min_length=10).fit().predict(np.ones(12))[0] == LABELS[0]
    with pytest.raises(ValueError):
        clf.predict(np.ones(12))
