import numpy as np
import pytest

from fiberuq.exceptions import InvalidParameter, MismatchedPairs
from uq.reliability import credibility_levels, reliability_diagram


def test_levels():
    levels = credibility_levels()
    assert levels.size == 30
    assert levels[0] == pytest.approx(1 / 31)
    assert levels[-1] == pytest.approx(30 / 31)


def test_self_consistent_predictions_lie_on_the_diagonal():
    rng = np.random.default_rng(0)
    mean = rng.normal(50.0, 10.0, size=(100, 20, 20))
    std = rng.uniform(0.5, 3.0, size=mean.shape)
    references = rng.normal(mean, std)
    diagram = reliability_diagram(references, mean=mean, std=std)
    assert diagram.n == 40_000
    assert np.all(np.abs(diagram.empirical - diagram.nominal) <= 4 * diagram.standard_error)


def test_empirical_quantile_intervals():
    rng = np.random.default_rng(1)
    samples = rng.normal(size=(400, 2000))
    references = rng.normal(size=2000)
    diagram = reliability_diagram(references, samples=samples, levels=10)
    assert diagram.calibration_error < 0.05


def test_overconfident_predictor_is_flagged():
    rng = np.random.default_rng(2)
    references = rng.normal(size=5000)
    diagram = reliability_diagram(references, mean=np.zeros(5000), std=np.full(5000, 0.05))
    assert np.all(diagram.empirical < 0.5 * diagram.nominal)
    assert diagram.calibration_error > 0.5
    assert diagram.accuracy < 0.2


def test_pairs_must_match():
    with pytest.raises(MismatchedPairs):
        reliability_diagram(np.zeros(5), mean=np.zeros(4), std=np.ones(4))
    with pytest.raises(MismatchedPairs):
        reliability_diagram(np.zeros(5), samples=np.zeros((10, 4)))
    with pytest.raises(InvalidParameter):
        reliability_diagram(np.zeros(5))


def test_precomputed_intervals():
    references = np.array([0.0, 1.0, 2.0, 3.0])
    lower = np.array([[-1.0, 0.5, 1.5, 3.5], [-2.0, 0.0, 1.0, 2.0]])
    upper = np.array([[1.0, 1.5, 1.8, 4.0], [2.0, 2.0, 3.0, 4.0]])
    diagram = reliability_diagram(references, intervals=(lower, upper), levels=[0.5, 0.9])
    assert diagram.empirical.tolist() == [0.5, 1.0]
    with pytest.raises(MismatchedPairs):
        reliability_diagram(references, intervals=(lower[:1], upper[:1]), levels=[0.5, 0.9])
