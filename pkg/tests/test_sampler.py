import numpy as np
import pytest
from scipy.stats import chisquare

from aloq_schema import ChainConfig
from errors import NumericalError
from sampler import slice_sample


def standard_normal(x):
    return float(-0.5 * x @ x)


def unit_uniform(x):
    return 0.0 if np.all((x >= 0) & (x <= 1)) else -np.inf


def batch_mcse(values, n_batches=50):
    batches = values.reshape(n_batches, -1).mean(axis=1)
    return batches.std(ddof=1) / np.sqrt(n_batches)


def test_standard_normal_moments():
    config = ChainConfig(seed=7, n_samples=5000, burn_in=100, thinning=1, initial_point=[0.0])
    draws = slice_sample(standard_normal, config)[:, 0]

    assert abs(draws.mean()) < 3 * batch_mcse(draws)
    assert abs(np.mean(draws ** 2) - 1.0) < 3 * batch_mcse(draws ** 2)


def test_uniform_target_passes_chi_square():
    config = ChainConfig(seed=11, n_samples=10000, burn_in=10, thinning=1, initial_point=[0.5],
                         lower=[0.0], upper=[1.0])
    draws = slice_sample(unit_uniform, config)[:, 0]
    counts, _ = np.histogram(draws, bins=10, range=(0.0, 1.0))
    assert chisquare(counts).pvalue > 0.001


def test_same_config_gives_identical_chain():
    config = ChainConfig(seed=5, n_samples=50, burn_in=10, thinning=2, initial_point=[0.3, -0.2])
    np.testing.assert_array_equal(slice_sample(standard_normal, config), slice_sample(standard_normal, config))


def test_every_sample_has_finite_density():
    def half_normal(x):
        return standard_normal(x) if x[0] > 0 else -np.inf

    config = ChainConfig(seed=1, n_samples=200, burn_in=10, thinning=1, initial_point=[1.0])
    draws = slice_sample(half_normal, config)
    assert all(np.isfinite(half_normal(d)) for d in draws)


def test_zero_thinning_records_initial_state():
    config = ChainConfig(seed=0, n_samples=3, burn_in=0, thinning=0, initial_point=[0.4, 0.6])
    np.testing.assert_array_equal(slice_sample(standard_normal, config), [[0.4, 0.6]] * 3)


def test_non_finite_initial_point():
    config = ChainConfig(seed=0, n_samples=1, initial_point=[2.0])
    with pytest.raises(NumericalError):
        slice_sample(unit_uniform, config)


def test_collapsed_slice_names_the_coordinate():
    def spike(x):
        return 0.0 if x[0] == 0.25 else -np.inf

    config = ChainConfig(seed=0, n_samples=1, burn_in=0, thinning=1, initial_point=[0.25], max_shrinks=20)
    with pytest.raises(NumericalError) as excinfo:
        slice_sample(spike, config)
    assert excinfo.value.coordinate == 0
