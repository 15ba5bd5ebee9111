import numpy as np
import pytest

from kernel_gp import Dataset, gp_fit, gp_predict
from quadrature import (
    ContinuousEnv, DiscreteEnv, MarginalEstimate, QuadratureModel, fbar_moments, lookahead_variance,
    lookahead_variances, select_theta, to_unit_box, uncertainty_sampling_theta,
)
from tests.conftest import make_sample, random_dataset, random_warp


def support_queries(pi, support):
    return np.hstack([np.tile(pi, (support.shape[0], 1)), support])


def brute_force_moments(post, pi, env):
    mean, cov = gp_predict(post, support_queries(pi, env.support))
    p = env.weights
    return float(p @ mean), float(p @ cov @ p)


@pytest.fixture
def posterior(rng):
    data = random_dataset(rng, 9, 1, 1)
    return gp_fit(data, make_sample(2, lengthscales=[0.5, 0.3], warp=random_warp(rng, 2)))


def test_single_support_point_equals_prediction(posterior):
    env = DiscreteEnv(np.array([[0.3]]), np.array([1.0]))
    pi = np.array([0.6])
    est = fbar_moments(pi, posterior, env)
    mean, var = gp_predict(posterior, np.array([[0.6, 0.3]]), full_cov=False)
    assert est.mean == pytest.approx(mean[0], abs=1e-12)
    assert est.variance == pytest.approx(var[0], abs=1e-12)


def test_perfectly_correlated_points():
    # a very long environment lengthscale makes f(pi, .) constant in theta
    post = gp_fit(Dataset(np.array([[0.5, 0.5]]), [1.0], 1),
                  make_sample(2, lengthscales=[0.5, 1e6], noise=0.1))
    env = DiscreteEnv(np.array([[0.1], [0.9]]), np.array([0.5, 0.5]))
    est = fbar_moments(np.array([0.2]), post, env)
    mean, var = gp_predict(post, np.array([[0.2, 0.1]]), full_cov=False)
    assert est.mean == pytest.approx(mean[0], abs=1e-10)
    assert est.variance == pytest.approx(var[0], abs=1e-10)


def test_weighted_sum_matches_exhaustive_oracle(rng):
    for _ in range(10):
        data = random_dataset(rng, int(rng.integers(3, 15)), 2, 1)
        samples = [make_sample(3, lengthscales=rng.uniform(0.2, 0.8, 3), warp=random_warp(rng, 3))
                   for _ in range(int(rng.integers(1, 4)))]
        post = gp_fit(data, samples)
        env = DiscreteEnv.renormalized(rng.random((12, 1)), rng.random(12))
        pi = rng.random(2)

        est = fbar_moments(pi, post, env)
        mean, var = brute_force_moments(post, pi, env)
        assert est.mean == pytest.approx(mean, abs=1e-10)
        assert est.variance == pytest.approx(var, abs=1e-10)


def test_uniform_weights_reduce_to_sample_average(posterior):
    support = np.linspace(0.05, 0.95, 7)[:, None]
    env = DiscreteEnv.uniform(support)
    pi = np.array([0.4])
    mean, cov = gp_predict(posterior, support_queries(pi, support))
    est = fbar_moments(pi, posterior, env)
    assert est.mean == pytest.approx(mean.sum() / 7, abs=1e-10)
    assert est.variance == pytest.approx(cov.sum() / 49, abs=1e-10)


def test_variance_vanishes_on_observed_support():
    support = np.array([[0.2], [0.7]])
    inputs = np.array([[0.5, 0.2], [0.5, 0.7]])
    post = gp_fit(Dataset(inputs, [1.0, -1.0], 1), make_sample(2, noise=0.0))
    est = fbar_moments(np.array([0.5]), post, DiscreteEnv(support, np.array([0.3, 0.7])))
    assert est.mean == pytest.approx(0.3 - 0.7, abs=1e-6)
    assert est.variance == pytest.approx(0.0, abs=1e-6)


def fabricated_lookahead(post, pi, theta_cand, env, y):
    """Condition on a made-up return at the candidate and recompute the fbar variance"""
    data = post.data
    augmented = Dataset(np.vstack([data.inputs, np.concatenate([pi, theta_cand])]),
                        np.append(data.returns, y), data.policy_dim)
    return brute_force_moments(gp_fit(augmented, post.samples), pi, env)[1]


def test_lookahead_is_independent_of_fabricated_value(rng):
    for _ in range(100):
        data = random_dataset(rng, int(rng.integers(2, 10)), 1, 1)
        post = gp_fit(data, make_sample(2, lengthscales=rng.uniform(0.2, 0.8, 2), noise=0.05,
                                        warp=random_warp(rng, 2)))
        env = DiscreteEnv.renormalized(rng.random((6, 1)), rng.random(6))
        pi = rng.random(1)
        theta_cand = env.support[int(rng.integers(6))]

        value = lookahead_variance(pi, theta_cand, post, env)
        first = fabricated_lookahead(post, pi, theta_cand, env, 123.456)
        second = fabricated_lookahead(post, pi, theta_cand, env, -7.0)
        assert first == pytest.approx(second, abs=1e-12)
        assert value == pytest.approx(first, abs=1e-9)
        assert value <= fbar_moments(pi, post, env).variance + 1e-10


def test_lookahead_at_duplicate_noiseless_input_changes_nothing():
    post = gp_fit(Dataset(np.array([[0.5, 0.3]]), [0.8], 1), make_sample(2, noise=0.0))
    env = DiscreteEnv.renormalized(np.array([[0.3], [0.6]]), np.array([1.0, 1.0]))
    pi = np.array([0.5])
    current = fbar_moments(pi, post, env).variance
    assert lookahead_variance(pi, np.array([0.3]), post, env) == pytest.approx(current, abs=1e-8)


def test_lookahead_observing_the_only_support_point():
    post = gp_fit(Dataset.empty(1, 1), make_sample(2, noise=0.0))
    env = DiscreteEnv(np.array([[0.4]]), np.array([1.0]))
    assert lookahead_variance(np.array([0.5]), np.array([0.4]), post, env) == pytest.approx(0.0, abs=1e-12)


def test_select_theta_single_point(posterior):
    env = DiscreteEnv(np.array([[0.42]]), np.array([1.0]))
    np.testing.assert_array_equal(select_theta(np.array([0.5]), posterior, env), [0.42])


def dense_at(pi, theta, n=5):
    inputs = np.tile(np.concatenate([pi, theta]), (n, 1))
    return Dataset(inputs, np.zeros(n), len(pi))


def test_select_theta_prefers_unobserved_point():
    pi = np.array([0.5])
    post = gp_fit(dense_at(pi, [0.2]), make_sample(2, lengthscales=[1.0, 0.1], noise=1e-2))
    env = DiscreteEnv(np.array([[0.2], [0.8]]), np.array([0.5, 0.5]))
    np.testing.assert_array_equal(select_theta(pi, post, env), [0.8])


def test_selected_theta_attains_exhaustive_minimum(rng, posterior):
    env = DiscreteEnv.renormalized(rng.random((15, 1)), rng.random(15))
    pi = np.array([0.35])
    chosen = select_theta(pi, posterior, env)
    scores = [lookahead_variance(pi, t, posterior, env) for t in env.support]
    assert lookahead_variance(pi, chosen, posterior, env) == pytest.approx(min(scores), abs=1e-12)
    np.testing.assert_allclose(lookahead_variances(pi, posterior, env), scores, atol=1e-12)


def test_uncertainty_sampling_prefers_unobserved_point():
    pi = np.array([0.5])
    post = gp_fit(dense_at(pi, [0.2]), make_sample(2, lengthscales=[1.0, 0.1], noise=1e-2))
    env = DiscreteEnv(np.array([[0.2], [0.8]]), np.array([0.5, 0.5]))
    np.testing.assert_array_equal(uncertainty_sampling_theta(pi, post, env), [0.8])


def test_uncertainty_sampling_ignores_weights():
    pi = np.array([0.5])
    post = gp_fit(dense_at(pi, [0.1], n=3), make_sample(2, lengthscales=[1.0, 0.1], noise=1e-2))
    env = DiscreteEnv(np.array([[0.1], [0.9]]), np.array([0.99, 0.01]))
    np.testing.assert_array_equal(uncertainty_sampling_theta(pi, post, env), [0.9])
    np.testing.assert_array_equal(select_theta(pi, post, env), [0.1])


def test_mixture_lookahead_averages_samples(rng):
    data = random_dataset(rng, 6, 1, 1)
    samples = [make_sample(2, lengthscales=[0.4, 0.3]), make_sample(2, w0=2.0, lengthscales=[0.6, 0.2])]
    env = DiscreteEnv.uniform(rng.random((5, 1)))
    pi = np.array([0.7])
    both = QuadratureModel(gp_fit(data, samples), env).lookahead_variances(pi)
    each = [QuadratureModel(gp_fit(data, s), env).lookahead_variances(pi) for s in samples]
    np.testing.assert_allclose(both, (each[0] + each[1]) / 2, atol=1e-14)


def test_discrete_env_validation():
    with pytest.raises(ValueError):
        DiscreteEnv(np.array([[0.1], [0.2]]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DiscreteEnv(np.array([[0.1], [0.2]]), np.array([1.5, -0.5]))
    env = DiscreteEnv.renormalized(np.array([0.1, 0.2]), np.array([2.0, 6.0]))
    np.testing.assert_allclose(env.probs, [0.25, 0.75])
    assert env.dim == 1


def test_discrete_draw_frequencies():
    probs = np.array([0.12, 0.5, 0.38])
    env = DiscreteEnv(np.array([[0.0], [1.0], [2.0]]), probs)
    draws = env.draw(np.random.default_rng(4), 10000)[:, 0]
    freq = np.array([np.mean(draws == v) for v in (0.0, 1.0, 2.0)])
    se = np.sqrt(probs * (1 - probs) / 10000)
    assert np.all(np.abs(freq - probs) < 3 * se)


def test_continuous_env_support_is_fixed_per_seed():
    def sampler(rng, n):
        return rng.uniform(-1.0, 1.0, (n, 1))

    env = ContinuousEnv(sampler, mc_count=150, seed=9)
    again = ContinuousEnv(sampler, mc_count=150, seed=9)
    np.testing.assert_array_equal(env.support, again.support)
    assert env.support.shape == (150, 1)
    np.testing.assert_allclose(env.weights.sum(), 1.0)
    unit = env.normalized([-1.0], [1.0])
    np.testing.assert_allclose(unit.support, (env.support + 1.0) / 2.0)
    with pytest.raises(ValueError):
        ContinuousEnv(sampler, mc_count=50)


def test_marginal_estimate_clamps_rounding():
    assert MarginalEstimate(1.0, -1e-12).variance == 0.0
    with pytest.raises(ValueError):
        MarginalEstimate(1.0, -1e-3)


def test_zero_width_env_box_normalizes_to_the_middle():
    env = DiscreteEnv.uniform(np.array([[0.5, 0.1], [0.5, 0.3]]))
    unit = env.normalized([0.5, 0.0], [0.5, 0.4])
    np.testing.assert_allclose(unit.support, [[0.5, 0.25], [0.5, 0.75]])

    def sampler(rng, n):
        return np.full((n, 1), 2.0)

    np.testing.assert_array_equal(ContinuousEnv(sampler, 100).normalized([2.0], [2.0]).support,
                                  np.full((100, 1), 0.5))
    np.testing.assert_allclose(to_unit_box([3.0, 7.0], [1.0, 7.0], [5.0, 7.0]), [0.5, 0.5])
