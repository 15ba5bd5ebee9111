import numpy as np
import pytest

from acquisition_opt import (
    DirectOptimizer, aloq_objective, alpha_aloq, argmax_over_set, direct_maximize, ucb,
)
from errors import ConfigError
from kernel_gp import gp_fit
from quadrature import DiscreteEnv, QuadratureModel, fbar_moments
from tests.conftest import make_sample, random_dataset


def test_ucb_examples():
    assert ucb(2.0, 4.0, 1.5) == pytest.approx(5.0)
    assert ucb(-0.3, 9.0, 0.0) == pytest.approx(-0.3)
    values = [ucb(1.0, 0.25, k) for k in (0.0, 0.5, 1.0, 3.0)]
    assert values == sorted(values)


def test_alpha_aloq_uses_bq_moments(rng):
    post = gp_fit(random_dataset(rng, 8, 1, 1), make_sample(2))
    env = DiscreteEnv.uniform(np.linspace(0.1, 0.9, 5)[:, None])
    est = fbar_moments([0.3], post, env)
    assert alpha_aloq([0.3], post, env, 2.0) == pytest.approx(est.mean + 2.0 * np.sqrt(est.variance))


def test_negative_kappa_rejected(rng):
    post = gp_fit(random_dataset(rng, 4, 1, 1), make_sample(2))
    model = QuadratureModel(post, DiscreteEnv.uniform(np.array([[0.5]])))
    with pytest.raises(ConfigError):
        aloq_objective(model, -0.1)


def test_direct_samples_center_first():
    seen = []

    def objective(x):
        seen.append(x.copy())
        return -float(np.sum((x - 0.2) ** 2))

    direct_maximize(objective, 3, budget=20)
    np.testing.assert_array_equal(seen[0], [0.5, 0.5, 0.5])
    assert len(seen) <= 20


def test_direct_finds_one_dimensional_optimum():
    x, value = direct_maximize(lambda x: -float((x[0] - 0.731) ** 2), 1, budget=200)
    assert x[0] == pytest.approx(0.731, abs=1e-3)
    assert value == pytest.approx(0.0, abs=1e-6)


def test_direct_constant_objective_returns_center():
    x, value = direct_maximize(lambda x: 2.0, 2, budget=30)
    np.testing.assert_array_equal(x, [0.5, 0.5])
    assert value == 2.0


def test_direct_rejects_empty_budget():
    with pytest.raises(ConfigError):
        direct_maximize(lambda x: 0.0, 2, budget=0)
    with pytest.raises(ConfigError):
        DirectOptimizer(lambda x: 0.0, 0)


def test_direct_stays_in_box_and_budget():
    result = DirectOptimizer(lambda x: float(np.sin(7 * x).sum()), 2, budget=150).run()
    assert result.n_evals <= 150
    pts = np.array(result.history_x)
    assert np.all((pts >= 0.0) & (pts <= 1.0))


def test_direct_best_value_is_monotone_in_budget():
    def objective(x):
        return float(np.cos(9 * x[0]) * np.sin(5 * x[1]) - (x[0] - 0.3) ** 2)

    values = [direct_maximize(objective, 2, budget=b)[1] for b in (5, 20, 60, 200)]
    assert values == sorted(values)


def test_direct_on_separable_concave_objectives():
    rng = np.random.default_rng(2)
    for _ in range(20):
        center = rng.random(3)
        scale = rng.uniform(0.5, 2.0, 3)

        def objective(x, center=center, scale=scale):
            return -float(np.sum(scale * (x - center) ** 2))

        x, value = direct_maximize(objective, 3, budget=500)
        assert np.max(np.abs(x - center)) < 1e-2
        assert value == pytest.approx(objective(x))


def test_argmax_over_set():
    candidates = [np.array([0.1]), np.array([0.5]), np.array([0.9])]
    assert argmax_over_set(candidates, lambda c: -abs(c[0] - 0.45)) == (1, pytest.approx(-0.05))
    assert argmax_over_set(candidates, lambda c: 1.0)[0] == 0
    with pytest.raises(ValueError):
        argmax_over_set([], lambda c: 0.0)
