import numpy as np
import pytest

from aloq_schema import HyperChainSettings, HyperSample, KernelHyper, WarpParams
from kernel_gp import Dataset


def make_sample(dim, w0=1.0, lengthscales=None, noise=1e-2, warp=None, log_posterior=0.0):
    ls = [0.4] * dim if lengthscales is None else list(lengthscales)
    return HyperSample(
        kernel=KernelHyper(w0=w0, lengthscales=ls, noise_var=noise),
        warp=warp,
        log_posterior=log_posterior,
    )


def random_warp(rng, dim):
    return WarpParams(alpha=rng.uniform(0.5, 2.0, dim).tolist(), beta=rng.uniform(0.5, 2.0, dim).tolist())


def random_dataset(rng, n, policy_dim, env_dim):
    x = rng.random((n, policy_dim + env_dim))
    y = np.sin(3.0 * x).sum(axis=1) + 0.1 * rng.standard_normal(n)
    return Dataset(x, y, policy_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fast_chain():
    return HyperChainSettings(n_samples=3, burn_in=5, thinning=1)
