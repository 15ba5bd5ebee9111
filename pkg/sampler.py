"""
Coordinate-wise univariate slice sampling with stepping-out and shrinkage (Neal, 2003).
Used for GP hyperparameter marginalisation and the torque task's posterior over θ.
"""

import logging
from typing import Callable, Tuple

import numpy as np

from aloq_schema import ChainConfig
from errors import NumericalError

logger = logging.getLogger(__name__)

LogDensity = Callable[[np.ndarray], float]


def slice_sample(log_density: LogDensity, config: ChainConfig) -> np.ndarray:
    """
    Draw a thinned, burnt-in slice-sampling chain.

    Args:
        log_density: Unnormalised log target; may return -inf outside its support
        config: Seed, sizes, initial point, step widths and optional box bounds

    Returns:
        Array of shape (n_samples, dim); row i is the state after
        burn_in + (i + 1) * thinning sweeps
    """
    if config.initial_point is None:
        raise ValueError("slice_sample needs an initial point")
    x = np.array(config.initial_point, dtype=float)
    dim = x.shape[0]
    widths = np.asarray(config.widths(dim), dtype=float)
    lower = np.full(dim, -np.inf) if config.lower is None else np.asarray(config.lower, dtype=float)
    upper = np.full(dim, np.inf) if config.upper is None else np.asarray(config.upper, dtype=float)

    lp = float(log_density(x))
    if not np.isfinite(lp):
        raise NumericalError(f"log density is not finite at the initial point ({lp})")

    rng = np.random.default_rng(config.seed)
    samples = np.empty((config.n_samples, dim))

    for _ in range(config.burn_in):
        x, lp = _sweep(log_density, x, lp, widths, lower, upper, rng, config)
    for i in range(config.n_samples):
        for _ in range(config.thinning):
            x, lp = _sweep(log_density, x, lp, widths, lower, upper, rng, config)
        samples[i] = x

    return samples


def _sweep(log_density, x, lp, widths, lower, upper, rng, config) -> Tuple[np.ndarray, float]:
    for d in range(x.shape[0]):
        x, lp = _update_coordinate(log_density, x, lp, d, widths[d], lower[d], upper[d], rng, config)
    return x, lp


def _update_coordinate(log_density, x, lp, d, width, lo, hi, rng, config) -> Tuple[np.ndarray, float]:
    # Slice level; an exponential draw keeps the level finite
    level = lp - rng.exponential()

    def at(value: float) -> float:
        trial = x.copy()
        trial[d] = value
        return float(log_density(trial))

    x0 = x[d]
    left = x0 - width * rng.random()
    right = left + width
    left, right = max(left, lo), min(right, hi)

    m = config.max_step_outs
    j = int(np.floor(m * rng.random())) if m > 0 else 0
    k = (m - 1 - j) if m > 0 else 0
    while j > 0 and left > lo and at(left) > level:
        left = max(left - width, lo)
        j -= 1
    while k > 0 and right < hi and at(right) > level:
        right = min(right + width, hi)
        k -= 1

    for _ in range(config.max_shrinks):
        proposal = left + rng.random() * (right - left)
        lp_new = at(proposal)
        if lp_new > level:
            x = x.copy()
            x[d] = proposal
            return x, lp_new
        if proposal < x0:
            left = proposal
        else:
            right = proposal

    logger.debug("slice bracket collapsed: coordinate=%d left=%g right=%g", d, left, right)
    raise NumericalError(
        f"slice shrinkage collapsed on coordinate {d} after {config.max_shrinks} proposals",
        coordinate=d)
