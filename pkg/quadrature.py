"""
Bayesian quadrature over the environment variable.

Estimates fbar(pi) = E_theta[f(pi, theta)] under the GP posterior for discrete
weighted supports and fixed Monte Carlo sample sets, and scores candidate θ by
the posterior variance of fbar(pi) after a hypothetical observation at (pi, θ).

The SE kernel factorises over the policy and environment coordinates, so every
θ-only quantity (kernel against the training environments, the prior quadratic
form w^T K_θθ w) is cached once per posterior and reused for every policy.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import betainc

from kernel_gp import GPComponent, GPPosterior, gp_predict

PROB_TOL = 1e-12
MIN_MC_COUNT = 100
VARIANCE_FLOOR = -1e-10


def to_unit_box(x, lower, upper) -> np.ndarray:
    """Affine map of x from [lower, upper] into [0, 1]; a degenerate coordinate maps to 0.5"""
    x = np.asarray(x, dtype=float)
    lower = np.asarray(lower, dtype=float)
    span = np.asarray(upper, dtype=float) - lower
    flat = span <= 0.0
    u = (x - lower) / np.where(flat, 1.0, span)
    return np.clip(np.where(flat, 0.5, u), 0.0, 1.0)


class EnvDistribution(ABC):
    """p(θ) as a finite weighted point set the quadrature sums over"""

    @property
    @abstractmethod
    def support(self) -> np.ndarray:
        """(N, d_theta) points"""

    @property
    @abstractmethod
    def weights(self) -> np.ndarray:
        """(N,) nonnegative weights summing to one"""

    @abstractmethod
    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """i.i.d. draws from p(θ), shape (size, d_theta)"""

    @abstractmethod
    def normalized(self, lower: Sequence[float], upper: Sequence[float]) -> "EnvDistribution":
        """The same distribution with θ affinely mapped from [lower, upper] into the unit box"""

    @property
    def dim(self) -> int:
        return self.support.shape[1]


@dataclass(frozen=True)
class DiscreteEnv(EnvDistribution):
    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if points.shape[0] != probs.shape[0] or points.shape[0] == 0:
            raise ValueError(f"{points.shape[0]} support points but {probs.shape[0]} probabilities")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum():.15f}, not 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def renormalized(cls, points, raw_probs) -> "DiscreteEnv":
        raw = np.asarray(raw_probs, dtype=float)
        return cls(points, raw / raw.sum())

    @classmethod
    def uniform(cls, points) -> "DiscreteEnv":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def support(self) -> np.ndarray:
        return self.points

    @property
    def weights(self) -> np.ndarray:
        return self.probs

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(self.points.shape[0], size=size, p=self.probs)
        return self.points[idx]

    def normalized(self, lower, upper) -> "DiscreteEnv":
        return DiscreteEnv(to_unit_box(self.points, lower, upper), self.probs)


Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass
class ContinuousEnv(EnvDistribution):
    """Continuous p(θ) seen through a fixed set of mc_count draws (reused for a whole run)"""
    sampler: Sampler
    mc_count: int = 200
    seed: int = 0
    _support: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mc_count < MIN_MC_COUNT:
            raise ValueError(f"mc_count must be at least {MIN_MC_COUNT}, got {self.mc_count}")
        pts = np.asarray(self.sampler(np.random.default_rng(self.seed), self.mc_count), dtype=float)
        self._support = pts[:, None] if pts.ndim == 1 else pts

    @property
    def support(self) -> np.ndarray:
        return self._support

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.mc_count, 1.0 / self.mc_count)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        pts = np.asarray(self.sampler(rng, size), dtype=float)
        return pts[:, None] if pts.ndim == 1 else pts

    def normalized(self, lower, upper) -> "ContinuousEnv":
        inner = self.sampler

        def unit_sampler(rng, n):
            pts = np.asarray(inner(rng, n), dtype=float)
            pts = pts[:, None] if pts.ndim == 1 else pts
            return to_unit_box(pts, lower, upper)

        return ContinuousEnv(unit_sampler, self.mc_count, self.seed)


@dataclass(frozen=True)
class MarginalEstimate:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < VARIANCE_FLOOR:
            raise ValueError(f"marginal variance {self.variance} is negative")
        object.__setattr__(self, "variance", max(float(self.variance), 0.0))

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def _split_warp(values: np.ndarray, warp, cols: slice) -> np.ndarray:
    if warp is None:
        return values
    return betainc(np.asarray(warp.alpha)[cols], np.asarray(warp.beta)[cols], values)


def _se(a: np.ndarray, b: np.ndarray, ls: np.ndarray) -> np.ndarray:
    """Unit-amplitude SE kernel over a subset of coordinates"""
    if a.shape[1] == 0:
        return np.ones((a.shape[0], b.shape[0]))
    return np.exp(-0.5 * cdist(a / ls, b / ls, metric="sqeuclidean"))


class _ComponentQuadrature:
    """θ-side caches for one hyperparameter sample"""

    def __init__(self, comp: GPComponent, support: np.ndarray, weights: np.ndarray, policy_dim: int):
        self.comp = comp
        kernel = comp.sample.kernel
        self.w0 = kernel.w0
        ls = np.asarray(kernel.lengthscales, dtype=float)
        self.pi_cols = slice(0, policy_dim)
        self.theta_cols = slice(policy_dim, None)
        self.ls_pi, self.ls_theta = ls[self.pi_cols], ls[self.theta_cols]
        self.weights = weights

        self.support_w = _split_warp(support, comp.sample.warp, self.theta_cols)
        self.train_pi = comp.warped_inputs[:, self.pi_cols]
        train_theta = comp.warped_inputs[:, self.theta_cols]
        self.k_train_support = _se(train_theta, self.support_w, self.ls_theta)  # (l, N)
        self.u = self.k_train_support @ weights
        self.prior_quad = float(self.w0 * weights @ _se(self.support_w, self.support_w, self.ls_theta) @ weights)

    def _policy_terms(self, pi: np.ndarray):
        """Returns (k_pi over training rows, L^{-1} K_*^T w, mean, variance) of fbar(pi)"""
        pi_w = _split_warp(pi[None, :], self.comp.sample.warp, self.pi_cols)
        k_pi = _se(self.train_pi, pi_w, self.ls_pi)[:, 0]
        if self.comp.chol is None:
            return k_pi, np.zeros(0), 0.0, self.prior_quad
        kw = self.w0 * k_pi * self.u
        mean = float(kw @ self.comp.alpha)
        a = self.comp.solve_lower(kw)
        return k_pi, a, mean, self.prior_quad - float(a @ a)

    def moments(self, pi: np.ndarray):
        _, _, mean, var = self._policy_terms(pi)
        return mean, var

    def lookahead(self, pi: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        k_pi, a, _, var = self._policy_terms(pi)
        cand_w = _split_warp(candidates, self.comp.sample.warp, self.theta_cols)
        prior_cross = self.w0 * (self.weights @ _se(self.support_w, cand_w, self.ls_theta))
        if self.comp.chol is None:
            cross = prior_cross
            s = np.full(candidates.shape[0], self.w0)
        else:
            train_theta = self.comp.warped_inputs[:, self.theta_cols]
            k_star = self.w0 * k_pi[:, None] * _se(train_theta, cand_w, self.ls_theta)
            b = self.comp.solve_lower(k_star)
            cross = prior_cross - a @ b
            s = self.w0 - np.sum(b * b, axis=0)
        denom = np.maximum(s, 0.0) + self.comp.noise_var
        reduction = np.where(denom > 1e-300, cross * cross / np.where(denom > 1e-300, denom, 1.0), 0.0)
        return np.maximum(var - reduction, 0.0)


class QuadratureModel:
    """Cached BQ view of one (posterior, p(θ)) pair; immutable and shareable"""

    def __init__(self, post: GPPosterior, env: EnvDistribution):
        self.post = post
        self.env = env
        self.support = env.support
        self.weights = env.weights
        self._parts: List[_ComponentQuadrature] = [
            _ComponentQuadrature(c, self.support, self.weights, post.data.policy_dim)
            for c in post.components
        ]

    def fbar_moments(self, pi) -> MarginalEstimate:
        pi = np.asarray(pi, dtype=float).reshape(-1)
        stats = np.array([p.moments(pi) for p in self._parts])
        means, variances = stats[:, 0], stats[:, 1]
        mean = float(np.mean(means))
        # total variance = mean of variances + variance of means
        variance = float(np.mean(variances) + np.mean(means * means) - mean * mean)
        return MarginalEstimate(mean, max(variance, 0.0))

    def lookahead_variances(self, pi, candidates: Optional[np.ndarray] = None) -> np.ndarray:
        pi = np.asarray(pi, dtype=float).reshape(-1)
        cands = self.support if candidates is None else np.atleast_2d(np.asarray(candidates, dtype=float))
        return np.mean([p.lookahead(pi, cands) for p in self._parts], axis=0)

    def select_theta(self, pi) -> np.ndarray:
        scores = self.lookahead_variances(pi)
        return self.support[int(np.argmin(scores))].copy()

    def uncertainty_sampling_theta(self, pi) -> np.ndarray:
        pi = np.asarray(pi, dtype=float).reshape(-1)
        queries = np.hstack([np.tile(pi, (self.support.shape[0], 1)), self.support])
        _, var = gp_predict(self.post, queries, full_cov=False)
        return self.support[int(np.argmax(var))].copy()


def fbar_moments(pi, post: GPPosterior, env: EnvDistribution) -> MarginalEstimate:
    """
    Posterior mean and variance of fbar(pi) = sum_i p_i f(pi, θ_i).

    Reduces to the 1/N and 1/N^2 coefficients when the weights are uniform; a
    continuous p(θ) uses its fixed Monte Carlo draws with weights 1/N.
    """
    return QuadratureModel(post, env).fbar_moments(pi)


def lookahead_variance(pi, theta_cand, post: GPPosterior, env: EnvDistribution) -> float:
    """
    Variance of fbar(pi) after conditioning on an unobserved return at (pi, theta_cand).
    Depends only on the inputs, never on a hypothesised return value.
    """
    cand = np.asarray(theta_cand, dtype=float).reshape(1, -1)
    return float(QuadratureModel(post, env).lookahead_variances(pi, cand)[0])


def lookahead_variances(pi, post: GPPosterior, env: EnvDistribution,
                        candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """lookahead_variance for a batch of candidates (the whole support by default)"""
    return QuadratureModel(post, env).lookahead_variances(pi, candidates)


def select_theta(pi, post: GPPosterior, env: EnvDistribution) -> np.ndarray:
    """Support point minimising the lookahead variance; ties go to the lowest index"""
    return QuadratureModel(post, env).select_theta(pi)


def uncertainty_sampling_theta(pi, post: GPPosterior, env: EnvDistribution) -> np.ndarray:
    """Support point with the largest predictive variance of f(pi, θ); ties go to the lowest index"""
    return QuadratureModel(post, env).uncertainty_sampling_theta(pi)
