"""
Gaussian-process regression on the joint (policy, environment) unit box.

Squared-exponential kernel on Beta-CDF warped inputs, zero prior mean, Cholesky
factorisation with a jitter ladder, and fully-Bayesian treatment of the kernel,
warp and noise hyperparameters through slice sampling of their log values.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from scipy.special import betainc

from aloq_schema import ChainConfig, HyperPrior, HyperSample, KernelHyper, WarpParams
from errors import DomainError, NumericalError
from sampler import slice_sample

logger = logging.getLogger(__name__)

# 1e-10, 1e-9, ..., 1e-4 (relative to the signal variance)
JITTER_LADDER: Tuple[float, ...] = tuple(10.0 ** -k for k in range(10, 3, -1))
MAX_CHAIN_RETRIES = 3
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class InputPoint:
    """A (policy, environment) pair, both already mapped into the unit box"""
    policy: Tuple[float, ...]
    env: Tuple[float, ...] = ()

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.policy, dtype=float), np.asarray(self.env, dtype=float)])


@dataclass
class Dataset:
    """Append-only evidence: unit-box inputs (policy columns first) and scalar returns"""
    inputs: np.ndarray
    returns: np.ndarray
    policy_dim: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.returns = np.asarray(self.returns, dtype=float).reshape(-1)
        if self.inputs.shape[0] != self.returns.shape[0]:
            raise ValueError(
                f"inputs ({self.inputs.shape[0]}) and returns ({self.returns.shape[0]}) differ in length")
        if self.policy_dim > self.inputs.shape[1]:
            raise ValueError("policy_dim exceeds the input dimension")

    @classmethod
    def empty(cls, policy_dim: int, env_dim: int = 0) -> "Dataset":
        return cls(np.empty((0, policy_dim + env_dim)), np.empty(0), policy_dim)

    def __len__(self) -> int:
        return self.returns.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def policies(self) -> np.ndarray:
        return self.inputs[:, :self.policy_dim]

    def append(self, policy: Sequence[float], env: Sequence[float], value: float) -> None:
        row = np.concatenate([np.asarray(policy, dtype=float), np.asarray(env, dtype=float)])
        if row.shape[0] != self.dim:
            raise ValueError(f"input has dimension {row.shape[0]}, dataset has {self.dim}")
        self.inputs = np.vstack([self.inputs, row])
        self.returns = np.append(self.returns, float(value))


def standardize(data: Dataset) -> Tuple[Dataset, float, float]:
    """Z-score the returns; returns (scaled dataset, shift, scale)"""
    if len(data) == 0:
        return data, 0.0, 1.0
    shift = float(np.mean(data.returns))
    scale = float(np.std(data.returns))
    if not np.isfinite(scale) or scale < 1e-12:
        scale = 1.0
    return Dataset(data.inputs.copy(), (data.returns - shift) / scale, data.policy_dim), shift, scale


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, InputPoint):
        return x.as_vector()[None, :]
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], InputPoint):
        return np.vstack([p.as_vector() for p in x])
    return np.atleast_2d(np.asarray(x, dtype=float))


def beta_warp(x, warp: Optional[WarpParams]) -> np.ndarray:
    """
    Elementwise Beta CDF of unit-box inputs.

    Args:
        x: Vector (D,) or matrix (n, D) with every coordinate in [0, 1]
        warp: Per-dimension (alpha, beta); None is the identity warp

    Returns:
        Array of the same shape with BetaCDF(x_d, alpha_d, beta_d)
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("beta_warp received a non-finite input")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("beta_warp inputs must lie in the unit box")
    if warp is None:
        return x.copy()
    alpha = np.asarray(warp.alpha, dtype=float)
    beta = np.asarray(warp.beta, dtype=float)
    if x.shape[-1] != alpha.shape[0]:
        raise ValueError(f"warp has {alpha.shape[0]} dimensions, input has {x.shape[-1]}")
    return betainc(alpha, beta, x)


def se_gram(a: np.ndarray, b: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Squared-exponential kernel matrix between the rows of a and b"""
    ls = np.asarray(hyper.lengthscales, dtype=float)
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != ls.shape[0] or b.shape[1] != ls.shape[0]:
        raise ValueError(
            f"kernel has {ls.shape[0]} lengthscales, inputs have {a.shape[1]} and {b.shape[1]} columns")
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    sq = cdist(a / ls, b / ls, metric="sqeuclidean")
    return hyper.w0 * np.exp(-0.5 * sq)


def se_kernel(a, b, hyper: KernelHyper) -> float:
    """w0 * exp(-1/2 * sum_d (a_d - b_d)^2 / w_d^2)"""
    a = np.asarray(a, dtype=float).reshape(1, -1)
    b = np.asarray(b, dtype=float).reshape(1, -1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(se_gram(a, b, hyper)[0, 0])


def _factorize(k: np.ndarray, noise_var: float, w0: float) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of k + (noise + jitter) I, escalating jitter on failure"""
    n = k.shape[0]
    eye = np.eye(n)
    attempted = []
    for jitter in (0.0,) + JITTER_LADDER:
        attempted.append(jitter)
        try:
            chol = linalg.cholesky(k + (noise_var + jitter * w0) * eye, lower=True, check_finite=False)
            if jitter > 0:
                logger.debug("cholesky needed jitter %.1e (n=%d)", jitter, n)
            return chol, jitter * w0
        except linalg.LinAlgError:
            continue
    raise NumericalError(
        f"kernel matrix (n={n}) is not positive definite after jitter ladder "
        f"{', '.join(f'{j:.0e}' for j in attempted[1:])}",
        jitter_ladder=attempted[1:])


@dataclass(frozen=True)
class GPComponent:
    """A GP conditioned on the data under one hyperparameter sample"""
    sample: HyperSample
    warped_inputs: np.ndarray
    chol: Optional[np.ndarray]
    alpha: np.ndarray
    jitter: float

    @property
    def noise_var(self) -> float:
        return self.sample.kernel.noise_var + self.jitter

    def warp(self, queries: np.ndarray) -> np.ndarray:
        return beta_warp(queries, self.sample.warp)

    def kernel(self, a_warped: np.ndarray, b_warped: np.ndarray) -> np.ndarray:
        return se_gram(a_warped, b_warped, self.sample.kernel)

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        """L^{-1} rhs (rhs has one row per training point)"""
        return linalg.solve_triangular(self.chol, rhs, lower=True, check_finite=False)

    def predict(self, queries: np.ndarray, full_cov: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Latent-f predictive mean and covariance (or variance vector)"""
        qw = self.warp(queries)
        if self.chol is None:
            mean = np.zeros(qw.shape[0])
            if full_cov:
                return mean, self.kernel(qw, qw)
            return mean, np.full(qw.shape[0], self.sample.kernel.w0)
        kq = self.kernel(qw, self.warped_inputs)
        mean = kq @ self.alpha
        v = self.solve_lower(kq.T)
        if full_cov:
            cov = self.kernel(qw, qw) - v.T @ v
            return mean, 0.5 * (cov + cov.T)
        var = self.sample.kernel.w0 - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)


@dataclass(frozen=True)
class GPPosterior:
    """Immutable mixture of per-sample GP conditionals over one dataset"""
    data: Dataset
    components: List[GPComponent] = field(default_factory=list)

    @property
    def samples(self) -> List[HyperSample]:
        return [c.sample for c in self.components]

    def predict(self, queries, full_cov: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        return gp_predict(self, queries, full_cov=full_cov)


def _fit_component(data: Dataset, sample: HyperSample) -> GPComponent:
    kernel = sample.kernel
    if not kernel.is_positive():
        raise ValueError("kernel hyperparameters must be positive")
    if sample.warp is not None and not sample.warp.is_positive():
        raise ValueError("warp parameters must be positive")
    if len(kernel.lengthscales) != data.dim:
        raise ValueError(f"{len(kernel.lengthscales)} lengthscales for a {data.dim}-dimensional dataset")
    xw = beta_warp(data.inputs, sample.warp)
    if len(data) == 0:
        return GPComponent(sample, xw, None, np.empty(0), 0.0)
    chol, jitter = _factorize(se_gram(xw, xw, kernel), kernel.noise_var, kernel.w0)
    alpha = linalg.cho_solve((chol, True), data.returns, check_finite=False)
    return GPComponent(sample, xw, chol, alpha, jitter)


def gp_fit(data: Dataset, hyper: Union[HyperSample, Sequence[HyperSample]]) -> GPPosterior:
    """
    Condition the GP on a dataset.

    Args:
        data: Evidence in the unit box
        hyper: One HyperSample, or several for a hyperparameter mixture

    Returns:
        GPPosterior with one cached factorisation per sample
    """
    samples = [hyper] if isinstance(hyper, HyperSample) else list(hyper)
    if not samples:
        raise ValueError("gp_fit needs at least one hyperparameter sample")
    return GPPosterior(data, [_fit_component(data, s) for s in samples])


def gp_predict(post: GPPosterior, queries, full_cov: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mixture-combined predictive moments of latent f.

    Mixture mean is the average of the component means; mixture covariance is the
    average of (cov + m m^T) minus the outer product of the mixture mean.
    """
    q = _as_matrix(queries)
    means, second = [], []
    for c in post.components:
        m, cov = c.predict(q, full_cov=full_cov)
        means.append(m)
        second.append(cov + (np.outer(m, m) if full_cov else m * m))
    mean = np.mean(means, axis=0)
    moment = np.mean(second, axis=0)
    if full_cov:
        cov = moment - np.outer(mean, mean)
        return mean, 0.5 * (cov + cov.T)
    return mean, np.maximum(moment - mean * mean, 0.0)


def log_marginal_likelihood(data: Dataset, hyper: HyperSample) -> float:
    if len(data) == 0:
        return 0.0
    component = _fit_component(data, hyper)
    n = len(data)
    return float(-0.5 * data.returns @ component.alpha
                 - np.sum(np.log(np.diag(component.chol)))
                 - 0.5 * n * _LOG_2PI)


def _lognormal_logpdf(x: np.ndarray, mu: float, sigma: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(-np.log(x * sigma * np.sqrt(2.0 * np.pi)) - (np.log(x) - mu) ** 2 / (2.0 * sigma ** 2)))


def log_hyperprior(hyper: HyperSample, prior: HyperPrior = HyperPrior()) -> float:
    """Sum of log-normal log densities of the sampled hyperparameters (natural space)"""
    kernel = hyper.kernel
    total = _lognormal_logpdf([kernel.w0], *prior.signal)
    total += _lognormal_logpdf(kernel.lengthscales, *prior.lengthscale)
    if prior.warp_enabled and hyper.warp is not None:
        total += _lognormal_logpdf(hyper.warp.alpha, *prior.warp)
        total += _lognormal_logpdf(hyper.warp.beta, *prior.warp)
    if prior.learn_noise:
        total += _lognormal_logpdf([kernel.noise_var], *prior.noise)
    return total


def log_hyperposterior(data: Dataset, hyper: HyperSample, prior: HyperPrior = HyperPrior()) -> float:
    """
    Unnormalised log posterior of the hyperparameters: GP log marginal likelihood
    plus log-normal log priors. Non-positive hyperparameters give -inf.
    """
    kernel = hyper.kernel
    if not kernel.is_positive() or (prior.learn_noise and kernel.noise_var <= 0):
        return -np.inf
    if hyper.warp is not None and not hyper.warp.is_positive():
        return -np.inf
    try:
        lml = log_marginal_likelihood(data, hyper)
    except NumericalError:
        return -np.inf
    return lml + log_hyperprior(hyper, prior)


class HyperLayout:
    """Packing of the sampled hyperparameters into one log-space vector:
    [log w0, log lengthscales, (log alpha, log beta), (log noise)]"""

    def __init__(self, dim: int, prior: HyperPrior):
        self.dim = dim
        self.prior = prior
        self.size = 1 + dim + (2 * dim if prior.warp_enabled else 0) + (1 if prior.learn_noise else 0)
        mus, sigmas = [prior.signal[0]], [prior.signal[1]]
        mus += [prior.lengthscale[0]] * dim
        sigmas += [prior.lengthscale[1]] * dim
        if prior.warp_enabled:
            mus += [prior.warp[0]] * (2 * dim)
            sigmas += [prior.warp[1]] * (2 * dim)
        if prior.learn_noise:
            mus.append(prior.noise[0])
            sigmas.append(prior.noise[1])
        self.mu = np.asarray(mus)
        self.sigma = np.asarray(sigmas)

    def initial_vector(self) -> np.ndarray:
        return self.mu.copy()

    def to_sample(self, vec: np.ndarray, log_posterior: float = 0.0) -> HyperSample:
        vals = np.exp(np.asarray(vec, dtype=float))
        d = self.dim
        w0 = float(vals[0])
        lengthscales = vals[1:1 + d].tolist()
        pos = 1 + d
        warp = None
        if self.prior.warp_enabled:
            warp = WarpParams(alpha=vals[pos:pos + d].tolist(), beta=vals[pos + d:pos + 2 * d].tolist())
            pos += 2 * d
        noise = float(vals[pos]) if self.prior.learn_noise else self.prior.fixed_noise_ratio * w0
        kernel = KernelHyper(w0=w0, lengthscales=lengthscales, noise_var=noise)
        return HyperSample(kernel=kernel, warp=warp, log_posterior=log_posterior)

    def to_vector(self, sample: HyperSample) -> np.ndarray:
        parts = [[sample.kernel.w0], sample.kernel.lengthscales]
        if self.prior.warp_enabled:
            warp = sample.warp or WarpParams.identity(self.dim)
            parts += [warp.alpha, warp.beta]
        if self.prior.learn_noise:
            parts.append([sample.kernel.noise_var])
        return np.log(np.concatenate([np.asarray(p, dtype=float) for p in parts]))

    def log_prior(self, vec: np.ndarray) -> float:
        """Normal log density of the log-hyperparameters (log-normal prior plus Jacobian)"""
        z = (vec - self.mu) / self.sigma
        return float(np.sum(-0.5 * z * z - np.log(self.sigma) - 0.5 * _LOG_2PI))


def marginalize_hypers(data: Dataset, n_samples: int, chain_config: ChainConfig,
                       prior: HyperPrior = HyperPrior()) -> List[HyperSample]:
    """
    Slice-sample the hyperposterior in log space.

    Args:
        data: Evidence the likelihood is computed on
        n_samples: Retained samples (overrides chain_config.n_samples)
        chain_config: Seed, burn-in, thinning, widths; initial_point in log space
            (defaults to the prior medians)
        prior: Hyperpriors and which hyperparameters are sampled

    Returns:
        HyperSamples, each carrying its natural-space log posterior
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    layout = HyperLayout(data.dim, prior)

    def target(vec: np.ndarray) -> float:
        sample = layout.to_sample(vec)
        try:
            lml = log_marginal_likelihood(data, sample)
        except NumericalError:
            return -np.inf
        return lml + layout.log_prior(vec)

    init = (np.asarray(chain_config.initial_point, dtype=float)
            if chain_config.initial_point is not None else layout.initial_vector())
    if init.shape[0] != layout.size:
        raise ValueError(f"initial point has {init.shape[0]} entries, layout needs {layout.size}")

    last_error = None
    for attempt in range(MAX_CHAIN_RETRIES):
        config = chain_config.model_copy(update={
            "n_samples": n_samples,
            "seed": chain_config.seed + attempt,
            "initial_point": init.tolist(),
        })
        try:
            draws = slice_sample(target, config)
            break
        except NumericalError as e:
            last_error = e
            logger.debug("hyperparameter chain attempt %d failed: %s", attempt + 1, e)
            init = layout.initial_vector()
    else:
        raise NumericalError(
            f"hyperparameter chain stuck after {MAX_CHAIN_RETRIES} attempts: {last_error}")

    samples = []
    for vec in draws:
        # natural-space log posterior = log-space target minus the log Jacobian
        natural = target(vec) - float(np.sum(vec))
        samples.append(layout.to_sample(vec, log_posterior=natural))
    return samples
