"""
The alternating BO/BQ loop and its ablations.

Every iteration refreshes the hyperposterior on the standardized evidence,
picks a policy by maximising the UCB on the BQ estimate of fbar with DIRECT,
picks theta for it, calls the simulator, and (for intensifying variants)
re-evaluates the current incumbent at an actively chosen theta. The GP always
maximises: minimisation tasks are negated through Task.sense.
"""

import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from acquisition_opt import aloq_objective, argmax_over_set, direct_maximize, ucb
from aloq_schema import (
    CallRecord, ChainConfig, HyperPrior, HyperSample, IncumbentRecord, Phase, RunConfig, Trace, Variant,
)
from errors import ConfigError
from kernel_gp import Dataset, GPPosterior, HyperLayout, gp_fit, gp_predict, marginalize_hypers, standardize
from quadrature import QuadratureModel
from tasks import Task

logger = logging.getLogger(__name__)


def initial_design_size(task: Task) -> int:
    return 4 * (task.d_pi + task.d_theta)


def _first_occurrences(policies: np.ndarray) -> np.ndarray:
    """Distinct rows in order of first appearance"""
    _, idx = np.unique(policies, axis=0, return_index=True)
    return policies[np.sort(idx)]


class ALOQRun:
    """One seeded run of a variant on a task; produces a Trace"""

    def __init__(self, config: RunConfig, task: Task):
        self.config = config
        self.task = task
        self.variant = config.variant
        self.naive = self.variant == Variant.NAIVE
        self.l0 = config.initial_design or initial_design_size(task)
        try:
            config.check_budget(self.l0)
        except ValueError as e:
            raise ConfigError(str(e)) from e

        design_seq, env_seq, chain_seq = np.random.SeedSequence(config.seed).spawn(3)
        self.design_seq = design_seq
        self.env_rng = np.random.default_rng(env_seq)
        self.chain_rng = np.random.default_rng(chain_seq)

        self.env = task.unit_env()
        env_dim = 0 if self.naive else task.d_theta
        self.data = Dataset.empty(task.d_pi, env_dim)
        self.prior = HyperPrior(
            warp=task.warp_prior,
            warp_enabled=self.variant != Variant.UNWARPED,
            learn_noise=task.learn_noise or self.naive,
        )
        self.layout = HyperLayout(self.data.dim, self.prior)
        self.samples: List[HyperSample] = []
        self.shift, self.scale = 0.0, 1.0
        self._oracle_cache: Dict[Tuple[float, ...], float] = {}

        self.trace = Trace(
            task=config.task,
            variant=self.variant,
            seed=config.seed,
            gp_input_dim=self.data.dim,
            warnings=list(task.warnings),
        )

    @property
    def calls_made(self) -> int:
        return len(self.trace.calls)

    # Simulator access

    def _call(self, pi_u: np.ndarray, theta_u: np.ndarray, phase: Phase, started: float) -> None:
        pi = self.task.from_unit_policy(pi_u)
        theta = self.task.from_unit_env(theta_u)
        value = self.task.simulate(pi, theta)
        self.data.append(pi_u, [] if self.naive else theta_u, self.task.sense * value)
        self.trace.calls.append(CallRecord(
            call=self.calls_made + 1,
            policy=pi.tolist(),
            env=theta.tolist(),
            value=value,
            phase=phase,
            wall_ms=(time.perf_counter() - started) * 1000.0,
        ))

    def _draw_theta(self) -> np.ndarray:
        return self.env.draw(self.env_rng, 1)[0]

    # Model

    def _refresh(self) -> GPPosterior:
        """Resample hyperparameters on the current evidence, warm-started from the last sample"""
        scaled, self.shift, self.scale = standardize(self.data)
        hc = self.config.hyper_chain
        init = self.layout.to_vector(self.samples[-1]) if self.samples else self.layout.initial_vector()
        chain = ChainConfig(
            seed=int(self.chain_rng.integers(2 ** 31 - 1)),
            n_samples=hc.n_samples,
            burn_in=hc.burn_in,
            thinning=hc.thinning,
            initial_point=init.tolist(),
            step_width=[hc.step_width],
            max_step_outs=hc.max_step_outs,
        )
        self.samples = marginalize_hypers(scaled, hc.n_samples, chain, self.prior)
        return gp_fit(scaled, self.samples)

    def _refit(self) -> GPPosterior:
        """Condition the current hyperparameter samples on newly appended evidence"""
        scaled, self.shift, self.scale = standardize(self.data)
        return gp_fit(scaled, self.samples)

    def _fbar_means(self, post: GPPosterior, policies: np.ndarray) -> np.ndarray:
        if self.naive:
            mean, _ = gp_predict(post, policies, full_cov=False)
            return mean
        model = QuadratureModel(post, self.env)
        return np.array([model.fbar_moments(p).mean for p in policies])

    def _oracle(self, pi: np.ndarray) -> float:
        key = tuple(np.round(pi, 12))
        if key not in self._oracle_cache:
            self._oracle_cache[key] = self.task.oracle_fbar(pi)
        return self._oracle_cache[key]

    def _record_incumbent(self, post: GPPosterior) -> np.ndarray:
        """Observed policy with the highest estimated fbar; returns it in unit coordinates"""
        policies = _first_occurrences(self.data.policies)
        means = self._fbar_means(post, policies)
        idx, best = argmax_over_set(list(range(len(policies))), lambda i: means[i])
        pi_u = policies[idx]
        pi = self.task.from_unit_policy(pi_u)
        record = IncumbentRecord(
            call=self.calls_made,
            policy=pi.tolist(),
            estimated_fbar=self.task.sense * (self.shift + self.scale * best),
            oracle_fbar=self._oracle(pi),
        )
        if self.trace.incumbents and self.trace.incumbents[-1].call == record.call:
            self.trace.incumbents[-1] = record
        else:
            self.trace.incumbents.append(record)
        return pi_u

    # Acquisition

    def _explore_policy(self, post: GPPosterior) -> Tuple[np.ndarray, Optional[QuadratureModel]]:
        acq = self.config.acquisition
        if self.naive:
            def objective(u):
                mean, var = gp_predict(post, u[None, :], full_cov=False)
                return float(ucb(mean[0], var[0], acq.kappa))
            model = None
        else:
            model = QuadratureModel(post, self.env)
            objective = aloq_objective(model, acq.kappa)
        pi_u, _ = direct_maximize(objective, self.task.d_pi, budget=acq.direct_budget,
                                  tol=acq.direct_tol, eps=acq.direct_eps)
        return pi_u, model

    def _choose_theta(self, model: Optional[QuadratureModel], pi_u: np.ndarray) -> np.ndarray:
        if self.naive or self.variant == Variant.RQ_ALOQ:
            return self._draw_theta()
        if self.variant == Variant.US_ALOQ:
            return model.uncertainty_sampling_theta(pi_u)
        return model.select_theta(pi_u)

    # Loop

    def _initial_design(self) -> None:
        pis = qmc.LatinHypercube(d=self.task.d_pi, seed=np.random.default_rng(self.design_seq)).random(self.l0)
        thetas = self.env.draw(self.env_rng, self.l0)
        for pi_u, theta_u in zip(pis, thetas):
            self._call(pi_u, theta_u, "init", time.perf_counter())

    def run(self) -> Trace:
        budget = self.config.budget
        logger.info("starting %s on %s (seed %d, budget %d, initial design %d)",
                    self.variant.value, self.config.task, self.config.seed, budget, self.l0)
        self._initial_design()

        while True:
            started = time.perf_counter()
            post = self._refresh()
            incumbent = self._record_incumbent(post)
            if self.calls_made >= budget:
                break

            pi_u, model = self._explore_policy(post)
            self._call(pi_u, self._choose_theta(model, pi_u), "explore", started)
            logger.debug("call %d explore pi=%s", self.calls_made, np.round(pi_u, 4).tolist())

            if not self.variant.intensifies:
                continue
            started = time.perf_counter()
            post = self._refit()
            incumbent = self._record_incumbent(post)
            model = QuadratureModel(post, self.env)
            self._call(incumbent, self._choose_theta(model, incumbent), "intensify", started)

        final = self.trace.incumbents[-1]
        self.trace.final_policy = list(final.policy)
        self.trace.final_oracle_fbar = final.oracle_fbar
        self.trace.final_hyper_samples = list(self.samples)
        logger.info("finished %s on %s (seed %d): oracle fbar %.4f",
                    self.variant.value, self.config.task, self.config.seed, final.oracle_fbar)
        return self.trace


def _run_as(variant: Variant, config: RunConfig, task: Task) -> Trace:
    if config.variant != variant:
        config = config.model_copy(update={"variant": variant})
    return ALOQRun(config, task).run()


def run_aloq(config: RunConfig, task: Task) -> Trace:
    """Active theta selection, Beta warping and intensification"""
    return _run_as(Variant.ALOQ, config, task)


def run_rq_aloq(config: RunConfig, task: Task) -> Trace:
    """Both per-iteration thetas drawn i.i.d. from p(theta)"""
    return _run_as(Variant.RQ_ALOQ, config, task)


def run_one_step(config: RunConfig, task: Task) -> Trace:
    """One simulator call per iteration; the incumbent is still tracked"""
    return _run_as(Variant.ONE_STEP, config, task)


def run_unwarped(config: RunConfig, task: Task) -> Trace:
    """Identity warp; warp hyperparameters are not sampled"""
    return _run_as(Variant.UNWARPED, config, task)


def run_naive(config: RunConfig, task: Task) -> Trace:
    """BO on pi alone with learned noise; theta ~ p(theta) at every call"""
    return _run_as(Variant.NAIVE, config, task)


def run_us_aloq(config: RunConfig, task: Task) -> Trace:
    """theta chosen by largest predictive variance instead of the lookahead criterion"""
    return _run_as(Variant.US_ALOQ, config, task)


RUNNERS = {
    Variant.ALOQ: run_aloq,
    Variant.RQ_ALOQ: run_rq_aloq,
    Variant.ONE_STEP: run_one_step,
    Variant.UNWARPED: run_unwarped,
    Variant.NAIVE: run_naive,
    Variant.US_ALOQ: run_us_aloq,
}


def run_variant(config: RunConfig, task: Task) -> Trace:
    return RUNNERS[config.variant](config, task)
