"""
Policy acquisition and the optimisers that maximise it.

alpha_aloq is the UCB rule applied to the BQ moments of fbar(pi). DIRECT
(dividing rectangles) maximises it over the unit policy box; argmax_over_set
picks incumbents from the finite set of observed policies.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from errors import ConfigError
from kernel_gp import GPPosterior
from quadrature import EnvDistribution, QuadratureModel

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


def ucb(mean, variance, kappa: float):
    """mean + kappa * sqrt(variance)"""
    return mean + kappa * np.sqrt(np.maximum(variance, 0.0))


def alpha_aloq(pi, post: GPPosterior, env: EnvDistribution, kappa: float) -> float:
    """UCB on the BQ estimate of fbar(pi): mu + kappa * sigma"""
    return aloq_objective(QuadratureModel(post, env), kappa)(pi)


def aloq_objective(model: QuadratureModel, kappa: float) -> Objective:
    """alpha_aloq bound to a cached quadrature model, for repeated calls inside DIRECT"""
    if kappa < 0:
        raise ConfigError(f"kappa must be nonnegative, got {kappa}")

    def objective(pi) -> float:
        est = model.fbar_moments(pi)
        return float(est.mean + kappa * est.std)

    return objective


class _BudgetExhausted(Exception):
    pass


@dataclass
class DirectResult:
    x: np.ndarray
    value: float
    n_evals: int
    n_iterations: int
    message: str
    history_x: List[np.ndarray] = field(default_factory=list, repr=False)
    history_f: List[float] = field(default_factory=list, repr=False)


class DirectOptimizer:
    """
    DIRECT global maximiser on the unit box.

    Rectangles are kept as a center plus an integer trisection level per
    dimension (side = 3^-level). Potentially optimal rectangles are the
    lower-right convex hull of (half-diagonal, -value) with the usual epsilon
    slack on the improvement over the current best.
    """

    def __init__(self, objective: Objective, dim: int, budget: int = 500,
                 tol: float = 1e-4, eps: float = 1e-4):
        if budget < 1:
            raise ConfigError(f"DIRECT budget must be at least 1, got {budget}")
        if dim < 1:
            raise ConfigError(f"DIRECT needs at least one dimension, got {dim}")
        self.objective = objective
        self.dim = dim
        self.budget = budget
        self.tol = tol
        self.eps = eps
        self.history_x: List[np.ndarray] = []
        self.history_f: List[float] = []

    def _evaluate(self, x: np.ndarray) -> float:
        """Returns the negated objective (DIRECT minimises internally)"""
        if len(self.history_f) >= self.budget:
            raise _BudgetExhausted()
        value = float(self.objective(x.copy()))
        self.history_x.append(x.copy())
        self.history_f.append(value)
        return -value

    def run(self) -> DirectResult:
        centers = [np.full(self.dim, 0.5)]
        levels = [np.zeros(self.dim, dtype=int)]
        values = []
        iterations = 0
        message = "budget exhausted"
        try:
            values.append(self._evaluate(centers[0]))
            while True:
                iterations += 1
                lv = np.array(levels)
                half_diag = 0.5 * np.sqrt(np.sum(9.0 ** (-lv), axis=1))
                selected = self._potentially_optimal(np.array(values), half_diag)
                if 2.0 * half_diag[selected].min() < self.tol:
                    message = "rectangle size below tolerance"
                    break
                for i in selected:
                    self._divide(i, centers, levels, values)
        except _BudgetExhausted:
            pass

        best = int(np.argmax(self.history_f))
        logger.debug("DIRECT stopped (%s) after %d evaluations", message, len(self.history_f))
        return DirectResult(
            x=self.history_x[best].copy(),
            value=self.history_f[best],
            n_evals=len(self.history_f),
            n_iterations=iterations,
            message=message,
            history_x=self.history_x,
            history_f=self.history_f,
        )

    def _potentially_optimal(self, g: np.ndarray, d: np.ndarray) -> List[int]:
        keys = np.round(d, 12)
        sizes = np.unique(keys)
        reps = []
        for s in sizes:
            members = np.flatnonzero(keys == s)
            reps.append(int(members[np.argmin(g[members])]))
        rep_g = g[reps]
        rep_d = d[reps]
        g_min = g.min()

        selected = []
        for j in range(len(reps)):
            smaller = rep_d < rep_d[j]
            larger = rep_d > rep_d[j]
            lb = np.max((rep_g[j] - rep_g[smaller]) / (rep_d[j] - rep_d[smaller])) if smaller.any() else -np.inf
            ub = np.min((rep_g[larger] - rep_g[j]) / (rep_d[larger] - rep_d[j])) if larger.any() else np.inf
            if lb > ub:
                continue
            if np.isinf(ub):
                selected.append(reps[j])
            elif g_min != 0:
                if (g_min - rep_g[j]) / abs(g_min) + rep_d[j] * ub / abs(g_min) >= self.eps:
                    selected.append(reps[j])
            elif rep_g[j] - rep_d[j] * ub <= 0:
                selected.append(reps[j])
        return sorted(selected)

    def _divide(self, i: int, centers, levels, values) -> None:
        center = centers[i]
        level = levels[i]
        dims = np.flatnonzero(level == level.min())
        delta = 3.0 ** (-level.min()) / 3.0
        sampled = {}
        for j in dims:
            plus, minus = center.copy(), center.copy()
            plus[j] += delta
            minus[j] -= delta
            sampled[j] = (plus, self._evaluate(plus), minus, self._evaluate(minus))
        order = sorted(dims, key=lambda j: (min(sampled[j][1], sampled[j][3]), j))
        for j in order:
            level[j] += 1
            plus, g_plus, minus, g_minus = sampled[j]
            for point, g in ((plus, g_plus), (minus, g_minus)):
                centers.append(point)
                levels.append(level.copy())
                values.append(g)


def direct_maximize(objective: Objective, dim: int, budget: int = 500, tol: float = 1e-4,
                    eps: float = 1e-4) -> Tuple[np.ndarray, float]:
    """
    Maximise an objective over [0, 1]^dim with DIRECT.

    Returns:
        (best sampled point, its value); the center of the box is always sampled first
    """
    result = DirectOptimizer(objective, dim, budget=budget, tol=tol, eps=eps).run()
    return result.x, result.value


def argmax_over_set(candidates: Sequence, objective: Objective) -> Tuple[int, float]:
    """Exact maximiser over a finite candidate list; ties go to the lowest index"""
    if len(candidates) == 0:
        raise ValueError("argmax_over_set needs at least one candidate")
    values = np.array([float(objective(c)) for c in candidates])
    idx = int(np.argmax(values))
    return idx, float(values[idx])
