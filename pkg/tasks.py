"""
Simulator tasks with significant rare events.

Each Task works in natural units: evaluate(pi, theta) takes the policy and the
environment variable as given by the task's boxes and support. The loop maps
both into the unit box for the GP through to_unit_policy / unit_env and maps
back before every simulator call.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from acquisition_opt import direct_maximize
from aloq_schema import ChainConfig
from arm_simulator import DEFAULT_GEOMETRY, ArmGeometry, arm_fk, min_x
from errors import ALOQError, ConfigError, DomainError, SimulatorError
from quadrature import ContinuousEnv, DiscreteEnv, EnvDistribution, to_unit_box
from sampler import slice_sample

logger = logging.getLogger(__name__)

SUPPORT_ATOL = 1e-9

# Arm cost constants
COST_SCALE = 100.0
SRE_PENALTY = 150.0

# Collision task
COLLISION_REFERENCE = (0.25, 0.75, 0.8)
COLLISION_WALLS = 20
COLLISION_MASS = 0.12
COLLISION_DECAY = 0.8

# Breakage task
BREAKAGE_TARGET_POLICY = (0.4, 0.2, 0.6)
BREAKAGE_BAND = (0.3, 0.7)
BREAKAGE_RATE = 0.05

# Torque task
TORQUE_PRIOR = (0.5, 1.0)
TORQUE_BASELINE_POLICY = (0.55, 0.55, 0.55)
TORQUE_BASELINE_JOINTS = (1.0, 1.0, 1.0)
TORQUE_TARGET_JOINTS = (0.95, 0.85, 0.9)
TORQUE_OPT_SAMPLES = 50
TORQUE_EVAL_SAMPLES = 400

Evaluate = Callable[[np.ndarray, np.ndarray], float]
Indicator = Callable[[np.ndarray, np.ndarray], bool]


@dataclass
class Task:
    """A simulator f(pi, theta) with its environment distribution and oracles"""
    name: str
    d_pi: int
    d_theta: int
    policy_lower: np.ndarray
    policy_upper: np.ndarray
    env_lower: np.ndarray
    env_upper: np.ndarray
    env: EnvDistribution
    evaluate: Evaluate
    sense: int = 1
    exact_fbar: Optional[Callable[[np.ndarray], float]] = None
    sre_indicator: Optional[Indicator] = None
    exact_sre: Optional[Callable[[np.ndarray], float]] = None
    learn_noise: bool = False
    eval_env: Optional[EnvDistribution] = None
    posterior_mode: Optional[np.ndarray] = None
    default_kappa: float = 1.5
    warp_prior: Tuple[float, float] = (0.0, 0.5)
    true_theta: Optional[np.ndarray] = None
    constants: Dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("policy_lower", "policy_upper", "env_lower", "env_upper"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.sense not in (1, -1):
            raise ValueError(f"sense must be +1 or -1, got {self.sense}")
        for box in ("policy", "env"):
            lower, upper = getattr(self, f"{box}_lower"), getattr(self, f"{box}_upper")
            if np.any(lower > upper):
                raise ConfigError(f"{self.name}: {box} box has lower > upper "
                                  f"({lower.tolist()} vs {upper.tolist()})")

    def to_unit_policy(self, pi) -> np.ndarray:
        return to_unit_box(np.asarray(pi, dtype=float).reshape(-1), self.policy_lower, self.policy_upper)

    def from_unit_policy(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float).reshape(-1), 0.0, 1.0)
        return self.policy_lower + u * (self.policy_upper - self.policy_lower)

    def unit_env(self) -> EnvDistribution:
        return self.env.normalized(self.env_lower, self.env_upper)

    def from_unit_env(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        return self.env_lower + u * (self.env_upper - self.env_lower)

    def simulate(self, pi, theta) -> float:
        """evaluate() with failures tagged by the offending (pi, theta)"""
        pi = np.asarray(pi, dtype=float).reshape(-1)
        theta = np.asarray(theta, dtype=float).reshape(-1)
        try:
            value = float(self.evaluate(pi, theta))
        except ALOQError:
            raise
        except Exception as e:
            raise SimulatorError(f"{self.name} evaluation failed: {e}", pi=pi.tolist(),
                                 theta=theta.tolist()) from e
        if not np.isfinite(value):
            raise SimulatorError(f"{self.name} returned {value}", pi=pi.tolist(), theta=theta.tolist())
        return value

    def oracle_fbar(self, pi) -> float:
        """True expected return (or cost) of a natural-unit policy"""
        pi = np.asarray(pi, dtype=float).reshape(-1)
        if self.exact_fbar is not None:
            return float(self.exact_fbar(pi))
        env = self.eval_env or self.env
        return float(sum(p * self.evaluate(pi, t) for p, t in zip(env.weights, env.support)))


def sre_probability(pi, task: Task) -> float:
    """Probability under p(theta) that pi triggers the task's rare event"""
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if task.exact_sre is not None:
        return float(task.exact_sre(pi))
    if task.sre_indicator is None:
        return 0.0
    env = task.eval_env or task.env
    return float(sum(p for p, t in zip(env.weights, env.support) if task.sre_indicator(pi, t)))


def _on_support(theta: float, support: np.ndarray, name: str) -> None:
    if not np.any(np.abs(support - theta) <= SUPPORT_ATOL):
        raise DomainError(f"theta={theta} is not on the {name} support")


def _check_policy(pi: float, name: str) -> None:
    if not np.isfinite(pi) or pi < -2.0 or pi > 2.0:
        raise DomainError(f"{name} policy must lie in [-2, 2], got {pi}")


# F-SRE1: 21 points at 0.47% on [-1, 0], 90 points at 1.0% on [0.05, 4.5]
FSRE1_SUPPORT = np.round(np.concatenate([np.linspace(-1.0, 0.0, 21), np.linspace(0.05, 4.5, 90)]), 10)
FSRE1_RAW_PROBS = np.concatenate([np.full(21, 0.0047), np.full(90, 0.01)])

# F-SRE2: 1.2% on [-1, -0.22], 0.2% on [-0.2, 0.2], 1.2% on [0.22, 1]
FSRE2_SUPPORT = np.round(np.concatenate([
    np.linspace(-1.0, -0.22, 40), np.linspace(-0.2, 0.2, 21), np.linspace(0.22, 1.0, 40)]), 10)
FSRE2_RAW_PROBS = np.concatenate([np.full(40, 0.012), np.full(21, 0.002), np.full(40, 0.012)])


def _fsre1_value(pi: float, theta: float) -> float:
    return float(75.0 * pi * np.exp(-pi ** 2 - (4.0 * theta + 2.0) ** 2) + np.sin(2.0 * pi) * np.sin(2.7 * theta))


def _fsre2_value(pi: float, theta: float) -> float:
    return float(np.sin(pi) ** 2 + 2.0 * np.cos(theta)
                 + 200.0 * np.cos(2.0 * pi) * (0.2 - min(0.2, abs(theta))))


def fsre1(pi: float, theta: float) -> float:
    """f = 75 pi exp(-pi^2 - (4 theta + 2)^2) + sin(2 pi) sin(2.7 theta)"""
    pi, theta = float(np.ravel(pi)[0]), float(np.ravel(theta)[0])
    _check_policy(pi, "F-SRE1")
    _on_support(theta, FSRE1_SUPPORT, "F-SRE1")
    return _fsre1_value(pi, theta)


def fsre2(pi: float, theta: float) -> float:
    """f = sin^2 pi + 2 cos theta + 200 cos(2 pi) (0.2 - min(0.2, |theta|)); rare band |theta| < 0.2"""
    pi, theta = float(np.ravel(pi)[0]), float(np.ravel(theta)[0])
    _check_policy(pi, "F-SRE2")
    _on_support(theta, FSRE2_SUPPORT, "F-SRE2")
    return _fsre2_value(pi, theta)


def _fsre_task(name: str, value: Callable[[float, float], float], checked: Callable,
               support: np.ndarray, raw: np.ndarray, sre: Callable[[float], bool]) -> Task:
    env = DiscreteEnv.renormalized(support, raw)
    probs = env.probs

    def exact_fbar(pi) -> float:
        p = float(np.ravel(pi)[0])
        _check_policy(p, name)
        return float(probs @ np.array([value(p, t) for t in support]))

    return Task(
        name=name,
        d_pi=1,
        d_theta=1,
        policy_lower=[-2.0],
        policy_upper=[2.0],
        env_lower=[support.min()],
        env_upper=[support.max()],
        env=env,
        evaluate=lambda pi, theta: checked(pi, theta),
        sense=1,
        exact_fbar=exact_fbar,
        default_kappa=3.0,
        warp_prior=(2.0, 0.5),
        # edge policies nearly coincide under the steep warp, so exact interpolation is ill-posed
        learn_noise=True,
        sre_indicator=lambda pi, theta: sre(float(np.ravel(theta)[0])),
        constants={
            "support": support.tolist(),
            "raw_probs": raw.tolist(),
            "raw_mass": float(raw.sum()),
            "probs": probs.tolist(),
        },
    )


def fsre1_task() -> Task:
    return _fsre_task("F-SRE1", _fsre1_value, fsre1, FSRE1_SUPPORT, FSRE1_RAW_PROBS,
                      lambda theta: theta <= 0.0)


def fsre2_task() -> Task:
    return _fsre_task("F-SRE2", _fsre2_value, fsre2, FSRE2_SUPPORT, FSRE2_RAW_PROBS,
                      lambda theta: abs(theta) < 0.2)


def _arm_cost(joints, target: np.ndarray, sre: bool, geom: ArmGeometry) -> float:
    tip, _ = arm_fk(joints, geom)
    return float(COST_SCALE * np.linalg.norm(tip - target) + (SRE_PENALTY if sre else 0.0))


def _arm_constants(geom: ArmGeometry, **extra) -> Dict:
    return {"geometry": geom.as_dict(), "cost_scale": COST_SCALE, "sre_penalty": SRE_PENALTY, **extra}


def collision_walls() -> np.ndarray:
    """20 wall positions in [-0.2, 0.14], log-spaced so they crowd towards 0.14"""
    return 0.14 - (np.geomspace(0.01, 0.35, COLLISION_WALLS) - 0.01)


def collision_probs(walls: np.ndarray, reference_min_x: float) -> np.ndarray:
    """
    Geometric-decay masses with nearer walls rarer, rescaled so the walls the
    reference policy hits carry COLLISION_MASS in total.
    """
    order = np.argsort(walls)  # farthest (most negative) first
    raw = np.empty(walls.shape[0])
    raw[order] = COLLISION_DECAY ** np.arange(walls.shape[0])
    hit = walls > reference_min_x
    if not hit.any() or hit.all():
        raise ValueError("reference policy must hit some walls and miss others")
    probs = np.where(hit, raw * COLLISION_MASS / raw[hit].sum(), raw * (1.0 - COLLISION_MASS) / raw[~hit].sum())
    return probs / probs.sum()


def arm_collision_task(geom: ArmGeometry = DEFAULT_GEOMETRY) -> Task:
    """Reach the tip of the reference policy without crossing a randomly placed wall"""
    target, ref_points = arm_fk(COLLISION_REFERENCE, geom)
    walls = collision_walls()
    env = DiscreteEnv(walls[:, None], collision_probs(walls, min_x(ref_points)))

    def hits(pi, theta) -> bool:
        _, points = arm_fk(pi, geom)
        return min_x(points) < float(np.ravel(theta)[0])

    def evaluate(pi, theta) -> float:
        return _arm_cost(pi, target, hits(pi, theta), geom)

    def exact_fbar(pi) -> float:
        tip, points = arm_fk(pi, geom)
        dist = COST_SCALE * float(np.linalg.norm(tip - target))
        return dist + SRE_PENALTY * float(env.probs[walls > min_x(points)].sum())

    return Task(
        name="arm_collision",
        d_pi=3,
        d_theta=1,
        policy_lower=[0.0] * 3,
        policy_upper=[1.0] * 3,
        env_lower=[walls.min()],
        env_upper=[walls.max()],
        env=env,
        evaluate=evaluate,
        sense=-1,
        exact_fbar=exact_fbar,
        sre_indicator=hits,
        constants=_arm_constants(geom, reference_policy=list(COLLISION_REFERENCE), target=target.tolist(),
                                 walls=walls.tolist(), probs=env.probs.tolist(),
                                 collision_mass=COLLISION_MASS, decay=COLLISION_DECAY),
    )


def _in_band(pi) -> bool:
    return BREAKAGE_BAND[0] <= float(np.ravel(pi)[0]) <= BREAKAGE_BAND[1]


def arm_breakage_task(mc_count: int = 200, seed: int = 0, geom: ArmGeometry = DEFAULT_GEOMETRY) -> Task:
    """
    First-joint angles inside the breakage band break the arm with probability
    BREAKAGE_RATE. theta is the uniform break trigger u; a break adds the
    penalty on top of the distance cost.
    """
    target, _ = arm_fk(BREAKAGE_TARGET_POLICY, geom)

    def breaks(pi, theta) -> bool:
        return _in_band(pi) and float(np.ravel(theta)[0]) < BREAKAGE_RATE

    def evaluate(pi, theta) -> float:
        return _arm_cost(pi, target, breaks(pi, theta), geom)

    def exact_fbar(pi) -> float:
        tip, _ = arm_fk(pi, geom)
        return COST_SCALE * float(np.linalg.norm(tip - target)) + BREAKAGE_RATE * SRE_PENALTY * _in_band(pi)

    return Task(
        name="arm_breakage",
        d_pi=3,
        d_theta=1,
        policy_lower=[0.0] * 3,
        policy_upper=[1.0] * 3,
        env_lower=[0.0],
        env_upper=[1.0],
        env=ContinuousEnv(_uniform_unit, mc_count=mc_count, seed=seed),
        evaluate=evaluate,
        sense=-1,
        exact_fbar=exact_fbar,
        sre_indicator=breaks,
        exact_sre=lambda pi: BREAKAGE_RATE if _in_band(pi) else 0.0,
        constants=_arm_constants(geom, target_policy=list(BREAKAGE_TARGET_POLICY), target=target.tolist(),
                                 band=list(BREAKAGE_BAND), rate=BREAKAGE_RATE, mc_count=mc_count),
    )


def _uniform_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random((n, 1))


def torque_joints(pi, theta) -> np.ndarray:
    """Joint angles reached under rigidity theta: pi / theta elementwise"""
    return np.asarray(pi, dtype=float).reshape(-1) / float(np.ravel(theta)[0])


def torque_cost(pi, theta, target: np.ndarray, geom: ArmGeometry = DEFAULT_GEOMETRY) -> float:
    joints = torque_joints(pi, theta)
    damaged = bool(np.any(joints > 1.0))
    return _arm_cost(np.clip(joints, 0.0, 1.0), target, damaged, geom)


def arm_torque_task(baseline_trials: int = 100, noise_sd: float = 2.0, seed: int = 0,
                    true_theta: Optional[float] = None,
                    geom: ArmGeometry = DEFAULT_GEOMETRY) -> Tuple[Task, float]:
    """
    Torque task with unknown p(theta).

    A hidden rigidity theta* ~ U(0.5, 1) scales every joint command. The
    baseline policy is run baseline_trials times towards its own target with
    Gaussian return noise; p(theta | baseline returns) is slice sampled and its
    draws become the task's environment distribution.

    Returns:
        (task, theta*)
    """
    if baseline_trials < 10:
        raise ValueError(f"baseline_trials must be at least 10, got {baseline_trials}")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    theta_star = float(rng.uniform(*TORQUE_PRIOR)) if true_theta is None else float(true_theta)
    if not TORQUE_PRIOR[0] <= theta_star <= TORQUE_PRIOR[1]:
        raise DomainError(f"true theta must lie in {TORQUE_PRIOR}, got {theta_star}")

    baseline_target, _ = arm_fk(TORQUE_BASELINE_JOINTS, geom)
    target, _ = arm_fk(TORQUE_TARGET_JOINTS, geom)
    baseline = np.asarray(TORQUE_BASELINE_POLICY)
    returns = torque_cost(baseline, theta_star, baseline_target, geom) + noise_sd * rng.standard_normal(baseline_trials)

    # Floor keeps the likelihood finite as noise_sd goes to zero
    sd = max(noise_sd, 1e-3)

    def log_posterior(theta_vec: np.ndarray) -> float:
        theta = float(theta_vec[0])
        if theta < TORQUE_PRIOR[0] or theta > TORQUE_PRIOR[1]:
            return -np.inf
        resid = returns - torque_cost(baseline, theta, baseline_target, geom)
        return float(-0.5 * np.sum(resid * resid) / sd ** 2)

    chain = ChainConfig(seed=seed + 1, n_samples=TORQUE_EVAL_SAMPLES, burn_in=200, thinning=2,
                        initial_point=[float(np.mean(TORQUE_PRIOR))], step_width=[0.05],
                        lower=[TORQUE_PRIOR[0]], upper=[TORQUE_PRIOR[1]])
    draws = slice_sample(log_posterior, chain)
    lps = np.array([log_posterior(d) for d in draws])
    mode = draws[int(np.argmax(lps))].copy()

    warnings = []
    if np.ptp(draws[:, 0]) < 1e-12:
        msg = f"torque posterior is degenerate: every sample equals {draws[0, 0]:.6f}"
        logger.warning(msg)
        warnings.append(msg)

    opt_idx = np.linspace(0, TORQUE_EVAL_SAMPLES - 1, TORQUE_OPT_SAMPLES).round().astype(int)
    env = DiscreteEnv.uniform(draws[opt_idx])
    eval_env = DiscreteEnv.uniform(draws)

    def evaluate(pi, theta) -> float:
        theta = float(np.ravel(theta)[0])
        if theta <= 0:
            raise DomainError(f"torque rigidity must be positive, got {theta}")
        return torque_cost(pi, theta, target, geom)

    def exact_fbar(pi) -> float:
        return float(np.mean([torque_cost(pi, t, target, geom) for t in eval_env.points[:, 0]]))

    task = Task(
        name="arm_torque",
        d_pi=3,
        d_theta=1,
        policy_lower=[0.0] * 3,
        policy_upper=[1.0] * 3,
        env_lower=[TORQUE_PRIOR[0]],
        env_upper=[TORQUE_PRIOR[1]],
        env=env,
        evaluate=evaluate,
        sense=-1,
        exact_fbar=exact_fbar,
        sre_indicator=lambda pi, theta: bool(np.any(torque_joints(pi, theta) > 1.0)),
        learn_noise=True,
        eval_env=eval_env,
        posterior_mode=mode,
        true_theta=np.array([theta_star]),
        constants=_arm_constants(
            geom, baseline_policy=list(TORQUE_BASELINE_POLICY), baseline_target=baseline_target.tolist(),
            target=target.tolist(), baseline_trials=baseline_trials, noise_sd=noise_sd,
            true_theta=theta_star, posterior_mode=mode.tolist(),
            posterior_mean=float(draws.mean()), posterior_std=float(draws.std())),
        warnings=warnings,
    )
    return task, theta_star


def torque_map_policy(task: Task, budget: int = 500) -> np.ndarray:
    """DIRECT minimiser of the cost at the posterior-mode theta (the MAP baseline)"""
    if task.posterior_mode is None:
        raise ValueError(f"{task.name} has no posterior mode")
    mode = task.posterior_mode
    x, _ = direct_maximize(lambda u: -task.evaluate(task.from_unit_policy(u), mode), task.d_pi, budget=budget)
    return task.from_unit_policy(x)
