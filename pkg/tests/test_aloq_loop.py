import numpy as np
import pytest

from aloq_loop import ALOQRun, initial_design_size, run_variant
from aloq_schema import AcquisitionConfig, HyperChainSettings, RunConfig, Variant
from errors import ConfigError, SimulatorError
from quadrature import DiscreteEnv
from tasks import FSRE2_SUPPORT, Task, fsre2_task


def make_config(fast_chain, variant=Variant.ALOQ, budget=12, seed=0, **extra):
    return RunConfig(task="fsre2", budget=budget, seed=seed, variant=variant,
                     acquisition=AcquisitionConfig(kappa=3.0, direct_budget=50),
                     hyper_chain=fast_chain, **extra)


def run(fast_chain, variant=Variant.ALOQ, **kwargs):
    return run_variant(make_config(fast_chain, variant, **kwargs), fsre2_task())


def call_tuples(trace):
    return [(c.call, c.policy, c.env, c.value, c.phase) for c in trace.calls]


def test_initial_design_size():
    assert initial_design_size(fsre2_task()) == 8


def test_budget_equal_to_design_runs_no_iterations(fast_chain):
    trace = run(fast_chain, budget=8)
    assert [c.phase for c in trace.calls] == ["init"] * 8
    assert [r.call for r in trace.incumbents] == [8]
    assert trace.final_oracle_fbar == pytest.approx(fsre2_task().oracle_fbar(trace.final_policy))


@pytest.mark.parametrize("variant", list(Variant))
def test_every_variant_spends_exactly_the_budget(fast_chain, variant):
    trace = run(fast_chain, variant, budget=12)
    assert len(trace.calls) == 12
    assert [c.call for c in trace.calls] == list(range(1, 13))
    assert trace.incumbents[-1].call == 12
    for c in trace.calls:
        assert -2.0 <= c.policy[0] <= 2.0
        assert np.min(np.abs(FSRE2_SUPPORT - c.env[0])) < 1e-9


def test_aloq_alternates_explore_and_intensify(fast_chain):
    trace = run(fast_chain, budget=14)
    phases = [c.phase for c in trace.calls]
    assert phases == ["init"] * 8 + ["explore", "intensify"] * 3
    for i, c in enumerate(trace.calls):
        if c.phase == "intensify":
            assert c.policy in [prev.policy for prev in trace.calls[:i]]


def test_incumbents_are_observed_policies(fast_chain):
    trace = run(fast_chain, budget=12)
    calls = [r.call for r in trace.incumbents]
    assert calls == sorted(set(calls))
    for record in trace.incumbents:
        observed = [c.policy for c in trace.calls[:record.call]]
        assert record.policy in observed


def test_one_step_never_intensifies(fast_chain):
    trace = run(fast_chain, Variant.ONE_STEP, budget=12)
    assert [c.phase for c in trace.calls[8:]] == ["explore"] * 4


def test_one_step_shares_the_first_iteration_with_aloq(fast_chain):
    aloq = run(fast_chain, Variant.ALOQ, budget=12)
    one_step = run(fast_chain, Variant.ONE_STEP, budget=12)
    assert call_tuples(aloq)[:9] == call_tuples(one_step)[:9]


def test_same_seed_reproduces_the_run(fast_chain):
    first, second = run(fast_chain, seed=4), run(fast_chain, seed=4)
    assert call_tuples(first) == call_tuples(second)
    assert [r.model_dump() for r in first.incumbents] == [r.model_dump() for r in second.incumbents]
    assert call_tuples(run(fast_chain, seed=5)) != call_tuples(first)


def test_unwarped_samples_carry_no_warp(fast_chain):
    trace = run(fast_chain, Variant.UNWARPED, budget=10)
    assert trace.final_hyper_samples
    assert all(s.warp is None for s in trace.final_hyper_samples)


def test_naive_models_policy_only(fast_chain):
    trace = run(fast_chain, Variant.NAIVE, budget=10)
    assert trace.gp_input_dim == 1
    assert all(len(s.kernel.lengthscales) == 1 for s in trace.final_hyper_samples)


def test_odd_remaining_budget_rejected(fast_chain):
    with pytest.raises(ConfigError):
        ALOQRun(make_config(fast_chain, budget=11), fsre2_task())
    with pytest.raises(ConfigError):
        ALOQRun(make_config(fast_chain, budget=6), fsre2_task())
    # one call per iteration fits any budget
    ALOQRun(make_config(fast_chain, Variant.ONE_STEP, budget=11), fsre2_task())


def test_simulator_failure_stops_the_run(fast_chain):
    def evaluate(pi, theta):
        raise RuntimeError("simulator crashed")

    task = Task(name="broken", d_pi=1, d_theta=1, policy_lower=[0.0], policy_upper=[1.0],
                env_lower=[0.0], env_upper=[1.0], env=DiscreteEnv.uniform([[0.0], [1.0]]),
                evaluate=evaluate)
    with pytest.raises(SimulatorError):
        ALOQRun(make_config(fast_chain, budget=8), task).run()


@pytest.mark.slow
@pytest.mark.parametrize("variant", [Variant.ALOQ, Variant.RQ_ALOQ, Variant.NAIVE])
def test_fsre2_with_default_chain(variant):
    config = RunConfig(task="fsre2", budget=24, seed=1, variant=variant,
                       acquisition=AcquisitionConfig(kappa=3.0), hyper_chain=HyperChainSettings())
    trace = run_variant(config, fsre2_task())
    assert len(trace.calls) == 24
    assert len(trace.final_hyper_samples) == 10
    assert np.isfinite(trace.final_oracle_fbar)


def test_single_point_environment_box(fast_chain):
    task = Task(name="pinned", d_pi=1, d_theta=1, policy_lower=[0.0], policy_upper=[1.0],
                env_lower=[0.5], env_upper=[0.5], env=DiscreteEnv.uniform([[0.5]]),
                evaluate=lambda pi, theta: -(pi[0] - 0.3) ** 2)
    trace = run_variant(make_config(fast_chain, budget=10), task)
    assert len(trace.calls) == 10
    assert all(c.env == [0.5] for c in trace.calls)
    assert np.isfinite(trace.final_oracle_fbar)


def test_fsre_runs_learn_the_noise_variance(fast_chain):
    trace = run(fast_chain, budget=10)
    noise = [s.kernel.noise_var for s in trace.final_hyper_samples]
    assert len(set(noise)) == len(noise)
    assert not any(n == pytest.approx(1e-6 * s.kernel.w0) for n, s in zip(noise, trace.final_hyper_samples))
