import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from djsp_rl.config import EnvConfig, PerturbConfig
from djsp_rl.env import JobShopEnv, SimState, run_rule_episode, validate_schedule
from djsp_rl.rules import ALL_RULES, DispatchRule

from conftest import make_instance


def static_cfg(name, k=8, seed=0):
    return EnvConfig(instance=name, schedule_cycle=k,
                     perturb=PerturbConfig(random_rate=0.0, shuffle=False, seed=seed))


def dynamic_cfg(name, k=8, seed=0, rate=0.1):
    return EnvConfig(instance=name, schedule_cycle=k,
                     perturb=PerturbConfig(random_rate=rate, shuffle=True, seed=seed))


def test_reset_deterministic_features():
    env = JobShopEnv(static_cfg("ft06"))
    f1 = env.reset(seed=5)
    f2 = env.reset(seed=5)
    assert np.array_equal(f1, f2)
    assert f1.shape == (36, 10)
    # fresh episode: every present node unfinished, nothing running
    assert np.all(f1[:, 2] == -1)
    assert np.all(f1[:, 7] == 0)


def test_reset_perturbed_deterministic():
    env = JobShopEnv(dynamic_cfg("ft06"))
    env.reset(seed=123)
    t1 = env.sim.inst.time_matrix.copy()
    env.reset(seed=123)
    t2 = env.sim.inst.time_matrix.copy()
    assert np.array_equal(t1, t2)
    env.reset(seed=124)
    assert not np.array_equal(t1, env.sim.inst.time_matrix)


def test_perturb_once_mode_reuses_instance():
    cfg = EnvConfig(instance="ft06", schedule_cycle=8,
                    perturb=PerturbConfig(random_rate=0.5, shuffle=True, seed=3),
                    perturb_per_episode=False)
    env = JobShopEnv(cfg)
    env.reset(seed=1)
    t1 = env.sim.inst.time_matrix.copy()
    env.reset(seed=99)
    assert np.array_equal(t1, env.sim.inst.time_matrix)


def test_single_op_instance_step_and_makespan():
    inst = make_instance([[1]], [[5]])
    sim = SimState(inst)
    # cycle 1 assigns (machine busy after), cycle 2 retires (machine idle, done)
    assert sim.run_cycle(DispatchRule.FIFO) == 0.0
    assert not sim.done
    assert sim.run_cycle(DispatchRule.FIFO) == 1.0
    assert sim.done and sim.makespan() == 5


def test_two_jobs_one_machine_makespan_is_sum():
    inst = make_instance([[1], [1]], [[3], [4]])
    for rule in ALL_RULES:
        sim = SimState(inst)
        while not sim.done:
            sim.run_cycle(rule)
        assert sim.makespan() == 7


def test_step_reward_bounds_and_info(ft06):
    env = JobShopEnv(static_cfg("ft06", k=8))
    env.reset(seed=0)
    total_cycles = 0
    while True:
        res = env.step(DispatchRule.SPT)
        assert -1.0 <= res.reward <= 0.0
        assert res.info["cycles_run"] >= 1
        total_cycles += res.info["cycles_run"]
        if res.done:
            assert res.info["makespan"] > 0
            break
        assert res.info["makespan"] == 0
    assert total_cycles == 2 * 36  # one assign + one retire per operation
    with pytest.raises(RuntimeError, match="after episode end"):
        env.step(DispatchRule.SPT)


def test_reward_zero_when_no_machine_left_idle():
    # two machines; job 0 occupies machine 1, job 1 occupies machine 2
    inst = make_instance([[1, 0], [2, 0]], [[5, 0], [5, 0]])
    sim = SimState(inst)
    r1 = sim.run_cycle(DispatchRule.FIFO)  # assign job0 -> machine1; machine2 idle
    r2 = sim.run_cycle(DispatchRule.FIFO)  # assign job1 -> machine2; none idle
    assert r1 == 0.5 and r2 == 0.0


def test_makespan_before_done_raises():
    sim = SimState(make_instance([[1]], [[5]]))
    with pytest.raises(RuntimeError, match="undefined"):
        sim.makespan()


def test_empty_instance_trivially_done_and_valid():
    sim = SimState(make_instance([[0, 0]], [[0, 0]]))
    assert sim.done and sim.makespan() == 0
    assert validate_schedule(sim)


def test_validate_schedule_accepts_real_and_rejects_forged():
    env = JobShopEnv(static_cfg("ft06"), compute_features=False)
    run_rule_episode(env, DispatchRule.MOR)
    assert validate_schedule(env.sim)
    # forge an overlap on the first machine band
    sim = env.sim
    entries = [e for e in sim.schedule if e.machine == 1]
    entries[1].start = entries[0].start
    entries[1].end = entries[1].start + (entries[1].end - entries[1].start)
    assert not validate_schedule(sim)


def test_work_conservation_no_idle_with_doable(ft06):
    """The clock never advances while an idle machine has a doable operation."""
    sim = SimState(ft06)
    while not sim.done:
        clock_before = sim.clock
        had_assignable = any(
            sim.machine_op[sim.machine_of(op) - 1] is None for op in sim.doable_ops()
        )
        sim.run_cycle(DispatchRule.SPT)
        if sim.clock > clock_before:
            assert not had_assignable


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rule=st.sampled_from(list(ALL_RULES)))
def test_dynamic_episode_terminates_and_bounds(seed, rule):
    env = JobShopEnv(dynamic_cfg("ft06", k=8, seed=seed), compute_features=False)
    env.reset(seed=seed)
    n_cycles = 0
    while not env.sim.done:
        res = env.step(rule)
        n_cycles += res.info["cycles_run"]
        assert -1.0 <= res.reward <= 0.0
    assert n_cycles <= 2 * 36
    ms = env.makespan()
    inst = env.sim.inst
    job_load = int((inst.time_matrix * inst.present).sum(axis=1).max())
    mach_load = 0
    for mach in range(1, inst.n_machines + 1):
        mach_load = max(mach_load, int(inst.time_matrix[inst.machine_matrix == mach].sum()))
    assert ms >= max(job_load, mach_load)
    assert validate_schedule(env.sim)


def test_unknown_instance_raises():
    with pytest.raises(KeyError, match="unknown instance"):
        JobShopEnv(static_cfg("nope99"))


def test_trace_records_cycles():
    env = JobShopEnv(static_cfg("ft06", k=4), compute_features=False)
    env.trace_enabled = True
    env.reset(seed=0)
    env.step(DispatchRule.FIFO)
    assert len(env.trace) == 4
    clock, action, ratio = env.trace[0]
    assert action == "FIFO" and 0.0 <= ratio <= 1.0
