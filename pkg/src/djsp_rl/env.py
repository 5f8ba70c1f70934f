"""Event-driven dynamic job-shop simulator with the rule-action MDP interface.

A schedule cycle is one discrete event: either an idle machine gets the
rule-selected doable operation (no clock movement), or the clock jumps to
the earliest running completion and that operation is retired. A step holds
one rule for up to `schedule_cycle` cycles and pays the mean idle ratio,
negated, as reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import EnvConfig, substream
from .graph import OpId, build_graph, feature_matrix, refresh_features
from .instance import JspInstance, load_instance, permute_jobs, perturb_times
from .rules import DispatchRule, select_for_machine

UNSTARTED, RUNNING, DONE = 0, 1, 2


@dataclass
class ScheduleEntry:
    job: int
    step: int
    machine: int  # 1-indexed id
    start: int
    end: int


@dataclass
class StepResult:
    features: Optional[np.ndarray]  # (n*m, 10) or None when feature export is off
    reward: float
    done: bool
    info: dict


class SimState:
    """Mutable simulator core for one episode of one (perturbed) instance."""

    def __init__(self, inst: JspInstance):
        self.inst = inst
        n, m = inst.n_jobs, inst.n_machines
        self.clock = 0
        self.status = np.zeros((n, m), dtype=np.int8)
        self.start_time = np.full((n, m), -1, dtype=np.int64)
        self.completion_time = np.full((n, m), -1, dtype=np.int64)
        self.became_doable = np.full((n, m), -1, dtype=np.int64)
        self.machine_op: list[Optional[OpId]] = [None] * m
        self.machine_completion = np.full(m, -1, dtype=np.int64)
        self.schedule: list[ScheduleEntry] = []
        self.n_done = 0
        self.n_present = inst.n_present_ops
        # static per episode: suffix counts / remaining work including slot l
        pres = inst.present.astype(np.int64)
        work = inst.time_matrix * pres
        self._suffix_count = np.cumsum(pres[:, ::-1], axis=1)[:, ::-1]
        self._suffix_work = np.cumsum(work[:, ::-1], axis=1)[:, ::-1]
        # frontier: per job, index of next unstarted present op (m = exhausted)
        self._frontier = np.full(n, m, dtype=np.int64)
        self._doable: set[OpId] = set()
        for i in range(n):
            steps = np.flatnonzero(pres[i])
            if len(steps):
                self._frontier[i] = steps[0]
                op = OpId(i, int(steps[0]))
                self._doable.add(op)
                self.became_doable[op] = 0

    # --- queries used by rules and the graph ---

    @property
    def done(self) -> bool:
        return self.n_done == self.n_present

    def is_doable(self, op: OpId) -> bool:
        return tuple(op) in self._doable

    def doable_ops(self) -> list[OpId]:
        return sorted(self._doable)

    def duration(self, op: OpId) -> int:
        return int(self.inst.time_matrix[op[0], op[1]])

    def machine_of(self, op: OpId) -> int:
        return int(self.inst.machine_matrix[op[0], op[1]])

    def remaining_op_count(self, job: int, step: int) -> int:
        """Present operations of the job from `step` on, inclusive."""
        return int(self._suffix_count[job, step])

    def remaining_work(self, job: int, step: int) -> int:
        """Total duration of the job's present operations from `step` on."""
        return int(self._suffix_work[job, step])

    def idle_ratio(self) -> float:
        idle = sum(1 for op in self.machine_op if op is None)
        return idle / self.inst.n_machines

    # --- the schedule cycle ---

    def run_cycle(self, rule: DispatchRule) -> float:
        """Run one cycle under `rule`; returns the idle ratio sampled after it."""
        if self.done:
            raise RuntimeError("run_cycle called on a finished episode")
        if not self._try_assign(rule):
            self._advance_and_retire()
        return self.idle_ratio()

    def _try_assign(self, rule: DispatchRule) -> bool:
        for mach_idx in range(self.inst.n_machines):
            if self.machine_op[mach_idx] is not None:
                continue
            op = select_for_machine(rule, mach_idx + 1, self)
            if op is None:
                continue
            job, step = op
            dur = self.duration(op)
            self.status[job, step] = RUNNING
            self.start_time[job, step] = self.clock
            self.machine_op[mach_idx] = OpId(job, step)
            self.machine_completion[mach_idx] = self.clock + dur
            self._doable.discard((job, step))
            self.schedule.append(ScheduleEntry(job, step, mach_idx + 1,
                                               self.clock, self.clock + dur))
            return True
        return False

    def _advance_and_retire(self) -> None:
        busy = [i for i, op in enumerate(self.machine_op) if op is not None]
        if not busy:
            raise RuntimeError("no runnable work: idle machines and empty queues")
        mach_idx = min(busy, key=lambda i: (self.machine_completion[i], i))
        op = self.machine_op[mach_idx]
        job, step = op
        self.clock = int(self.machine_completion[mach_idx])
        self.status[job, step] = DONE
        self.completion_time[job, step] = self.clock
        self.machine_op[mach_idx] = None
        self.machine_completion[mach_idx] = -1
        self.n_done += 1
        # advance the job frontier past this op to the next present one
        nxt = step + 1
        m = self.inst.n_machines
        while nxt < m and self.inst.machine_matrix[job, nxt] == 0:
            nxt += 1
        self._frontier[job] = nxt
        if nxt < m:
            self._doable.add(OpId(job, int(nxt)))
            self.became_doable[job, nxt] = self.clock

    def makespan(self) -> int:
        if not self.done:
            raise RuntimeError("makespan undefined before the episode is done")
        if self.n_present == 0:
            return 0
        return int(self.completion_time[self.inst.present].max())


def validate_schedule(sim: SimState) -> bool:
    """Feasibility check: machine intervals disjoint, precedence kept, full coverage."""
    if not sim.done:
        raise RuntimeError("validate_schedule requires a finished episode")
    inst = sim.inst
    seen = set()
    per_machine: dict[int, list[tuple[int, int]]] = {}
    for e in sim.schedule:
        if (e.job, e.step) in seen:
            return False
        seen.add((e.job, e.step))
        if e.machine != inst.machine_matrix[e.job, e.step]:
            return False
        if e.end - e.start != inst.time_matrix[e.job, e.step]:
            return False
        per_machine.setdefault(e.machine, []).append((e.start, e.end))
    if len(seen) != inst.n_present_ops:
        return False
    for ivals in per_machine.values():
        ivals.sort()
        for (s1, e1), (s2, _) in zip(ivals, ivals[1:]):
            if s2 < e1:
                return False
    # job precedence over present ops
    by_op = {(e.job, e.step): e for e in sim.schedule}
    for i in range(inst.n_jobs):
        steps = np.flatnonzero(inst.present[i])
        for a, b in zip(steps, steps[1:]):
            if by_op[(i, int(b))].start < by_op[(i, int(a))].end:
                return False
    return True


class JobShopEnv:
    """Rule-action scheduling environment over one instance."""

    def __init__(self, cfg: EnvConfig, compute_features: bool = True,
                 instance_dir: str | None = None):
        self.cfg = cfg
        self.compute_features = compute_features
        self.base_instance = load_instance(cfg.instance, instance_dir)
        self._ep_seeds = substream(cfg.perturb.seed, "env-episodes")
        self._static_instance: Optional[JspInstance] = None
        self.sim: Optional[SimState] = None
        self._graph = None
        self.trace: list[tuple[int, str, float]] = []
        self.trace_enabled = False
        self.episode_seed: Optional[int] = None

    def _episode_instance(self, seed: int) -> JspInstance:
        # shuffle = job-row permutation (changed order requirements); noise
        # on top models breakdown-like duration stretching
        inst = self.base_instance
        if self.cfg.perturb.shuffle:
            inst = permute_jobs(inst, substream(seed, "shuffle"))
        if self.cfg.perturb.random_rate > 0:
            inst = perturb_times(inst, self.cfg.perturb, substream(seed, "noise"))
        return inst

    def reset(self, seed: Optional[int] = None) -> Optional[np.ndarray]:
        if seed is None:
            seed = int(self._ep_seeds.integers(0, 2**63))
        self.episode_seed = seed
        if self.cfg.perturb_per_episode:
            inst = self._episode_instance(seed)
        else:
            if self._static_instance is None:
                self._static_instance = self._episode_instance(self.cfg.perturb.seed)
            inst = self._static_instance
        self.sim = SimState(inst)
        self._graph = None
        self.trace = []
        return self.features() if self.compute_features else None

    def graph(self):
        """Disjunctive graph of the live episode, built on first use."""
        if self._graph is None:
            self._graph = build_graph(self.sim.inst)
        return refresh_features(self._graph, self.sim)

    def features(self) -> np.ndarray:
        return feature_matrix(self.graph())

    def step(self, action: DispatchRule) -> StepResult:
        if self.sim is None:
            raise RuntimeError("step before reset")
        if self.sim.done:
            raise RuntimeError("step after episode end")
        action = DispatchRule(action)
        clock_before = self.sim.clock
        ratios = []
        for _ in range(self.cfg.schedule_cycle):
            ratios.append(self.sim.run_cycle(action))
            if self.trace_enabled:
                self.trace.append((self.sim.clock, action.name, ratios[-1]))
            if self.sim.done:
                break
        reward = -sum(ratios) / len(ratios)
        done = self.sim.done
        info = {
            "makespan": self.sim.makespan() if done else 0,
            "elapsed": self.sim.clock - clock_before,
            "cycles_run": len(ratios),
        }
        feats = self.features() if self.compute_features else None
        return StepResult(feats, reward, done, info)

    def makespan(self) -> int:
        return self.sim.makespan()


def run_rule_episode(env: JobShopEnv, rule: DispatchRule,
                     seed: Optional[int] = None) -> int:
    """Reset and run one full episode under a single fixed rule; returns makespan."""
    env.reset(seed=seed)
    while not env.sim.done:
        env.step(rule)
    return env.makespan()
