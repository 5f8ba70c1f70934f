"""The eight classic dispatching rules as priority policies.

A rule ranks the doable operations queued at a machine; `select_for_machine`
returns the best one. Keys are totally ordered tuples where smaller is
better, with a deterministic (job, step) tie-break.
"""

from __future__ import annotations

from enum import IntEnum
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .env import OpId, SimState


class DispatchRule(IntEnum):
    FIFO = 0  # earliest became-doable first
    LIFO = 1  # latest became-doable first
    MOR = 2  # most operations remaining in the job first
    LOR = 3  # least operations remaining first
    LPT = 4  # longest own processing time first
    SPT = 5  # shortest own processing time first
    LTPT = 6  # longest total remaining job processing time first
    STPT = 7  # shortest total remaining job processing time first


ALL_RULES = tuple(DispatchRule)


def priority_key(rule: DispatchRule, op: "OpId", sim: "SimState") -> tuple:
    """Sort key for a doable operation; min(key) is the rule's choice."""
    job, step = op
    if not sim.is_doable(op):
        raise ValueError(f"operation {op} is not doable")
    if rule == DispatchRule.FIFO:
        v = sim.became_doable[job, step]
    elif rule == DispatchRule.LIFO:
        v = -sim.became_doable[job, step]
    elif rule == DispatchRule.MOR:
        v = -sim.remaining_op_count(job, step)
    elif rule == DispatchRule.LOR:
        v = sim.remaining_op_count(job, step)
    elif rule == DispatchRule.LPT:
        v = -sim.duration(op)
    elif rule == DispatchRule.SPT:
        v = sim.duration(op)
    elif rule == DispatchRule.LTPT:
        v = -sim.remaining_work(job, step)
    elif rule == DispatchRule.STPT:
        v = sim.remaining_work(job, step)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return (v, job, step)


def select_for_machine(rule: DispatchRule, machine: int,
                       sim: "SimState") -> Optional["OpId"]:
    """Best doable operation requiring `machine` (1-indexed id), or None."""
    queue = [op for op in sim.doable_ops() if sim.machine_of(op) == machine]
    if not queue:
        return None
    return min(queue, key=lambda op: priority_key(rule, op, sim))
