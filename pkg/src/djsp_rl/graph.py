"""Disjunctive-graph state: node features, edge structure, orientations.

Nodes are the real operations plus dummy start/terminal vertices. Conjunctive
edges follow each job's sequence; disjunctive edges form a clique per machine
and get oriented by the order the simulator actually starts operations. The
encoder consumes only the per-node feature matrix; edges back the structural
validation (acyclicity, longest path = makespan) and the JSON export.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

START = "start"
TERMINAL = "terminal"

# feature column layout
FEATURE_NAMES = (
    "job_id", "step_id", "node_type", "completion_ratio", "time_consumption",
    "remaining_ops", "waiting_time", "remaining_time", "doable", "machine_id",
)
N_FEATURES = len(FEATURE_NAMES)


class OpId(NamedTuple):
    job: int
    step: int


@dataclass(frozen=True)
class NodeFeatures:
    job_id: int
    step_id: int
    node_type: int  # -1 unfinished, 0 in-process, 1 completed
    completion_ratio: float
    time_consumption: int
    remaining_ops: int
    waiting_time: int
    remaining_time: int
    doable: bool
    machine_id: int


class DisjunctiveGraph:
    def __init__(self, inst):
        self.inst = inst
        n, m = inst.n_jobs, inst.n_machines
        self.present = inst.present
        self.raw = np.zeros((n, m, N_FEATURES), dtype=np.float64)
        self._init_static()
        self.conjunctive_edges: list[tuple] = []
        self.disjunctive_edges: list[tuple[OpId, OpId]] = []
        self.orientations: dict[tuple[OpId, OpId], tuple[OpId, OpId]] = {}
        self._build_edges()

    def _init_static(self):
        inst = self.inst
        n, m = inst.n_jobs, inst.n_machines
        jj, ll = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        self.raw[:, :, 0] = jj
        self.raw[:, :, 1] = ll
        self.raw[:, :, 2] = -1.0
        pres = self.present.astype(np.int64)
        per_job = pres.sum(axis=1)
        rank = np.cumsum(pres, axis=1)  # rank among present ops, 1-based
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(per_job[:, None] > 0, rank / np.maximum(per_job, 1)[:, None], 0.0)
        self.raw[:, :, 3] = ratio
        self.raw[:, :, 4] = inst.time_matrix
        suffix = np.cumsum(pres[:, ::-1], axis=1)[:, ::-1]
        self.raw[:, :, 5] = suffix - pres  # successors, excluding the op itself
        self.raw[:, :, 9] = inst.machine_matrix
        self.raw[~self.present] = 0.0

    def _build_edges(self):
        inst = self.inst
        for i in range(inst.n_jobs):
            steps = [int(s) for s in np.flatnonzero(self.present[i])]
            if not steps:
                continue
            self.conjunctive_edges.append((START, OpId(i, steps[0])))
            for a, b in zip(steps, steps[1:]):
                self.conjunctive_edges.append((OpId(i, a), OpId(i, b)))
            self.conjunctive_edges.append((OpId(i, steps[-1]), TERMINAL))
        by_machine: dict[int, list[OpId]] = {}
        for i in range(inst.n_jobs):
            for l in range(inst.n_machines):
                mach = int(inst.machine_matrix[i, l])
                if mach:
                    by_machine.setdefault(mach, []).append(OpId(i, l))
        for ops in by_machine.values():
            for a in range(len(ops)):
                for b in range(a + 1, len(ops)):
                    self.disjunctive_edges.append((ops[a], ops[b]))

    @property
    def n_nodes(self) -> int:
        return self.inst.n_present_ops + 2

    def node(self, op: OpId) -> NodeFeatures:
        r = self.raw[op[0], op[1]]
        return NodeFeatures(
            job_id=int(r[0]), step_id=int(r[1]), node_type=int(r[2]),
            completion_ratio=float(r[3]), time_consumption=int(r[4]),
            remaining_ops=int(r[5]), waiting_time=int(r[6]),
            remaining_time=int(r[7]), doable=bool(r[8]), machine_id=int(r[9]),
        )

    def to_json(self) -> dict:
        nodes = [{"id": [int(op.job), int(op.step)],
                  **{k: getattr(self.node(op), k) for k in FEATURE_NAMES}}
                 for op in map(OpId, *np.nonzero(self.present))]
        key = lambda v: v if isinstance(v, str) else [int(v[0]), int(v[1])]
        return {
            "nodes": nodes,
            "dummy_nodes": [START, TERMINAL],
            "conjunctive_edges": [[key(u), key(v)] for u, v in self.conjunctive_edges],
            "disjunctive_edges": [[key(u), key(v)] for u, v in self.disjunctive_edges],
            "orientations": [[key(u), key(v)] for u, v in self.orientations.values()],
        }


def build_graph(inst) -> DisjunctiveGraph:
    return DisjunctiveGraph(inst)


def refresh_features(g: DisjunctiveGraph, sim) -> DisjunctiveGraph:
    """Bring every dynamic node field and the orientation map up to date."""
    raw = g.raw
    status = sim.status
    node_type = np.where(status == 2, 1.0, np.where(status == 1, 0.0, -1.0))
    raw[:, :, 2] = node_type
    raw[:, :, 4] = sim.inst.time_matrix

    doable = np.zeros(status.shape, dtype=bool)
    for op in sim.doable_ops():
        doable[op[0], op[1]] = True
    raw[:, :, 8] = doable

    became = sim.became_doable
    started = status >= 1
    waiting = np.zeros(status.shape, dtype=np.float64)
    waiting[doable] = sim.clock - became[doable]
    waiting[started] = (sim.start_time - became)[started]
    raw[:, :, 6] = waiting

    remaining = np.zeros(status.shape, dtype=np.float64)
    running = status == 1
    if running.any():
        comp = sim.start_time + sim.inst.time_matrix
        remaining[running] = comp[running] - sim.clock
    raw[:, :, 7] = remaining

    raw[~g.present] = 0.0

    g.orientations = {}
    per_machine: dict[int, list] = {}
    for e in sim.schedule:
        per_machine.setdefault(e.machine, []).append((e.start, OpId(e.job, e.step)))
    for entries in per_machine.values():
        entries.sort()
        for a in range(len(entries)):
            for b in range(a + 1, len(entries)):
                u, v = entries[a][1], entries[b][1]
                g.orientations[(u, v) if u <= v else (v, u)] = (u, v)
    return g


def feature_matrix(g: DisjunctiveGraph) -> np.ndarray:
    """Scaled (n*m, 10) matrix, job-major; absent operations are zero rows.

    Times are divided by the instance's max single-op duration, counts by m,
    job ids by n and step/machine ids by m; node_type, completion_ratio and
    doable pass through raw.
    """
    inst = g.inst
    n, m = inst.n_jobs, inst.n_machines
    scale = np.array([
        1.0 / max(n, 1), 1.0 / max(m, 1), 1.0, 1.0,
        1.0 / max(inst.max_duration, 1), 1.0 / max(m, 1),
        1.0 / max(inst.max_duration, 1), 1.0 / max(inst.max_duration, 1),
        1.0, 1.0 / max(m, 1),
    ])
    out = g.raw * scale
    out[~g.present] = 0.0
    return out.reshape(n * m, N_FEATURES)


def longest_path_makespan(g: DisjunctiveGraph) -> int:
    """Longest start->terminal path weight through the oriented graph.

    Node-weighted by duration (dummies weigh 0); requires every disjunction
    between scheduled operations to be oriented. Raises on a cycle.
    """
    preds: dict = {TERMINAL: []}
    nodes = [START, TERMINAL] + [OpId(int(i), int(l)) for i, l in zip(*np.nonzero(g.present))]
    for v in nodes:
        preds.setdefault(v, [])
    indeg = {v: 0 for v in nodes}
    succs: dict = {v: [] for v in nodes}
    edges = list(g.conjunctive_edges) + [tuple(v) for v in g.orientations.values()]
    for u, v in edges:
        u = u if isinstance(u, str) else OpId(*u)
        v = v if isinstance(v, str) else OpId(*v)
        succs[u].append(v)
        indeg[v] += 1

    def weight(v):
        return 0 if isinstance(v, str) else int(g.inst.time_matrix[v.job, v.step])

    dist = {v: 0 for v in nodes}
    queue = [v for v in nodes if indeg[v] == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        du = dist[u] + weight(u)
        for v in succs[u]:
            if du > dist[v]:
                dist[v] = du
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if seen != len(nodes):
        raise ValueError("oriented disjunctive graph contains a cycle")
    return dist[TERMINAL]
