"""OR-Library instance loading and dynamic perturbation.

File format (standard specification): optional '#' comment lines, a header
"n m", then n lines of m (machine, duration) pairs with machines 0-indexed.
Internally machine ids are 1-indexed; 0 marks an absent operation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .config import PerturbConfig

BUNDLED_INSTANCES = (
    "ft06", "la01", "la06", "la11", "la21", "la31",
    "la36", "orb01", "swv01", "swv06", "swv11", "yn1",
)


class ParseError(ValueError):
    """Malformed instance text; message carries the offending line number."""


@dataclass(frozen=True)
class JspInstance:
    name: str
    n_jobs: int
    n_machines: int
    machine_matrix: np.ndarray  # (n_jobs, n_machines) int64, ids 1..m, 0 = absent
    time_matrix: np.ndarray  # (n_jobs, n_machines) int64, >= 0

    def __post_init__(self):
        # structural checks only; zero durations are legal post-perturbation
        self.validate(allow_zero_durations=True)

    def validate(self, allow_zero_durations: bool = False) -> None:
        mo, to = self.machine_matrix, self.time_matrix
        if mo.shape != (self.n_jobs, self.n_machines) or to.shape != mo.shape:
            raise ValueError(f"{self.name}: matrix shapes {mo.shape}/{to.shape} "
                             f"do not match {self.n_jobs}x{self.n_machines}")
        if mo.min() < 0 or mo.max() > self.n_machines:
            raise ValueError(f"{self.name}: machine ids outside 0..{self.n_machines}")
        if to.min() < 0:
            raise ValueError(f"{self.name}: negative duration")
        for i in range(self.n_jobs):
            row = mo[i][mo[i] > 0]
            if len(set(row.tolist())) != len(row):
                raise ValueError(f"{self.name}: job {i} repeats a machine")
        if np.any((mo == 0) & (to != 0)):
            raise ValueError(f"{self.name}: absent operation with nonzero duration")
        if not allow_zero_durations and np.any((mo != 0) & (to == 0)):
            raise ValueError(f"{self.name}: present operation with zero duration")

    @property
    def present(self) -> np.ndarray:
        """Boolean (n_jobs, n_machines) mask of real operations."""
        return self.machine_matrix > 0

    @property
    def n_present_ops(self) -> int:
        return int(self.present.sum())

    @property
    def max_duration(self) -> int:
        return int(self.time_matrix.max())


def parse_orlib(text, name: str = "") -> JspInstance:
    """Parse standard-specification text into a JspInstance."""
    if hasattr(text, "read"):
        text = text.read()
    rows = []
    header = None
    for ln, raw in enumerate(str(text).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            toks = [int(t) for t in line.split()]
        except ValueError:
            raise ParseError(f"line {ln}: non-integer token in {line!r}") from None
        if header is None:
            if len(toks) != 2 or toks[0] <= 0 or toks[1] <= 0:
                raise ParseError(f"line {ln}: header must be two positive ints 'n m'")
            header = (ln, toks[0], toks[1])
            continue
        rows.append((ln, toks))

    if header is None:
        raise ParseError("line 1: empty instance text")
    _, n, m = header
    if len(rows) != n:
        raise ParseError(f"line {rows[-1][0] if rows else header[0]}: "
                         f"expected {n} job rows, found {len(rows)}")

    mo = np.zeros((n, m), dtype=np.int64)
    to = np.zeros((n, m), dtype=np.int64)
    for i, (ln, toks) in enumerate(rows):
        if len(toks) != 2 * m:
            raise ParseError(f"line {ln}: expected {2*m} tokens, found {len(toks)}")
        for l in range(m):
            mach, dur = toks[2 * l], toks[2 * l + 1]
            if not 0 <= mach < m:
                raise ParseError(f"line {ln}: machine index {mach} out of range 0..{m-1}")
            if dur < 0:
                raise ParseError(f"line {ln}: negative duration {dur}")
            mo[i, l] = mach + 1
            to[i, l] = dur
    inst = JspInstance(name=name, n_jobs=n, n_machines=m,
                       machine_matrix=mo, time_matrix=to)
    inst.validate()
    return inst


def load_instance(name_or_path: str, instance_dir: str | None = None) -> JspInstance:
    """Resolve an instance by registry name or file path.

    Lookup order: explicit path, `instance_dir`, $DJSP_INSTANCE_DIR, bundled data.
    """
    p = Path(name_or_path)
    if p.suffix or p.exists():
        if not p.exists():
            raise FileNotFoundError(f"instance file not found: {name_or_path}")
        return parse_orlib(p.read_text(), name=p.stem)
    for d in (instance_dir, os.environ.get("DJSP_INSTANCE_DIR")):
        if d:
            cand = Path(d) / f"{name_or_path}.txt"
            if cand.exists():
                return parse_orlib(cand.read_text(), name=name_or_path)
    res = resources.files("djsp_rl").joinpath(f"instances/{name_or_path}.txt")
    if res.is_file():
        return parse_orlib(res.read_text(), name=name_or_path)
    raise KeyError(f"unknown instance {name_or_path!r}; "
                   f"bundled: {', '.join(BUNDLED_INSTANCES)}")


def perturb_times(inst: JspInstance, cfg: PerturbConfig,
                  rng: np.random.Generator) -> JspInstance:
    """Apply per-operation duration noise.

    Each present operation independently: with probability random_rate,
    T' = T + clamp(N(0, 0.1), -1, +1) * T, rounded half-up, floored at 0.
    A normal variate is drawn only for perturbed operations.
    """
    to = inst.time_matrix.copy()
    for i in range(inst.n_jobs):
        for l in range(inst.n_machines):
            if inst.machine_matrix[i, l] == 0:
                continue
            if rng.random() < cfg.random_rate:
                noise = min(1.0, max(-1.0, rng.normal(0.0, 0.1)))
                t_new = to[i, l] + noise * to[i, l]
                to[i, l] = max(0, int(math.floor(t_new + 0.5)))
    return replace(inst, time_matrix=to)


def shuffle_ops(inst: JspInstance, rng: np.random.Generator) -> JspInstance:
    """Permute each job's (machine, duration) pairs uniformly at random.

    Pairs move jointly; absent slots stay in place so job lengths are stable.
    """
    mo = inst.machine_matrix.copy()
    to = inst.time_matrix.copy()
    for i in range(inst.n_jobs):
        idx = np.flatnonzero(mo[i] > 0)
        perm = rng.permutation(len(idx))
        mo[i, idx] = mo[i, idx[perm]]
        to[i, idx] = to[i, idx[perm]]
    return replace(inst, machine_matrix=mo, time_matrix=to)


def permute_jobs(inst: JspInstance, rng: np.random.Generator) -> JspInstance:
    """Reorder the job rows uniformly at random (changed order requirements).

    The physical problem is unchanged up to job relabelling; what moves is
    every index-based tie-break, which is how a different order intake
    perturbs rule behavior without touching the workload itself.
    """
    perm = rng.permutation(inst.n_jobs)
    return replace(inst, machine_matrix=inst.machine_matrix[perm],
                   time_matrix=inst.time_matrix[perm])
