"""Dataclass configs and the master-seed substream derivation.

All randomness flows from one master seed. Components draw from named
substreams (PCG64 seeded via SeedSequence with a sha256-derived spawn key),
so runs are reproducible and independent of call order across components.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

import numpy as np

RNG_ALGORITHM = "PCG64/SeedSequence(sha256 label substreams)"


def substream(master_seed: int, *labels) -> np.random.Generator:
    """Generator for the named substream of a master seed."""
    digest = hashlib.sha256("/".join(str(l) for l in labels).encode()).digest()
    key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PerturbConfig:
    """Dynamic-disturbance controls: duration noise and order shuffling."""

    random_rate: float = 0.1
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.random_rate <= 1.0:
            raise ValueError(f"random_rate must be in [0,1], got {self.random_rate}")


@dataclass(frozen=True)
class EnvConfig:
    instance: str = "ft06"
    schedule_cycle: int = 8
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    # re-draw shuffle/noise at every reset (vs once at construction)
    perturb_per_episode: bool = True

    def __post_init__(self):
        if self.schedule_cycle < 1:
            raise ValueError(f"schedule_cycle must be >= 1, got {self.schedule_cycle}")


@dataclass(frozen=True)
class NetConfig:
    """Encoder + Q-head sizes. d_feature must be divisible by n_heads."""

    d_feature: int = 40
    n_heads: int = 5
    n_layers: int = 3
    d_ff: int = 160
    sigma0: float = 0.5  # noisy-layer sigma init scale, sigma = sigma0/sqrt(fan_in)

    def __post_init__(self):
        if self.d_feature % self.n_heads != 0:
            raise ValueError(
                f"d_feature ({self.d_feature}) must be divisible by n_heads ({self.n_heads})"
            )


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 3000
    test_episodes: int = 500
    buffer_size: int = 100_000
    step_size: float = 3e-4
    batch_size: int = 64
    target_update: int = 100  # gradient steps between target syncs
    gamma: float = 0.99
    per_alpha: float = 0.6
    per_beta: float = 0.4
    priority_floor: float = 1e-6
    # gradient step every N agent decisions (1 = after every decision);
    # raise on slow hardware to trade optimizer steps for wall clock
    train_every: int = 1
    # component toggles (all on = the full agent; subsets for ablations)
    double: bool = True
    dueling: bool = True
    per: bool = True
    noisy: bool = True
    # epsilon-greedy fallback used only when noisy=False
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000


# flat key=value config files mirror these names; CLI flags override
CONFIG_KEYS = {
    "instance": str,
    "schedule_cycle": int,
    "random_rate": float,
    "shuffle": bool,
    "episodes": int,
    "test_episodes": int,
    "buffer_size": int,
    "step_size": float,
    "batch_size": int,
    "target_update": int,
    "gamma": float,
    "per_alpha": float,
    "per_beta": float,
    "d_feature": int,
    "n_heads": int,
    "n_layers": int,
    "d_ff": int,
    "seed": int,
}


def parse_config_file(path) -> dict:
    """Read a flat `key = value` file (# comments allowed) into typed values."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
            typ = CONFIG_KEYS[key]
            if typ is bool:
                if val.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"{path}:{ln}: bad boolean {val!r}")
                out[key] = val.lower() in ("true", "1")
            else:
                out[key] = typ(val)
    return out


def asdict_flat(cfg) -> dict:
    """Flatten a dataclass (one level of nesting) into plain key -> value."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if hasattr(v, "__dataclass_fields__"):
            out.update({g.name: getattr(v, g.name) for g in fields(v)})
        else:
            out[f.name] = v
    return out
