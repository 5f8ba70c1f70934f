"""Dynamic job-shop scheduling with rule-selecting reinforcement learning.

The package is organized around an event-driven simulator (`env`), the eight
classic dispatching rules (`rules`), a disjunctive-graph state with per-node
features (`graph`), a small autodiff core with an attention encoder
(`diffcore`), and a dueling double-Q agent with prioritized replay and noisy
layers (`agent`). `cli` ties everything into reproducible runs.
"""

__version__ = "0.1.0"

from .config import EnvConfig, NetConfig, PerturbConfig, TrainConfig
from .instance import (
    JspInstance,
    load_instance,
    parse_orlib,
    permute_jobs,
    perturb_times,
    shuffle_ops,
)
from .rules import DispatchRule

__all__ = [
    "DispatchRule",
    "EnvConfig",
    "JspInstance",
    "NetConfig",
    "PerturbConfig",
    "TrainConfig",
    "load_instance",
    "parse_orlib",
    "permute_jobs",
    "perturb_times",
    "shuffle_ops",
    "__version__",
]
