"""Temporal Renyi entropies of quenched spin chains.

Two independent routes to the same object: the replica double-quench
protocol (measurable expectation values on replicated systems) and the
direct contraction of reduced transition matrices from the space-time
gate network.  Frequency-momentum analysis of the resulting entropy
grids distinguishes integrable from non-integrable dynamics.
"""

__version__ = "0.1.0"

from .hamiltonians import IsingParams, ReplicaLayout
from .replica import EntropyGrid, QuenchPlan, run_double_quench

__all__ = [
    "IsingParams",
    "ReplicaLayout",
    "QuenchPlan",
    "EntropyGrid",
    "run_double_quench",
    "__version__",
]
