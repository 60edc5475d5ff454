"""Kernel conditional independence testing with partitioned, parallel FastKCI.

The two entry points are :func:`kci_test` (the full-sample kernel test) and
:func:`fastkci_test` (mixture-partitioned, importance-weighted replicates of
the same test). Both return a :class:`TestOutcome`.
"""

from .errors import FastKCIError, NumericalError, ValidationError
from .fast import FastKciConfig, fastkci_test
from .kci import KciConfig, TestOutcome, kci_test
from .pc import pc_skeleton, score_edges

__all__ = [
    "FastKCIError",
    "FastKciConfig",
    "KciConfig",
    "NumericalError",
    "TestOutcome",
    "ValidationError",
    "fastkci_test",
    "kci_test",
    "pc_skeleton",
    "score_edges",
]
__version__ = "0.1.0"
