"""Objective function suites hosted by workers."""

from .continuous import ContinuousBenchmark
from .discrete import DiscreteBenchmark, DummyWrapper, NeutralityWrapper

__all__ = [
    "ContinuousBenchmark",
    "DiscreteBenchmark",
    "DummyWrapper",
    "NeutralityWrapper",
]
