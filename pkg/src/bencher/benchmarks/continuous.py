"""Continuous objective functions on the unit hypercube.

Callers hand in points u in [0,1]^d; coordinates are mapped affinely onto the
working domain [-5,5]^d (z_i = -5 + 10 u_i) before the raw function form is
applied. An optional seeded shift vector in [-4,4]^d relocates the optimum
(z -> z - shift). All functions are minimized and attain 0 at their optimum;
away from it they are strictly positive.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DOMAIN_LOW = -5.0
DOMAIN_HIGH = 5.0
SHIFT_LOW = -4.0
SHIFT_HIGH = 4.0
MIN_DIMENSIONS = 2


def map_to_domain(u: Sequence[float]) -> np.ndarray:
    """Map unit-cube coordinates onto [-5, 5]: z_i = -5 + 10 u_i."""
    return DOMAIN_LOW + (DOMAIN_HIGH - DOMAIN_LOW) * np.asarray(u, dtype=float)


def sphere(z: np.ndarray) -> float:
    return float(np.sum(z * z))


def ellipsoid(z: np.ndarray) -> float:
    d = z.size
    weights = 10.0 ** (6.0 * np.arange(d) / (d - 1))
    return float(np.sum(weights * z * z))


def rastrigin(z: np.ndarray) -> float:
    d = z.size
    return float(10.0 * (d - np.sum(np.cos(2.0 * np.pi * z))) + np.sum(z * z))


def rosenbrock(z: np.ndarray) -> float:
    a = z[:-1]
    b = z[1:]
    return float(np.sum(100.0 * (a * a - b) ** 2 + (a - 1.0) ** 2))


def discus(z: np.ndarray) -> float:
    return float(1e6 * z[0] * z[0] + np.sum(z[1:] * z[1:]))


def bentcigar(z: np.ndarray) -> float:
    return float(z[0] * z[0] + 1e6 * np.sum(z[1:] * z[1:]))


def sharpridge(z: np.ndarray) -> float:
    return float(z[0] * z[0] + 100.0 * np.sqrt(np.sum(z[1:] * z[1:])))


def differentpowers(z: np.ndarray) -> float:
    d = z.size
    exponents = 2.0 + 4.0 * np.arange(d) / (d - 1)
    return float(np.sqrt(np.sum(np.abs(z) ** exponents)))


def linearslope(z: np.ndarray) -> float:
    d = z.size
    s = 10.0 ** (np.arange(d) / (d - 1))
    return float(np.sum(5.0 * s - s * z))


FUNCTIONS: dict[str, Callable[[np.ndarray], float]] = {
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "rastrigin": rastrigin,
    "rosenbrock": rosenbrock,
    "discus": discus,
    "bentcigar": bentcigar,
    "sharpridge": sharpridge,
    "differentpowers": differentpowers,
    "linearslope": linearslope,
}

# Unit-cube location of the unshifted optimum: z*=0 for most forms, z*=1 for
# rosenbrock, z*=5 (the domain edge) for linearslope.
_OPTIMUM_Z = {
    "rosenbrock": 1.0,
    "linearslope": 5.0,
}

# Even functions satisfy f(z) == f(-z), i.e. f(u) == f(1-u) on the cube.
EVEN_FUNCTIONS = (
    "sphere",
    "ellipsoid",
    "rastrigin",
    "discus",
    "bentcigar",
    "differentpowers",
)


def shift_vector(seed: int, dimensions: int) -> np.ndarray:
    """Deterministic shift in [-4, 4]^d; depends only on (seed, dimensions)."""
    rng = random.Random(seed)
    return np.array([rng.uniform(SHIFT_LOW, SHIFT_HIGH) for _ in range(dimensions)])


def optimum_unit_point(function_id: str, dimensions: int) -> np.ndarray:
    """Unit-cube point where the unshifted function attains its optimum 0."""
    z_star = _OPTIMUM_Z.get(function_id, 0.0)
    return np.full(dimensions, (z_star + 5.0) / 10.0)


@dataclass(frozen=True)
class ContinuousBenchmark:
    """A function form bound to a dimensionality and an optional shift seed."""

    function_id: str
    dimensions: int
    shift_seed: int | None = None

    def __post_init__(self) -> None:
        if self.function_id not in FUNCTIONS:
            raise ValueError(f"unknown continuous function {self.function_id!r}")
        if self.dimensions < MIN_DIMENSIONS:
            raise ValueError(f"continuous functions require d >= {MIN_DIMENSIONS}")

    @property
    def shift(self) -> np.ndarray | None:
        if self.shift_seed is None:
            return None
        return shift_vector(self.shift_seed, self.dimensions)

    def evaluate(self, u: Sequence[float]) -> float:
        z = map_to_domain(u)
        if z.shape != (self.dimensions,):
            raise ValueError(f"expected {self.dimensions} coordinates, got {z.shape}")
        if self.shift_seed is not None:
            z = z - self.shift
        return FUNCTIONS[self.function_id](z)
