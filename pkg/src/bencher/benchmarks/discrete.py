"""Pseudo-Boolean objective functions over bit strings, maximized.

Base functions score a bit string x in {0,1}^n. Two W-model wrappers can be
chained in front of a base function: the raw input flows through the wrapper
list front to back (the first-listed wrapper transforms the incoming string,
the last-listed one sits innermost, adjacent to the base function), and the
base function scores whatever comes out.

  dummy(m, seed):  keeps a fixed seeded subset of m positions (sorted order)
                   and drops the rest, so n - m bits are pure decoys.
  neutrality(mu):  collapses each consecutive block of mu bits to its
                   majority bit; ties collapse to 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence


def onemax(x: Sequence[int]) -> float:
    return float(sum(x))


def leadingones(x: Sequence[int]) -> float:
    count = 0
    for bit in x:
        if not bit:
            break
        count += 1
    return float(count)


def linear(x: Sequence[int]) -> float:
    """Linear function with harmonic weights: sum of i * x_i, i starting at 1."""
    return float(sum(i * bit for i, bit in enumerate(x, start=1)))


def labs(x: Sequence[int]) -> float:
    """Merit factor n^2 / (2E) of the +-1 sequence s = 2x - 1.

    E is the autocorrelation energy sum_{k=1}^{n-1} C_k^2 with
    C_k = sum_i s_i s_{i+k}. Requires n >= 2 (E is an empty sum at n=1).
    """
    n = len(x)
    s = [2 * bit - 1 for bit in x]
    energy = 0
    for k in range(1, n):
        c_k = sum(s[i] * s[i + k] for i in range(n - k))
        energy += c_k * c_k
    return n * n / (2.0 * energy)


def isingring(x: Sequence[int]) -> float:
    """Number of equal adjacent spin pairs on a ring (n terms, wraparound)."""
    n = len(x)
    return float(sum(x[i] == x[(i + 1) % n] for i in range(n)))


def nqueens(x: Sequence[int]) -> float:
    """Queens placed minus attacking pairs on the row-major sqrt(n) board.

    A pair attacks when it shares a row, column, diagonal, or anti-diagonal
    with no third queen between them; two distinct cells share at most one
    such line, so each unblocked collinear pair counts exactly once.
    """
    n = _isqrt_exact(len(x))
    queens = [(i // n, i % n) for i, bit in enumerate(x) if bit]
    queens_set = set(queens)
    attacks = 0
    for a in range(len(queens)):
        r1, c1 = queens[a]
        for b in range(a + 1, len(queens)):
            r2, c2 = queens[b]
            dr = r2 - r1
            dc = c2 - c1
            if dr != 0 and dc != 0 and abs(dr) != abs(dc):
                continue
            step = max(abs(dr), abs(dc))
            sr = (dr > 0) - (dr < 0)
            sc = (dc > 0) - (dc < 0)
            blocked = any((r1 + sr * t, c1 + sc * t) in queens_set for t in range(1, step))
            if not blocked:
                attacks += 1
    return float(len(queens) - attacks)


def concatenatedtrap(x: Sequence[int]) -> float:
    """Deceptive 5-bit traps: each block scores 5 if all ones, else 4 - ones."""
    total = 0
    for start in range(0, len(x), 5):
        ones = sum(x[start : start + 5])
        total += 5 if ones == 5 else 4 - ones
    return float(total)


def _isqrt_exact(n: int) -> int:
    root = int(n**0.5)
    while root * root < n:
        root += 1
    if root * root != n:
        raise ValueError(f"nqueens needs a square number of bits, got {n}")
    return root


BASE_FUNCTIONS: dict[str, Callable[[Sequence[int]], float]] = {
    "onemax": onemax,
    "leadingones": leadingones,
    "linear": linear,
    "labs": labs,
    "isingring": isingring,
    "nqueens": nqueens,
    "concatenatedtrap": concatenatedtrap,
}


def _check_base_length(function_id: str, n: int) -> None:
    if n < 1:
        raise ValueError(f"{function_id} needs at least one bit")
    if function_id == "labs" and n < 2:
        raise ValueError("labs needs at least two bits (merit factor undefined at n=1)")
    if function_id == "concatenatedtrap" and n % 5 != 0:
        raise ValueError(f"concatenatedtrap needs a multiple of 5 bits, got {n}")
    if function_id == "nqueens":
        _isqrt_exact(n)


@dataclass(frozen=True)
class DummyWrapper:
    """Keep a fixed seeded subset of m positions; the rest are decoys."""

    m: int
    seed: int

    def indices(self, length: int) -> tuple[int, ...]:
        if not 1 <= self.m <= length:
            raise ValueError(f"dummy subset size {self.m} not in [1, {length}]")
        return tuple(sorted(random.Random(self.seed).sample(range(length), self.m)))

    def output_length(self, length: int) -> int:
        if not 1 <= self.m <= length:
            raise ValueError(f"dummy subset size {self.m} not in [1, {length}]")
        return self.m

    def apply(self, x: Sequence[int], length: int) -> list[int]:
        return [x[i] for i in self.indices(length)]


@dataclass(frozen=True)
class NeutralityWrapper:
    """Collapse consecutive blocks of mu bits to their majority; ties to 0."""

    mu: int

    def output_length(self, length: int) -> int:
        if self.mu < 1 or length % self.mu != 0:
            raise ValueError(f"neutrality block size {self.mu} does not divide {length}")
        return length // self.mu

    def apply(self, x: Sequence[int], length: int) -> list[int]:
        out = []
        for start in range(0, length, self.mu):
            ones = sum(x[start : start + self.mu])
            out.append(1 if 2 * ones > self.mu else 0)
        return out


Wrapper = DummyWrapper | NeutralityWrapper


@dataclass(frozen=True)
class DiscreteBenchmark:
    """A base function behind an optional wrapper chain, at a fixed input size."""

    function_id: str
    dimensions: int
    wrappers: tuple[Wrapper, ...] = ()

    def __post_init__(self) -> None:
        if self.function_id not in BASE_FUNCTIONS:
            raise ValueError(f"unknown discrete function {self.function_id!r}")
        object.__setattr__(self, "wrappers", tuple(self.wrappers))
        # Walking the chain validates every intermediate length up front.
        _check_base_length(self.function_id, self.reduced_dimensions)

    @property
    def reduced_dimensions(self) -> int:
        """Input length the base function sees after all wrappers."""
        length = self.dimensions
        if length < 1:
            raise ValueError("dimensions must be positive")
        for wrapper in self.wrappers:
            length = wrapper.output_length(length)
        return length

    def evaluate(self, x: Sequence[float]) -> float:
        bits = [int(b) for b in x]
        if len(bits) != self.dimensions:
            raise ValueError(f"expected {self.dimensions} bits, got {len(bits)}")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bitstring entries must be 0 or 1")
        length = self.dimensions
        for wrapper in self.wrappers:
            bits = wrapper.apply(bits, length)
            length = len(bits)
        return BASE_FUNCTIONS[self.function_id](bits)
