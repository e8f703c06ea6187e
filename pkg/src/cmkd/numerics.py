"""Deterministic dense linear algebra and seeded randomness.

Matrices are dense row-major float64 buffers. All reductions run in a fixed
ascending order (see the kernel modules), so any computation here is
bit-reproducible across runs and across the compiled/pure-Python backends.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

from ._backend import kernels

MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


@dataclass
class Matrix:
    """Dense row-major float64 matrix."""

    rows: int
    cols: int
    data: array

    def __post_init__(self):
        if len(self.data) != self.rows * self.cols:
            raise ShapeError(
                f"data length {len(self.data)} != {self.rows}x{self.cols}")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def size(self):
        return self.rows * self.cols

    def get(self, i, j):
        return self.data[i * self.cols + j]

    def set(self, i, j, v):
        self.data[i * self.cols + j] = v

    def row(self, i):
        base = i * self.cols
        return list(self.data[base:base + self.cols])

    def to_lists(self):
        return [self.row(i) for i in range(self.rows)]

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, array("d", self.data))

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def allfinite(self) -> bool:
        return all(math.isfinite(v) for v in self.data)


def zeros(rows: int, cols: int) -> Matrix:
    return Matrix(rows, cols, array("d", bytes(8 * rows * cols)))


def from_rows(rows_of_values) -> Matrix:
    rows = len(rows_of_values)
    if rows == 0:
        raise ShapeError("matrix needs at least one row")
    cols = len(rows_of_values[0])
    buf = array("d")
    for r in rows_of_values:
        if len(r) != cols:
            raise ShapeError(f"ragged rows: {len(r)} != {cols}")
        buf.extend(float(v) for v in r)
    return Matrix(rows, cols, buf)


def from_flat(rows: int, cols: int, values) -> Matrix:
    return Matrix(rows, cols, array("d", (float(v) for v in values)))


def identity(n: int) -> Matrix:
    m = zeros(n, n)
    for i in range(n):
        m.data[i * n + i] = 1.0
    return m


def take_rows(m: Matrix, indices) -> Matrix:
    out = array("d")
    for i in indices:
        base = i * m.cols
        out.extend(m.data[base:base + m.cols])
    return Matrix(len(indices), m.cols, out)


# -- operations ----------------------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with the contraction index accumulated in ascending order."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    out = zeros(a.rows, b.cols)
    kernels.matmul(a.data, a.rows, a.cols, b.data, b.cols, out.data)
    return out


def transpose(a: Matrix) -> Matrix:
    out = zeros(a.cols, a.rows)
    kernels.transpose(a.data, a.rows, a.cols, out.data)
    return out


def add(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape("add", a, b)
    out = a.copy()
    kernels.add_inplace(out.data, b.data, out.size)
    return out


def sub(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape("sub", a, b)
    out = zeros(a.rows, a.cols)
    kernels.sub(a.data, b.data, out.data, a.size)
    return out


def scale(a: Matrix, s: float) -> Matrix:
    out = a.copy()
    kernels.scale_inplace(out.data, s, out.size)
    return out


def column_l2_norms(a: Matrix) -> list:
    """Per-column Euclidean norms: entry j is sqrt(sum_i a[i,j]^2)."""
    sq = array("d", bytes(8 * a.cols))
    kernels.col_sqnorms(a.data, a.rows, a.cols, sq)
    return [math.sqrt(v) for v in sq]


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


# -- seeded randomness -----------------------------------------------------------

class SeededRng:
    """SplitMix64 stream; standard normals via the Box-Muller cosine branch.

    Each normal draw consumes exactly two raw 64-bit outputs, so a stream of
    n draws is independent of how calls are batched. Single consumer only:
    do not share one instance across threads.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform draw in [0, 1)."""
        return (self.next_u64() >> 11) / _TWO53

    def normal(self) -> float:
        """One standard-normal draw (two consecutive raw outputs)."""
        u1 = ((self.next_u64() >> 11) + 1) / _TWO53  # in (0, 1]
        u2 = (self.next_u64() >> 11) / _TWO53
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> array:
        out = array("d", bytes(8 * n))
        for i in range(n):
            out[i] = self.normal()
        return out

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n); slight modulo bias is irrelevant here."""
        return self.next_u64() % n

    def shuffle(self, seq) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]


def rng_normal(rng: SeededRng, n: int) -> list:
    """n standard-normal draws; consumes the stream deterministically."""
    if n < 0:
        raise ValueError(f"rng_normal: n must be >= 0, got {n}")
    return list(rng.normals(n))
