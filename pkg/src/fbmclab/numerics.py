"""Shared numerical kernel: DFT convention, structured matrices, seeded RNG.

The DFT convention is locked once here and used everywhere: the unitary
2M x 2M matrix F has entries

    F[m, n] = (2M)**-0.5 * exp(+j * 2*pi * (m-1) * (n-1) / (2M))

with 1-based math indices (0-based in storage).  Its first half rows are
G1, the second half G2.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DimensionError


class UnitaryDft:
    """Unitary DFT of even size 2M with positive-exponent convention.

    ``forward(x)`` applies F, ``inverse(x)`` applies F^H.  Both accept
    vectors or matrices (transform along axis 0).
    """

    def __init__(self, size: int):
        if size < 2 or size % 2 != 0:
            raise DimensionError(f"DFT size must be even and >= 2, got {size}")
        self.size = size

    @property
    def matrix(self) -> np.ndarray:
        m = np.arange(self.size)
        return np.exp(2j * np.pi * np.outer(m, m) / self.size) / np.sqrt(self.size)

    def forward(self, x: np.ndarray) -> np.ndarray:
        # F @ x == sqrt(2M) * ifft(x)
        return np.sqrt(self.size) * np.fft.ifft(np.asarray(x, dtype=complex), axis=0)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        # F^H @ x == fft(x) / sqrt(2M)
        return np.fft.fft(np.asarray(x, dtype=complex), axis=0) / np.sqrt(self.size)

    def column(self, m: int) -> np.ndarray:
        """m-th column f(m) of F, 1-based subcarrier index."""
        n = np.arange(self.size)
        return np.exp(2j * np.pi * n * (m - 1) / self.size) / np.sqrt(self.size)


def phase_diagonal(two_m: int) -> np.ndarray:
    """Diagonal entries exp(-j*pi*(M+1)/(2M)*(m-1)), m = 1..2M."""
    m = np.arange(two_m)
    return np.exp(-1j * np.pi * (two_m // 2 + 1) / two_m * m)


def folding_operators(two_m: int) -> tuple[np.ndarray, np.ndarray]:
    """The pair (U+, U-) with U± = I2 kron (I_M ± J_M), exact 0/1/2 entries."""
    if two_m % 2 != 0:
        raise DimensionError("folding size must be even")
    half = two_m // 2
    eye = np.eye(half)
    anti = np.fliplr(eye)
    u_plus = np.kron(np.eye(2), eye + anti)
    u_minus = np.kron(np.eye(2), eye - anti)
    return u_plus, u_minus


def block_swap(two_m: int) -> np.ndarray:
    """I2 kron J_M: reverses rows within each half."""
    half = two_m // 2
    return np.kron(np.eye(2), np.fliplr(np.eye(half)))


def row_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise full linear convolution of two matrices with equal row counts."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    if a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"row_convolve: row counts differ ({a.shape[0]} vs {b.shape[0]})"
        )
    if a.shape[1] == 0 or b.shape[1] == 0:
        raise DimensionError("row_convolve: empty operand")
    return fftconvolve(a, b, mode="full", axes=1)


def shift_matrix_power(size: int, exponent: int) -> np.ndarray:
    """T^i for the shift matrix T (ones on the first superdiagonal).

    i = 0 gives the identity; i > size gives the zero matrix.
    """
    if exponent < 0:
        raise DimensionError("shift exponent must be >= 0")
    out = np.zeros((size, size))
    if exponent <= size:
        idx = np.arange(size - exponent) if exponent < size else np.arange(0)
        out[idx, idx + exponent] = 1.0
    return out


def toeplitz_upper(first_row: np.ndarray) -> np.ndarray:
    """Upper-triangular Toeplitz matrix with the given first row."""
    first_row = np.asarray(first_row)
    n = first_row.shape[0]
    if n < 1:
        raise DimensionError("toeplitz_upper: empty first row")
    out = np.zeros((n, n), dtype=first_row.dtype)
    for i in range(n):
        out[i, i:] = first_row[: n - i]
    return out


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeededRng:
    """Counter-based PRNG with named substreams.

    Identical (seed, label) pairs produce identical sample sequences; the
    Philox generator makes substreams independent by construction, so Monte
    Carlo trials can run in any order (or in parallel) with the same result.
    """

    seed: int
    label: str = ""

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([self.seed & (2**64 - 1), _label_entropy(self.label)])
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, label: str) -> "SeededRng":
        sub = label if not self.label else f"{self.label}/{label}"
        return SeededRng(self.seed, sub)
