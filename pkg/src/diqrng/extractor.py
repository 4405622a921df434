"""Toeplitz-hashing randomness extraction over GF(2).

The m x n hashing matrix T is defined by a seed of n + m - 1 bits through
``T[i, j] = seed[i - j + n - 1]`` (first row = reversed first n seed bits,
first column continues the seed).  ``extract_naive`` is the bit-exact
reference; ``extract_blocked_fft`` computes the same product via exact
integer convolutions done blockwise with an FFT, keeping the working set
at O(n/block_count + m).

Raw and output bit files are headerless packed bits, MSB first within
each byte; bit 0 is the first bit of the first byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

# convolution sums must be exactly representable in a float64 mantissa
EXACTNESS_CAP = 2 ** 53
# auto block sizing assumes roughly three float64 arrays of FFT length
DEFAULT_MEMORY_BUDGET = 4 << 30


class ExtractionSizingError(ValueError):
    """A block is too large for exact integer recovery from the FFT."""


def _as_bits(arr, name: str) -> np.ndarray:
    bits = np.ascontiguousarray(arr, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if bits.size and bits.max() > 1:
        raise ValueError(f"{name} contains values outside {{0,1}}")
    return bits


@dataclass(frozen=True)
class ToeplitzSeed:
    """Seed bits defining an m x n Toeplitz matrix; length must be n+m-1."""

    bits: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits, "seed bits"))
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if len(self.bits) != self.n + self.m - 1:
            raise ValueError(
                f"seed length {len(self.bits)} != n + m - 1 = {self.n + self.m - 1}")

    @classmethod
    def from_file(cls, path, n: int, m: int) -> "ToeplitzSeed":
        length = n + m - 1
        size = Path(path).stat().st_size
        if size != (length + 7) // 8:
            raise ValueError(f"{path}: {size} bytes, expected "
                             f"{(length + 7) // 8} for a seed of {length} bits")
        return cls(bits=read_bits(path, length), n=n, m=m)


@dataclass(frozen=True)
class ExtractionPlan:
    """Sizing of one extraction run."""

    n: int
    m: int
    t_e: int
    block_count: int

    @property
    def seed_length(self) -> int:
        return self.n + self.m - 1

    @property
    def hash_failure(self) -> float:
        """Soundness contribution 2**-t_e of the hashing step."""
        return 2.0 ** (-self.t_e)

    def validate(self):
        if self.m < 1:
            raise ValueError("plan must extract at least one bit")
        if self.n < self.m:
            raise ValueError(f"input length {self.n} shorter than output {self.m}")
        if not (1 <= self.block_count <= self.n):
            raise ValueError(f"block_count {self.block_count} outside [1, n]")
        block = math.ceil(self.n / self.block_count)
        if block >= EXACTNESS_CAP:
            raise ExtractionSizingError(
                f"block length {block} not exactly representable; "
                f"increase block_count")
        return self


def auto_block_count(n: int, m: int,
                     memory_budget: int = DEFAULT_MEMORY_BUDGET) -> int:
    """Smallest block count whose per-block FFT fits the memory budget."""
    fft_budget = max(memory_budget // 24, 2 * m)
    max_block = max(1, fft_budget - (m - 1))
    return max(1, math.ceil(n / max_block))


def plan_extraction(hmin_bound: float, t_e: int, n: int, *,
                    block_count: int | None = None,
                    memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ExtractionPlan:
    """Plan a Toeplitz extraction from a certified min-entropy bound.

    The output length is ``floor(hmin_bound) - t_e``; the hashing step
    contributes 2**-t_e to the soundness error.  When ``block_count`` is
    not given, the smallest count whose per-block FFT fits the memory
    budget is chosen.
    """
    if t_e < 1:
        raise ValueError("t_e must be positive")
    if hmin_bound <= t_e:
        raise ValueError(f"nothing extractable: hmin_bound {hmin_bound} <= t_e {t_e}")
    m = math.floor(hmin_bound) - t_e
    if m < 1:
        raise ValueError("nothing extractable: output length would be zero")
    if block_count is None:
        block_count = auto_block_count(n, m, memory_budget)
    return ExtractionPlan(n=n, m=m, t_e=t_e, block_count=int(block_count)).validate()


def extract_naive(raw, seed: ToeplitzSeed) -> np.ndarray:
    """Reference GF(2) Toeplitz multiply: out[i] = XOR_j T[i,j] raw[j]."""
    raw = _as_bits(raw, "raw bits")
    if len(raw) != seed.n:
        raise ValueError(f"raw length {len(raw)} != seed.n {seed.n}")
    s = seed.bits.astype(np.int64)
    r = raw.astype(np.int64)
    n, m = seed.n, seed.m
    out = np.empty(m, dtype=np.uint8)
    for i in range(m):
        # row i of T as j runs 0..n-1 is seed[i+n-1], ..., seed[i]
        out[i] = int(s[i:i + n][::-1] @ r) & 1
    return out


def _block_bounds(n: int, block_count: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, block_count + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def extract_blocked_fft(raw, seed: ToeplitzSeed, block_count: int = 1) -> np.ndarray:
    """Blocked FFT Toeplitz multiply; bit-identical to ``extract_naive``.

    Each input block of length L contributes the slice [L-1, L-1+m) of an
    integer convolution between the block and a seed window of length
    m+L-1; the partial outputs combine by XOR.  Convolutions are done in
    float64 and checked for exact integer recovery; a block too large for
    that is refused rather than silently mis-rounded.
    """
    raw = _as_bits(raw, "raw bits")
    if len(raw) != seed.n:
        raise ValueError(f"raw length {len(raw)} != seed.n {seed.n}")
    if not (1 <= block_count <= seed.n):
        raise ValueError(f"block_count {block_count} outside [1, n]")
    n, m = seed.n, seed.m
    out = np.zeros(m, dtype=np.uint8)
    # Each block is convolved in segments of a few times m: the same XOR
    # decomposition, but short FFTs amortize the m-1 window overlap without
    # paying the log factor of the full block length.  Only the active seed
    # window is widened to float64, keeping the working set at
    # O(n/block_count + m).
    segment = min(n, max(2 * m, 1 << 13))
    for block_start, block_stop in _block_bounds(n, block_count):
        segment_len = min(segment, max(block_stop - block_start, 1))
        for start in range(block_start, block_stop, segment_len):
            stop = min(start + segment_len, block_stop)
            length = stop - start
            if length == 0:
                continue
            if length >= EXACTNESS_CAP:
                raise ExtractionSizingError(
                    f"block length {length} exceeds exactness cap")
            window = seed.bits[n - stop: n - start + m - 1].astype(np.float64)
            conv = fftconvolve(window, raw[start:stop].astype(np.float64))
            rounded = np.rint(conv)
            if np.max(np.abs(conv - rounded)) >= 0.25:
                raise ExtractionSizingError(
                    "FFT convolution not exactly recoverable; increase block_count")
            part = rounded[length - 1: length - 1 + m].astype(np.int64)
            out ^= (part & 1).astype(np.uint8)
    return out


def insecure_test_seed(n: int, m: int, rng_seed: int) -> ToeplitzSeed:
    """Deterministic pseudorandom seed FOR TESTING ONLY.

    Extractor seeds must be independent of the raw data; production runs
    read them from a file (see ``ToeplitzSeed.from_file``).
    """
    rng = np.random.default_rng(rng_seed)
    return ToeplitzSeed(bits=rng.integers(0, 2, size=n + m - 1, dtype=np.uint8), n=n, m=m)


def write_bits(path, bits):
    """Pack bits MSB-first into a headerless file."""
    bits = _as_bits(bits, "bits")
    Path(path).write_bytes(np.packbits(bits).tobytes())
    return len(bits)


def read_bits(path, n_bits: int) -> np.ndarray:
    """Read ``n_bits`` packed MSB-first bits."""
    data = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    need = (n_bits + 7) // 8
    if data.size < need:
        raise ValueError(f"{path}: holds at most {data.size * 8} bits, need {n_bits}")
    return np.unpackbits(data[:need])[:n_bits]
