"""Canonical data model for Bell-test trials: scoring, counting, game value,
abort rule, biased spot-checking relabeling, and the DIRT1 trial file format.

Conventions used throughout the toolkit:

* setting pairs are ordered ``(x, y) = (0,0), (0,1), (1,0), (1,1)``;
* outcome pairs are ordered ``ab = 00, 01, 10, 11`` (Alice's bit first);
* outcome bit 0 means "detection", 1 means "no detection".
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

import numpy as np

XY_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))
COUNTS_KEYS = ("x0y0", "x0y1", "x1y0", "x1y1")

DIRT1_MAGIC = b"DIRT1"
_DIRT1_HEADER = struct.Struct("<5sQ")


def _check_bit(name, value):
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")


@dataclass(frozen=True)
class TrialRecord:
    """One Bell-test trial: settings, outcomes, and the test flag."""

    index: int
    x: int
    y: int
    a: int
    b: int
    t: int = 1

    def __post_init__(self):
        for name in ("x", "y", "a", "b", "t"):
            _check_bit(name, getattr(self, name))
        if self.index < 0:
            raise ValueError(f"index must be non-negative, got {self.index}")


class TrialArray:
    """Columnar batch of trials (uint8 bit columns plus the index of the
    first trial).  Used for bulk aggregation and file I/O; individual
    records are available through :meth:`records`."""

    __slots__ = ("x", "y", "a", "b", "t", "index0")

    def __init__(self, x, y, a, b, t=None, index0: int = 0):
        self.x = np.ascontiguousarray(x, dtype=np.uint8)
        self.y = np.ascontiguousarray(y, dtype=np.uint8)
        self.a = np.ascontiguousarray(a, dtype=np.uint8)
        self.b = np.ascontiguousarray(b, dtype=np.uint8)
        if t is None:
            t = np.ones_like(self.x)
        self.t = np.ascontiguousarray(t, dtype=np.uint8)
        self.index0 = int(index0)
        n = len(self.x)
        for name in ("y", "a", "b", "t"):
            if len(getattr(self, name)) != n:
                raise ValueError("trial columns must have equal length")
        for name in ("x", "y", "a", "b", "t"):
            col = getattr(self, name)
            if col.size and col.max() > 1:
                raise ValueError(f"column {name} contains values outside {{0,1}}")

    def __len__(self):
        return len(self.x)

    @classmethod
    def empty(cls) -> "TrialArray":
        z = np.zeros(0, dtype=np.uint8)
        return cls(z, z, z, z, z)

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialArray":
        recs = list(records)
        if not recs:
            return cls.empty()
        idx = [r.index for r in recs]
        if any(j <= i for i, j in zip(idx, idx[1:])):
            raise ValueError("trial indices must be strictly increasing")
        cols = [[getattr(r, f) for r in recs] for f in ("x", "y", "a", "b", "t")]
        return cls(*cols, index0=recs[0].index)

    @classmethod
    def concat(cls, chunks: Iterable["TrialArray"]) -> "TrialArray":
        chunks = [c for c in chunks if len(c)]
        if not chunks:
            return cls.empty()
        return cls(
            np.concatenate([c.x for c in chunks]),
            np.concatenate([c.y for c in chunks]),
            np.concatenate([c.a for c in chunks]),
            np.concatenate([c.b for c in chunks]),
            np.concatenate([c.t for c in chunks]),
            index0=chunks[0].index0,
        )

    def records(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield TrialRecord(
                index=self.index0 + i,
                x=int(self.x[i]), y=int(self.y[i]),
                a=int(self.a[i]), b=int(self.b[i]), t=int(self.t[i]),
            )

    def scores(self) -> np.ndarray:
        """Vectorized per-trial win indicator ``1{a xor b == x and y}``."""
        return ((self.a ^ self.b) == (self.x & self.y)).astype(np.uint8)

    def with_test_flags(self, t: np.ndarray) -> "TrialArray":
        return TrialArray(self.x.copy(), self.y.copy(), self.a.copy(),
                          self.b.copy(), t, index0=self.index0)


TrialStream = Union[TrialArray, Iterable[TrialRecord]]


def _as_trial_array(trials: TrialStream) -> TrialArray:
    if isinstance(trials, TrialArray):
        return trials
    return TrialArray.from_records(trials)


def score_trial(x: int, y: int, a: int, b: int) -> int:
    """Game score of one trial: 1 iff ``a XOR b == x AND y``."""
    for name, v in (("x", x), ("y", y), ("a", a), ("b", b)):
        _check_bit(name, v)
    return int((a ^ b) == (x & y))


@dataclass(frozen=True)
class CountsTable:
    """4x4 table of outcome counts per setting pair.

    ``counts[i, j]`` is the number of trials with setting pair
    ``XY_ORDER[i]`` and outcome pair ``ab = 00, 01, 10, 11`` at column j.
    """

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (4, 4):
            raise ValueError(f"counts must be 4x4, got shape {c.shape}")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    def __add__(self, other: "CountsTable") -> "CountsTable":
        return CountsTable(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, CountsTable) and np.array_equal(self.counts, other.counts)

    def setting_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def total(self) -> int:
        return int(self.counts.sum())

    def require_positive_totals(self):
        totals = self.setting_totals()
        if (totals <= 0).any():
            empty = [COUNTS_KEYS[i] for i in np.nonzero(totals <= 0)[0]]
            raise ValueError(f"empty setting cell: {', '.join(empty)}")

    def relabel_rows_swapped(self) -> "CountsTable":
        """Exchange the rows labeled (x=0,y=1) and (x=1,y=0).

        The published counts only satisfy the no-signaling marginal
        consistency under this exchange; the toolkit stores tables
        literally and applies the swap on explicit request.
        """
        c = self.counts.copy()
        c[[1, 2]] = c[[2, 1]]
        return CountsTable(c)

    def to_json_dict(self) -> dict:
        return {k: [int(v) for v in row] for k, row in zip(COUNTS_KEYS, self.counts)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CountsTable":
        try:
            rows = [obj[k] for k in COUNTS_KEYS]
        except KeyError as e:
            raise ValueError(f"counts JSON missing key {e}") from None
        rows = np.asarray(rows, dtype=np.int64)
        if rows.shape != (4, 4):
            raise ValueError("each counts entry must be a 4-array")
        return cls(rows)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CountsTable":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class GameValue:
    """Aggregate game value: ``jbar`` and the equivalent winning probability."""

    jbar: float
    win_prob: float
    n_trials: int

    def __post_init__(self):
        if self.win_prob != self.jbar + 0.75:
            raise ValueError("win_prob must equal jbar + 3/4 exactly")
        if not (-0.75 <= self.jbar <= 0.25):
            raise ValueError(f"jbar outside [-3/4, 1/4]: {self.jbar}")
        if self.n_trials < 0:
            raise ValueError("n_trials must be non-negative")

    @classmethod
    def from_jbar(cls, jbar: float, n_trials: int) -> "GameValue":
        return cls(jbar=float(jbar), win_prob=float(jbar) + 0.75, n_trials=int(n_trials))


# Winning outcome columns per setting row: ab in {00, 11} when x*y == 0,
# ab in {01, 10} when x*y == 1.
_WIN_COLUMNS = ((0, 3), (0, 3), (0, 3), (1, 2))


def aggregate_trials(trials: TrialStream) -> CountsTable:
    """Count every (x, y, a, b) combination of a finite trial stream.

    Accepts a TrialArray, an iterable of TrialRecord, or an iterable of
    TrialArray shards (shards are combined by cell-wise addition).
    """
    if not isinstance(trials, TrialArray):
        trials = list(trials) if not isinstance(trials, list) else trials
        if trials and isinstance(trials[0], TrialArray):
            table = CountsTable(np.zeros((4, 4), dtype=np.int64))
            for shard in trials:
                table = table + aggregate_trials(shard)
            return table
        trials = TrialArray.from_records(trials)
    code = (((trials.x.astype(np.intp) << 1) | trials.y) << 2) \
        | ((trials.a.astype(np.intp) << 1) | trials.b)
    cells = np.bincount(code, minlength=16)
    return CountsTable(cells.reshape(4, 4))


def game_value_from_counts(counts: CountsTable) -> GameValue:
    """Game value from a counts table: ``jbar = (1/4) sum_xy J_xy - 3/4``
    with J_xy the winning fraction at setting pair (x, y)."""
    counts.require_positive_totals()
    totals = counts.setting_totals().astype(np.float64)
    wins = np.array([counts.counts[i, list(cols)].sum() for i, cols in enumerate(_WIN_COLUMNS)],
                    dtype=np.float64)
    jbar = float((wins / totals).sum() / 4.0 - 0.75)
    return GameValue.from_jbar(jbar, counts.total())


def game_value_from_trials(trials: TrialStream) -> GameValue:
    """Direct per-trial average ``(1/n) sum J_i - 3/4``."""
    ta = _as_trial_array(trials)
    if len(ta) == 0:
        raise ValueError("empty trial stream has no game value")
    return GameValue.from_jbar(float(ta.scores().mean()) - 0.75, len(ta))


@dataclass(frozen=True)
class SpotCheckConfig:
    """Spot-checking protocol parameters.

    ``biased=False`` is the uniform-input protocol with test probability
    ``q``; ``biased=True`` is the biased-input variant where a trial is a
    test trial iff two auxiliary bits T_A, T_B (each 0 with probability
    p/(1-p)) are both zero.
    """

    p: float = 0.5
    q: float = 1.0
    omega_exp: float = 0.75
    delta_est: float = 1e-5
    biased: bool = False

    def __post_init__(self):
        if not (0.0 < self.p <= 0.5):
            raise ValueError(f"p must lie in (0, 1/2], got {self.p}")
        if not (0.0 < self.q <= 1.0):
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not (0.0 < self.delta_est < 1.0):
            raise ValueError(f"delta_est must lie in (0, 1), got {self.delta_est}")
        # derived probabilities of the auxiliary test bits
        p0 = self.p / (1.0 - self.p)
        if not (0.0 <= p0 <= 1.0 and 0.0 <= 1.0 - p0 <= 1.0):
            raise ValueError("derived probabilities p/(1-p), (1-2p)/(1-p) outside [0,1]")

    @property
    def test_probability(self) -> float:
        """Marginal probability that a trial is a test trial."""
        if self.biased:
            return (self.p / (1.0 - self.p)) ** 2
        return self.q

    @property
    def abort_threshold(self) -> float:
        return self.omega_exp * self.test_probability - self.delta_est


def abort_decision(sum_scores: int, n: int, cfg: SpotCheckConfig) -> bool:
    """True (abort) iff the average score falls below the protocol threshold."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not (0 <= sum_scores <= n):
        raise ValueError("sum_scores must lie in [0, n]")
    return sum_scores / n < cfg.abort_threshold


def spot_check_relabel(trials: TrialStream, p: float, rng_seed: int) -> TrialArray:
    """Re-mark test flags for the biased-input protocol.

    Each trial is marked as a test trial iff both auxiliary bits come up
    zero, which happens with probability ``(p/(1-p))**2``.  Settings and
    outcomes are preserved bit-exactly; the result is deterministic in
    ``rng_seed``.
    """
    if not (0.0 < p <= 0.5):
        raise ValueError(f"p must lie in (0, 1/2], got {p}")
    ta = _as_trial_array(trials)
    rng = np.random.default_rng(rng_seed)
    p0 = p / (1.0 - p)
    t_a = rng.random(len(ta)) < p0
    t_b = rng.random(len(ta)) < p0
    return ta.with_test_flags((t_a & t_b).astype(np.uint8))


# --- DIRT1 trial stream file format ------------------------------------
#
# 5-byte magic "DIRT1", 8-byte little-endian trial count, then one byte
# per trial with bit0=a, bit1=b, bit2=x, bit3=y, bit4=t, bits 5-7 zero.


def _encode_dirt1_payload(ta: TrialArray) -> np.ndarray:
    return (ta.a | (ta.b << 1) | (ta.x << 2) | (ta.y << 3) | (ta.t << 4)).astype(np.uint8)


def _decode_dirt1_payload(raw: np.ndarray, index0: int) -> TrialArray:
    if raw.size and (raw & 0xE0).any():
        raise ValueError("DIRT1 payload has non-zero reserved bits")
    return TrialArray(
        x=(raw >> 2) & 1, y=(raw >> 3) & 1,
        a=raw & 1, b=(raw >> 1) & 1, t=(raw >> 4) & 1,
        index0=index0,
    )


def write_dirt1(path, trials: Union[TrialArray, Iterable[TrialArray]]):
    """Write a trial stream to a DIRT1 file.

    ``trials`` may be a single TrialArray or an iterable of chunks, which
    are written in order without materializing the whole stream.
    """
    chunks = [trials] if isinstance(trials, TrialArray) else trials
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_DIRT1_HEADER.pack(DIRT1_MAGIC, 0))
        n = 0
        for chunk in chunks:
            fh.write(_encode_dirt1_payload(chunk).tobytes())
            n += len(chunk)
        fh.seek(0)
        fh.write(_DIRT1_HEADER.pack(DIRT1_MAGIC, n))
    return n


def read_dirt1_header(path) -> int:
    """Validate the header of a DIRT1 file and return the trial count."""
    path = Path(path)
    size = path.stat().st_size
    if size < _DIRT1_HEADER.size:
        raise ValueError(f"{path}: too short for a DIRT1 file")
    with open(path, "rb") as fh:
        magic, n = _DIRT1_HEADER.unpack(fh.read(_DIRT1_HEADER.size))
    if magic != DIRT1_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {DIRT1_MAGIC!r}")
    if size - _DIRT1_HEADER.size != n:
        raise ValueError(f"{path}: header claims {n} trials, payload has "
                         f"{size - _DIRT1_HEADER.size} bytes")
    return n


def iter_dirt1(path, chunk_size: int = 1 << 20) -> Iterator[TrialArray]:
    """Stream a DIRT1 file as TrialArray chunks."""
    n = read_dirt1_header(path)
    with open(path, "rb") as fh:
        fh.seek(_DIRT1_HEADER.size)
        done = 0
        while done < n:
            take = min(chunk_size, n - done)
            raw = np.frombuffer(fh.read(take), dtype=np.uint8)
            if raw.size != take:
                raise ValueError(f"{path}: truncated payload")
            yield _decode_dirt1_payload(raw, index0=done)
            done += take


def read_dirt1(path) -> TrialArray:
    return TrialArray.concat(iter_dirt1(path))
