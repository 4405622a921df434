"""Physics model of the pulsed SPDC entangled-photon source.

Per trial the source emits k photon pairs with Poisson probability
P(k) = mu^k e^-mu / k!.  Each pair is measured by single-channel polarization
analyzers: the photon is projected either onto the measurement-port vector
cos(theta)|H> + sin(theta)|V> (a detector click, symbol 0), onto the
orthogonal port (symbol 1, never detected), or lost (symbol u, probability
1 - eta per arm).  Misalignment flips the projected port with probability
p_mis per photon.  Composing k pairs, a party's detector fires once for a
single arriving port-0 photon; two or more port-0 photons in one trial
window form a *double click*, randomly assigned to 0, 1, or u by the
per-party assignment triple.  Dark counts add spurious clicks after
composition.  Trial outcome bits use the detection encoding: bit 0 iff the
party's detector fired.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .trials import XY_ORDER, CountsTable, GameValue, TrialArray

# 9-event alphabet for one pair, Alice symbol major: 0 = measurement-port
# click, 1 = orthogonal port (no click possible), u = photon undetected.
PAIR_SYMBOLS = ("0", "1", "u")
PAIR_EVENTS = tuple((sa, sb) for sa in PAIR_SYMBOLS for sb in PAIR_SYMBOLS)

MAX_PAIR_ORDER = 3

_UNIFORM_ASSIGN = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def _check_prob(name, v):
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


def _check_triple(name, triple):
    triple = tuple(float(v) for v in triple)
    if len(triple) != 3:
        raise ValueError(f"{name} must have three entries")
    for v in triple:
        _check_prob(name, v)
    if abs(sum(triple) - 1.0) > 1e-12:
        raise ValueError(f"{name} must sum to 1 within 1e-12, got {sum(triple)}")
    return triple


@dataclass(frozen=True)
class SourceParams:
    """Source and measurement parameters.

    ``angles`` are the measurement-port angles in degrees, ordered
    (A at x=0, A at x=1, B at y=0, B at y=1).  ``assign_a``/``assign_b``
    are the double-click assignment triples (q0, q1, qu).
    """

    mu: float
    r: float
    angles: tuple[float, float, float, float]
    eta_a: float
    eta_b: float
    p_dark: float = 0.0
    p_mis: float = 0.0
    assign_a: tuple[float, float, float] = _UNIFORM_ASSIGN
    assign_b: tuple[float, float, float] = _UNIFORM_ASSIGN

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.r < 0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        if len(self.angles) != 4:
            raise ValueError("angles must be (A1, A2, B1, B2)")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        for name in ("eta_a", "eta_b", "p_dark", "p_mis"):
            _check_prob(name, getattr(self, name))
        object.__setattr__(self, "assign_a", _check_triple("assign_a", self.assign_a))
        object.__setattr__(self, "assign_b", _check_triple("assign_b", self.assign_b))

    def angle_rad(self, party: str, setting: int) -> float:
        if party == "a":
            return math.radians(self.angles[setting])
        return math.radians(self.angles[2 + setting])

    def replace(self, **kw) -> "SourceParams":
        d = asdict(self)
        d.update(kw)
        return SourceParams(**d)

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SourceParams":
        obj = dict(obj)
        for key in ("angles", "assign_a", "assign_b"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SourceParams":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PairOutcomeDist:
    """Distribution over the 9 single-pair events."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (9,):
            raise ValueError(f"pair distribution must have 9 entries, got {p.shape}")
        if p.min() < -1e-12:
            raise ValueError(f"negative probability {p.min()}")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"pair distribution sums to {p.sum()}, not 1")
        object.__setattr__(self, "probs", np.clip(p, 0.0, None))

    def as_matrix(self) -> np.ndarray:
        """3x3 view indexed [alice_symbol, bob_symbol] in (0, 1, u) order."""
        return self.probs.reshape(3, 3)


def single_pair_probs(params: SourceParams, x: int, y: int) -> PairOutcomeDist:
    """9-event distribution for one entangled pair at setting pair (x, y).

    The two-qubit state is (|HV> + r|VH>)/sqrt(1+r^2); port probabilities
    come from projecting onto the rotated measurement vectors, then the
    misalignment flip and the detection-efficiency loss are applied per arm.
    """
    if x not in (0, 1) or y not in (0, 1):
        raise ValueError("settings must be bits")
    norm = 1.0 + params.r * params.r
    ta = params.angle_rad("a", x)
    tb = params.angle_rad("b", y)
    ca, sa = math.cos(ta), math.sin(ta)
    cb, sb = math.cos(tb), math.sin(tb)
    # amplitudes <port_a port_b|psi> with psi_HV = 1, psi_VH = r (unnormalized)
    amp_tt = ca * sb + params.r * sa * cb
    amp_tr = ca * cb - params.r * sa * sb   # B orthogonal port (-sin, cos)
    amp_rt = -sa * sb + params.r * ca * cb
    amp_rr = -sa * cb - params.r * ca * sb
    ports = np.array([[amp_tt ** 2, amp_tr ** 2],
                      [amp_rt ** 2, amp_rr ** 2]]) / norm
    pm = params.p_mis
    flip = np.array([[1.0 - pm, pm], [pm, 1.0 - pm]])
    ports = flip @ ports @ flip.T
    ea, eb = params.eta_a, params.eta_b
    p_t_a, p_r_a = ports.sum(axis=1)
    p_t_b, p_r_b = ports.sum(axis=0)
    probs = np.array([
        ea * eb * ports[0, 0], ea * eb * ports[0, 1], ea * (1 - eb) * p_t_a,
        ea * eb * ports[1, 0], ea * eb * ports[1, 1], ea * (1 - eb) * p_r_a,
        (1 - ea) * eb * p_t_b, (1 - ea) * eb * p_r_b, (1 - ea) * (1 - eb),
    ])
    return PairOutcomeDist(probs)


# Per-party click bookkeeping while composing pairs: state = 2*t + r with
# t = number of measurement-port photons (capped at 2) and r = 1 if any
# orthogonal-port photon arrived.
_N_STATES = 6


def _advance(state: int, symbol: int) -> int:
    t, r = divmod(state, 2)
    if symbol == 0:
        t = min(t + 1, 2)
    elif symbol == 1:
        r = 1
    return 2 * t + r


def _resolve_matrix(assign: Sequence[float]) -> np.ndarray:
    """Map party click-state to a distribution over (0, 1, u)."""
    res = np.zeros((_N_STATES, 3))
    for state in range(_N_STATES):
        t, r = divmod(state, 2)
        if t >= 2:
            res[state] = assign          # double click
        elif t == 1:
            res[state, 0] = 1.0          # single click
        elif r:
            res[state, 1] = 1.0          # photon went to the dark port
        else:
            res[state, 2] = 1.0          # nothing arrived
    return res


def multi_pair_probs(single: PairOutcomeDist, k: int,
                     assign: tuple[Sequence[float], Sequence[float]]) -> PairOutcomeDist:
    """Compose k independent pair events under threshold detection.

    Per party, one measurement-port photon yields that party's click; two
    or more in the same trial window form a double click resolved by the
    party's assignment triple; k = 0 yields (u, u) with certainty.
    """
    if not (0 <= k <= MAX_PAIR_ORDER):
        raise ValueError(f"unsupported pair order {k}; at most {MAX_PAIR_ORDER}")
    assign_a = _check_triple("assign_a", assign[0])
    assign_b = _check_triple("assign_b", assign[1])
    p33 = single.as_matrix()
    state = np.zeros((_N_STATES, _N_STATES))
    state[0, 0] = 1.0
    step = np.array([[_advance(s, sym) for sym in range(3)] for s in range(_N_STATES)])
    for _ in range(k):
        new = np.zeros_like(state)
        for sa in range(_N_STATES):
            for sb in range(_N_STATES):
                w = state[sa, sb]
                if w == 0.0:
                    continue
                for ia in range(3):
                    for ib in range(3):
                        if p33[ia, ib]:
                            new[step[sa, ia], step[sb, ib]] += w * p33[ia, ib]
        state = new
    res_a = _resolve_matrix(assign_a)
    res_b = _resolve_matrix(assign_b)
    out = res_a.T @ state @ res_b
    return PairOutcomeDist(out.reshape(9))


def _dark_kernel(p_dark: float, assign: Sequence[float]) -> np.ndarray:
    """Column-stochastic map adding an independent dark click per party.

    A dark click promotes u to 0; combined with an existing click it forms
    a double click resolved by the assignment triple.
    """
    q = np.asarray(assign, dtype=np.float64)
    d = p_dark
    kernel = np.zeros((3, 3))
    kernel[:, 0] = np.array([1.0 - d, 0.0, 0.0]) + d * q
    kernel[:, 1] = np.array([0.0, 1.0 - d, 0.0]) + d * q
    kernel[:, 2] = np.array([d * (1 - d), (1 - d) * d, (1 - d) ** 2]) + d * d * q
    return kernel


def _pair_order_weights(mu: float) -> np.ndarray:
    """Poisson weights for k = 0..3 pairs; mass beyond 3 pairs is folded
    into the 3-pair term (threshold detectors saturate)."""
    w = np.array([mu ** k * math.exp(-mu) / math.factorial(k)
                  for k in range(MAX_PAIR_ORDER + 1)])
    w[MAX_PAIR_ORDER] = max(0.0, 1.0 - w[:MAX_PAIR_ORDER].sum())
    return w


def trial_symbol_probs(params: SourceParams, x: int, y: int) -> PairOutcomeDist:
    """Trial-level distribution over (0, 1, u) pairs after Poisson mixing
    of pair orders and dark-count injection."""
    single = single_pair_probs(params, x, y)
    weights = _pair_order_weights(params.mu)
    mix = np.zeros(9)
    for k, w in enumerate(weights):
        if w:
            mix += w * multi_pair_probs(single, k, (params.assign_a, params.assign_b)).probs
    dark_a = _dark_kernel(params.p_dark, params.assign_a)
    dark_b = _dark_kernel(params.p_dark, params.assign_b)
    out = dark_a @ mix.reshape(3, 3) @ dark_b.T
    return PairOutcomeDist(out.reshape(9))


def trial_outcome_probs(params: SourceParams, x: int, y: int) -> np.ndarray:
    """Conditional outcome-bit distribution p(ab|xy), ab ordered 00,01,10,11;
    bit 0 iff the party's detector fired."""
    m = trial_symbol_probs(params, x, y).as_matrix()
    return np.array([
        m[0, 0],
        m[0, 1] + m[0, 2],
        m[1, 0] + m[2, 0],
        m[1:, 1:].sum(),
    ])


def predicted_behavior(params: SourceParams) -> np.ndarray:
    """All four conditionals stacked as a (4, 4) array in XY_ORDER."""
    return np.stack([trial_outcome_probs(params, x, y) for x, y in XY_ORDER])


def predicted_game_value(params: SourceParams) -> GameValue:
    """Model game value with uniform settings."""
    cond = predicted_behavior(params)
    wins = np.array([cond[0, 0] + cond[0, 3], cond[1, 0] + cond[1, 3],
                     cond[2, 0] + cond[2, 3], cond[3, 1] + cond[3, 2]])
    return GameValue.from_jbar(float(wins.sum() / 4.0 - 0.75), 0)


def optimize_mu(params: SourceParams, mu_grid: Sequence[float]) -> tuple[float, float]:
    """Grid argmax of the predicted game value; ties go to the smaller mu."""
    grid = sorted(float(m) for m in mu_grid)
    if not grid:
        raise ValueError("mu grid must be non-empty")
    best_mu, best_j = grid[0], -math.inf
    for mu in grid:
        j = predicted_game_value(params.replace(mu=mu)).jbar
        if j > best_j:
            best_mu, best_j = mu, j
    return best_mu, best_j


DEFAULT_CHUNK = 1 << 20


def iter_simulated_trials(params: SourceParams, n: int,
                          settings_dist: Sequence[float] | None = None,
                          rng_seed: int = 0, *,
                          chunk_size: int = DEFAULT_CHUNK) -> Iterator[TrialArray]:
    """Sample n trials in chunks.

    Chunk c draws from ``default_rng(SeedSequence([rng_seed, c]))``, so the
    stream is reproducible bit-for-bit for a given seed regardless of how
    chunks are distributed across workers.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if settings_dist is None:
        settings_dist = np.full(4, 0.25)
    settings_dist = np.asarray(settings_dist, dtype=np.float64)
    if settings_dist.shape != (4,) or settings_dist.min() < 0 \
            or abs(settings_dist.sum() - 1.0) > 1e-9:
        raise ValueError("settings_dist must be a 4-vector summing to 1")
    cond = predicted_behavior(params)
    settings_cum = np.cumsum(settings_dist)
    outcome_cum = np.cumsum(cond, axis=1)
    done = 0
    chunk_index = 0
    while done < n:
        take = min(chunk_size, n - done)
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, chunk_index]))
        xy = np.searchsorted(settings_cum, rng.random(take), side="right").astype(np.uint8)
        xy = np.minimum(xy, 3)
        u = rng.random(take)
        ab = (u[:, None] < outcome_cum[xy]).argmax(axis=1).astype(np.uint8)
        yield TrialArray(x=xy >> 1, y=xy & 1, a=ab >> 1, b=ab & 1,
                         t=np.ones(take, dtype=np.uint8), index0=done)
        done += take
        chunk_index += 1


def simulate_trials(params: SourceParams, n: int,
                    settings_dist: Sequence[float] | None = None,
                    rng_seed: int = 0, *, chunk_size: int = DEFAULT_CHUNK) -> TrialArray:
    """Materialized version of :func:`iter_simulated_trials`."""
    return TrialArray.concat(
        iter_simulated_trials(params, n, settings_dist, rng_seed, chunk_size=chunk_size))


def sample_counts(params: SourceParams, n: int,
                  settings_dist: Sequence[float] | None = None,
                  rng_seed: int = 0) -> CountsTable:
    """Counts table of n simulated trials drawn as per-setting multinomials.

    Statistically identical to aggregating ``simulate_trials`` output but
    much faster when only per-cell counts matter (block-wise hypothesis
    tests on large synthetic runs).
    """
    if settings_dist is None:
        settings_dist = np.full(4, 0.25)
    rng = np.random.default_rng(rng_seed)
    cond = predicted_behavior(params)
    n_xy = rng.multinomial(n, np.asarray(settings_dist, dtype=np.float64))
    rows = [rng.multinomial(n_xy[i], cond[i]) for i in range(4)]
    return CountsTable(np.stack(rows))


def model_jbar(params: SourceParams) -> float:
    return predicted_game_value(params).jbar


def sweep_mu(params: SourceParams, mu_values: Sequence[float]) -> list[float]:
    """Predicted jbar across a list of mean photon numbers."""
    return [predicted_game_value(params.replace(mu=float(m))).jbar for m in mu_values]
