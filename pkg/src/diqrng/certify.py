"""Statistical certification: KL divergence, information projection onto the
no-signaling and local-realistic polytopes, prediction-based-ratio
construction, block-wise p-value accumulation free of i.i.d. assumptions,
and two-proportion Z-tests of the four no-signaling conditions.

Behaviors live on the 2-setting/2-outcome scenario.  The no-signaling
polytope is the convex hull of 24 vertices (16 local deterministic
strategies plus 8 nonlocal extremal boxes); the local-realistic polytope is
the hull of the 16 deterministic strategies.  Projections minimize the KL
divergence from the observed behavior by expectation-maximization over the
vertex weights, with a dual gap certificate
``log2 max_k E_f[v_k / q]`` bounding the distance to the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .trials import XY_ORDER, CountsTable, TrialArray, aggregate_trials

UNIFORM_SETTINGS = np.full(4, 0.25)

NS = "NS"
LR = "LR"


class ProjectionError(RuntimeError):
    """Polytope projection failed to converge; carries the achieved gap."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class BehaviorDist:
    """Conditional distribution p(ab|xy) with a settings distribution.

    ``cond[i, j]`` is p(ab|xy) for setting pair XY_ORDER[i] and outcome
    column j in ab = 00, 01, 10, 11 order.
    """

    settings: np.ndarray
    cond: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.settings, dtype=np.float64)
        c = np.asarray(self.cond, dtype=np.float64)
        if s.shape != (4,) or c.shape != (4, 4):
            raise ValueError("settings must be a 4-vector and cond a 4x4 array")
        if s.min() < 0 or c.min() < -1e-12:
            raise ValueError("negative probabilities in behavior")
        if abs(s.sum() - 1.0) > 1e-10:
            raise ValueError(f"settings sum to {s.sum()}, not 1")
        rows = c.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-10:
            raise ValueError(f"conditional blocks sum to {rows}, not 1")
        object.__setattr__(self, "settings", s)
        object.__setattr__(self, "cond", np.clip(c, 0.0, None))

    @classmethod
    def from_cond(cls, cond, settings=None) -> "BehaviorDist":
        return cls(UNIFORM_SETTINGS.copy() if settings is None else settings, cond)

    @classmethod
    def from_counts(cls, counts: CountsTable, settings=None,
                    laplace: float = 0.0) -> "BehaviorDist":
        """Empirical behavior from a counts table, with optional add-lambda
        smoothing per setting row."""
        c = counts.counts.astype(np.float64) + laplace
        totals = c.sum(axis=1, keepdims=True)
        if (totals <= 0).any():
            raise ValueError("cannot form frequencies: empty setting cell")
        return cls.from_cond(c / totals, settings)

    @classmethod
    def uniform(cls, settings=None) -> "BehaviorDist":
        return cls.from_cond(np.full((4, 4), 0.25), settings)

    @classmethod
    def pr_box(cls, settings=None) -> "BehaviorDist":
        """The extremal no-signaling behavior winning the game with certainty."""
        return cls.from_cond(_pr_vertices()[0], settings)

    @classmethod
    def local_deterministic(cls, a0: int, a1: int, b0: int, b1: int,
                            settings=None) -> "BehaviorDist":
        """Deterministic strategy a = (a0, a1)[x], b = (b0, b1)[y]."""
        return cls.from_cond(_deterministic_vertex(a0, a1, b0, b1), settings)

    def same_settings(self, other: "BehaviorDist") -> bool:
        return bool(np.allclose(self.settings, other.settings, atol=1e-9))


def _deterministic_vertex(a0, a1, b0, b1) -> np.ndarray:
    v = np.zeros((4, 4))
    for i, (x, y) in enumerate(XY_ORDER):
        a = (a0, a1)[x]
        b = (b0, b1)[y]
        v[i, 2 * a + b] = 1.0
    return v


@lru_cache(maxsize=None)
def _lr_vertices_cached() -> tuple:
    vs = []
    for a0 in (0, 1):
        for a1 in (0, 1):
            for b0 in (0, 1):
                for b1 in (0, 1):
                    vs.append(_deterministic_vertex(a0, a1, b0, b1))
    return tuple(v.tobytes() for v in vs)


def lr_vertices() -> np.ndarray:
    """The 16 local deterministic strategies, shape (16, 4, 4)."""
    return np.array([np.frombuffer(b).reshape(4, 4) for b in _lr_vertices_cached()])


def _pr_vertices() -> np.ndarray:
    vs = []
    for alpha in (0, 1):
        for beta in (0, 1):
            for gamma in (0, 1):
                v = np.zeros((4, 4))
                for i, (x, y) in enumerate(XY_ORDER):
                    for a in (0, 1):
                        b = a ^ (x * y) ^ (alpha * x) ^ (beta * y) ^ gamma
                        v[i, 2 * a + b] = 0.5
                vs.append(v)
    return np.array(vs)


def ns_vertices() -> np.ndarray:
    """All 24 extreme points of the no-signaling polytope, shape (24, 4, 4)."""
    return np.concatenate([lr_vertices(), _pr_vertices()])


def polytope_vertices(polytope: str) -> np.ndarray:
    if polytope == NS:
        return ns_vertices()
    if polytope == LR:
        return lr_vertices()
    raise ValueError(f"unknown polytope {polytope!r}; expected 'NS' or 'LR'")


def kl_divergence(f: BehaviorDist, p: BehaviorDist) -> float:
    """KL divergence in bits, ``sum_xy p_xy sum_ab f log2(f/p)``.

    Terms with f = 0 contribute zero; f > 0 on a cell where p = 0 yields
    +inf (support violation, reported explicitly).
    """
    if not f.same_settings(p):
        raise ValueError("behaviors must share the settings distribution")
    mask = f.cond > 0.0
    if (mask & (p.cond <= 0.0)).any():
        return math.inf
    terms = np.zeros((4, 4))
    terms[mask] = f.cond[mask] * np.log2(f.cond[mask] / p.cond[mask])
    return float((f.settings[:, None] * terms).sum())


@dataclass(frozen=True)
class ProjectionResult:
    """Information projection onto a polytope, with vertex weights and a dual
    gap certificate bounding the divergence suboptimality."""

    behavior: BehaviorDist
    weights: np.ndarray
    divergence_bits: float
    gap_bits: float
    iterations: int
    converged: bool
    polytope: str


def _divergence(sw, fc, q) -> float:
    mask = fc > 0.0
    terms = np.where(mask, fc * np.log2(np.where(mask, fc / np.maximum(q, 1e-300),
                                                 1.0)), 0.0)
    return float((sw * terms).sum())


def _em_project(f: BehaviorDist, vertices: np.ndarray, polytope: str,
                tol: float, gap_tol: float, max_iter: int) -> ProjectionResult:
    sw = f.settings[:, None]
    fc = f.cond
    w = np.full(len(vertices), 1.0 / len(vertices))
    prev = math.inf
    div = gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        q = np.tensordot(w, vertices, axes=1)
        ratio = np.where(fc > 0.0, fc / np.where(q > 0.0, q, 1.0), 0.0)
        r = (sw * ratio * vertices).sum(axis=(1, 2))
        div = _divergence(sw, fc, q)
        gap = math.log2(max(float(r.max()), 1.0))
        # the gap certifies the current iterate, which is what gets returned
        if prev - div < tol and gap < gap_tol:
            return ProjectionResult(
                behavior=BehaviorDist(f.settings.copy(), q), weights=w,
                divergence_bits=div, gap_bits=gap, iterations=it,
                converged=True, polytope=polytope)
        prev = div
        w_next = w * r
        w_sum = w_next.sum()
        if w_sum <= 0.0:
            break
        w = w_next / w_sum
    q = np.tensordot(w, vertices, axes=1)
    return ProjectionResult(behavior=BehaviorDist(f.settings.copy(), q), weights=w,
                            divergence_bits=_divergence(sw, fc, q),
                            gap_bits=gap, iterations=it,
                            converged=False, polytope=polytope)


def project_no_signaling(f: BehaviorDist, *, tol: float = 1e-12,
                         gap_tol: float = 1e-10,
                         max_iter: int = 100_000) -> ProjectionResult:
    """KL projection of ``f`` onto the no-signaling polytope."""
    return _em_project(f, ns_vertices(), NS, tol, gap_tol, max_iter)


def project_local_realistic(f: BehaviorDist, *, tol: float = 1e-12,
                            gap_tol: float = 1e-10,
                            max_iter: int = 100_000) -> ProjectionResult:
    """KL projection of ``f`` onto the local-realistic polytope; the returned
    weights are the mixture over the 16 deterministic strategies."""
    return _em_project(f, lr_vertices(), LR, tol, gap_tol, max_iter)


@dataclass(frozen=True)
class PbrModel:
    """Prediction-based ratios R(abxy), stored as a (4, 4) array matching
    BehaviorDist layout.  ``source_block`` records which data block the
    ratios were built from (None for the trivial model)."""

    ratios: np.ndarray
    polytope: str
    settings: np.ndarray
    source_block: int | None = None

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=np.float64)
        if r.shape != (4, 4):
            raise ValueError("ratios must be 4x4")
        if r.min() < 0:
            raise ValueError("ratios must be non-negative")
        object.__setattr__(self, "ratios", r)
        object.__setattr__(self, "settings",
                           np.asarray(self.settings, dtype=np.float64))

    @classmethod
    def trivial(cls, settings=None, polytope: str = NS) -> "PbrModel":
        """All-ones ratios (used for the first data block)."""
        s = UNIFORM_SETTINGS.copy() if settings is None else settings
        return cls(ratios=np.ones((4, 4)), polytope=polytope, settings=s)

    def vertex_expectations(self) -> np.ndarray:
        """E_p[R] at every vertex of the null polytope."""
        vs = polytope_vertices(self.polytope)
        return (self.settings[None, :, None] * self.ratios[None] * vs).sum(axis=(1, 2))

    def max_vertex_expectation(self) -> float:
        return float(self.vertex_expectations().max())


def build_pbr_with_diagnostics(
        f_prev: BehaviorDist, null_polytope: str, *,
        tol: float = 1e-12, gap_tol: float = 1e-10, max_iter: int = 100_000,
        source_block: int | None = None) -> tuple[PbrModel, ProjectionResult]:
    """As :func:`build_pbr`, also returning the projection diagnostics."""
    proj = _em_project(f_prev, polytope_vertices(null_polytope), null_polytope,
                       tol, gap_tol, max_iter)
    if not proj.converged:
        raise ProjectionError(
            f"{null_polytope} projection did not converge in {proj.iterations} "
            f"iterations (gap {proj.gap_bits:.3e} bits)", proj)
    q = proj.behavior.cond
    ratios = np.where(f_prev.cond > 0.0, f_prev.cond / np.where(q > 0.0, q, 1.0), 0.0)
    model = PbrModel(ratios=ratios, polytope=null_polytope,
                     settings=f_prev.settings.copy(), source_block=source_block)
    scale = model.max_vertex_expectation()
    if scale > 1.0:
        model = PbrModel(ratios=ratios / scale, polytope=null_polytope,
                         settings=f_prev.settings.copy(), source_block=source_block)
    return model, proj


def build_pbr(f_prev: BehaviorDist, null_polytope: str, *,
              tol: float = 1e-12, gap_tol: float = 1e-10,
              max_iter: int = 100_000, source_block: int | None = None) -> PbrModel:
    """Ratios R = f/p* with p* the projection of ``f_prev`` onto the null
    polytope.  ``f_prev`` must predate the data block the model will score.

    The ratios are normalized by the largest vertex expectation so that
    E_p[R] <= 1 holds exactly on the whole null polytope.
    """
    model, _ = build_pbr_with_diagnostics(
        f_prev, null_polytope, tol=tol, gap_tol=gap_tol,
        max_iter=max_iter, source_block=source_block)
    return model


@dataclass(frozen=True)
class PValueResult:
    """Accumulated p-value bound, kept in log space."""

    log10_p: float
    n_trials: int
    n_blocks: int
    hit_zero_ratio: bool

    @property
    def p_value(self) -> float:
        return 10.0 ** self.log10_p if self.log10_p > -300 else 0.0


def _block_counts(block) -> CountsTable:
    if isinstance(block, CountsTable):
        return block
    if isinstance(block, TrialArray):
        return aggregate_trials(block)
    return aggregate_trials(list(block))


def pvalue_accumulate(blocks: Iterable[tuple[PbrModel, object]]) -> PValueResult:
    """p-value upper bound ``min((prod_i R_i)^-1, 1)`` over scored blocks.

    Each element pairs a PbrModel with that block's data (a CountsTable,
    TrialArray, or iterable of records).  Models must be built from data
    preceding their block; ``source_block`` tags are checked against the
    block order when present.  The product is accumulated in log space; a
    zero ratio on an observed outcome collapses the bound to p = 1.
    """
    log2_stat = 0.0
    n_trials = 0
    n_blocks = 0
    hit_zero = False
    for k, (model, data) in enumerate(blocks):
        if model.source_block is not None and model.source_block >= k:
            raise ValueError(
                f"PBR for block {k} was built from block {model.source_block}; "
                "models must predate the data they score")
        counts = _block_counts(data)
        n_blocks += 1
        n_trials += counts.total()
        observed = counts.counts > 0
        if (observed & (model.ratios == 0.0)).any():
            hit_zero = True
            continue
        with np.errstate(divide="ignore"):
            logr = np.where(observed, np.log2(np.where(observed, model.ratios, 1.0)), 0.0)
        log2_stat += float((counts.counts * logr).sum())
    if hit_zero:
        return PValueResult(log10_p=0.0, n_trials=n_trials, n_blocks=n_blocks,
                            hit_zero_ratio=True)
    log10_p = min(-log2_stat * math.log10(2.0), 0.0)
    return PValueResult(log10_p=log10_p, n_trials=n_trials, n_blocks=n_blocks,
                        hit_zero_ratio=False)


DEFAULT_BLOCK_TRIALS = 24_000_000


@dataclass(frozen=True)
class BlockDiagnostics:
    block: int
    trials: int
    divergence_bits: float
    gap_bits: float
    iterations: int
    log10_p_running: float


def pbr_pvalue_blocks(counts_blocks: Iterable[CountsTable], null_polytope: str, *,
                      settings=None, laplace: float = 1.0,
                      tol: float = 1e-12, gap_tol: float = 1e-10,
                      max_iter: int = 100_000,
                      ) -> tuple[PValueResult, list[BlockDiagnostics]]:
    """Standard block schedule: trivial ratios for the first block, then
    ratios built from the previous block's (add-lambda smoothed) frequencies.

    Returns the final accumulated bound and per-block diagnostics including
    the running log10 p-value.
    """
    settings = UNIFORM_SETTINGS.copy() if settings is None else np.asarray(settings)
    log2_stat = 0.0
    n_trials = 0
    hit_zero = False
    diags: list[BlockDiagnostics] = []
    prev: CountsTable | None = None
    k = -1
    for k, counts in enumerate(counts_blocks):
        if prev is None:
            model = PbrModel.trivial(settings, null_polytope)
            div = gap = 0.0
            iters = 0
        else:
            f_prev = BehaviorDist.from_counts(prev, settings=settings, laplace=laplace)
            model, proj = build_pbr_with_diagnostics(
                f_prev, null_polytope, tol=tol, gap_tol=gap_tol,
                max_iter=max_iter, source_block=k - 1)
            div, gap, iters = proj.divergence_bits, proj.gap_bits, proj.iterations
        observed = counts.counts > 0
        if (observed & (model.ratios == 0.0)).any():
            hit_zero = True
        elif not hit_zero:
            with np.errstate(divide="ignore"):
                logr = np.where(observed,
                                np.log2(np.where(observed, model.ratios, 1.0)), 0.0)
            log2_stat += float((counts.counts * logr).sum())
        n_trials += counts.total()
        running = 0.0 if hit_zero else min(-log2_stat * math.log10(2.0), 0.0)
        diags.append(BlockDiagnostics(block=k, trials=counts.total(),
                                      divergence_bits=div, gap_bits=gap,
                                      iterations=iters, log10_p_running=running))
        prev = counts
    if k < 0:
        raise ValueError("no data blocks supplied")
    log10_p = 0.0 if hit_zero else min(-log2_stat * math.log10(2.0), 0.0)
    return (PValueResult(log10_p=log10_p, n_trials=n_trials, n_blocks=k + 1,
                         hit_zero_ratio=hit_zero), diags)


def blocks_from_trials(trials: Iterable[TrialArray],
                       block_trials: int = DEFAULT_BLOCK_TRIALS) -> Iterable[CountsTable]:
    """Regroup a chunked trial stream into fixed-size count blocks; a final
    partial block is kept."""
    pending = np.zeros((4, 4), dtype=np.int64)
    filled = 0
    for chunk in trials:
        start = 0
        while start < len(chunk):
            take = min(block_trials - filled, len(chunk) - start)
            sub = TrialArray(chunk.x[start:start + take], chunk.y[start:start + take],
                             chunk.a[start:start + take], chunk.b[start:start + take],
                             chunk.t[start:start + take])
            pending += aggregate_trials(sub).counts
            filled += take
            start += take
            if filled == block_trials:
                yield CountsTable(pending)
                pending = np.zeros((4, 4), dtype=np.int64)
                filled = 0
    if filled:
        yield CountsTable(pending)


Z_TEST_LABELS = ("alice_x0", "alice_x1", "bob_y0", "bob_y1")


@dataclass(frozen=True)
class ZTestResult:
    """Two-proportion Z-tests of the four no-signaling conditions.

    For each condition the tested proportion is the detection marginal
    (outcome bit 0) of one party under a fixed own setting, compared across
    the two remote settings; two-sided p-values from the pooled statistic.
    """

    p_values: np.ndarray
    z_values: np.ndarray
    degenerate: np.ndarray
    labels: tuple = Z_TEST_LABELS

    def as_dict(self) -> dict:
        return {label: {"p_value": float(p), "z": float(z), "degenerate": bool(d)}
                for label, p, z, d in zip(self.labels, self.p_values,
                                          self.z_values, self.degenerate)}


def _two_proportion(k1, n1, k2, n2) -> tuple[float, float, bool]:
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var <= 0.0:
        return 1.0, 0.0, True
    z = (k1 / n1 - k2 / n2) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0)), z, False


def ztest_no_signaling(counts: CountsTable) -> ZTestResult:
    """Four p-values: Alice's detection rate at x = 0 and 1 compared across
    Bob's settings, and Bob's at y = 0 and 1 across Alice's settings."""
    counts.require_positive_totals()
    c = counts.counts.astype(np.float64)
    totals = counts.setting_totals().astype(np.float64)
    a_det = c[:, 0] + c[:, 1]  # a = 0
    b_det = c[:, 0] + c[:, 2]  # b = 0
    pairs = [
        (a_det[0], totals[0], a_det[1], totals[1]),  # alice at x=0: y=0 vs y=1
        (a_det[2], totals[2], a_det[3], totals[3]),  # alice at x=1
        (b_det[0], totals[0], b_det[2], totals[2]),  # bob at y=0: x=0 vs x=1
        (b_det[1], totals[1], b_det[3], totals[3]),  # bob at y=1
    ]
    ps, zs, degs = [], [], []
    for k1, n1, k2, n2 in pairs:
        p, z, deg = _two_proportion(k1, n1, k2, n2)
        ps.append(p)
        zs.append(z)
        degs.append(deg)
    return ZTestResult(p_values=np.array(ps), z_values=np.array(zs),
                       degenerate=np.array(degs))
