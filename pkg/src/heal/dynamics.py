"""Trajectory-level entropy dynamics and similarity functions.

An entropy-dynamics sequence is the per-step vocabulary entropy along one
generated trajectory. Sequences of different lengths are aligned by
nearest-neighbor resampling of the shorter one, then softmax-normalized so
that fluctuation patterns dominate absolute magnitudes. Three similarity
functions are provided:

``sim_kl``   negative KL divergence between the normalized sequences
             (the default; higher is more similar, 0 is identical).
``sim_hti``  overlap of the high-entropy segments: masked min-sum over the
             per-sequence top-20% raw entropies.
``sim_pl``   agreement of global linear trends: |cos(angle difference of
             fitted slopes)| weighted by both Pearson coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .entropy import softmax_probs
from .errors import ValidationError

# Normalized weights below this contribute 0 to KL sums (underflow guard).
KL_ZERO = 1e-300

# Fraction of steps counted as "high entropy" when selecting top segments.
TOP_FRACTION = 0.20


@dataclass
class EntropyDynamics:
    """Per-step entropy sequence of one trajectory (nats, length >= 1)."""

    values: np.ndarray
    source_id: str = ""
    domain: str = "target"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValidationError("entropy dynamics must be a non-empty 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ValidationError("entropy dynamics contain non-finite entries")
        if np.any(v < 0):
            raise ValidationError(f"entropy dynamics contain negative entries (min {v.min()})")
        if self.domain not in ("target", "general"):
            raise ValidationError(f"unknown domain tag {self.domain!r}")
        self.values = v

    def __len__(self) -> int:
        return self.values.size


@dataclass
class NormalizedDynamics:
    """Softmax-normalized entropy sequence: strictly positive, sums to 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a non-empty 1-d vector")
        if np.any(w <= 0):
            raise ValidationError("normalized dynamics must be strictly positive")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {float(w.sum())!r}, not 1")
        self.weights = w

    @property
    def length(self) -> int:
        return self.weights.size


def _resample_values(v: np.ndarray, target_len: int) -> np.ndarray:
    """Nearest-neighbor index map idx(j) = round-half-up(j*(L-1)/(m-1))."""
    L = v.size
    if target_len == L:
        return v
    if target_len == 1:
        return v[:1].copy()
    idx = np.floor((np.arange(target_len) * (L - 1)) / (target_len - 1) + 0.5).astype(np.int64)
    return v[idx]


def resample_nearest(tau: EntropyDynamics, target_len: int) -> EntropyDynamics:
    """Stretch or shrink a sequence to ``target_len`` by nearest-neighbor picks.

    Endpoints are anchored: the output always starts and ends on the input's
    first and last entries, and resampling to the input's own length is the
    identity.
    """
    if target_len < 1:
        raise ValidationError(f"target_len must be >= 1, got {target_len}")
    return EntropyDynamics(
        _resample_values(tau.values, target_len).copy(),
        source_id=tau.source_id,
        domain=tau.domain,
    )


def normalize_dynamics(tau: EntropyDynamics) -> NormalizedDynamics:
    """Softmax (temperature 1) over the entropy sequence."""
    return NormalizedDynamics(softmax_probs(tau.values))


def _aligned_normalized(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Resample the shorter of two raw sequences to the longer, softmax both."""
    if a.size < b.size:
        a = _resample_values(a, b.size)
    elif b.size < a.size:
        b = _resample_values(b, a.size)
    return softmax_probs(a), softmax_probs(b)


def _kl_sum(wi: np.ndarray, log_wi: np.ndarray, log_wj: np.ndarray) -> float:
    terms = wi * (log_wi - log_wj)
    if wi.min() < KL_ZERO:
        terms = np.where(wi < KL_ZERO, 0.0, terms)
    return float(np.sum(terms))


def sim_kl(tau_i: EntropyDynamics, tau_j: EntropyDynamics) -> float:
    """Negative KL divergence between aligned, softmax-normalized sequences.

    Always <= 0; equals 0 exactly iff the normalized aligned forms coincide.
    Invariant under adding a per-sequence constant (softmax shift invariance).
    """
    wi, wj = _aligned_normalized(tau_i.values, tau_j.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = _kl_sum(wi, np.log(wi), np.log(wj))
    # Rounding can leave a tiny negative KL for near-identical inputs; the
    # trailing +0.0 turns -0.0 into a plain 0.0.
    return -max(kl, 0.0) + 0.0


def top_fraction_indices(values: np.ndarray, fraction: float, min_count: int = 1) -> np.ndarray:
    """Indices of the ceil(fraction * N) largest values, ties to lower index."""
    n = values.size
    size = max(min_count, math.ceil(fraction * n))
    order = np.argsort(-values, kind="stable")
    return order[:size]


def sim_hti(tau_i: EntropyDynamics, tau_j: EntropyDynamics) -> float:
    """Overlap of the high-entropy segments of two aligned sequences.

    Each sequence keeps only its own top-20% raw entropies (minimum one);
    the similarity is the elementwise min-sum of the two masked sequences.
    Symmetric, >= 0, and 0 whenever the top index sets are disjoint.
    """
    a, b = tau_i.values, tau_j.values
    n = max(a.size, b.size)
    a = _resample_values(a, n)
    b = _resample_values(b, n)
    masked_a = np.zeros(n)
    masked_a[top_fraction_indices(a, TOP_FRACTION)] = 1.0
    masked_a *= a
    masked_b = np.zeros(n)
    masked_b[top_fraction_indices(b, TOP_FRACTION)] = 1.0
    masked_b *= b
    return float(np.sum(np.minimum(masked_a, masked_b)))


def _line_fit(v: np.ndarray) -> tuple[float, float]:
    """Least-squares slope against the step index, plus Pearson correlation.

    Constant and length-1 sequences have no reliable trend: both come back
    as (0, 0).
    """
    n = v.size
    if n < 2 or np.all(v == v[0]):
        return 0.0, 0.0
    x = np.arange(n, dtype=np.float64)
    xm = x - x.mean()
    ym = v - v.mean()
    sxy = float(np.dot(xm, ym))
    sxx = float(np.dot(xm, xm))
    syy = float(np.dot(ym, ym))
    slope = sxy / sxx
    corr = sxy / math.sqrt(sxx * syy)
    return slope, corr


def sim_pl(tau_i: EntropyDynamics, tau_j: EntropyDynamics) -> float:
    """Similarity of global linear trends, in [0, 1]; needs no length alignment.

    |cos(arctan k_i - arctan k_j)| measures the angle between the fitted
    lines; the product of Pearson coefficients discounts unreliable fits.
    """
    k_i, d_i = _line_fit(tau_i.values)
    k_j, d_j = _line_fit(tau_j.values)
    value = abs(math.cos(math.atan(k_i) - math.atan(k_j)) * d_i * d_j)
    return min(value, 1.0)


SIMILARITIES: dict[str, Callable[[EntropyDynamics, EntropyDynamics], float]] = {
    "kl": sim_kl,
    "hti": sim_hti,
    "pl": sim_pl,
}


def get_similarity(name: str) -> Callable[[EntropyDynamics, EntropyDynamics], float]:
    try:
        return SIMILARITIES[name]
    except KeyError:
        raise ValidationError(
            f"unknown similarity {name!r}; expected one of {sorted(SIMILARITIES)}"
        ) from None


def pairwise_distance_matrix(dynamics: list[EntropyDynamics]) -> np.ndarray:
    """Distance matrix D[i][j] = -sim_kl(tau_i, tau_j); zero diagonal, >= 0.

    Generally asymmetric because KL is. Cell-by-cell scalar evaluation; see
    ``kl_similarity_matrix`` for the vectorized variant used on large batches.
    """
    if not dynamics:
        raise ValidationError("empty dynamics list")
    n = len(dynamics)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                # sim_kl is <= 0; the +0.0 keeps zero cells positively signed.
                out[i, j] = -sim_kl(dynamics[i], dynamics[j]) + 0.0
    return out


def kl_similarity_matrix(
    rows: list[EntropyDynamics],
    cols: list[EntropyDynamics],
    row_chunk: int = 256,
) -> np.ndarray:
    """Vectorized sim_kl for every (row, col) pair; matches the scalar loop.

    Pairs are grouped by (row length, col length) so each group shares one
    alignment length; normalized forms are cached per sequence and length.
    """
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    row_vals = [t.values for t in rows]
    col_vals = [t.values for t in cols]
    norm_cache: dict[tuple[int, bool, int], np.ndarray] = {}

    def norm_at(idx: int, is_row: bool, length: int) -> np.ndarray:
        key = (idx, is_row, length)
        if key not in norm_cache:
            v = row_vals[idx] if is_row else col_vals[idx]
            norm_cache[key] = softmax_probs(_resample_values(v, length))
        return norm_cache[key]

    row_lens = np.array([v.size for v in row_vals])
    col_lens = np.array([v.size for v in col_vals])
    out = np.empty((len(rows), len(cols)))
    with np.errstate(divide="ignore", invalid="ignore"):
        for la in np.unique(row_lens):
            ra = np.nonzero(row_lens == la)[0]
            for lb in np.unique(col_lens):
                cb = np.nonzero(col_lens == lb)[0]
                length = int(max(la, lb))
                wb = np.stack([norm_at(j, False, length) for j in cb])
                log_wb = np.log(wb)
                for start in range(0, ra.size, row_chunk):
                    sub = ra[start : start + row_chunk]
                    wa = np.stack([norm_at(i, True, length) for i in sub])
                    log_wa = np.log(wa)
                    terms = wa[:, None, :] * (log_wa[:, None, :] - log_wb[None, :, :])
                    if wa.min() < KL_ZERO:
                        terms = np.where(wa[:, None, :] < KL_ZERO, 0.0, terms)
                    kl = terms.sum(axis=2)
                    out[np.ix_(sub, cb)] = -np.maximum(kl, 0.0)
    return out
