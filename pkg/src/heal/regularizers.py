"""Entropy-preserving regularizers used as baselines in the testbed.

Four standard interventions against entropy collapse:

- entropy bonus: subtract the batch mean step entropy from the loss,
  scaled by ``alpha`` (minimizing the loss then pushes entropy up);
- high-entropy masking: restrict the policy-gradient update to the top
  ``gamma`` fraction of tokens by entropy, ranked across the whole batch;
- asymmetric ratio clipping: clamp importance ratios into
  [1 - eps_low, 1 + eps_high] with a looser upper bound, which stops the
  update from crushing rare upward moves;
- covariance-gated KL: find the tokens whose log-probability co-moves most
  with the advantage and pull only those back toward the old policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import ProbDist, kl_divergence
from .errors import ValidationError

DEFAULT_ALPHA = 0.001
DEFAULT_GAMMA = 0.20
DEFAULT_EPS_LOW = 0.20
DEFAULT_EPS_HIGH = 0.28
DEFAULT_K_FRAC = 0.0002
DEFAULT_BETA = 1.0

REGULARIZER_NAMES = ("none", "entropy_loss", "mask_8020", "clip_higher", "kl_cov")


@dataclass
class RegularizerConfig:
    """Hyperparameters for the four baselines, at their reference defaults."""

    alpha: float = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA
    eps_low: float = DEFAULT_EPS_LOW
    eps_high: float = DEFAULT_EPS_HIGH
    k_frac: float = DEFAULT_K_FRAC
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.k_frac <= 1.0:
            raise ValidationError(f"k_frac must lie in (0, 1], got {self.k_frac}")
        if not 0.0 <= self.eps_low <= 1.0:
            raise ValidationError(f"eps_low must lie in [0, 1], got {self.eps_low}")
        if self.eps_high < 0.0:
            raise ValidationError(f"eps_high must be >= 0, got {self.eps_high}")
        if self.beta < 0.0:
            raise ValidationError(f"beta must be >= 0, got {self.beta}")


def entropy_loss_term(step_entropies: list[np.ndarray], alpha: float = DEFAULT_ALPHA) -> float:
    """-(alpha / G) * sum over trajectories of their mean step entropy.

    Per-trajectory token mean first, then group mean; always <= 0 for
    alpha >= 0 since step entropies are non-negative.
    """
    if not step_entropies:
        raise ValidationError("empty batch")
    if not math.isfinite(alpha):
        raise ValidationError(f"alpha must be finite, got {alpha}")
    means = [float(np.mean(h)) for h in step_entropies]
    return -(alpha / len(means)) * float(sum(means))


def high_entropy_mask(
    step_entropies: list[np.ndarray], gamma: float = DEFAULT_GAMMA
) -> list[np.ndarray]:
    """Boolean masks marking the batch-level top ceil(gamma * N_T) entropies.

    Ranking is over every (trajectory, step) token in the batch jointly;
    ties resolve toward earlier trajectories and earlier steps. Exactly
    ceil(gamma * N_T) tokens are selected.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    if not step_entropies:
        raise ValidationError("empty batch")
    lengths = np.array([h.size for h in step_entropies])
    total = int(lengths.sum())
    if total == 0:
        raise ValidationError("batch has no tokens")
    flat = np.concatenate(step_entropies)
    keep = math.ceil(gamma * total)
    order = np.argsort(-flat, kind="stable")
    mask_flat = np.zeros(total, dtype=bool)
    mask_flat[order[:keep]] = True
    return list(np.split(mask_flat, np.cumsum(lengths)[:-1]))


def clip_ratio_asymmetric(
    rho, eps_low: float = DEFAULT_EPS_LOW, eps_high: float = DEFAULT_EPS_HIGH
):
    """Clamp importance ratios into [1 - eps_low, 1 + eps_high].

    Scalars come back as float, arrays as arrays.
    """
    if not 0.0 <= eps_low <= 1.0:
        raise ValidationError(f"eps_low must lie in [0, 1], got {eps_low}")
    if eps_high < 0.0:
        raise ValidationError(f"eps_high must be >= 0, got {eps_high}")
    clipped = np.clip(rho, 1.0 - eps_low, 1.0 + eps_high)
    if np.isscalar(rho):
        return float(clipped)
    return clipped


def kl_cov_select(
    logprobs: np.ndarray, advantages: np.ndarray, k_frac: float = DEFAULT_K_FRAC
) -> list[int]:
    """Indices of the tokens whose log-prob co-moves most with the advantage.

    Inputs are flat per-token vectors over the whole batch. Per-token score:
    (logprob - mean logprob) * (advantage - mean advantage). The top
    max(1, round-half-up(k_frac * N_T)) scores are kept, ties toward lower
    index; indices come back ascending.
    """
    if not 0.0 < k_frac <= 1.0:
        raise ValidationError(f"k_frac must lie in (0, 1], got {k_frac}")
    lp = np.asarray(logprobs, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if lp.ndim != 1 or adv.shape != lp.shape:
        raise ValidationError(
            f"logprobs and advantages must be equal-length vectors "
            f"(got {lp.shape} and {adv.shape})"
        )
    if lp.size == 0:
        raise ValidationError("empty batch")
    scores = (lp - lp.mean()) * (adv - adv.mean())
    keep = max(1, int(math.floor(k_frac * lp.size + 0.5)))
    order = np.argsort(-scores, kind="stable")[:keep]
    return sorted(int(i) for i in order)


def kl_penalty_term(
    old_dists: list[ProbDist],
    new_dists: list[ProbDist],
    selected: list[int],
    beta: float = DEFAULT_BETA,
) -> float:
    """beta * sum over selected tokens of full-vocabulary KL(old || new).

    Always >= 0; exactly 0 when the selection is empty or every selected
    pair matches.
    """
    if beta < 0.0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    if len(old_dists) != len(new_dists):
        raise ValidationError(
            f"{len(old_dists)} old distributions vs {len(new_dists)} new"
        )
    total = 0.0
    for t in selected:
        if not 0 <= t < len(old_dists):
            raise ValidationError(f"selected index {t} out of range")
        if old_dists[t] is None or new_dists[t] is None:
            raise ValidationError(f"missing stored distribution at token {t}")
        total += kl_divergence(old_dists[t], new_dists[t])
    return beta * total
