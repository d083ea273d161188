"""Deterministic policy-gradient training loop over the synthetic tasks.

One step: sample a batch of prompt slots for the mode's data mixture, roll
out N trajectories per slot, compute verifier rewards (plus the alignment
bonus under the "heal" mode), normalize rewards within each slot's group,
and take one exact-gradient step on the logit table. Metrics rows come from
separate evaluation rollouts on fixed prompt subsets so that curves are
comparable across modes; evaluation consumes its own RNG streams and leaves
training trajectories untouched.

Everything is a pure function of (config, seed): two runs with the same
config produce bit-identical metrics files.
"""

from __future__ import annotations

import dataclasses
import math
import os
import typing
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import EntropyDynamics, kl_similarity_matrix
from ..eda import batch_rewards
from ..entropy import entropy_of_prob_rows, mean_vocab_entropy, softmax_probs
from ..errors import DivergenceError, ValidationError
from ..regularizers import (
    REGULARIZER_NAMES,
    RegularizerConfig,
    high_entropy_mask,
    kl_cov_select,
)
from ..rollouts import Trajectory
from ..selection import score_groups, select_top_k
from ..trace_io import MetricsRow, write_metrics
from .policy import TabularPolicy
from .rollout import rng_stream, rollout_tasks
from .tasks import VOCAB_SIZE, SynthTask, make_task_suite

MODES = ("fewshot", "fullshot", "onlygeneral", "hybrid", "heal")
SIM_CHOICES = ("kl", "hti", "pl")
WEIGHTINGS = ("token", "sequence")

# Probabilities this small only appear under extreme logit drift; the floor
# keeps log() finite without disturbing any realistic value.
_LOG_FLOOR = 1e-300


@dataclass
class TrainConfig:
    """Flat, file-serializable training configuration."""

    mode: str
    n_target: int = 4
    n_general: int = 0
    rollouts_per_prompt: int = 8
    temperature: float = 0.7
    batch_size: int = 128
    steps: int = 200
    learning_rate: float = 0.05
    seed: int = 0
    regularizer: str = "none"
    sim_choice: str = "kl"
    entropy_curve_weighting: str = "token"
    max_len: int = 8
    context_window: int = 2
    log_every: int = 10
    eda_start_step: int = 0
    general_fraction: float = -1.0
    selection_pool_factor: float = 2.0
    micro_chunks: int = 4
    eval_prompts: int = 16
    mask_ref_kl: bool = False
    alpha: float = 0.001
    gamma: float = 0.20
    eps_low: float = 0.20
    eps_high: float = 0.28
    k_frac: float = 0.0002
    beta: float = 1.0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.regularizer not in REGULARIZER_NAMES:
            raise ValidationError(
                f"regularizer must be one of {REGULARIZER_NAMES}, got {self.regularizer!r}"
            )
        if self.sim_choice not in SIM_CHOICES:
            raise ValidationError(
                f"sim_choice must be one of {SIM_CHOICES}, got {self.sim_choice!r}"
            )
        if self.entropy_curve_weighting not in WEIGHTINGS:
            raise ValidationError(
                f"entropy_curve_weighting must be one of {WEIGHTINGS}, "
                f"got {self.entropy_curve_weighting!r}"
            )
        if self.n_target < 0 or self.n_general < 0:
            raise ValidationError("sample counts must be >= 0")
        if self.mode in ("fewshot", "fullshot") and self.n_target < 1:
            raise ValidationError(f"mode {self.mode} needs n_target >= 1")
        if self.mode == "onlygeneral" and self.n_general < 1:
            raise ValidationError("mode onlygeneral needs n_general >= 1")
        if self.mode in ("hybrid", "heal") and (self.n_target < 1 or self.n_general < 1):
            raise ValidationError(f"mode {self.mode} needs both sample counts >= 1")
        if self.rollouts_per_prompt < 2:
            raise ValidationError("rollouts_per_prompt must be >= 2 (group normalization)")
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.mode in ("hybrid", "heal") and self.batch_size < 2:
            raise ValidationError("mixed-domain batches need batch_size >= 2")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if not 1 <= self.context_window <= 3:
            raise ValidationError("context_window must lie in [1, 3]")
        if self.log_every < 1:
            raise ValidationError("log_every must be >= 1")
        if self.eda_start_step < 0:
            raise ValidationError("eda_start_step must be >= 0")
        if self.general_fraction > 1.0:
            raise ValidationError("general_fraction must be <= 1 (or negative for proportional)")
        if self.selection_pool_factor < 1.0:
            raise ValidationError("selection_pool_factor must be >= 1")
        if self.micro_chunks < 1:
            raise ValidationError("micro_chunks must be >= 1")
        if self.eval_prompts < 1:
            raise ValidationError("eval_prompts must be >= 1")
        self.regularizer_config()

    def regularizer_config(self) -> RegularizerConfig:
        return RegularizerConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            eps_low=self.eps_low,
            eps_high=self.eps_high,
            k_frac=self.k_frac,
            beta=self.beta,
        )


_FIELD_TYPES = typing.get_type_hints(TrainConfig)


def config_text(cfg: TrainConfig) -> str:
    """Render a config as flat ``key = value`` lines, one per field."""
    lines = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> TrainConfig:
    """Parse ``key = value`` lines; # starts a comment line."""
    values: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_TYPES:
            raise ValidationError(f"config line {line_no}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"config line {line_no}: duplicate key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind is bool:
                if value.lower() not in ("true", "false"):
                    raise ValueError(f"expected true/false, got {value!r}")
                values[key] = value.lower() == "true"
            elif kind is int:
                values[key] = int(value)
            elif kind is float:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ValidationError(f"config line {line_no}: bad value for {key!r}: {exc}") from None
    if "mode" not in values:
        raise ValidationError("config is missing the required 'mode' key")
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def grpo_advantages(rewards) -> np.ndarray:
    """Group-normalized advantages (r - mean) / (population std + 1e-6).

    A zero-variance group gets all-zero advantages; groups need N >= 2.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValidationError(f"need at least 2 rewards in a group, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise ValidationError("rewards contain non-finite entries")
    std = float(r.std())
    if std == 0.0:
        return np.zeros(r.size)
    return (r - r.mean()) / (std + 1e-6)


@dataclass
class _FlatBatch:
    """Step-level view of a batch: one row per generated token."""

    ctx: np.ndarray
    tok: np.ndarray
    adv: np.ndarray
    inv_len: np.ndarray
    old_logprob: np.ndarray
    traj_slices: list[slice]
    n_traj: int


def _flatten_batch(batch: list[tuple[Trajectory, float]]) -> _FlatBatch:
    if not batch:
        raise ValidationError("empty batch")
    ctx_parts, tok_parts, lp_parts, slices = [], [], [], []
    adv_parts, inv_parts = [], []
    start = 0
    for t, a in batch:
        if not math.isfinite(a):
            raise ValidationError(f"non-finite advantage for {t.trajectory_id}")
        if "ctx_ids" not in t.extras:
            raise ValidationError(
                f"trajectory {t.trajectory_id} carries no context-id channel"
            )
        if t.tokens is None or t.step_logprobs is None:
            raise ValidationError(
                f"trajectory {t.trajectory_id} needs tokens and step_logprobs"
            )
        L = t.length
        ctx_parts.append(np.asarray(t.extras["ctx_ids"], dtype=np.int64))
        tok_parts.append(np.asarray(t.tokens, dtype=np.int64))
        lp_parts.append(t.step_logprobs)
        adv_parts.append(np.full(L, float(a)))
        inv_parts.append(np.full(L, 1.0 / L))
        slices.append(slice(start, start + L))
        start += L
    return _FlatBatch(
        ctx=np.concatenate(ctx_parts),
        tok=np.concatenate(tok_parts),
        adv=np.concatenate(adv_parts),
        inv_len=np.concatenate(inv_parts),
        old_logprob=np.concatenate(lp_parts),
        traj_slices=slices,
        n_traj=len(batch),
    )


def _softmax_rows(table: np.ndarray, ctx: np.ndarray, temperature: float):
    p = softmax_probs(table[ctx], temperature)
    log_p = np.log(np.maximum(p, _LOG_FLOOR))
    return p, log_p


def _accumulate(grad, ctx, tok, row_coeff, row_probs, chosen_coeff):
    """grad[ctx] += row_coeff * row_probs, grad[ctx, tok] += chosen_coeff."""
    np.add.at(grad, ctx, row_coeff[:, None] * row_probs)
    np.add.at(grad, (ctx, tok), chosen_coeff)


def _plain_loss_and_grad(
    table: np.ndarray,
    flat: _FlatBatch,
    temperature: float,
    regularizer: str,
    reg: RegularizerConfig,
    mask_flat,
    n_masked: int,
    mask_ref_kl: bool,
):
    """Loss and exact gradient for the non-ratio objectives.

    Policy loss: -(1/G) * sum_i A_i * mean_t log pi(o_t); the entropy bonus
    subtracts alpha times the batch-mean step entropy; the masked variant
    averages A_i log pi over the selected tokens only.
    """
    V = table.shape[1]
    p, log_p = _softmax_rows(table, flat.ctx, temperature)
    rows = np.arange(flat.ctx.size)
    chosen_lp = log_p[rows, flat.tok]
    grad = np.zeros_like(table)
    if regularizer == "mask_8020":
        coeff = np.where(mask_flat, flat.adv / n_masked, 0.0)
    else:
        coeff = flat.adv * flat.inv_len / flat.n_traj
    loss = -float(np.sum(coeff * chosen_lp))
    row_coeff = coeff / temperature
    _accumulate(grad, flat.ctx, flat.tok, row_coeff, p, -row_coeff)
    if regularizer == "entropy_loss":
        h = entropy_of_prob_rows(p)
        e = reg.alpha * flat.inv_len / flat.n_traj
        loss += -float(np.sum(e * h))
        np.add.at(grad, flat.ctx, (e / temperature)[:, None] * p * (log_p + h[:, None]))
    if regularizer == "mask_8020" and mask_ref_kl:
        h = entropy_of_prob_rows(p)
        w = np.where(mask_flat, reg.beta / n_masked, 0.0)
        loss += float(np.sum(w * (math.log(V) - h)))
        np.add.at(grad, flat.ctx, (w / temperature)[:, None] * p * (log_p + h[:, None]))
    return loss, grad


def _ratio_chunk_grad(
    table: np.ndarray,
    flat: _FlatBatch,
    rows: np.ndarray,
    temperature: float,
    regularizer: str,
    reg: RegularizerConfig,
    g_total: int,
    kl_rows: np.ndarray,
    old_probs_rows,
):
    """Loss and gradient for one micro-chunk of a ratio-based objective."""
    ctx, tok = flat.ctx[rows], flat.tok[rows]
    p, log_p = _softmax_rows(table, ctx, temperature)
    r_idx = np.arange(rows.size)
    ratio = np.exp(log_p[r_idx, tok] - flat.old_logprob[rows])
    adv = flat.adv[rows]
    base = adv * flat.inv_len[rows] / g_total
    grad = np.zeros_like(table)
    if regularizer == "clip_higher":
        lo, hi = 1.0 - reg.eps_low, 1.0 + reg.eps_high
        clipped = np.clip(ratio, lo, hi)
        loss = -float(np.sum(np.minimum(ratio * adv, clipped * adv) * flat.inv_len[rows] / g_total))
        # The surrogate is min(ratio*A, clip(ratio)*A); gradient flows only
        # where the unclipped branch attains the min.
        flows = np.where(adv >= 0, ratio <= hi, ratio >= lo)
        coeff = np.where(flows, base * ratio, 0.0)
    else:
        coeff = base * ratio
        loss = -float(np.sum(coeff))
    row_coeff = coeff / temperature
    _accumulate(grad, ctx, tok, row_coeff, p, -row_coeff)
    if regularizer == "kl_cov" and kl_rows.size:
        sel_ctx = flat.ctx[kl_rows]
        p_sel, log_p_sel = _softmax_rows(table, sel_ctx, temperature)
        p_old = old_probs_rows
        log_old = np.log(np.maximum(p_old, _LOG_FLOOR))
        per_token = np.sum(
            np.where(p_old >= 1e-15, p_old * (log_old - log_p_sel), 0.0), axis=1
        )
        loss += reg.beta * float(np.sum(np.maximum(per_token, 0.0)))
        np.add.at(grad, sel_ctx, (reg.beta / temperature) * (p_sel - p_old))
    return loss, grad


def policy_gradient_step(
    policy: TabularPolicy,
    batch: list[tuple[Trajectory, float]],
    learning_rate: float,
    regularizer: str = "none",
    reg: RegularizerConfig | None = None,
    temperature: float = 1.0,
    micro_chunks: int = 1,
    mask_ref_kl: bool = False,
    step: int = 0,
) -> TabularPolicy:
    """One exact-gradient update from a batch of (trajectory, advantage).

    Trajectories must carry tokens, step_logprobs, and the context-id
    channel written by the rollout engine. The ratio-based regularizers
    (clip_higher, kl_cov) process the batch in ``micro_chunks`` sequential
    sub-updates so importance ratios move away from 1 within the step; all
    other objectives take a single exact step. Raises on non-finite loss
    or gradient.
    """
    if regularizer not in REGULARIZER_NAMES:
        raise ValidationError(f"unknown regularizer {regularizer!r}")
    if not (math.isfinite(learning_rate) and learning_rate > 0):
        raise ValidationError(f"learning_rate must be > 0, got {learning_rate}")
    reg = reg if reg is not None else RegularizerConfig()
    flat = _flatten_batch(batch)
    if np.any(flat.ctx < 0) or np.any(flat.ctx >= policy.table.shape[0]):
        raise ValidationError("context ids outside the policy table")
    table = policy.table.copy()

    if regularizer in ("clip_higher", "kl_cov"):
        selected = np.array([], dtype=np.int64)
        if regularizer == "kl_cov":
            selected = np.array(
                kl_cov_select(flat.old_logprob, flat.adv, reg.k_frac), dtype=np.int64
            )
        old_probs = None
        if selected.size:
            if any(t.step_probs is None for t, _ in batch):
                raise ValidationError("kl_cov needs stored step distributions")
            old_probs = np.concatenate([t.step_probs for t, _ in batch])
        traj_chunks = np.array_split(np.arange(flat.n_traj), min(micro_chunks, flat.n_traj))
        for chunk in traj_chunks:
            if chunk.size == 0:
                continue
            rows = np.concatenate([np.arange(s.start, s.stop) for s in
                                   (flat.traj_slices[i] for i in chunk)])
            in_chunk = np.isin(selected, rows) if selected.size else np.array([], dtype=bool)
            kl_rows = selected[in_chunk] if selected.size else selected
            old_rows = old_probs[kl_rows] if (old_probs is not None and kl_rows.size) else None
            loss, grad = _ratio_chunk_grad(
                table, flat, rows, temperature, regularizer, reg,
                flat.n_traj, kl_rows, old_rows,
            )
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(
                    f"non-finite loss or gradient at step {step} (regularizer {regularizer})"
                )
            table = table - learning_rate * grad
            if not np.all(np.isfinite(table)):
                raise DivergenceError(f"policy table became non-finite at step {step}")
    else:
        mask_flat = None
        n_masked = 0
        if regularizer == "mask_8020":
            masks = high_entropy_mask([t.step_entropies for t, _ in batch], reg.gamma)
            mask_flat = np.concatenate(masks)
            n_masked = int(mask_flat.sum())
        loss, grad = _plain_loss_and_grad(
            table, flat, temperature, regularizer, reg, mask_flat, n_masked, mask_ref_kl
        )
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise DivergenceError(
                f"non-finite loss or gradient at step {step} (regularizer {regularizer})"
            )
        table = table - learning_rate * grad
        if not np.all(np.isfinite(table)):
            raise DivergenceError(f"policy table became non-finite at step {step}")
    return TabularPolicy(policy.vocab_size, policy.context_window, table)


@dataclass
class RunRecord:
    """Everything a finished (or aborted) run leaves behind."""

    config: TrainConfig
    metrics: list[MetricsRow]
    policy: TabularPolicy
    status: str = "completed"
    steps_completed: int = 0
    selected_general_ids: list[str] = field(default_factory=list)
    final_target_dynamics: list[EntropyDynamics] = field(default_factory=list)

    def save(self, out_dir) -> None:
        """Write metrics.jsonl, config.echo, and policy.bin into out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        write_metrics(self.metrics, os.path.join(out_dir, "metrics.jsonl"))
        with open(os.path.join(out_dir, "config.echo"), "w", encoding="utf-8") as fh:
            fh.write(f"# status = {self.status}\n")
            fh.write(f"# steps_completed = {self.steps_completed}\n")
            fh.write(config_text(self.config))
        self.policy.save(os.path.join(out_dir, "policy.bin"))


def _curve_entropy(trajectories: list[Trajectory], weighting: str) -> float:
    if weighting == "token":
        return mean_vocab_entropy(trajectories)
    per_traj = [float(np.mean(t.step_entropies)) for t in trajectories]
    return float(np.mean(per_traj))


def _mean_offdiag_distance(trajectories: list[Trajectory]):
    """Mean pairwise dynamics distance over distinct ordered pairs."""
    if len(trajectories) < 2:
        return None
    dyns = [t.dynamics for t in trajectories]
    sims = kl_similarity_matrix(dyns, dyns)
    dist = -sims
    np.fill_diagonal(dist, 0.0)
    n = len(dyns)
    return float(dist.sum() / (n * (n - 1)) + 0.0)


class _Trainer:
    """Holds the pools and config; train() drives it."""

    def __init__(self, cfg: TrainConfig):
        cfg.validate()
        self.cfg = cfg
        self.reg = cfg.regularizer_config()
        self.selected_general_ids: list[str] = []
        self.policy = TabularPolicy(VOCAB_SIZE, cfg.context_window)
        self._build_pools()

    def _build_pools(self) -> None:
        cfg = self.cfg
        if cfg.mode == "heal":
            n_candidates = math.ceil(cfg.n_general * cfg.selection_pool_factor)
            suite = make_task_suite(cfg.seed, cfg.n_target, n_candidates)
            target = [t for t in suite if t.domain == "target"]
            candidates = [t for t in suite if t.domain == "general"]
            groups = rollout_tasks(
                self.policy, candidates, cfg.rollouts_per_prompt,
                cfg.temperature, cfg.max_len, cfg.seed, "select", 0,
            )
            scores = score_groups(groups)
            chosen = select_top_k(scores, cfg.n_general)
            by_id = {t.prompt_id: t for t in candidates}
            general = [by_id[pid] for pid in chosen]
            self.selected_general_ids = list(chosen)
        else:
            suite = make_task_suite(cfg.seed, cfg.n_target, cfg.n_general)
            target = [t for t in suite if t.domain == "target"]
            general = [t for t in suite if t.domain == "general"]
        self.target_pool = target
        self.general_pool = general
        if cfg.mode in ("fewshot", "fullshot"):
            self.train_target, self.train_general = target, []
        elif cfg.mode == "onlygeneral":
            self.train_target, self.train_general = [], general
        else:
            self.train_target, self.train_general = target, general
        self.eval_target = target[: cfg.eval_prompts]
        self.eval_general = general[: cfg.eval_prompts]

    def _batch_split(self) -> tuple[int, int]:
        cfg = self.cfg
        n_t, n_g = len(self.train_target), len(self.train_general)
        if n_g == 0:
            return cfg.batch_size, 0
        if n_t == 0:
            return 0, cfg.batch_size
        if cfg.general_fraction >= 0.0:
            n_gen = int(round(cfg.batch_size * cfg.general_fraction))
        else:
            n_gen = int(round(cfg.batch_size * n_g / (n_t + n_g)))
        n_gen = min(max(n_gen, 1), cfg.batch_size - 1)
        return cfg.batch_size - n_gen, n_gen

    def _sample_slots(self, step: int) -> list[SynthTask]:
        n_tgt, n_gen = self._batch_split()
        rng = rng_stream(self.cfg.seed, "batch", step)
        slots: list[SynthTask] = []
        if n_tgt:
            idx = rng.integers(0, len(self.train_target), size=n_tgt)
            slots.extend(self.train_target[i] for i in idx)
        if n_gen:
            idx = rng.integers(0, len(self.train_general), size=n_gen)
            slots.extend(self.train_general[i] for i in idx)
        return slots

    def _eval_row(self, step: int) -> tuple[MetricsRow, list[Trajectory]]:
        cfg = self.cfg
        tgt_trajs: list[Trajectory] = []
        gen_trajs: list[Trajectory] = []
        if self.eval_target:
            groups = rollout_tasks(
                self.policy, self.eval_target, cfg.rollouts_per_prompt,
                cfg.temperature, cfg.max_len, cfg.seed, "eval-target", step,
            )
            tgt_trajs = [t for g in groups for t in g.trajectories]
        if self.eval_general:
            groups = rollout_tasks(
                self.policy, self.eval_general, cfg.rollouts_per_prompt,
                cfg.temperature, cfg.max_len, cfg.seed, "eval-general", step,
            )
            gen_trajs = [t for g in groups for t in g.trajectories]
        all_trajs = tgt_trajs + gen_trajs
        eda_rate = 0.0
        if cfg.mode == "heal" and tgt_trajs and step >= cfg.eda_start_step:
            records = batch_rewards(all_trajs, cfg.sim_choice)
            reward_rate = float(np.mean([r.total for r in records]))
            target_records = [r for r in records if r.domain == "target"]
            eda_rate = float(np.mean([r.r_eda for r in target_records]))
        else:
            reward_rate = float(np.mean([t.correct for t in all_trajs]))
        row = MetricsRow(
            step=step,
            reward_rate=reward_rate,
            eda_rate=eda_rate,
            mean_entropy_target=(
                _curve_entropy(tgt_trajs, cfg.entropy_curve_weighting) if tgt_trajs else None
            ),
            mean_entropy_general=(
                _curve_entropy(gen_trajs, cfg.entropy_curve_weighting) if gen_trajs else None
            ),
            mean_ed_distance=_mean_offdiag_distance(tgt_trajs),
        )
        return row, tgt_trajs

    def _train_step(self, step: int) -> None:
        cfg = self.cfg
        slots = self._sample_slots(step)
        groups = rollout_tasks(
            self.policy, slots, cfg.rollouts_per_prompt,
            cfg.temperature, cfg.max_len, cfg.seed, "rollout", step,
        )
        flat = [t for g in groups for t in g.trajectories]
        use_eda = cfg.mode == "heal" and (step - 1) >= cfg.eda_start_step
        if use_eda:
            records = batch_rewards(flat, cfg.sim_choice)
            totals = [float(r.total) for r in records]
        else:
            totals = [float(t.correct) for t in flat]
        batch: list[tuple[Trajectory, float]] = []
        pos = 0
        for g in groups:
            n = len(g)
            adv = grpo_advantages(totals[pos : pos + n])
            batch.extend(zip(g.trajectories, adv.tolist()))
            pos += n
        self.policy = policy_gradient_step(
            self.policy, batch, cfg.learning_rate, cfg.regularizer, self.reg,
            cfg.temperature, cfg.micro_chunks, cfg.mask_ref_kl, step,
        )


def train(config: TrainConfig, out_dir=None) -> RunRecord:
    """Run the loop; persist a RunRecord into out_dir when given.

    On divergence the partial record (status "diverged") is persisted
    before the error propagates.
    """
    trainer = _Trainer(config)
    cfg = trainer.cfg
    metrics: list[MetricsRow] = []
    record = RunRecord(
        config=cfg,
        metrics=metrics,
        policy=trainer.policy,
        selected_general_ids=trainer.selected_general_ids,
    )
    row, tgt_trajs = trainer._eval_row(0)
    metrics.append(row)
    try:
        for step in range(1, cfg.steps + 1):
            trainer._train_step(step)
            record.steps_completed = step
            if step % cfg.log_every == 0 or step == cfg.steps:
                row, tgt_trajs = trainer._eval_row(step)
                metrics.append(row)
    except DivergenceError:
        record.status = "diverged"
        record.policy = trainer.policy
        record.final_target_dynamics = [t.dynamics for t in tgt_trajs]
        if out_dir is not None:
            record.save(out_dir)
        raise
    record.policy = trainer.policy
    record.final_target_dynamics = [t.dynamics for t in tgt_trajs]
    if out_dir is not None:
        record.save(out_dir)
    return record
