"""Trajectory sampling from the tabular policy.

All sequences of a batch advance in lockstep: one softmax and one sampling
draw per active sequence per step, vectorized across the batch. Every
prompt slot consumes only its own pre-drawn uniforms, so sampling order
across slots cannot change any trajectory and parallel or sequential
execution produce identical results.
"""

from __future__ import annotations

import zlib

import numpy as np

from ..entropy import entropy_from_logits
from ..errors import ValidationError
from ..rollouts import RolloutGroup, Trajectory
from .policy import TabularPolicy
from .tasks import END_TOKEN, SynthTask, check_answer, extract_answer


def prompt_uid(prompt_id: str) -> int:
    """Stable 32-bit id used to key per-prompt RNG streams."""
    return zlib.crc32(prompt_id.encode("utf-8"))


def rng_stream(seed: int, tag: str, *parts: int) -> np.random.Generator:
    """Independent deterministic generator keyed by (seed, tag, parts)."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(tag.encode("utf-8")), *parts])
    )


def _answer_text(tokens: tuple[int, ...]) -> str:
    return " ".join(str(t) for t in tokens)


def rollout_slots(
    policy: TabularPolicy,
    tasks: list[SynthTask],
    uniforms: np.ndarray,
    n: int,
    temperature: float,
    max_len: int,
    greedy: bool = False,
) -> list[RolloutGroup]:
    """Sample n trajectories per task slot, lockstep across all sequences.

    ``uniforms`` has shape (len(tasks) * n, max_len), rows grouped by slot;
    with ``greedy`` the uniforms are ignored and every step takes the argmax
    (deterministic decoding, entropies still from the temperature-scaled
    distribution).
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if max_len < 1:
        raise ValidationError(f"max_len must be >= 1, got {max_len}")
    n_seq = len(tasks) * n
    if not greedy and uniforms.shape != (n_seq, max_len):
        raise ValidationError(
            f"uniforms shape {uniforms.shape} != {(n_seq, max_len)}"
        )
    V = policy.vocab_size
    ctx = np.repeat(
        np.array([policy.context_id(t.prompt_tokens) for t in tasks], dtype=np.int64), n
    )
    tokens = np.zeros((n_seq, max_len), dtype=np.int64)
    entropies = np.zeros((n_seq, max_len))
    logprobs = np.zeros((n_seq, max_len))
    probs_store = np.zeros((n_seq, max_len, V))
    ctx_store = np.zeros((n_seq, max_len), dtype=np.int64)
    lengths = np.zeros(n_seq, dtype=np.int64)
    active = np.ones(n_seq, dtype=bool)

    for step_i in range(max_len):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        p = policy.probs_for(ctx[idx], temperature)
        h = entropy_from_logits(policy.table[ctx[idx]], temperature)
        if greedy:
            choice = np.argmax(p, axis=1)
        else:
            cdf = np.cumsum(p, axis=1)
            above = cdf > uniforms[idx, step_i][:, None]
            choice = np.where(above.any(axis=1), above.argmax(axis=1), V - 1)
        lp = np.log(p[np.arange(idx.size), choice])
        tokens[idx, step_i] = choice
        entropies[idx, step_i] = h
        logprobs[idx, step_i] = lp
        probs_store[idx, step_i] = p
        ctx_store[idx, step_i] = ctx[idx]
        lengths[idx] += 1
        ctx[idx] = policy.advance_context(ctx[idx], choice)
        active[idx[choice == END_TOKEN]] = False

    groups = []
    for s, task in enumerate(tasks):
        trajectories = []
        for j in range(n):
            r = s * n + j
            L = int(lengths[r])
            seq = [int(t) for t in tokens[r, :L]]
            answer = extract_answer(seq)
            trajectories.append(
                Trajectory(
                    prompt_id=task.prompt_id,
                    domain=task.domain,
                    step_entropies=entropies[r, :L].copy(),
                    trajectory_index=j,
                    tokens=seq,
                    step_logprobs=logprobs[r, :L].copy(),
                    step_probs=probs_store[r, :L].copy(),
                    correct=check_answer(task, answer),
                    answer=_answer_text(answer),
                    extras={"ctx_ids": ctx_store[r, :L].copy()},
                )
            )
        groups.append(
            RolloutGroup(
                prompt_id=task.prompt_id,
                domain=task.domain,
                trajectories=trajectories,
                ground_truth=_answer_text(task.ground_truth),
            )
        )
    return groups


def rollout(
    policy: TabularPolicy,
    task: SynthTask,
    n: int,
    temperature: float,
    max_len: int,
    rng: np.random.Generator,
    greedy: bool = False,
) -> RolloutGroup:
    """Sample one rollout group for a single task from its own RNG stream."""
    uniforms = rng.random((n, max_len))
    return rollout_slots(policy, [task], uniforms, n, temperature, max_len, greedy)[0]


def rollout_tasks(
    policy: TabularPolicy,
    tasks: list[SynthTask],
    n: int,
    temperature: float,
    max_len: int,
    seed: int,
    tag: str,
    step: int,
    greedy: bool = False,
) -> list[RolloutGroup]:
    """Batch rollout with one RNG stream per (prompt, occurrence) slot.

    Repeated prompts within a batch get decorrelated streams through the
    occurrence counter while staying deterministic for a fixed slot list.
    """
    seen: dict[str, int] = {}
    blocks = []
    for task in tasks:
        occurrence = seen.get(task.prompt_id, 0)
        seen[task.prompt_id] = occurrence + 1
        g = rng_stream(seed, tag, step, prompt_uid(task.prompt_id), occurrence)
        blocks.append(g.random((n, max_len)))
    uniforms = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, max_len))
    return rollout_slots(policy, tasks, uniforms, n, temperature, max_len, greedy)
