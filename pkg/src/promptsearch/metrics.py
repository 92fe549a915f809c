"""Prompt evaluation metrics: accuracy, perplexity, unigram diversity."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import UsageError
from .model import SoftPrompt, as_soft_prompt, label_word_distribution
from .tasks import Example, TaskSpec

__all__ = ["accuracy", "log_perplexity", "prompt_perplexity", "dist1"]


def accuracy(prompt: SoftPrompt | str | None, dataset: Sequence[Example],
             task: TaskSpec, model) -> float:
    """Fraction of examples whose restricted-softmax argmax hits the gold label.

    Argmax ties break toward the earliest label in the verbalizer order.
    ``prompt`` may be a soft prompt, a string (tokenized), or None (no
    prepended tokens).
    """
    if not dataset:
        raise UsageError("accuracy needs a nonempty dataset")
    soft = as_soft_prompt(prompt, model)
    labels = task.labels
    hits = 0
    for ex in dataset:
        if ex.label is None:
            raise UsageError(f"unlabeled example in accuracy dataset: {ex.text!r}")
        dist = label_word_distribution(soft, ex.text, task, model)
        predicted = labels[int(np.argmax(dist.probs))]
        hits += predicted == ex.label
    return hits / len(dataset)


def log_perplexity(prompt_text: str, model) -> float:
    """Mean causal NLL (natural log) of tokens 2..L of the surface text.

    This scores the *token ids* of the text under the adapter's own
    next-token distribution; it is not the embedding-dot-product fluency
    energy, though the two coincide per token on adapters whose output layer
    ties to the embedding table.
    """
    ids = model.tokenize(prompt_text)
    if len(ids) < 2:
        raise UsageError(
            f"perplexity needs >= 2 tokens, got {len(ids)} from {prompt_text!r}"
        )
    table = model.embedding_table()
    fw = model.forward(table.entries[ids])
    nlls = [
        float(logsumexp(fw.logits[j - 1])) - float(fw.logits[j - 1, ids[j]])
        for j in range(1, len(ids))
    ]
    return math.fsum(nlls) / len(nlls)


def prompt_perplexity(prompt_text: str, model) -> float:
    """``exp`` of :func:`log_perplexity`; base e throughout."""
    return math.exp(log_perplexity(prompt_text, model))


def dist1(prompts: Sequence[str]) -> float:
    """Distinct whitespace unigrams across all prompts, over total unigrams."""
    if not prompts:
        raise UsageError("dist1 needs at least one prompt")
    tokens: list[str] = []
    for p in prompts:
        parts = p.split()
        if not parts:
            raise UsageError(f"prompt with no unigrams: {p!r}")
        tokens.extend(parts)
    return len(set(tokens)) / len(tokens)
