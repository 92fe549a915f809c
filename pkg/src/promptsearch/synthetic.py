"""A separable two-label task over the built-in reference vocabulary.

Texts are drawn from two disjoint word pools, one per label, so the task is
linearly separable in token space; it exists to exercise the full search
pipeline (supervised and unsupervised) quickly and deterministically.
"""

from __future__ import annotations

import numpy as np

from .tasks import Example, TaskSpec

__all__ = ["POOL_A", "POOL_B", "synthetic_task", "synthetic_dataset"]

POOL_A = ("great", "fun", "bright", "sharp", "crisp",
          "fresh", "warm", "rich", "clean", "new")
POOL_B = ("terrible", "boring", "dull", "slow", "dark",
          "cold", "stale", "messy", "poor", "old")


def synthetic_task() -> TaskSpec:
    """Two labels ("good"/"bad"), single-token verbalizer words, short cue."""
    return TaskSpec(
        id="synthetic-2label",
        template="{x} it was",
        verbalizer={"good": "good", "bad": "bad"},
        domain_string="this is a review",
        domain_words=("review", "movie", "product"),
    )


def synthetic_dataset(n: int, seed: int, length: int = 6) -> list[Example]:
    """``n`` label-balanced examples (alternating), ``length`` words each.

    Even positions draw from POOL_A with label "good", odd positions from
    POOL_B with label "bad"; words are drawn i.i.d. with replacement from the
    example's pool.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        pool, label = (POOL_A, "good") if i % 2 == 0 else (POOL_B, "bad")
        words = rng.choice(pool, size=length, replace=True)
        out.append(Example(" ".join(words), label))
    return out
