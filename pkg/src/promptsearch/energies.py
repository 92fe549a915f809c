"""Scalar energy functions driving the prompt sampler (lower is better).

Supervised search minimizes a weighted sum of the task negative log-likelihood
and an embedding-based prompt fluency NLL.  Unsupervised search minimizes a
weighted sum of a group-calibration term (the negative entropy of the
batch-mean label distribution) and a domain-relevance NLL (prompt fluency
plus the prompt-conditioned NLL of the task inputs and template).

Every energy is differentiable w.r.t. the prompt rows; pass ``grad=True`` to
also get the ``(M, d)`` gradient.  Batch reduction is the arithmetic mean,
accumulated with compensated summation so values are invariant under batch
permutation.

Sign convention for the unsupervised combination: the ``intent`` mode (the
default) minimizes ``lambda_calibration * (-H(p_mean)) + lambda_domain *
domain_nll``, i.e. it pushes the group-level label distribution toward
uniform while keeping the prompt domain-related.  The ``literal`` mode negates
both weights; it is exposed for analysis because it drives the search to the
opposite, degenerate extreme (a peaked group distribution and an unrelated
prompt).  Records and reports carry the sign used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DataError, UsageError
from .model import SoftPrompt
from .tasks import Example, TaskSpec, render, render_parts, verbalizer_token_ids

__all__ = [
    "EnergyConfig",
    "EnergyBreakdown",
    "term_weights",
    "task_nll",
    "fluency_nll",
    "supervised_energy",
    "entropy_loss",
    "domain_nll",
    "unsupervised_energy",
    "energy_and_grad",
]

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class EnergyConfig:
    """Which energy is minimized, and with what weights.

    In supervised mode ``lambda_task + lambda_fluency`` must equal 1; in
    unsupervised mode ``lambda_calibration + lambda_domain`` must equal 1.
    """

    mode: str  # "supervised" | "unsupervised"
    lambda_task: float = 0.0
    lambda_fluency: float = 0.0
    lambda_calibration: float = 0.0
    lambda_domain: float = 0.0
    sign: str = "intent"  # unsupervised only: "intent" | "literal"

    def __post_init__(self):
        if self.mode not in ("supervised", "unsupervised"):
            raise ConfigurationError(f"unknown energy mode {self.mode!r}")
        if self.sign not in ("intent", "literal"):
            raise ConfigurationError(f"unknown energy sign {self.sign!r}")
        for name in ("lambda_task", "lambda_fluency", "lambda_calibration",
                     "lambda_domain"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {w}")
        if self.mode == "supervised":
            if abs(self.lambda_task + self.lambda_fluency - 1.0) > _WEIGHT_TOL:
                raise ConfigurationError("lambda_task + lambda_fluency must equal 1")
        else:
            if abs(self.lambda_calibration + self.lambda_domain - 1.0) > _WEIGHT_TOL:
                raise ConfigurationError(
                    "lambda_calibration + lambda_domain must equal 1"
                )

    @classmethod
    def supervised(cls, lambda_fluency: float = 0.003) -> "EnergyConfig":
        return cls(mode="supervised", lambda_task=1.0 - lambda_fluency,
                   lambda_fluency=lambda_fluency)

    @classmethod
    def unsupervised(cls, lambda_domain: float = 0.003,
                     sign: str = "intent") -> "EnergyConfig":
        return cls(mode="unsupervised", lambda_calibration=1.0 - lambda_domain,
                   lambda_domain=lambda_domain, sign=sign)


@dataclass(frozen=True)
class EnergyBreakdown:
    """One energy evaluation: the minimized total plus its raw terms."""

    total: float
    per_term: dict[str, float] = field(default_factory=dict)


def term_weights(cfg: EnergyConfig) -> dict[str, float]:
    """Signed weight applied to each raw term when forming the total."""
    if cfg.mode == "supervised":
        return {"task": cfg.lambda_task, "fluency": cfg.lambda_fluency}
    s = 1.0 if cfg.sign == "intent" else -1.0
    return {"entropy": s * cfg.lambda_calibration, "domain": s * cfg.lambda_domain}


def _check_batch(batch, task: TaskSpec, need_labels: bool):
    if not batch:
        raise UsageError("batch must be nonempty")
    if need_labels:
        for ex in batch:
            if ex.label is None:
                raise DataError(f"unlabeled example in labeled batch: {ex.text!r}")
            if ex.label not in task.labels:
                raise DataError(
                    f"label {ex.label!r} outside task labels {list(task.labels)}"
                )


def _restricted_forward(prompt: SoftPrompt, text: str, task: TaskSpec, model,
                        vids: list[int]):
    """Forward pass on prompt + rendered input; returns label probs and cache."""
    table = model.embedding_table()
    body = render(task, text, model)
    X = np.concatenate([prompt.entries, table.entries[body]], axis=0)
    fw = model.forward(X)
    logits_y = fw.logits[-1, vids]
    shifted = logits_y - logits_y.max()
    e = np.exp(shifted)
    return e / e.sum(), fw


def task_nll(prompt: SoftPrompt, batch: list[Example], task: TaskSpec, model,
             *, grad: bool = False):
    """Mean NLL of the gold label word under the restricted label softmax."""
    _check_batch(batch, task, need_labels=True)
    vids = verbalizer_token_ids(task, model)
    label_index = {lab: i for i, lab in enumerate(task.labels)}
    table = model.embedding_table()
    m = prompt.length

    values = []
    total_grad = np.zeros_like(prompt.entries) if grad else None
    for ex in batch:
        p, fw = _restricted_forward(prompt, ex.text, task, model, vids)
        yi = label_index[ex.label]
        values.append(-math.log(p[yi]))
        if grad:
            dlab = p.copy()
            dlab[yi] -= 1.0
            d_hidden = np.zeros_like(fw.hidden)
            d_hidden[-1] = dlab @ table.entries[vids]
            total_grad += model.backward_input(fw.cache, d_hidden=d_hidden)[:m]
    value = math.fsum(values) / len(batch)
    if not grad:
        return value
    return value, total_grad / len(batch)


def fluency_nll(prompt: SoftPrompt, model, *, grad: bool = False):
    """Embedding-based sequence NLL of the prompt itself.

    Position ``m`` (for ``m >= 1``) contributes
    ``-log softmax_over_table(h[m-1] . prompt[m])`` where the softmax
    normalizer runs over the full embedding table; the first position
    contributes nothing, so a length-1 prompt scores exactly 0.  Nonnegative
    whenever every prompt row is a table row (the numerator is then one of
    the normalizer's terms); unprojected rows can score below zero.
    """
    m = prompt.length
    if m == 1:
        return (0.0, np.zeros_like(prompt.entries)) if grad else 0.0
    table = model.embedding_table()
    fw = model.forward(prompt.entries)
    hidden = fw.hidden

    terms = []
    for i in range(1, m):
        num = float(hidden[i - 1] @ prompt.entries[i])
        terms.append(float(logsumexp(fw.logits[i - 1])) - num)
    value = math.fsum(terms)
    if not grad:
        return value

    d_hidden = np.zeros_like(hidden)
    direct = np.zeros_like(prompt.entries)
    for i in range(1, m):
        row = fw.logits[i - 1]
        p = np.exp(row - logsumexp(row))
        d_hidden[i - 1] += p @ table.entries - prompt.entries[i]
        direct[i] -= hidden[i - 1]
    return value, model.backward_input(fw.cache, d_hidden=d_hidden) + direct


def supervised_energy(prompt: SoftPrompt, batch: list[Example], task: TaskSpec,
                      model, cfg: EnergyConfig, *, grad: bool = False):
    """Weighted combination ``lambda_task * task_nll + lambda_fluency * fluency_nll``."""
    if cfg.mode != "supervised":
        raise ConfigurationError(f"supervised_energy called with mode {cfg.mode!r}")
    if grad:
        t, gt = task_nll(prompt, batch, task, model, grad=True)
        f, gf = fluency_nll(prompt, model, grad=True)
    else:
        t = task_nll(prompt, batch, task, model)
        f = fluency_nll(prompt, model)
    breakdown = EnergyBreakdown(
        total=cfg.lambda_task * t + cfg.lambda_fluency * f,
        per_term={"task": t, "fluency": f},
    )
    if not grad:
        return breakdown
    return breakdown, cfg.lambda_task * gt + cfg.lambda_fluency * gf


def entropy_loss(prompt: SoftPrompt, batch: list[Example], task: TaskSpec, model,
                 *, grad: bool = False):
    """Negative entropy of the batch-mean label distribution.

    The mean is taken first (one distribution for the whole batch), then the
    negative entropy ``sum_y p_mean(y) log p_mean(y)``; the value lies in
    ``[-ln |Y|, 0]``, hitting the lower end iff the mean is uniform and 0 iff
    it is one-hot.  Labels on the examples, if any, are ignored.
    """
    _check_batch(batch, task, need_labels=False)
    vids = verbalizer_token_ids(task, model)
    table = model.embedding_table()
    b = len(batch)
    m = prompt.length

    per_example = []
    for ex in batch:
        p, fw = _restricted_forward(prompt, ex.text, task, model, vids)
        per_example.append((p, fw))
    pbar = np.array([
        math.fsum(p[y] for p, _ in per_example) / b
        for y in range(len(vids))
    ])
    value = math.fsum(float(py * math.log(py)) for py in pbar if py > 0.0)
    if not grad:
        return value

    log_pbar = np.log(pbar)
    total_grad = np.zeros_like(prompt.entries)
    for p, fw in per_example:
        # d value / d logit_y' through the restricted softmax of this example
        coeff = p * (log_pbar - float(p @ log_pbar)) / b
        d_hidden = np.zeros_like(fw.hidden)
        d_hidden[-1] = coeff @ table.entries[vids]
        total_grad += model.backward_input(fw.cache, d_hidden=d_hidden)[:m]
    return value, total_grad


def domain_nll(prompt: SoftPrompt, batch: list[Example], task: TaskSpec, model,
               *, grad: bool = False):
    """Prompt fluency plus prompt-conditioned NLL of input and template tokens.

    Per example this sums three causal segments over one forward pass:
    the embedding-based prompt NLL, ``-sum_i log p(x_i | prompt, x_<i)``, and
    ``-sum_j log p(t_j | prompt, x, t_<j)`` (full-vocabulary softmaxes for the
    token segments).  The batch value is the mean.  With an empty input and
    an empty cue it degenerates to exactly ``fluency_nll``.
    """
    _check_batch(batch, task, need_labels=False)
    table = model.embedding_table()
    m = prompt.length

    values = []
    total_grad = np.zeros_like(prompt.entries) if grad else None
    for ex in batch:
        input_ids, cue_ids = render_parts(task, ex.text, model)
        seq = input_ids + cue_ids
        X = np.concatenate([prompt.entries, table.entries[seq]], axis=0) \
            if seq else prompt.entries
        fw = model.forward(X)
        hidden, logits = fw.hidden, fw.logits

        terms = []
        for i in range(1, m):  # causality: positions < m ignore the body
            num = float(hidden[i - 1] @ prompt.entries[i])
            terms.append(float(logsumexp(logits[i - 1])) - num)
        for j, tok in enumerate(seq):
            pos = m + j
            terms.append(float(logsumexp(logits[pos - 1])) - float(logits[pos - 1, tok]))
        values.append(math.fsum(terms))

        if grad:
            d_hidden = np.zeros_like(hidden)
            direct = np.zeros_like(prompt.entries)
            for i in range(1, m):
                row = logits[i - 1]
                p = np.exp(row - logsumexp(row))
                d_hidden[i - 1] += p @ table.entries - prompt.entries[i]
                direct[i] -= hidden[i - 1]
            for j, tok in enumerate(seq):
                pos = m + j
                row = logits[pos - 1]
                p = np.exp(row - logsumexp(row))
                p[tok] -= 1.0
                d_hidden[pos - 1] += p @ table.entries
            total_grad += model.backward_input(fw.cache, d_hidden=d_hidden)[:m] + direct

    value = math.fsum(values) / len(batch)
    if not grad:
        return value
    return value, total_grad / len(batch)


def unsupervised_energy(prompt: SoftPrompt, batch: list[Example], task: TaskSpec,
                        model, cfg: EnergyConfig, *, grad: bool = False):
    """Weighted combination of the calibration and domain-relevance terms.

    See the module docstring for the ``intent`` / ``literal`` sign modes; the
    raw term values in the breakdown are unsigned either way.
    """
    if cfg.mode != "unsupervised":
        raise ConfigurationError(f"unsupervised_energy called with mode {cfg.mode!r}")
    if grad:
        e, ge = entropy_loss(prompt, batch, task, model, grad=True)
        d, gd = domain_nll(prompt, batch, task, model, grad=True)
    else:
        e = entropy_loss(prompt, batch, task, model)
        d = domain_nll(prompt, batch, task, model)
    s = 1.0 if cfg.sign == "intent" else -1.0
    breakdown = EnergyBreakdown(
        total=s * (cfg.lambda_calibration * e + cfg.lambda_domain * d),
        per_term={"entropy": e, "domain": d},
    )
    if not grad:
        return breakdown
    return breakdown, s * (cfg.lambda_calibration * ge + cfg.lambda_domain * gd)


def energy_and_grad(prompt: SoftPrompt, batch: list[Example], task: TaskSpec,
                    model, cfg: EnergyConfig):
    """Dispatch on ``cfg.mode``; returns ``(EnergyBreakdown, gradient)``."""
    if cfg.mode == "supervised":
        return supervised_energy(prompt, batch, task, model, cfg, grad=True)
    return unsupervised_energy(prompt, batch, task, model, cfg, grad=True)
