"""Language-model adapter layer and the deterministic tiny reference model.

An adapter exposes embedding-level access to a fixed autoregressive model:
its embedding table, a tokenizer for surface text, a forward pass taking a
matrix of input embeddings (so tunable prompt rows can bypass the embedding
layer), and a vector-Jacobian product back to those input embeddings.  Model
weights are never modified.

The built-in adapter is ``TinyCausalLM``, a two-layer pre-norm causal
transformer over a ~60-word vocabulary with weights drawn deterministically
from a seed.  It is small enough that every analytic gradient in this package
can be cross-checked against central finite differences in well under a
minute, and it is the model used by the test suite, the demos, and the
default CLI configuration (``--model reference:<seed>``).  Loading pretrained
models is out of scope here; third parties can plug one in through
:func:`register_adapter` as long as it implements the same surface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, ModelFault, UsageError

__all__ = [
    "EmbeddingTable",
    "SoftPrompt",
    "LabelDistribution",
    "ForwardPass",
    "TinyCausalLM",
    "REFERENCE_VOCAB",
    "make_reference_model",
    "register_adapter",
    "load_adapter",
    "forward_logits",
    "last_hidden_states",
    "label_word_distribution",
    "as_soft_prompt",
    "prompt_from_ids",
]


@dataclass(frozen=True)
class EmbeddingTable:
    """The model's token-embedding matrix plus per-row surface forms."""

    entries: np.ndarray  # (V, d) float64
    token_text: tuple[str, ...]

    def __post_init__(self):
        if self.entries.ndim != 2:
            raise ConfigurationError("embedding table must be a V x d matrix")
        v, d = self.entries.shape
        if v < 2 or d < 1:
            raise ConfigurationError(f"embedding table too small: V={v}, d={d}")
        if not np.all(np.isfinite(self.entries)):
            raise ConfigurationError("embedding table contains non-finite entries")
        if len(self.token_text) != v:
            raise ConfigurationError(
                f"token_text has {len(self.token_text)} entries, expected {v}"
            )

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SoftPrompt:
    """A sequence of tunable embedding rows prepended to every model input.

    ``token_ids`` is populated when the prompt is currently projected onto
    the embedding table, in which case row ``m`` equals table row
    ``token_ids[m]`` exactly.  An *absent* prompt (no prepended rows) is
    represented by ``None`` wherever a prompt argument is accepted, never by
    a zero-length SoftPrompt.
    """

    entries: np.ndarray  # (M, d) float64
    token_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.entries.ndim != 2 or self.entries.shape[0] < 1:
            raise ConfigurationError("soft prompt must be an M x d matrix with M >= 1")
        if not np.all(np.isfinite(self.entries)):
            raise ConfigurationError("soft prompt contains non-finite entries")
        if self.token_ids is not None and len(self.token_ids) != self.entries.shape[0]:
            raise ConfigurationError("token_ids length must equal prompt length")

    @property
    def length(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class LabelDistribution:
    """A probability distribution over an ordered label set."""

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        if len(self.labels) != len(self.probs):
            raise ValueError("labels and probs must have equal length")
        if np.any(self.probs < 0) or abs(float(np.sum(self.probs)) - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1 within 1e-9")

    def __getitem__(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])


@dataclass
class ForwardPass:
    """Result of one embedding-level forward pass.

    ``hidden`` holds the final-layer hidden state at each position; the row
    at position ``m - 1`` is the conditioning vector for predicting position
    ``m``.  ``logits`` are next-token scores over the full vocabulary at each
    position.  ``cache`` carries the intermediates needed by
    ``backward_input`` and is opaque to callers.
    """

    hidden: np.ndarray  # (L, d)
    logits: np.ndarray  # (L, V)
    cache: dict = field(repr=False)


# Word-level vocabulary for the reference model: two specials, common filler,
# every word used by the built-in task templates / verbalizers / domain word
# lists, and two disjoint ten-word pools that synthetic datasets draw from.
REFERENCE_VOCAB: tuple[str, ...] = (
    "<pad>", "<unk>",
    "the", ".", ",",
    # built-in task material
    "this", "is", "a", "an", "it", "was", "about",
    "movie", "review", "amazon", "product", "news",
    "positive", "negative", "politics", "sports", "business", "technology",
    "film", "cinima", "cinema", "director", "book", "furniture",
    "topic", "category",
    # synthetic pool A
    "great", "fun", "bright", "sharp", "crisp", "fresh", "warm", "rich",
    "clean", "new",
    # synthetic pool B
    "terrible", "boring", "dull", "slow", "dark", "cold", "stale", "messy",
    "poor", "old",
    # judgment words and filler
    "good", "bad",
    "and", "story", "plot", "actor", "scene", "music", "not",
)

_WORD_RE = re.compile(r"\w+|[^\w\s]")

_GELU_C = 1.0 / np.sqrt(2.0)
_PHI_C = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(z):
    return 0.5 * z * (1.0 + erf(z * _GELU_C))


def _gelu_prime(z):
    return 0.5 * (1.0 + erf(z * _GELU_C)) + z * _PHI_C * np.exp(-0.5 * z * z)


def _layernorm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv)


def _layernorm_backward(dy, cache, gamma):
    xhat, inv = cache
    dxhat = dy * gamma
    return inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )


def _softmax_rows(scores):
    # rows may contain -inf from the causal mask; every row keeps >= 1 finite entry
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class TinyCausalLM:
    """A fixed-weight causal transformer small enough for desk-scale oracles.

    Pre-norm blocks (attention then GELU MLP), learned positional embeddings,
    and an output layer tied to the embedding table: ``logits = hidden @ E.T``.
    All arithmetic is float64 and fully deterministic, so identical inputs
    give bitwise-identical outputs.  Instances are read-only after
    construction and safe to share across concurrent chains.
    """

    def __init__(self, seed: int, vocab: Sequence[str], dim: int, n_layers: int,
                 n_heads: int, max_len: int):
        if dim % n_heads != 0:
            raise ConfigurationError(f"dim {dim} not divisible by n_heads {n_heads}")
        vocab = tuple(vocab)
        if len(vocab) != len(set(vocab)):
            raise ConfigurationError("vocabulary contains duplicate tokens")
        self.seed = seed
        self.dim = dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.max_len = max_len
        self.token_text = vocab
        self.vocab_size = len(vocab)
        self._index = {t: i for i, t in enumerate(vocab)}
        self.pad_id = self._index["<pad>"]
        self.unk_id = self._index["<unk>"]
        self.special_token_ids = frozenset({self.pad_id, self.unk_id})
        # stand-in for "most frequent non-special token"; the toy vocabulary
        # has no corpus statistics, so the first non-special entry plays that role
        self.neutral_token_id = min(
            i for i in range(self.vocab_size) if i not in self.special_token_ids
        )

        rng = np.random.default_rng(seed)
        d, v = dim, self.vocab_size
        self._E = rng.normal(0.0, 1.0 / np.sqrt(d), (v, d))
        self._pos = rng.normal(0.0, 0.5 / np.sqrt(d), (max_len, d))
        self._layers = []
        for _ in range(n_layers):
            self._layers.append({
                "Wq": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "Wk": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "Wv": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "Wo": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "W1": rng.normal(0.0, 1.0 / np.sqrt(d), (d, 4 * d)),
                "W2": rng.normal(0.0, 1.0 / np.sqrt(4 * d), (4 * d, d)),
                "g1": np.ones(d), "b1": np.zeros(d),
                "g2": np.ones(d), "b2": np.zeros(d),
            })
        self._gf = np.ones(d)
        self._bf = np.zeros(d)
        self._table = EmbeddingTable(entries=self._E, token_text=vocab)

    # -- text interface -------------------------------------------------

    def tokenize(self, text: str) -> list[int]:
        """Lowercased word-level tokenization; out-of-vocabulary words map to <unk>."""
        return [self._index.get(w, self.unk_id) for w in _WORD_RE.findall(text.lower())]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.token_text[i] for i in ids)

    def embedding_table(self) -> EmbeddingTable:
        return self._table

    # -- numeric interface ------------------------------------------------

    def forward(self, X: np.ndarray) -> ForwardPass:
        """Run the model on a matrix of input embeddings.

        ``X`` has one row per position; prompt rows may be arbitrary soft
        vectors while body rows are usually copies of embedding-table rows.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ConfigurationError(
                f"input must be L x {self.dim}, got shape {X.shape}"
            )
        L = X.shape[0]
        if L < 1 or L > self.max_len:
            raise ConfigurationError(f"sequence length {L} outside [1, {self.max_len}]")

        H, dh = self.n_heads, self.dim // self.n_heads
        scale = 1.0 / np.sqrt(dh)
        mask = np.triu(np.full((L, L), -np.inf), k=1)

        x = X + self._pos[:L]
        layer_caches = []
        for lw in self._layers:
            a, ln1 = _layernorm_forward(x, lw["g1"], lw["b1"])
            q = (a @ lw["Wq"]).reshape(L, H, dh).transpose(1, 0, 2)
            k = (a @ lw["Wk"]).reshape(L, H, dh).transpose(1, 0, 2)
            v = (a @ lw["Wv"]).reshape(L, H, dh).transpose(1, 0, 2)
            scores = q @ k.transpose(0, 2, 1) * scale + mask
            A = _softmax_rows(scores)
            o = (A @ v).transpose(1, 0, 2).reshape(L, self.dim)
            x = x + o @ lw["Wo"]

            f, ln2 = _layernorm_forward(x, lw["g2"], lw["b2"])
            z1 = f @ lw["W1"]
            g1v = _gelu(z1)
            x = x + g1v @ lw["W2"]
            layer_caches.append({"ln1": ln1, "ln2": ln2, "q": q, "k": k, "v": v,
                                 "A": A, "z1": z1})

        hidden, lnf = _layernorm_forward(x, self._gf, self._bf)
        logits = hidden @ self._E.T
        if not np.all(np.isfinite(logits)):
            raise ModelFault("model produced non-finite logits")
        return ForwardPass(hidden=hidden, logits=logits,
                           cache={"layers": layer_caches, "lnf": lnf, "L": L})

    def backward_input(self, cache: dict, d_hidden: np.ndarray | None = None,
                       d_logits: np.ndarray | None = None) -> np.ndarray:
        """Vector-Jacobian product from output gradients back to the input rows.

        Accepts a gradient w.r.t. ``hidden``, w.r.t. ``logits`` (folded
        through the tied output layer), or both summed.
        """
        L = cache["L"]
        H, dh = self.n_heads, self.dim // self.n_heads
        scale = 1.0 / np.sqrt(dh)

        dh_total = np.zeros((L, self.dim))
        if d_hidden is not None:
            dh_total += d_hidden
        if d_logits is not None:
            dh_total += d_logits @ self._E
        dx = _layernorm_backward(dh_total, cache["lnf"], self._gf)

        for lw, lc in zip(reversed(self._layers), reversed(cache["layers"])):
            dg1v = dx @ lw["W2"].T
            dz1 = dg1v * _gelu_prime(lc["z1"])
            df = dz1 @ lw["W1"].T
            dx = dx + _layernorm_backward(df, lc["ln2"], lw["g2"])

            do = (dx @ lw["Wo"].T).reshape(L, H, dh).transpose(1, 0, 2)
            A, q, k, v = lc["A"], lc["q"], lc["k"], lc["v"]
            dA = do @ v.transpose(0, 2, 1)
            dv = A.transpose(0, 2, 1) @ do
            dscores = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
            dq = dscores @ k * scale
            dk = dscores.transpose(0, 2, 1) @ q * scale
            da = (
                dq.transpose(1, 0, 2).reshape(L, self.dim) @ lw["Wq"].T
                + dk.transpose(1, 0, 2).reshape(L, self.dim) @ lw["Wk"].T
                + dv.transpose(1, 0, 2).reshape(L, self.dim) @ lw["Wv"].T
            )
            dx = dx + _layernorm_backward(da, lc["ln1"], lw["g1"])
        return dx


def make_reference_model(seed: int, *, vocab: Sequence[str] | None = None,
                         extra_tokens: Sequence[str] = (), dim: int = 24,
                         n_layers: int = 2, n_heads: int = 4,
                         max_len: int = 160) -> TinyCausalLM:
    """Build the deterministic tiny reference model.

    The same seed (and vocabulary) always yields identical weights.  Extra
    tokens are appended to the vocabulary before weights are drawn, so adding
    tokens changes the draw; pass the full token set up front when
    reproducibility across runs matters.
    """
    base = tuple(vocab) if vocab is not None else REFERENCE_VOCAB
    extras = tuple(t.lower() for t in extra_tokens)
    for t in extras:
        if t in base:
            raise ConfigurationError(f"extra token {t!r} already in vocabulary")
    return TinyCausalLM(seed=seed, vocab=base + extras, dim=dim,
                        n_layers=n_layers, n_heads=n_heads, max_len=max_len)


_ADAPTER_SCHEMES: dict[str, Callable[[str], object]] = {
    "reference": lambda arg: make_reference_model(int(arg)),
}


def register_adapter(scheme: str, loader: Callable[[str], object]) -> None:
    """Register a loader for ``<scheme>:<arg>`` adapter specs."""
    _ADAPTER_SCHEMES[scheme] = loader


def load_adapter(spec: str):
    """Instantiate an adapter from a ``<scheme>:<arg>`` string, e.g. ``reference:0``."""
    scheme, sep, arg = spec.partition(":")
    if not sep or scheme not in _ADAPTER_SCHEMES:
        known = ", ".join(sorted(_ADAPTER_SCHEMES))
        raise ConfigurationError(f"unknown adapter spec {spec!r} (known schemes: {known})")
    return _ADAPTER_SCHEMES[scheme](arg)


# -- adapter-level operations --------------------------------------------


def _input_matrix(prefix: SoftPrompt | None, body_ids: Sequence[int], model) -> np.ndarray:
    table = model.embedding_table()
    if prefix is not None and prefix.dim != table.dim:
        raise ConfigurationError(
            f"prompt dim {prefix.dim} does not match model dim {table.dim}"
        )
    ids = list(body_ids)
    if any(i < 0 or i >= table.rows for i in ids):
        raise ConfigurationError("body token id outside vocabulary")
    parts = []
    if prefix is not None:
        parts.append(prefix.entries)
    if ids:
        parts.append(table.entries[ids])
    if not parts:
        raise ConfigurationError("nothing to run: empty prefix and empty body")
    return np.concatenate(parts, axis=0)


def forward_logits(prefix: SoftPrompt | None, body_ids: Sequence[int], model) -> np.ndarray:
    """Next-token logits at every position of prefix + body."""
    return model.forward(_input_matrix(prefix, body_ids, model)).logits


def last_hidden_states(embeddings: np.ndarray, model) -> np.ndarray:
    """Final hidden state at each position of an embedding-level input."""
    return model.forward(embeddings).hidden


def label_word_distribution(prompt: SoftPrompt | None, text: str, task, model) -> LabelDistribution:
    """Label probabilities read from the position after the rendered template.

    The softmax is restricted to the verbalizer-token logits: the
    normalization runs over the label set only, not the full vocabulary.
    """
    from .tasks import render, verbalizer_token_ids

    body = render(task, text, model)
    vids = verbalizer_token_ids(task, model)
    logits = forward_logits(prompt, body, model)[-1, vids]
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return LabelDistribution(labels=task.labels, probs=e / e.sum())


def as_soft_prompt(prompt: SoftPrompt | str | None, model) -> SoftPrompt | None:
    """Coerce a prompt given as surface text into a projected SoftPrompt."""
    if prompt is None or isinstance(prompt, SoftPrompt):
        return prompt
    ids = model.tokenize(prompt)
    if not ids:
        raise UsageError(f"prompt text {prompt!r} produced no tokens")
    return prompt_from_ids(ids, model)


def prompt_from_ids(ids: Sequence[int], model) -> SoftPrompt:
    table = model.embedding_table()
    return SoftPrompt(entries=table.entries[list(ids)].copy(), token_ids=tuple(ids))
