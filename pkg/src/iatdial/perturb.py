"""History corruption operators.

Five utterance-level operators (shuffle, reverse, drop, truncate, replace),
six word-level operators applied within every utterance (shuffle, reverse,
drop, noun-drop, verb-drop, replace), plus an identity control.  All
operators are pure functions of (history, rng state, context): the input is
never mutated and the output is always a non-empty history of non-empty
utterances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .corpus import NUM_RESERVED, PosLexicon

DROP_PROB = 0.3
REPLACE_PROB = 0.3


class PerturbationKind(Enum):
    SHUF = "shuf"
    REV = "rev"
    DROP = "drop"
    TRUNCATE = "truncate"
    REPL = "repl"
    WORD_SHUFFLE = "word-shuffle"
    WORD_REVERSE = "word-reverse"
    WORD_DROP = "word-drop"
    NOUN_DROP = "noun-drop"
    VERB_DROP = "verb-drop"
    WORD_REPL = "word-repl"
    IDENTITY = "identity"

    @classmethod
    def from_name(cls, name: str) -> "PerturbationKind":
        for kind in cls:
            if kind.value == name:
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown perturbation {name!r}; valid names: {valid}")


ALL_KINDS = tuple(PerturbationKind)
NON_IDENTITY_KINDS = tuple(k for k in PerturbationKind if k is not PerturbationKind.IDENTITY)


@dataclass
class PerturbContext:
    """Everything the operators need besides the history itself."""

    rng: np.random.Generator
    utterance_pool: list = field(default_factory=list)  # encoded utterances, for repl
    pos_lexicon: PosLexicon = field(default_factory=lambda: PosLexicon({}))
    vocab_size: int = NUM_RESERVED + 1

    def __post_init__(self):
        if self.vocab_size < NUM_RESERVED + 1:
            raise ValueError(f"vocab_size must be >= {NUM_RESERVED + 1}")


def _shuffle_indices(n: int, rng) -> np.ndarray:
    """Uniform permutation, resampled once if it comes out as the identity."""
    perm = rng.permutation(n)
    if n >= 2 and np.array_equal(perm, np.arange(n)):
        perm = rng.permutation(n)
    return perm


def truncate_to_recent(history, k: int):
    """Keep only the k most recent utterances."""
    if not 1 <= k <= len(history):
        raise ValueError(f"k must be in [1, {len(history)}], got {k}")
    return [list(u) for u in history[len(history) - k:]]


def drop_tokens_by_tag(utterance, lexicon: PosLexicon, tag: str, rng):
    """Drop every token with the given tag; keep one original token if all would go."""
    kept = [tok for tok in utterance if lexicon.tag(tok) != tag]
    if not kept:
        kept = [utterance[rng.integers(len(utterance))]]
    return kept


def _bernoulli_keep(items, drop_prob: float, rng):
    kept = [item for item in items if rng.random() >= drop_prob]
    if not kept:
        kept = [items[rng.integers(len(items))]]
    return kept


def _word_shuffle(utterance, rng):
    perm = _shuffle_indices(len(utterance), rng)
    return [utterance[i] for i in perm]


def _word_repl(utterance, rng, vocab_size: int):
    out = []
    for tok in utterance:
        if rng.random() < REPLACE_PROB:
            out.append(int(rng.integers(NUM_RESERVED, vocab_size)))
        else:
            out.append(tok)
    return out


def perturb_history(history, kind: PerturbationKind, ctx: PerturbContext):
    """Apply one operator to a dialogue history, returning a new history."""
    if not history:
        raise ValueError("history must be non-empty")
    if any(len(u) == 0 for u in history):
        raise ValueError("history utterances must be non-empty")
    rng = ctx.rng
    n = len(history)

    if kind is PerturbationKind.IDENTITY:
        return [list(u) for u in history]
    if kind is PerturbationKind.SHUF:
        perm = _shuffle_indices(n, rng)
        return [list(history[i]) for i in perm]
    if kind is PerturbationKind.REV:
        return [list(u) for u in reversed(history)]
    if kind is PerturbationKind.DROP:
        return [list(u) for u in _bernoulli_keep(history, DROP_PROB, rng)]
    if kind is PerturbationKind.TRUNCATE:
        if n == 1:
            return [list(history[0])]
        k = int(rng.integers(1, n))  # uniform over [1, n-1]
        return truncate_to_recent(history, k)
    if kind is PerturbationKind.REPL:
        if not ctx.utterance_pool:
            raise ValueError("repl requires a non-empty utterance pool")
        out = []
        for u in history:
            if rng.random() < REPLACE_PROB:
                out.append(list(ctx.utterance_pool[rng.integers(len(ctx.utterance_pool))]))
            else:
                out.append(list(u))
        return out
    if kind is PerturbationKind.WORD_SHUFFLE:
        return [_word_shuffle(u, rng) for u in history]
    if kind is PerturbationKind.WORD_REVERSE:
        return [list(reversed(u)) for u in history]
    if kind is PerturbationKind.WORD_DROP:
        return [_bernoulli_keep(u, DROP_PROB, rng) for u in history]
    if kind is PerturbationKind.NOUN_DROP:
        return [drop_tokens_by_tag(u, ctx.pos_lexicon, "noun", rng) for u in history]
    if kind is PerturbationKind.VERB_DROP:
        return [drop_tokens_by_tag(u, ctx.pos_lexicon, "verb", rng) for u in history]
    if kind is PerturbationKind.WORD_REPL:
        return [_word_repl(u, rng, ctx.vocab_size) for u in history]
    raise ValueError(f"unhandled perturbation kind {kind!r}")


def sample_kind(enabled, rng) -> PerturbationKind:
    """Uniform draw over the enabled kinds (canonical enum order)."""
    kinds = sorted(enabled, key=lambda k: list(PerturbationKind).index(k))
    if not kinds:
        raise ValueError("enabled perturbation set must be non-empty")
    return kinds[int(rng.integers(len(kinds)))]
