"""Evaluation: perplexity, perturbation sensitivity, diversity, report IO.

Perplexity is corpus-level: exp(total NLL / total scored tokens), with the
terminal EOS counted.  Perturbation sensitivity re-scores the same gold
responses under corrupted histories and reports the perplexity increase per
operator; a per-example generator seeded from (seed, example index) keeps
the corruption deterministic and order-independent.  The remaining metrics
(distinct-n, last-utterance overlap, stop-word rate) describe generated
responses and feed the full report alongside the sensitivity numbers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objectives import mmi_anti_score, mmi_bidi_rerank
from .perturb import (NON_IDENTITY_KINDS, PerturbContext, PerturbationKind,
                      perturb_history)

DECODE_MODES = ("greedy", "beam", "mmi_anti", "mmi_bidi")

_DEFAULT_STOPWORDS = Path(__file__).parent / "data" / "stopwords.txt"


@dataclass(frozen=True)
class StopwordList:
    """Lowercase surfaces counted as stop words (punctuation included)."""

    words: frozenset

    def __post_init__(self):
        if not self.words:
            raise ValueError("stopword list must be non-empty")
        for word in self.words:
            if word != word.lower() or not word:
                raise ValueError(f"stopwords must be lowercase, got {word!r}")

    def __contains__(self, surface):
        return surface in self.words

    @classmethod
    def load(cls, path):
        """Read one surface per line; blank lines ignored."""
        words = set()
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                word = line.strip()
                if word:
                    words.add(word)
        return cls(words=frozenset(words))


def default_stopwords():
    """The bundled English stop-word plus punctuation list."""
    return StopwordList.load(_DEFAULT_STOPWORDS)


@dataclass(frozen=True)
class EvalConfig:
    """Knobs for report generation (decode width, MMI weight, seed list)."""

    mmi_lambda: float = 0.5
    n_best: int = 10
    beam_width: int = 10
    seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        if self.mmi_lambda < 0:
            raise ValueError("mmi_lambda must be non-negative")
        if not 1 <= self.n_best <= self.beam_width:
            raise ValueError("need 1 <= n_best <= beam_width")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")


@dataclass(frozen=True)
class MetricsReport:
    """Everything one evaluation run measures, serializable to JSON/CSV."""

    perplexity_orig: float
    ppl_delta_by_kind: dict
    ppl_delta_macro: float
    distinct_1: float
    distinct_2: float
    distinct_3: float
    overlap_pct: float
    stopword_pct: float
    num_examples: int
    seeds_used: tuple

    SCALAR_FIELDS = ("perplexity_orig", "ppl_delta_macro", "distinct_1",
                     "distinct_2", "distinct_3", "overlap_pct",
                     "stopword_pct", "num_examples")

    def to_dict(self):
        return {
            "perplexity_orig": self.perplexity_orig,
            "ppl_delta_by_kind": dict(self.ppl_delta_by_kind),
            "ppl_delta_macro": self.ppl_delta_macro,
            "distinct_1": self.distinct_1,
            "distinct_2": self.distinct_2,
            "distinct_3": self.distinct_3,
            "overlap_pct": self.overlap_pct,
            "stopword_pct": self.stopword_pct,
            "num_examples": self.num_examples,
            "seeds_used": list(self.seeds_used),
        }

    @classmethod
    def from_dict(cls, d):
        values = dict(d)
        values["seeds_used"] = tuple(values["seeds_used"])
        values["ppl_delta_by_kind"] = dict(values["ppl_delta_by_kind"])
        return cls(**values)

    def save_json(self, path):
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, path):
        """One header line plus one flat data row."""
        kind_names = sorted(self.ppl_delta_by_kind)
        header = list(self.SCALAR_FIELDS)
        header += [f"delta_{name}" for name in kind_names]
        header.append("seeds_used")
        row = [repr(float(getattr(self, name)))
               if name != "num_examples" else str(self.num_examples)
               for name in self.SCALAR_FIELDS]
        row += [repr(float(self.ppl_delta_by_kind[name]))
                for name in kind_names]
        row.append(";".join(str(s) for s in self.seeds_used))
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerow(row)


def perplexity(model, examples, history_transform=None,
               utterance_pool=None, pos_lexicon=None):
    """Corpus perplexity of the gold responses, optionally under corruption.

    ``history_transform`` is a (kind, seed) pair; each example's history is
    perturbed once by a generator seeded with (seed, example index), so the
    result is independent of scoring order.  The pool and lexicon are only
    needed by the operators that use them.
    """
    if not examples:
        raise ValueError("examples must be non-empty")
    total_nll = 0.0
    total_slots = 0
    for index, example in enumerate(examples):
        history = example.history
        if history_transform is not None:
            kind, seed = history_transform
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([int(seed), index])))
            kwargs = {"rng": rng,
                      "utterance_pool": list(utterance_pool or []),
                      "vocab_size": model.config.vocab_size}
            if pos_lexicon is not None:
                kwargs["pos_lexicon"] = pos_lexicon
            history = perturb_history(history, kind, PerturbContext(**kwargs))
        log_probs = model.sequence_log_probs(history, example.response)
        total_nll -= float(np.sum(log_probs))
        total_slots += len(log_probs)
    return float(np.exp(total_nll / total_slots))


def perturbation_sensitivity(model, examples, kinds, seeds,
                             utterance_pool=None, pos_lexicon=None):
    """Per-kind perplexity increase under corruption, plus the macro mean.

    delta(kind) = mean over seeds of (perplexity with corrupted histories
    minus original perplexity).  Identity is excluded from the macro average
    when present.  Returns (dict kind -> delta, macro).
    """
    if not kinds:
        raise ValueError("kinds must be non-empty")
    if not seeds:
        raise ValueError("seeds must be non-empty")
    base = perplexity(model, examples)
    deltas = {}
    for kind in kinds:
        per_seed = [
            perplexity(model, examples, history_transform=(kind, seed),
                       utterance_pool=utterance_pool,
                       pos_lexicon=pos_lexicon) - base
            for seed in seeds]
        deltas[kind] = float(np.mean(per_seed))
    macro_values = [v for k, v in deltas.items()
                    if k is not PerturbationKind.IDENTITY]
    macro = float(np.mean(macro_values)) if macro_values else 0.0
    return deltas, macro


def distinct_n(responses, n):
    """Unique n-gram count divided by the total token count."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not responses:
        raise ValueError("responses must be non-empty")
    total_tokens = 0
    grams = set()
    for response in responses:
        ids = [int(t) for t in response]
        total_tokens += len(ids)
        for i in range(len(ids) - n + 1):
            grams.add(tuple(ids[i:i + n]))
    if not grams or total_tokens == 0:
        return 0.0
    return len(grams) / total_tokens


def overlap(responses, histories):
    """Mean percentage of response tokens present in the last history utterance.

    Every occurrence of a response token counts; the last utterance is
    treated as a set.  Empty responses contribute zero overlap.
    """
    if len(responses) != len(histories):
        raise ValueError("responses and histories must have equal length")
    if not responses:
        raise ValueError("responses must be non-empty")
    fractions = []
    for response, history in zip(responses, histories):
        if not history:
            raise ValueError("histories must be non-empty")
        last = {int(t) for t in history[-1]}
        if not len(response):
            fractions.append(0.0)
            continue
        hits = sum(1 for t in response if int(t) in last)
        fractions.append(hits / len(response))
    return 100.0 * float(np.mean(fractions))


def stopword_rate(responses, stopwords, vocab):
    """Percentage of response tokens whose surface is a stop word."""
    if not responses:
        raise ValueError("responses must be non-empty")
    total = 0
    stops = 0
    for response in responses:
        for token in response:
            token = int(token)
            if not 0 <= token < len(vocab.id_to_surface):
                raise ValueError(f"token id {token} out of range")
            total += 1
            if vocab.id_to_surface[token] in stopwords:
                stops += 1
    if total == 0:
        return 0.0
    return 100.0 * stops / total


def _generate(model, history, decode_mode, aux_lm, aux_backward, config):
    if decode_mode == "greedy":
        return model.greedy_decode(history)
    if decode_mode == "beam":
        return model.beam_search(history, config.beam_width, 1)[0]
    n_best = model.beam_search(history, config.beam_width, config.n_best)
    if decode_mode == "mmi_anti":
        scores = [mmi_anti_score(model, aux_lm, history, hyp.tokens,
                                 config.mmi_lambda) for hyp in n_best]
        return n_best[max(range(len(scores)), key=lambda i: scores[i])]
    if decode_mode == "mmi_bidi":
        return mmi_bidi_rerank(model, aux_backward, history, n_best,
                               config.mmi_lambda)[0]
    raise ValueError(f"unknown decode mode {decode_mode!r}; "
                     f"expected one of {DECODE_MODES}")


def full_report(model, examples, decode_mode, aux_lm=None, aux_backward=None,
                config=None, vocab=None, stopwords=None,
                utterance_pool=None, pos_lexicon=None):
    """Generate one response per example, measure everything, build a report.

    MMI modes re-rank or select from the beam n-best and need the matching
    auxiliary model; sensitivity always covers the 11 non-identity operators
    with the configured seed list.
    """
    if decode_mode not in DECODE_MODES:
        raise ValueError(f"unknown decode mode {decode_mode!r}; "
                         f"expected one of {DECODE_MODES}")
    if not examples:
        raise ValueError("examples must be non-empty")
    if vocab is None:
        raise ValueError("a vocabulary is required for the stop-word metric")
    if decode_mode == "mmi_anti" and aux_lm is None:
        raise ValueError("decode mode mmi_anti requires a response LM")
    if decode_mode == "mmi_bidi" and aux_backward is None:
        raise ValueError("decode mode mmi_bidi requires a backward model")
    config = config or EvalConfig()
    stopwords = stopwords or default_stopwords()

    responses = []
    histories = []
    for example in examples:
        hyp = _generate(model, example.history, decode_mode, aux_lm,
                        aux_backward, config)
        responses.append(list(hyp.tokens))
        histories.append(example.history)

    deltas, macro = perturbation_sensitivity(
        model, examples, NON_IDENTITY_KINDS, config.seeds,
        utterance_pool=utterance_pool, pos_lexicon=pos_lexicon)
    return MetricsReport(
        perplexity_orig=perplexity(model, examples),
        ppl_delta_by_kind={kind.value: delta
                           for kind, delta in deltas.items()},
        ppl_delta_macro=macro,
        distinct_1=distinct_n(responses, 1),
        distinct_2=distinct_n(responses, 2),
        distinct_3=distinct_n(responses, 3),
        overlap_pct=overlap(responses, histories),
        stopword_pct=stopword_rate(responses, stopwords, vocab),
        num_examples=len(examples),
        seeds_used=tuple(config.seeds),
    )
