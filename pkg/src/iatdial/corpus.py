"""Tokenization, vocabulary, dialogue corpora and the synthetic corpus generator.

Dialogues live at two levels: surface dialogues (lists of token strings, the
form stored in .jsonl files) and encoded dialogues (lists of token-id
utterances, the form the model consumes).  Encoding requires a Vocabulary,
so loading and encoding are separate steps.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD, BOS, EOS, UNK, SEP = 0, 1, 2, 3, 4
RESERVED_SURFACES = ("<pad>", "<bos>", "<eos>", "<unk>", "<sep>")
NUM_RESERVED = len(RESERVED_SURFACES)

# Type aliases used throughout the package.
Utterance = list  # list[int], no BOS/EOS/SEP embedded
DialogueHistory = list  # list[Utterance]
SurfaceUtterance = list  # list[str]
SurfaceDialogue = list  # list[SurfaceUtterance]

_SPLIT_CHARS = ".,!?'"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and isolate . , ! ? ' as single tokens."""
    out = []
    for chunk in text.lower().split():
        word = []
        for ch in chunk:
            if ch in _SPLIT_CHARS:
                if word:
                    out.append("".join(word))
                    word = []
                out.append(ch)
            else:
                word.append(ch)
        if word:
            out.append("".join(word))
    return out


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocabulary:
    """Bijective surface<->id map with the five reserved ids first."""

    id_to_surface: list
    surface_to_id: dict

    @property
    def size(self) -> int:
        return len(self.id_to_surface)

    @classmethod
    def build(cls, dialogues, max_size: int, min_count: int = 1) -> "Vocabulary":
        """Fill slots after the reserved ids by descending frequency, then surface.

        ``dialogues`` is a list of surface dialogues.  Surfaces seen fewer than
        ``min_count`` times are excluded and will encode to UNK.
        """
        if max_size < NUM_RESERVED + 1:
            raise ValueError(f"max_size must be >= {NUM_RESERVED + 1}, got {max_size}")
        counts = Counter()
        for dialogue in dialogues:
            for utterance in dialogue:
                counts.update(utterance)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        surfaces = list(RESERVED_SURFACES)
        for surface, count in ranked:
            if len(surfaces) >= max_size:
                break
            if count < min_count:
                continue
            surfaces.append(surface)
        return cls.from_surfaces(surfaces)

    @classmethod
    def from_surfaces(cls, id_to_surface) -> "Vocabulary":
        if list(id_to_surface[:NUM_RESERVED]) != list(RESERVED_SURFACES):
            raise ValueError("vocabulary must start with the reserved surfaces")
        surface_to_id = {s: i for i, s in enumerate(id_to_surface)}
        if len(surface_to_id) != len(id_to_surface):
            raise ValueError("duplicate surface in vocabulary")
        return cls(list(id_to_surface), surface_to_id)

    def encode(self, surfaces) -> list:
        return [self.surface_to_id.get(s, UNK) for s in surfaces]

    def decode(self, ids) -> list:
        for i in ids:
            if not 0 <= i < self.size:
                raise ValueError(f"token id {i} out of range for vocabulary of size {self.size}")
        return [self.id_to_surface[i] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, surface in enumerate(self.id_to_surface):
                fh.write(f"{i} {surface}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        surfaces = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx_str, _, surface = line.partition(" ")
                if not surface or int(idx_str) != len(surfaces):
                    raise ValueError(f"line {lineno + 1}: malformed vocabulary entry")
                surfaces.append(surface)
        return cls.from_surfaces(surfaces)


def encode_utterance(vocab: Vocabulary, surfaces) -> list:
    """Unknown surfaces map to UNK."""
    return vocab.encode(surfaces)


def decode_utterance(vocab: Vocabulary, utterance) -> list:
    return vocab.decode(utterance)


def encode_dialogue(vocab: Vocabulary, dialogue) -> list:
    return [vocab.encode(utt) for utt in dialogue]


@dataclass
class Example:
    """One training/evaluation unit: a dialogue history and its reference response."""

    history: list  # list of token-id utterances, oldest first
    response: list  # token ids

    def __post_init__(self):
        if len(self.history) < 1:
            raise ValueError("example history must be non-empty")
        if len(self.response) < 1:
            raise ValueError("example response must be non-empty")


def make_examples(dialogue, history_window: int, min_response_len: int = 0) -> list:
    """Turn every utterance after the first into a response example.

    The history is the up-to-``history_window`` utterances preceding the
    response, oldest first.  ``min_response_len`` (tokens) drops short-response
    pairs when > 0; off by default.
    """
    if history_window < 1:
        raise ValueError("history_window must be >= 1")
    examples = []
    for t in range(1, len(dialogue)):
        if min_response_len and len(dialogue[t]) < min_response_len:
            continue
        history = dialogue[max(0, t - history_window):t]
        examples.append(Example(history=list(history), response=dialogue[t]))
    return examples


def load_dialogues(path) -> tuple:
    """Read a .jsonl dialogue file into surface dialogues.

    Returns (dialogues, dropped) where dropped counts records with fewer than
    two utterances.  Raises ValueError naming the 1-based line number on a
    malformed record.
    """
    dialogues = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                utterances = record["dialogue"]
                if not isinstance(utterances, list) or not all(isinstance(u, str) for u in utterances):
                    raise TypeError
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ValueError(f"line {lineno}: malformed record") from None
            tokenized = [tokenize(u) for u in utterances]
            tokenized = [u for u in tokenized if u]
            if len(tokenized) < 2:
                dropped += 1
                continue
            dialogues.append(tokenized)
    return dialogues, dropped


def save_dialogues(path, dialogues) -> None:
    """Write surface dialogues in the one-record-per-line .jsonl format."""
    with open(path, "w", encoding="utf-8") as fh:
        for dialogue in dialogues:
            record = {"dialogue": [detokenize(u) for u in dialogue]}
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Part-of-speech lexicon (noun/verb/other), used by the noun-drop and
# verb-drop perturbations.  An explicit lexicon keeps those operators
# deterministic; real corpora need a user-supplied file.

POS_TAGS = ("noun", "verb", "other")


class PosLexicon:
    """Total map from token id to one of noun/verb/other."""

    def __init__(self, tags: dict):
        self._tags = dict(tags)

    def tag(self, token_id: int) -> str:
        if token_id < NUM_RESERVED:
            return "other"
        return self._tags.get(token_id, "other")

    @classmethod
    def from_surface_tags(cls, vocab: Vocabulary, surface_tags: dict) -> "PosLexicon":
        tags = {}
        for surface, tag in surface_tags.items():
            if tag not in POS_TAGS:
                raise ValueError(f"unknown pos tag {tag!r} for {surface!r}")
            token_id = vocab.surface_to_id.get(surface)
            if token_id is not None and token_id >= NUM_RESERVED:
                tags[token_id] = tag
        return cls(tags)


def load_pos_file(path) -> dict:
    """Read "<surface> <tag>" lines into a surface->tag dict."""
    tags = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in POS_TAGS:
                raise ValueError(f"line {lineno}: malformed pos entry")
            tags[parts[0]] = parts[1]
    return tags


def save_pos_file(path, surface_tags: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for surface in sorted(surface_tags):
            fh.write(f"{surface} {surface_tags[surface]}\n")


# --------------------------------------------------------------------------
# Synthetic corpus.  Dialogues cycle through entity introductions, follow-up
# questions and answers; answers are either one of five fixed generic
# utterances or a template mentioning the most recently introduced entity.
# Gold answers therefore depend on the history, and generic answers occur at
# a controlled rate: the two phenomena the training objective targets.

GENERIC_RESPONSES = (
    "i don t know .",
    "i am not sure .",
    "i don t think so .",
    "i really don t know .",
    "i see .",
)

_INTRO_TEMPLATE = "i saw the {e} today ."
_QUESTION_TEMPLATE = "what about the {e} ?"
_ANSWER_TEMPLATES = (
    "the {e} was great .",
    "oh the {e} looked nice .",
    "yes the {e} was fun .",
    "well the {e} seemed okay .",
    "that {e} made me happy .",
    "honestly the {e} sounded lovely .",
    "wow the {e} felt special .",
    "so the {e} turned out fine .",
)

_VERB_SURFACES = ("saw", "was", "looked", "seemed", "know", "think", "see",
                  "am", "made", "sounded", "felt", "turned")


@dataclass
class SynthConfig:
    num_dialogues: int = 2000
    turns_per_dialogue: int = 6
    entity_count: int = 20
    generic_rate: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        if self.num_dialogues < 1 or self.turns_per_dialogue < 2 or self.entity_count < 1:
            raise ValueError("num_dialogues, entity_count must be >= 1 and turns_per_dialogue >= 2")
        if not 0.0 <= self.generic_rate <= 1.0:
            raise ValueError(f"generic_rate must be in [0,1], got {self.generic_rate}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def _template_words() -> set:
    words = set()
    for template in (_INTRO_TEMPLATE, _QUESTION_TEMPLATE) + _ANSWER_TEMPLATES + GENERIC_RESPONSES:
        words.update(template.replace("{e}", "").split())
    return words


def entity_surfaces(count: int) -> list:
    """Deterministic pseudo-word entity names (two CV syllables)."""
    consonants = "bdfgklmnprstvz"
    vowels = "aeiou"
    syllables = [c + v for c in consonants for v in vowels]
    taken = _template_words()
    out = []
    for first in syllables:
        for second in syllables:
            word = first + second
            if word in taken:
                continue
            out.append(word)
            if len(out) == count:
                return out
    raise ValueError(f"entity_count {count} exceeds the nameable range")


def gen_synthetic(config: SynthConfig) -> tuple:
    """Generate (surface dialogues, surface pos tags), deterministic in the seed.

    Turn t of every dialogue is an entity introduction when t % 3 == 0, a
    follow-up question when t % 3 == 1, and an answer turn when t % 3 == 2.
    Answer turns are generic with probability ``generic_rate``.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    entities = entity_surfaces(config.entity_count)
    dialogues = []
    for _ in range(config.num_dialogues):
        dialogue = []
        entity = entities[rng.integers(len(entities))]
        for t in range(config.turns_per_dialogue):
            phase = t % 3
            if phase == 0:
                entity = entities[rng.integers(len(entities))]
                text = _INTRO_TEMPLATE.format(e=entity)
            elif phase == 1:
                text = _QUESTION_TEMPLATE.format(e=entity)
            else:
                if rng.random() < config.generic_rate:
                    text = GENERIC_RESPONSES[rng.integers(len(GENERIC_RESPONSES))]
                else:
                    template = _ANSWER_TEMPLATES[rng.integers(len(_ANSWER_TEMPLATES))]
                    text = template.format(e=entity)
            dialogue.append(text.split())
        dialogues.append(dialogue)
    pos_tags = {e: "noun" for e in entities}
    pos_tags.update({v: "verb" for v in _VERB_SURFACES})
    return dialogues, pos_tags


def is_answer_turn(turn_index: int) -> bool:
    """Answer turns of the synthetic corpus carry the generic/entity choice."""
    return turn_index % 3 == 2
