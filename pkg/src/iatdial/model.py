"""Recurrent encoder-decoder sequence model with exact analytic gradients.

A single-layer gated recurrent cell on both sides, a shared token embedding,
and a softmax output head.  The same class serves three roles:

* ``forward`` — the dialogue model p(Y | X): the flattened history is the
  encoder input and the response is the decoder target.
* ``backward`` — p(S | T) for bidirectional re-ranking: the response is the
  encoder input and the flattened history is the decoder target.
* ``response_lm`` — an unconditional response model p(T): the encoder state
  is identically zero and only the decoder runs.

Scoring is always teacher-forced: the decoder consumes BOS followed by the
gold target tokens, and the returned per-token log-probabilities cover every
target token plus the terminal EOS, so a target of length m yields m + 1
entries.  ``backward`` computes the exact gradient of a weighted sum of those
log-probabilities by backpropagation through time; the recurrence itself runs
in iatdial.kernels (compiled when available).

Checkpoints are a small self-describing binary format: the magic string
``IATCKPT1``, an 8-byte little-endian header length, a JSON header holding
the model config and per-tensor name/shape/dtype/offset records, then the raw
little-endian tensor payloads in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS, EOS, SEP
from .kernels import gru_backward, gru_forward

ROLES = ("forward", "backward", "response_lm")

CHECKPOINT_MAGIC = b"IATCKPT1"


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """The file is a checkpoint of an unsupported format version."""


class CorruptCheckpointError(CheckpointError):
    """The file is truncated or not a checkpoint at all."""


class ShapeMismatchError(CheckpointError):
    """Stored tensors disagree with the stored or expected configuration."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; parameter shapes follow from these alone."""

    vocab_size: int
    embed_dim: int
    hidden_dim: int
    max_decode_len: int
    role: str = "forward"

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "max_decode_len"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.max_decode_len < 2:
            raise ValueError("max_decode_len must be at least 2")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")

    def to_dict(self):
        return {
            "vocab_size": int(self.vocab_size),
            "embed_dim": int(self.embed_dim),
            "hidden_dim": int(self.hidden_dim),
            "max_decode_len": int(self.max_decode_len),
            "role": self.role,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(eq=False)
class Parameters:
    """Named weight tensors; also used co-shaped as the gradient container.

    embed is shared by the encoder and the decoder.  Gate blocks in the
    recurrent weight matrices are ordered (update, reset, candidate); see
    iatdial.kernels.reference for the cell equations.
    """

    embed: np.ndarray
    enc_wx: np.ndarray
    enc_wh: np.ndarray
    enc_b: np.ndarray
    dec_wx: np.ndarray
    dec_wh: np.ndarray
    dec_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    NAMES = ("embed", "enc_wx", "enc_wh", "enc_b",
             "dec_wx", "dec_wh", "dec_b", "out_w", "out_b")

    @staticmethod
    def expected_shapes(config):
        v, e, h = config.vocab_size, config.embed_dim, config.hidden_dim
        return {
            "embed": (v, e),
            "enc_wx": (e, 3 * h), "enc_wh": (h, 3 * h), "enc_b": (3 * h,),
            "dec_wx": (e, 3 * h), "dec_wh": (h, 3 * h), "dec_b": (3 * h,),
            "out_w": (h, v), "out_b": (v,),
        }

    @classmethod
    def init(cls, config, rng, dtype=np.float32):
        """Uniform(-0.08, 0.08) weights, zero biases."""
        shapes = cls.expected_shapes(config)
        tensors = {}
        for name in cls.NAMES:
            if name.endswith("_b"):
                tensors[name] = np.zeros(shapes[name], dtype=dtype)
            else:
                tensors[name] = rng.uniform(
                    -0.08, 0.08, size=shapes[name]).astype(dtype)
        return cls(**tensors)

    def items(self):
        return [(name, getattr(self, name)) for name in self.NAMES]

    @property
    def dtype(self):
        return self.embed.dtype

    def copy(self):
        return Parameters(**{n: a.copy() for n, a in self.items()})

    def astype(self, dtype):
        return Parameters(**{n: a.astype(dtype) for n, a in self.items()})

    def zeros_like(self):
        return Parameters(**{n: np.zeros_like(a) for n, a in self.items()})

    def iadd(self, other, scale=1.0):
        """In-place self += scale * other, tensor by tensor."""
        for name, arr in self.items():
            arr += scale * getattr(other, name)
        return self

    def iscale(self, factor):
        for _, arr in self.items():
            arr *= factor
        return self

    def global_norm(self):
        total = 0.0
        for _, arr in self.items():
            total += float(np.sum(arr.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def validate_finite(self, what="parameter"):
        for name, arr in self.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite {what} tensor: {name}")


Gradients = Parameters


@dataclass
class Hypothesis:
    """A decoded candidate: BOS-free token ids and the total log-probability.

    ``terminated`` records whether decoding emitted EOS (in which case the
    EOS log-probability is included in ``score``) or hit max_decode_len.
    """

    tokens: list = field(default_factory=list)
    score: float = 0.0
    terminated: bool = False


def flatten_history(history):
    """Concatenate history utterances with SEP between them, no BOS/EOS."""
    if not history:
        raise ValueError("history must contain at least one utterance")
    flat = []
    for i, utterance in enumerate(history):
        if not len(utterance):
            raise ValueError("history utterances must be non-empty")
        if i:
            flat.append(SEP)
        flat.extend(int(t) for t in utterance)
    return flat


def _log_softmax(x):
    m = np.max(x, axis=-1, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _check_tokens(tokens, vocab_size, what):
    for t in tokens:
        if not 0 <= int(t) < vocab_size:
            raise ValueError(
                f"{what} token id {int(t)} out of range [0, {vocab_size})")


class SeqModel:
    """Bundles a ModelConfig with Parameters and exposes the model operations.

    Parameters are treated as immutable during any forward or decode call;
    training code swaps in updated Parameters objects between steps.
    """

    def __init__(self, config, params):
        expected = Parameters.expected_shapes(config)
        for name, arr in params.items():
            if tuple(arr.shape) != expected[name]:
                raise ValueError(
                    f"parameter {name} has shape {tuple(arr.shape)}, "
                    f"expected {expected[name]}")
        params.validate_finite()
        self.config = config
        self.params = params

    # ------------------------------------------------------------------ #
    # scoring

    def encode(self, tokens):
        """Final hidden state of the encoder over a flat token sequence.

        Runs from a zero initial state.  For the response_lm role the
        encoder is unused and the state is identically zero.
        """
        tokens = list(tokens)
        if not tokens:
            raise ValueError("encoder input must be non-empty")
        _check_tokens(tokens, self.config.vocab_size, "encoder")
        if self.config.role == "response_lm":
            return np.zeros(self.config.hidden_dim, dtype=self.params.dtype)
        _, _, _, hs, _, _ = self._encode_cache(tokens)
        return hs[-1].copy()

    def _encode_cache(self, tokens):
        p = self.params
        emb = p.embed[tokens]
        xg = emb @ p.enc_wx + p.enc_b
        h0 = np.zeros(self.config.hidden_dim, dtype=p.dtype)
        hs, zrc, hc = gru_forward(p.enc_wh, xg, h0)
        return tokens, emb, xg, hs, zrc, hc

    def _route(self, history, response):
        """Map (history, response) to (encoder input, decoder target) by role."""
        role = self.config.role
        if role == "backward":
            return list(response), flatten_history(history)
        if role == "response_lm":
            return [], list(response)
        return flatten_history(history), list(response)

    def score_tokens(self, source, target):
        """Per-token log-probabilities of ``target`` plus the terminal EOS.

        The flat-token primitive behind sequence_log_probs: ``source`` may be
        empty (zero conditioning state) and ``target`` may be empty (only the
        EOS slot is scored), which decoded hypotheses occasionally need.
        """
        source = list(source)
        target = list(target)
        _check_tokens(source, self.config.vocab_size, "source")
        _check_tokens(target, self.config.vocab_size, "target")
        if source and self.config.role != "response_lm":
            state = self._encode_cache(source)[3][-1]
        else:
            state = np.zeros(self.config.hidden_dim, dtype=self.params.dtype)
        logp, _ = self._decode_scores(state, target)
        return logp.astype(np.float64)

    def _decode_scores(self, state, target):
        """Teacher-forced decode; returns (per-slot log-probs, cache)."""
        p = self.params
        inputs = [BOS] + target
        targets = np.asarray(target + [EOS])
        emb = p.embed[inputs]
        xg = emb @ p.dec_wx + p.dec_b
        hs, zrc, hc = gru_forward(p.dec_wh, xg, state)
        logits = hs[1:] @ p.out_w + p.out_b
        logp_full = _log_softmax(logits)
        logp = logp_full[np.arange(len(targets)), targets]
        cache = (inputs, targets, emb, xg, hs, zrc, hc, logp_full)
        return logp, cache

    def sequence_log_probs(self, history, response):
        """log P(t_i | t_<i, conditioning) for each target token and EOS.

        The decoder target and encoder input are chosen by the model role:
        forward scores the response given the flattened history, backward
        scores the flattened history given the response, and response_lm
        scores the response unconditionally (any history is ignored).
        """
        if not len(response):
            raise ValueError("response must be non-empty")
        source, target = self._route(history, response)
        return self.score_tokens(source, target)

    # ------------------------------------------------------------------ #
    # gradients

    def scored_slots(self, history, response):
        """Number of per-token log-probability slots for this example.

        Equals len(decoder target) + 1 for the terminal EOS, with the target
        chosen by the model role; weights passed to ``backward`` must have
        exactly this length.
        """
        return len(self._route(history, response)[1]) + 1

    def backward(self, weighted_examples, return_objective=False):
        """Exact gradient of sum_i w_i * log P(t_i | ...) over the examples.

        ``weighted_examples`` is an iterable of (history, response, weights)
        with one weight per scored slot, i.e. len(target) + 1 entries
        counting the terminal EOS.  Returns a Gradients co-shaped with the
        parameters; results add across examples.  With return_objective the
        weighted log-probability sum itself is returned alongside.
        """
        grads = self.params.zeros_like()
        objective = 0.0
        for history, response, weights in weighted_examples:
            if not len(response):
                raise ValueError("response must be non-empty")
            source, target = self._route(history, response)
            _check_tokens(source, self.config.vocab_size, "source")
            _check_tokens(target, self.config.vocab_size, "target")
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (len(target) + 1,):
                raise ValueError(
                    f"expected {len(target) + 1} per-token weights, "
                    f"got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError("per-token weights must be finite")
            objective += self._accumulate(grads, source, target,
                                          w.astype(self.params.dtype))
        grads.validate_finite("gradient")
        if return_objective:
            return grads, objective
        return grads

    def _accumulate(self, grads, source, target, w):
        p = self.params
        hidden = self.config.hidden_dim
        use_encoder = bool(source) and self.config.role != "response_lm"
        if use_encoder:
            _, enc_emb, _, enc_hs, enc_zrc, enc_hc = self._encode_cache(source)
            state = enc_hs[-1]
        else:
            state = np.zeros(hidden, dtype=p.dtype)
        logp, cache = self._decode_scores(state, target)
        inputs, targets, emb, xg, hs, zrc, hc, logp_full = cache

        # d(sum w_i logp[i, t_i]) / dlogits[i] = w_i * (onehot(t_i) - softmax_i)
        dlogits = -np.exp(logp_full) * w[:, None]
        dlogits[np.arange(len(targets)), targets] += w
        grads.out_w += hs[1:].T @ dlogits
        grads.out_b += dlogits.sum(axis=0)
        dh = dlogits @ p.out_w.T
        dwh, dxg, dh0 = gru_backward(p.dec_wh, hs, zrc, hc, dh)
        grads.dec_wh += dwh
        grads.dec_wx += emb.T @ dxg
        grads.dec_b += dxg.sum(axis=0)
        np.add.at(grads.embed, inputs, dxg @ p.dec_wx.T)

        if use_encoder:
            denc_h = np.zeros((len(source), hidden), dtype=p.dtype)
            denc_h[-1] = dh0
            dwh_e, dxg_e, _ = gru_backward(p.enc_wh, enc_hs, enc_zrc,
                                           enc_hc, denc_h)
            grads.enc_wh += dwh_e
            grads.enc_wx += enc_emb.T @ dxg_e
            grads.enc_b += dxg_e.sum(axis=0)
            np.add.at(grads.embed, source, dxg_e @ p.enc_wx.T)
        return float(np.dot(w.astype(np.float64), logp.astype(np.float64)))

    # ------------------------------------------------------------------ #
    # decoding

    def _conditioning(self, history):
        if self.config.role == "response_lm":
            return np.zeros(self.config.hidden_dim, dtype=self.params.dtype)
        return self.encode(flatten_history(history))

    def _cell_step(self, h, token_ids):
        """One decoder step for a batch of states; h is [B, H]."""
        p = self.params
        hidden = self.config.hidden_dim
        xg = p.embed[token_ids] @ p.dec_wx + p.dec_b
        hh = h @ p.dec_wh
        z = _sigmoid(xg[:, :hidden] + hh[:, :hidden])
        r = _sigmoid(xg[:, hidden:2 * hidden] + hh[:, hidden:2 * hidden])
        c = np.tanh(xg[:, 2 * hidden:] + r * hh[:, 2 * hidden:])
        return (1.0 - z) * h + z * c

    def _step_logprobs(self, h):
        return _log_softmax(h @ self.params.out_w + self.params.out_b)

    def greedy_decode(self, history):
        """Argmax decoding; ties go to the lowest token id."""
        h = self._conditioning(history)[None, :]
        token = BOS
        tokens = []
        score = 0.0
        for _ in range(self.config.max_decode_len):
            h = self._cell_step(h, np.array([token]))
            lp = self._step_logprobs(h)[0]
            token = int(np.argmax(lp))
            if token == EOS:
                return Hypothesis(tokens, score + float(lp[EOS]), True)
            tokens.append(token)
            score += float(lp[token])
        return Hypothesis(tokens, score, False)

    def sample_decode(self, history, temperature, rng):
        """Ancestral sampling from softmax(logits / temperature).

        The returned score is the temperature-1 log-probability of the
        emitted sequence (including EOS when sampling terminates).
        """
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        vocab = self.config.vocab_size
        h = self._conditioning(history)[None, :]
        token = BOS
        tokens = []
        score = 0.0
        for _ in range(self.config.max_decode_len):
            h = self._cell_step(h, np.array([token]))
            logits = (h @ self.params.out_w + self.params.out_b)[0]
            lp = _log_softmax(logits)
            probs = np.exp(_log_softmax(logits / temperature),
                           dtype=np.float64)
            probs /= probs.sum()
            draw = rng.random()
            token = min(int(np.searchsorted(np.cumsum(probs), draw,
                                            side="right")), vocab - 1)
            if token == EOS:
                return Hypothesis(tokens, score + float(lp[EOS]), True)
            tokens.append(token)
            score += float(lp[token])
        return Hypothesis(tokens, score, False)

    def beam_search(self, history, beam_width, n_best):
        """Length-unnormalized beam search returning the top n_best.

        Hypotheses whose EOS expansion ranks inside the beam move to the
        finished pool and free their slot; anything still alive at
        max_decode_len is finished unterminated.  Ordering ties are broken
        lexicographically on the token sequence, so width 1 reproduces
        greedy_decode exactly.
        """
        if beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        if not 1 <= n_best <= beam_width:
            raise ValueError("need 1 <= n_best <= beam_width")
        vocab = self.config.vocab_size
        state = self._conditioning(history)[None, :]
        live_h = self._cell_step(state, np.array([BOS]))
        live_tokens = [()]
        live_scores = np.zeros(1, dtype=np.float64)
        finished = []
        for step in range(self.config.max_decode_len):
            lp = self._step_logprobs(live_h).astype(np.float64)
            flat = (live_scores[:, None] + lp).ravel()
            keep = min(beam_width, flat.size)
            if flat.size > keep:
                threshold = np.partition(flat, flat.size - keep)[flat.size - keep]
                candidates = np.flatnonzero(flat >= threshold)
            else:
                candidates = np.arange(flat.size)
            ranked = sorted(
                (-flat[i], live_tokens[i // vocab] + (i % vocab,), int(i))
                for i in candidates)[:keep]
            next_tokens = []
            next_scores = []
            parents = []
            steps = []
            for neg_score, tokens, i in ranked:
                parent, token = divmod(i, vocab)
                if token == EOS:
                    finished.append(Hypothesis(list(tokens[:-1]),
                                               float(-neg_score), True))
                else:
                    next_tokens.append(tokens)
                    next_scores.append(-neg_score)
                    parents.append(parent)
                    steps.append(token)
            if not next_tokens:
                break
            live_h = self._cell_step(live_h[parents], np.array(steps))
            live_tokens = next_tokens
            live_scores = np.asarray(next_scores)
        else:
            for tokens, score in zip(live_tokens, live_scores):
                finished.append(Hypothesis(list(tokens), float(score), False))
        finished.sort(key=lambda hyp: (-hyp.score, tuple(hyp.tokens)))
        return finished[:n_best]


# ---------------------------------------------------------------------- #
# checkpoints

_DTYPE_TAGS = {"<f4": np.float32, "<f8": np.float64}


def save_checkpoint(params, config, path):
    """Write parameters and config in the versioned binary format."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in params.items():
        tag = "<f4" if arr.dtype == np.float32 else "<f8"
        raw = np.ascontiguousarray(arr).astype(tag, copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": tag, "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config.to_dict(), "tensors": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<Q", len(header)))
        handle.write(header)
        for raw in payloads:
            handle.write(raw)


def load_checkpoint(path, expected_config=None):
    """Read a checkpoint; returns (Parameters, ModelConfig).

    Raises CheckpointVersionError for a recognizable checkpoint of another
    format version, CorruptCheckpointError for anything unparseable or
    truncated, and ShapeMismatchError when tensors disagree with the stored
    config or the stored config disagrees with ``expected_config``.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) < 16:
        raise CorruptCheckpointError("file too short to hold a header")
    magic = data[:8]
    if magic != CHECKPOINT_MAGIC:
        if magic[:7] == CHECKPOINT_MAGIC[:7]:
            raise CheckpointVersionError(
                f"unsupported checkpoint version tag {magic!r}")
        raise CorruptCheckpointError("bad magic; not a checkpoint file")
    (header_len,) = struct.unpack("<Q", data[8:16])
    base = 16 + header_len
    if len(data) < base:
        raise CorruptCheckpointError("truncated header")
    try:
        header = json.loads(data[16:base].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        entries = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
            TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"unreadable header: {exc}") from exc
    if expected_config is not None and config != expected_config:
        raise ShapeMismatchError(
            f"checkpoint config {config.to_dict()} does not match "
            f"expected {expected_config.to_dict()}")
    expected_shapes = Parameters.expected_shapes(config)
    if {e.get("name") for e in entries} != set(Parameters.NAMES):
        raise CorruptCheckpointError("header tensor names are incomplete")
    tags = {e.get("dtype") for e in entries}
    if not tags <= set(_DTYPE_TAGS) or len(tags) != 1:
        raise CorruptCheckpointError(f"unsupported tensor dtypes {tags}")
    tensors = {}
    for entry in entries:
        name = entry["name"]
        shape = tuple(entry["shape"])
        if shape != expected_shapes[name]:
            raise ShapeMismatchError(
                f"tensor {name} has shape {shape}, "
                f"expected {expected_shapes[name]}")
        dtype = np.dtype(entry["dtype"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if entry["nbytes"] != nbytes:
            raise CorruptCheckpointError(f"tensor {name} has wrong byte count")
        start = base + entry["offset"]
        end = start + nbytes
        if end > len(data):
            raise CorruptCheckpointError(f"tensor {name} payload truncated")
        flat = np.frombuffer(data[start:end], dtype=dtype)
        tensors[name] = flat.astype(_DTYPE_TAGS[entry["dtype"]]).reshape(shape)
    return Parameters(**tensors), config
