"""Training objectives: history-sensitivity reward, margin penalty, MMI scores.

The central quantity is the reward R = NLL_adv - NLL_orig: the increase in
negative log-likelihood of a response when the conditioning history is
corrupted.  A history-sensitive model assigns large R; responses whose R
falls short of a margin M incur the penalty P = min(0, R - M).  Both scalars
enter training as likelihood-ratio (score-function) weights: the gradient
contribution of one example is

    R * grad log P(Y | X)  +  P * grad log P(Y | X')

with R and P treated as constants, realized as two weighted backward passes.

The MMI helpers score candidate responses for the anti-LM and bidirectional
re-ranking baselines; both tolerate empty candidate token sequences, which
beam search can produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import flatten_history


@dataclass(frozen=True)
class RewardRecord:
    """Per-example scoring summary; all fields in nats."""

    nll_orig: float
    nll_adv: float
    reward: float
    penalty: float
    margin: float

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    @classmethod
    def from_nlls(cls, nll_orig, nll_adv, margin):
        reward_value = nll_adv - nll_orig
        return cls(nll_orig=float(nll_orig), nll_adv=float(nll_adv),
                   reward=float(reward_value),
                   penalty=float(min(0.0, reward_value - margin)),
                   margin=float(margin))


@dataclass(frozen=True)
class IatBatchStats:
    """Aggregates of the RewardRecords seen in one batch or epoch."""

    mean_reward: float
    mean_penalty: float
    zero_penalty_fraction: float
    kind_counts: dict

    @classmethod
    def from_records(cls, records, kinds=()):
        if not records:
            raise ValueError("need at least one record")
        rewards = [r.reward for r in records]
        penalties = [r.penalty for r in records]
        zero = sum(1 for p in penalties if p == 0.0)
        counts = {}
        for kind in kinds:
            name = kind.value
            counts[name] = counts.get(name, 0) + 1
        return cls(mean_reward=float(np.mean(rewards)),
                   mean_penalty=float(np.mean(penalties)),
                   zero_penalty_fraction=zero / len(records),
                   kind_counts=counts)


def nll(model, history, response):
    """Total negative log-likelihood of the response (terminal EOS included)."""
    return float(-np.sum(model.sequence_log_probs(history, response)))


def reward(model, history, perturbed_history, response, margin,
           length_normalize=False):
    """Score one example against its perturbed history (two nll calls).

    With length_normalize the NLLs become per-token means before
    differencing, so the record's algebra holds on the normalized values.
    """
    nll_orig = nll(model, history, response)
    nll_adv = nll(model, perturbed_history, response)
    if length_normalize:
        slots = _slot_count(model, history, response)
        adv_slots = _slot_count(model, perturbed_history, response)
        nll_orig /= slots
        nll_adv /= adv_slots
    return RewardRecord.from_nlls(nll_orig, nll_adv, margin)


def _slot_count(model, history, response):
    return model.scored_slots(history, response)


def iat_terms(model, history, perturbed_history, response, margin,
              length_normalize=False, reward_scale=None, record=None):
    """RewardRecord plus the summed score-function gradient for one example.

    The reward weights the log-likelihood gradient under the original
    history and the penalty weights it under the perturbed history; both are
    constant across the token slots of the example and no gradient flows
    through them.  ``reward_scale`` optionally replaces the reward weight
    (used for batch-standardized rewards) without touching the record, and a
    precomputed ``record`` skips the two scoring passes.
    """
    if record is None:
        record = reward(model, history, perturbed_history, response, margin,
                        length_normalize)
    grads = model.params.zeros_like()
    reward_weight = record.reward if reward_scale is None else float(reward_scale)
    if reward_weight != 0.0:
        slots = _slot_count(model, history, response)
        grads.iadd(model.backward(
            [(history, response, np.full(slots, reward_weight))]))
    if record.penalty != 0.0:
        slots = _slot_count(model, perturbed_history, response)
        grads.iadd(model.backward(
            [(perturbed_history, response, np.full(slots, record.penalty))]))
    return record, grads


def iat_gradient(model, history, perturbed_history, response, margin,
                 length_normalize=False):
    """Summed reward/penalty gradient for one example (see iat_terms)."""
    _, grads = iat_terms(model, history, perturbed_history, response, margin,
                         length_normalize)
    return grads


def _require_role(model, role, what):
    if model.config.role != role:
        raise ValueError(f"{what} must have role {role!r}, "
                         f"got {model.config.role!r}")


def _conditional_logprob(forward_model, history, tokens):
    """log P(tokens | history) under the forward model; tokens may be empty."""
    source = flatten_history(history)
    return float(np.sum(forward_model.score_tokens(source, list(tokens))))


def mmi_anti_score(forward_model, response_lm, history, response, lam):
    """Anti-LM objective: log p(T|S) - lambda * log p(T)."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    _require_role(forward_model, "forward", "forward_model")
    _require_role(response_lm, "response_lm", "response_lm")
    cond = _conditional_logprob(forward_model, history, response)
    prior = float(np.sum(response_lm.score_tokens([], list(response))))
    return cond - lam * prior


def mmi_bidi_rerank(forward_model, backward_model, history, n_best, lam):
    """Re-rank an n-best list by score + lambda * log p(S|T).

    The forward score is taken from each hypothesis as produced by beam
    search; the backward model scores the flattened history given the
    hypothesis tokens.  Returns the same Hypothesis objects sorted by the
    combined score, descending, stable for ties.
    """
    if not n_best:
        raise ValueError("n_best list must be non-empty")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    _require_role(forward_model, "forward", "forward_model")
    _require_role(backward_model, "backward", "backward_model")
    target = flatten_history(history)
    combined = []
    for hyp in n_best:
        back = float(np.sum(backward_model.score_tokens(list(hyp.tokens),
                                                        target)))
        combined.append(hyp.score + lam * back)
    order = sorted(range(len(n_best)), key=lambda i: -combined[i])
    return [n_best[i] for i in order]


__all__ = [
    "RewardRecord", "IatBatchStats", "nll", "reward", "iat_terms",
    "iat_gradient", "mmi_anti_score", "mmi_bidi_rerank",
]
