"""Training loops: MLE pretraining, IAT fine-tuning, Adam, early stopping.

Both loops run shuffled mini-batches with a from-scratch Adam optimizer
(bias-corrected, global-norm gradient clipping) and stop when validation
perplexity has not improved for ``patience`` consecutive checks, returning
the best-validation parameters.  The IAT loop alternates supervised and
self-supervised iterations: each mini-batch samples one perturbation kind
per example, scores the response under original and perturbed histories,
and takes one ascent step on the summed reward/penalty objective.

All randomness flows from TrainConfig.seed through numpy SeedSequence
streams, so identical (corpus, config) inputs give bitwise-identical
parameters on one platform.  The loops are single-threaded; execution order
is part of the determinism contract.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluation import perplexity
from .model import ModelConfig, Parameters, SeqModel
from .objectives import IatBatchStats, iat_terms, reward
from .perturb import (NON_IDENTITY_KINDS, PerturbContext, PerturbationKind,
                      perturb_history, sample_kind)

MODE_SCHEDULES = ("supervised_only", "self_supervised_only", "alternate")

# SeedSequence stream tags, so the init/MLE/IAT generators never overlap.
_INIT_STREAM = 0
_MLE_STREAM = 1
_IAT_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    """Every knob for one training run; also the schema of the config file.

    The file is a JSON object with exactly these keys (any subset; unknown
    keys are rejected).  Model-shape fields live here too so that a single
    config drives corpus-to-checkpoint runs from the command line.
    """

    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 30
    patience: int = 3
    iat_margin: float = 1.0
    enabled_perturbations: tuple = tuple(k.value for k in NON_IDENTITY_KINDS)
    sample_temperature: float = 1.0
    mode_schedule: str = "alternate"
    grad_clip: float = 5.0
    seed: int = 0
    embed_dim: int = 32
    hidden_dim: int = 64
    max_decode_len: int = 16
    history_window: int = 2
    length_normalize: bool = False
    reward_standardize: bool = False
    mmi_lambda: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0.0 < beta < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.iat_margin < 0:
            raise ValueError("iat_margin must be non-negative")
        if self.sample_temperature <= 0:
            raise ValueError("sample_temperature must be positive")
        if self.mode_schedule not in MODE_SCHEDULES:
            raise ValueError(
                f"mode_schedule must be one of {MODE_SCHEDULES}")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.mmi_lambda < 0:
            raise ValueError("mmi_lambda must be non-negative")
        for name in ("embed_dim", "hidden_dim", "history_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_decode_len < 2:
            raise ValueError("max_decode_len must be at least 2")
        if not self.enabled_perturbations:
            raise ValueError("enabled_perturbations must be non-empty")
        for name in self.enabled_perturbations:
            PerturbationKind.from_name(name)

    def perturbation_kinds(self):
        return [PerturbationKind.from_name(n)
                for n in self.enabled_perturbations]

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["enabled_perturbations"] = list(self.enabled_perturbations)
        return d

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        for key in sorted(raw):
            if key not in allowed:
                raise ValueError(f"unknown config key: {key}")
        values = dict(raw)
        if "enabled_perturbations" in values:
            names = values["enabled_perturbations"]
            if isinstance(names, str) or not isinstance(names, (list, tuple)):
                raise ValueError(
                    "enabled_perturbations must be a list of operator names")
            values["enabled_perturbations"] = tuple(names)
        return cls(**values)


def load_train_config(path):
    """Parse a JSON config file, rejecting unknown keys."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    return TrainConfig.from_dict(raw)


@dataclass
class OptimizerState:
    """Adam moments co-shaped with the parameters, plus the step counter."""

    m: Parameters
    v: Parameters
    step: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(m=params.zeros_like(), v=params.zeros_like(), step=0)


def adam_step(params, grads, opt_state, config):
    """One descent-form Adam update; returns (new params, opt_state).

    Gradients are globally norm-clipped to config.grad_clip first.  The
    update subtracts along ``grads``, so minimization passes the objective
    gradient directly and maximization negates it before calling.
    """
    grads.validate_finite("gradient")
    norm = grads.global_norm()
    if norm > config.grad_clip:
        grads = grads.copy().iscale(config.grad_clip / norm)
    opt_state.step += 1
    t = opt_state.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_params = params.copy()
    for name, arr in new_params.items():
        g = getattr(grads, name)
        m = getattr(opt_state.m, name)
        v = getattr(opt_state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        arr -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new_params, opt_state


class EarlyStopper:
    """Stop after ``patience`` validation checks without strict improvement."""

    def __init__(self, patience):
        if patience < 1:
            raise ValueError("patience must be at least 1")
        self.patience = patience
        self.best = np.inf
        self.bad_checks = 0
        self.improved = False

    def update(self, value):
        """Record one validation value; True means training should stop."""
        if value < self.best:
            self.best = value
            self.bad_checks = 0
            self.improved = True
            return False
        self.improved = False
        self.bad_checks += 1
        return self.bad_checks >= self.patience


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    valid_ppl: float
    mean_reward: float
    mean_penalty: float
    seconds: float


@dataclass
class TrainLog:
    """Append-only per-epoch training history."""

    records: list = field(default_factory=list)

    CSV_HEADER = ("epoch", "train_loss", "valid_ppl",
                  "mean_reward", "mean_penalty", "seconds")

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.CSV_HEADER)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss),
                                 repr(r.valid_ppl), repr(r.mean_reward),
                                 repr(r.mean_penalty), repr(r.seconds)])


def _stream_rng(seed, tag):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), tag])))


def init_model(vocab_size, role, config, dtype=np.float32):
    """Fresh SeqModel with uniform-initialized parameters from config.seed."""
    model_config = ModelConfig(vocab_size=vocab_size,
                               embed_dim=config.embed_dim,
                               hidden_dim=config.hidden_dim,
                               max_decode_len=config.max_decode_len,
                               role=role)
    rng = _stream_rng(config.seed, _INIT_STREAM)
    return SeqModel(model_config, Parameters.init(model_config, rng, dtype))


def _batches(order, size):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def pretrain_mle(model, train_examples, valid_examples, config):
    """Minimize mean per-token NLL; stop on validation perplexity.

    Returns (best parameters, TrainLog); the model is left holding the best
    parameters as well.
    """
    if not train_examples or not valid_examples:
        raise ValueError("train and valid splits must be non-empty")
    rng = _stream_rng(config.seed, _MLE_STREAM)
    opt_state = OptimizerState.zeros(model.params)
    stopper = EarlyStopper(config.patience)
    best = model.params.copy()
    log = TrainLog()
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(train_examples))
        total_nll = 0.0
        total_slots = 0
        for batch_index in _batches(order, config.batch_size):
            batch = [train_examples[int(i)] for i in batch_index]
            weighted = [
                (ex.history, ex.response,
                 np.full(model.scored_slots(ex.history, ex.response), -1.0))
                for ex in batch]
            grads, objective = model.backward(weighted, return_objective=True)
            batch_slots = sum(len(w) for _, _, w in weighted)
            grads.iscale(1.0 / batch_slots)
            model.params, opt_state = adam_step(model.params, grads,
                                                opt_state, config)
            total_nll += objective
            total_slots += batch_slots
        valid_ppl = perplexity(model, valid_examples)
        log.append(EpochRecord(epoch, total_nll / total_slots, valid_ppl,
                               0.0, 0.0, time.perf_counter() - started))
        should_stop = stopper.update(valid_ppl)
        if stopper.improved:
            best = model.params.copy()
        if should_stop:
            break
    model.params = best
    return best, log


def _iteration_mode(schedule, iteration):
    if schedule == "supervised_only":
        return "supervised"
    if schedule == "self_supervised_only":
        return "self_supervised"
    return "supervised" if iteration % 2 == 1 else "self_supervised"


def iat_batch_gradient(model, batch, mode, ctx, config, kinds):
    """Mean ascent gradient of the IAT objective over one mini-batch.

    Returns (gradients, records, used kinds, total scored slots).  In
    self-supervised mode an example whose sampled response comes back empty
    is resampled once and then skipped; a batch where everything was skipped
    raises RuntimeError.
    """
    prepared = []
    for example in batch:
        kind = sample_kind(kinds, ctx.rng)
        adversarial = perturb_history(example.history, kind, ctx)
        if mode == "supervised":
            response = list(example.response)
        else:
            response = model.sample_decode(example.history,
                                           config.sample_temperature,
                                           ctx.rng).tokens
            if not response:
                response = model.sample_decode(example.history,
                                               config.sample_temperature,
                                               ctx.rng).tokens
            if not response:
                continue
        prepared.append((example.history, adversarial, response, kind))
    if not prepared:
        raise RuntimeError(
            "every example in the batch was skipped "
            "(sampled responses were empty twice)")
    records = [reward(model, hist, adv, resp, config.iat_margin,
                      config.length_normalize)
               for hist, adv, resp, _ in prepared]
    scales = [None] * len(records)
    if config.reward_standardize:
        values = np.array([r.reward for r in records])
        spread = float(values.std())
        center = float(values.mean())
        scales = [((r.reward - center) / spread) if spread > 0 else 0.0
                  for r in records]
    grads = model.params.zeros_like()
    used_kinds = []
    total_slots = 0
    for (hist, adv, resp, kind), record, scale in zip(prepared, records,
                                                      scales):
        _, example_grads = iat_terms(model, hist, adv, resp,
                                     config.iat_margin,
                                     config.length_normalize,
                                     reward_scale=scale, record=record)
        grads.iadd(example_grads)
        used_kinds.append(kind)
        total_slots += model.scored_slots(hist, resp)
    grads.iscale(1.0 / len(prepared))
    return grads, records, used_kinds, total_slots


def train_iat(model, train_examples, valid_examples, utterance_pool,
              pos_lexicon, config):
    """Fine-tune a pretrained forward model with the IAT objective.

    Alternates supervised and self-supervised iterations (starting
    supervised) when mode_schedule is "alternate".  Validation follows gold
    responses under original histories, guarding against updates that buy
    history-sensitivity by destroying the language model.  Returns (best
    parameters, TrainLog); the model ends up holding the best parameters.
    """
    if model.config.role != "forward":
        raise ValueError("train_iat requires a forward-role model")
    if not train_examples or not valid_examples:
        raise ValueError("train and valid splits must be non-empty")
    kinds = config.perturbation_kinds()
    rng = _stream_rng(config.seed, _IAT_STREAM)
    ctx = PerturbContext(rng=rng, utterance_pool=list(utterance_pool),
                         pos_lexicon=pos_lexicon,
                         vocab_size=model.config.vocab_size)
    opt_state = OptimizerState.zeros(model.params)
    stopper = EarlyStopper(config.patience)
    best = model.params.copy()
    log = TrainLog()
    iteration = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(train_examples))
        epoch_records = []
        epoch_slots = 0
        for batch_index in _batches(order, config.batch_size):
            iteration += 1
            mode = _iteration_mode(config.mode_schedule, iteration)
            batch = [train_examples[int(i)] for i in batch_index]
            grads, records, _, slots = iat_batch_gradient(
                model, batch, mode, ctx, config, kinds)
            grads.iscale(-1.0)  # ascend the objective via the descent update
            model.params, opt_state = adam_step(model.params, grads,
                                                opt_state, config)
            epoch_records.extend(records)
            epoch_slots += slots
        valid_ppl = perplexity(model, valid_examples)
        stats = IatBatchStats.from_records(epoch_records)
        if config.length_normalize:
            train_loss = float(np.mean([r.nll_orig for r in epoch_records]))
        else:
            train_loss = sum(r.nll_orig for r in epoch_records) / epoch_slots
        log.append(EpochRecord(epoch, train_loss, valid_ppl,
                               stats.mean_reward, stats.mean_penalty,
                               time.perf_counter() - started))
        should_stop = stopper.update(valid_ppl)
        if stopper.improved:
            best = model.params.copy()
        if should_stop:
            break
    model.params = best
    return best, log


def train_auxiliary(model_role, train_examples, valid_examples, vocab_size,
                    config):
    """MLE-train a backward model or response LM for the MMI baselines.

    The example stream is the same as for the forward model; the role's
    routing decides what conditions on what.  Returns (Parameters, TrainLog).
    """
    if model_role not in ("backward", "response_lm"):
        raise ValueError(
            f"auxiliary role must be 'backward' or 'response_lm', "
            f"got {model_role!r}")
    model = init_model(vocab_size, model_role, config)
    return pretrain_mle(model, train_examples, valid_examples, config)
