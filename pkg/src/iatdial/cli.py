"""Command-line entry point for corpus generation, training and evaluation.

Seven subcommands wire the library into reproducible experiments:

    gen-corpus   synthesize a corpus directory (splits, vocabulary, pos file)
    pretrain     MLE-train the forward dialogue model
    train-aux    MLE-train a backward model or response LM for MMI modes
    train-iat    fine-tune a pretrained checkpoint with the IAT objective
    evaluate     score a checkpoint on the test split and write a report
    perturb      apply one corruption operator to a corpus file
    decode       generate a response for an ad-hoc history

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every command is deterministic given its full flag set.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import (PosLexicon, SynthConfig, Vocabulary, decode_utterance,
                     encode_dialogue, gen_synthetic, load_dialogues,
                     load_pos_file, make_examples, save_dialogues,
                     save_pos_file, tokenize, detokenize)
from .evaluation import EvalConfig, default_stopwords, full_report
from .model import (CheckpointError, ModelConfig, SeqModel, load_checkpoint,
                    save_checkpoint)
from .perturb import PerturbContext, PerturbationKind, perturb_history
from .trainer import (TrainConfig, init_model, load_train_config,
                      pretrain_mle, train_auxiliary, train_iat)

_SPLIT_STREAM = 3  # SeedSequence tag for corpus split assignment

CORPUS_FILES = ("train.jsonl", "valid.jsonl", "test.jsonl",
                "vocab.txt", "pos.txt")


class UsageError(Exception):
    """Invalid flags, config or input files; maps to exit code 2."""


# ---------------------------------------------------------------------- #
# shared loading helpers

def _load_config(path):
    if path is None:
        return TrainConfig()
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    try:
        return load_train_config(path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _load_corpus(corpus_dir):
    """Read a gen-corpus directory into (vocab, lexicon, encoded splits)."""
    base = Path(corpus_dir)
    for name in CORPUS_FILES:
        if not (base / name).exists():
            raise UsageError(f"missing corpus file: {base / name}")
    try:
        vocab = Vocabulary.load(base / "vocab.txt")
        lexicon = PosLexicon.from_surface_tags(
            vocab, load_pos_file(base / "pos.txt"))
        splits = {}
        for split in ("train", "valid", "test"):
            dialogues, _ = load_dialogues(base / f"{split}.jsonl")
            splits[split] = [encode_dialogue(vocab, d) for d in dialogues]
    except (ValueError, OSError) as exc:
        raise UsageError(f"cannot load corpus: {exc}") from exc
    return vocab, lexicon, splits


def _split_examples(dialogues, window):
    examples = []
    for dialogue in dialogues:
        examples.extend(make_examples(dialogue, window))
    return examples


def _utterance_pool(dialogues):
    return [utterance for dialogue in dialogues for utterance in dialogue]


def _load_model(path, vocab, expect_roles=None):
    try:
        params, config = load_checkpoint(path)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from exc
    except CheckpointError as exc:
        raise UsageError(f"bad checkpoint {path}: {exc}") from exc
    if config.vocab_size != vocab.size:
        raise UsageError(
            f"checkpoint {path} has vocabulary size {config.vocab_size}, "
            f"corpus has {vocab.size}")
    if expect_roles and config.role not in expect_roles:
        raise UsageError(
            f"checkpoint {path} has role {config.role!r}, "
            f"expected one of {expect_roles}")
    return SeqModel(config, params)


def _write_outputs(params, model_config, out_path, log):
    out = Path(out_path)
    try:
        if out.parent and not out.parent.exists():
            out.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, model_config, out)
        log.to_csv(str(out) + ".log.csv")
    except OSError as exc:
        raise UsageError(f"cannot write checkpoint: {exc}") from exc


# ---------------------------------------------------------------------- #
# commands

def cmd_gen_corpus(args):
    synth = SynthConfig(num_dialogues=args.dialogues,
                        turns_per_dialogue=args.turns,
                        entity_count=args.entities,
                        generic_rate=args.generic_rate,
                        seed=args.seed)
    try:
        synth.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    dialogues, pos_tags = gen_synthetic(synth)
    count = len(dialogues)
    n_valid = max(1, count // 10)
    n_test = max(1, count // 10)
    n_train = count - n_valid - n_test
    if n_train < 1:
        raise UsageError("too few dialogues for an 80/10/10 split")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([args.seed, _SPLIT_STREAM])))
    order = rng.permutation(count)
    train = [dialogues[i] for i in order[:n_train]]
    valid = [dialogues[i] for i in order[n_train:n_train + n_valid]]
    test = [dialogues[i] for i in order[n_train + n_valid:]]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_dialogues(out / "train.jsonl", train)
        save_dialogues(out / "valid.jsonl", valid)
        save_dialogues(out / "test.jsonl", test)
        vocab = Vocabulary.build(train, max_size=10000, min_count=1)
        vocab.save(out / "vocab.txt")
        save_pos_file(out / "pos.txt", pos_tags)
    except OSError as exc:
        raise UsageError(f"cannot write corpus to {out}: {exc}") from exc
    print(f"wrote {n_train}/{n_valid}/{n_test} dialogues "
          f"(vocab size {vocab.size}) to {out}")
    return 0


def cmd_pretrain(args):
    config = _load_config(args.config)
    vocab, _, splits = _load_corpus(args.corpus)
    train = _split_examples(splits["train"], config.history_window)
    valid = _split_examples(splits["valid"], config.history_window)
    if not train or not valid:
        raise UsageError("corpus splits produced no training examples")
    model = init_model(vocab.size, "forward", config)
    params, log = pretrain_mle(model, train, valid, config)
    _write_outputs(params, model.config, args.out, log)
    last = log.records[-1]
    print(f"pretrained {len(log)} epochs; "
          f"best valid ppl {min(r.valid_ppl for r in log.records):.4f} "
          f"(last {last.valid_ppl:.4f}); checkpoint {args.out}")
    return 0


def cmd_train_aux(args):
    config = _load_config(args.config)
    role = args.role.replace("-", "_")
    vocab, _, splits = _load_corpus(args.corpus)
    train = _split_examples(splits["train"], config.history_window)
    valid = _split_examples(splits["valid"], config.history_window)
    if not train or not valid:
        raise UsageError("corpus splits produced no training examples")
    params, log = train_auxiliary(role, train, valid, vocab.size, config)
    model_config = ModelConfig(vocab_size=vocab.size,
                               embed_dim=config.embed_dim,
                               hidden_dim=config.hidden_dim,
                               max_decode_len=config.max_decode_len,
                               role=role)
    _write_outputs(params, model_config, args.out, log)
    print(f"trained {role} model for {len(log)} epochs; checkpoint {args.out}")
    return 0


def cmd_train_iat(args):
    config = _load_config(args.config)
    vocab, lexicon, splits = _load_corpus(args.corpus)
    model = _load_model(args.init, vocab, expect_roles=("forward",))
    train = _split_examples(splits["train"], config.history_window)
    valid = _split_examples(splits["valid"], config.history_window)
    if not train or not valid:
        raise UsageError("corpus splits produced no training examples")
    pool = _utterance_pool(splits["train"])
    params, log = train_iat(model, train, valid, pool, lexicon, config)
    _write_outputs(params, model.config, args.out, log)
    last = log.records[-1]
    print(f"fine-tuned {len(log)} epochs; "
          f"mean reward {last.mean_reward:.4f}, "
          f"valid ppl {last.valid_ppl:.4f}; checkpoint {args.out}")
    return 0


def cmd_evaluate(args):
    mode = args.mode.replace("-", "_")
    if mode == "mmi_anti" and not args.aux_lm:
        raise UsageError("--mode mmi-anti requires --aux-lm")
    if mode == "mmi_bidi" and not args.aux_bwd:
        raise UsageError("--mode mmi-bidi requires --aux-bwd")
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    except ValueError as exc:
        raise UsageError(f"--seeds must be comma-separated integers: "
                         f"{args.seeds!r}") from exc
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    try:
        eval_config = EvalConfig(mmi_lambda=args.mmi_lambda,
                                 n_best=args.nbest, beam_width=args.nbest,
                                 seeds=seeds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    vocab, lexicon, splits = _load_corpus(args.corpus)
    model = _load_model(args.ckpt, vocab)
    aux_lm = (_load_model(args.aux_lm, vocab, expect_roles=("response_lm",))
              if args.aux_lm else None)
    aux_bwd = (_load_model(args.aux_bwd, vocab, expect_roles=("backward",))
               if args.aux_bwd else None)
    examples = _split_examples(splits["test"], args.window)
    if not examples:
        raise UsageError("test split produced no examples")
    report = full_report(model, examples, mode, aux_lm=aux_lm,
                         aux_backward=aux_bwd, config=eval_config,
                         vocab=vocab, stopwords=default_stopwords(),
                         utterance_pool=_utterance_pool(splits["train"]),
                         pos_lexicon=lexicon)
    report_path = Path(args.report)
    csv_path = report_path.with_suffix(".csv") \
        if report_path.suffix == ".json" else Path(str(report_path) + ".csv")
    try:
        if report_path.parent and not report_path.parent.exists():
            report_path.parent.mkdir(parents=True, exist_ok=True)
        report.save_json(report_path)
        report.save_csv(csv_path)
    except OSError as exc:
        raise UsageError(f"cannot write report: {exc}") from exc
    print(f"mode={args.mode} examples={report.num_examples}")
    print(f"perplexity_orig={report.perplexity_orig:.4f} "
          f"ppl_delta_macro={report.ppl_delta_macro:.4f}")
    print(f"distinct_1={report.distinct_1:.4f} "
          f"distinct_2={report.distinct_2:.4f} "
          f"distinct_3={report.distinct_3:.4f}")
    print(f"overlap_pct={report.overlap_pct:.2f} "
          f"stopword_pct={report.stopword_pct:.2f}")
    print(f"report written to {report_path} and {csv_path}")
    return 0


def cmd_perturb(args):
    try:
        kind = PerturbationKind.from_name(args.op)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if kind is PerturbationKind.REPL and not args.pool:
        raise UsageError("--op repl requires --pool")
    try:
        dialogues, _ = load_dialogues(args.in_path)
        pool_dialogues = load_dialogues(args.pool)[0] if args.pool else []
        surface_tags = load_pos_file(args.pos) if args.pos else {}
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not dialogues:
        raise UsageError("input file contains no dialogues")
    vocab = Vocabulary.build(dialogues + pool_dialogues,
                             max_size=1_000_000, min_count=1)
    lexicon = PosLexicon.from_surface_tags(vocab, surface_tags)
    pool = [vocab.encode(u) for d in pool_dialogues for u in d]
    out_dialogues = []
    for index, dialogue in enumerate(dialogues):
        encoded = encode_dialogue(vocab, dialogue)
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([args.seed, index])))
        ctx = PerturbContext(rng=rng, utterance_pool=pool,
                             pos_lexicon=lexicon, vocab_size=vocab.size)
        perturbed = perturb_history(encoded[:-1], kind, ctx)
        out_dialogues.append(
            [decode_utterance(vocab, u) for u in perturbed + [encoded[-1]]])
    try:
        save_dialogues(args.out, out_dialogues)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    print(f"applied {kind.value} to {len(out_dialogues)} dialogues -> {args.out}")
    return 0


def cmd_decode(args):
    if not args.history.strip():
        raise UsageError("--history must contain at least one utterance")
    surfaces = [tokenize(part) for part in args.history.split(" || ")]
    if any(not u for u in surfaces):
        raise UsageError("every history utterance must contain tokens")
    try:
        vocab = Vocabulary.load(args.vocab)
    except OSError as exc:
        raise UsageError(f"cannot read vocabulary: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = _load_model(args.ckpt, vocab)
    history = [vocab.encode(u) for u in surfaces]
    if args.mode == "greedy":
        hyp = model.greedy_decode(history)
    elif args.mode == "sample":
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(int(args.seed))))
        hyp = model.sample_decode(history, args.temperature, rng)
    else:
        hyp = model.beam_search(history, args.beam_width, 1)[0]
    print(detokenize(decode_utterance(vocab, hyp.tokens)))
    print(f"score: {hyp.score!r}")
    return 0


# ---------------------------------------------------------------------- #
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="iatdial",
        description="Train and evaluate history-sensitive dialogue models.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dialogues", type=int, default=2000)
    p.add_argument("--turns", type=int, default=6)
    p.add_argument("--entities", type=int, default=20)
    p.add_argument("--generic-rate", dest="generic_rate", type=float,
                   default=0.3)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("pretrain", help="MLE-pretrain the dialogue model")
    p.add_argument("--corpus", required=True, help="gen-corpus directory")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-aux",
                       help="train a backward model or response LM")
    p.add_argument("--role", required=True,
                   choices=["backward", "response-lm"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_aux)

    p = sub.add_parser("train-iat",
                       help="fine-tune a pretrained checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--init", required=True, help="pretrained checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_iat)

    p = sub.add_parser("evaluate", help="score a checkpoint, write a report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", default="greedy",
                   choices=["greedy", "beam", "mmi-anti", "mmi-bidi"])
    p.add_argument("--aux-lm", dest="aux_lm", help="response LM checkpoint")
    p.add_argument("--aux-bwd", dest="aux_bwd",
                   help="backward model checkpoint")
    p.add_argument("--lambda", dest="mmi_lambda", type=float, default=0.5)
    p.add_argument("--nbest", type=int, default=10)
    p.add_argument("--seeds", default="0,1,2",
                   help="comma-separated perturbation seeds")
    p.add_argument("--window", type=int, default=2,
                   help="history window for example extraction")
    p.add_argument("--report", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("perturb", help="corrupt the histories of a corpus file")
    p.add_argument("--in", dest="in_path", required=True,
                   help="input .jsonl file")
    p.add_argument("--op", required=True, help="perturbation operator name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", help=".jsonl file of replacement utterances")
    p.add_argument("--pos", help="pos lexicon file for noun/verb drops")
    p.add_argument("--out", required=True, help="output .jsonl file")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("decode", help="decode a response for one history")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True, help="vocab.txt from gen-corpus")
    p.add_argument("--history", required=True,
                   help='utterances separated by " || "')
    p.add_argument("--mode", default="greedy",
                   choices=["greedy", "sample", "beam"])
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam-width", dest="beam_width", type=int, default=5)
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # the exit-code contract is exhaustive
        print(f"runtime failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
