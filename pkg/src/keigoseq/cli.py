"""Command-line entry point: ``keigoseq <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

from .augment import AugmentMode
from .codec import Granularity, Vocab, build_vocab
from .corpus import (
    annotate_corpus,
    filter_unknown,
    load_raw_corpus,
    read_annotated,
    split_corpus,
    write_annotated,
    write_split,
)
from .errors import DataError, NumericError, RuleError
from .rules import FormalityLabel, classify_formality, convert_formality

log = logging.getLogger("keigoseq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

TASKS = ("reconstruct", "probe", "side", "augmented", "backtranslate")
AUGMENTS = {"none": AugmentMode.NONE, "add": AugmentMode.ADDITIVE, "mul": AugmentMode.MULTIPLICATIVE}

CHECKPOINT_NAME = "model.ksq"
JA_VOCAB_NAME = "vocab.ja.txt"
EN_VOCAB_NAME = "vocab.en.txt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{value} is outside [0, 1]")
    return value


def _dropout(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{value} is outside [0, 1)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(f"{value} must be >= 1")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError(f"{value} must be >= 0")
    return value


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} is not one of {sorted(options)}")
        return text

    return parse


def _precision(text: str) -> int:
    value = int(text)
    if value not in (32, 64):
        raise ValueError("precision must be 32 or 64")
    return value


CONFIG_KEYS = {
    "d_model": _positive_int,
    "n_heads": _positive_int,
    "n_layers": _positive_int,
    "ffn_dim": _positive_int,
    "dropout": _dropout,
    "lr": float,
    "batch_size": _positive_int,
    "max_steps": _non_negative_int,
    "seed": _non_negative_int,
    "lambda": _probability,
    "task": _choice(TASKS),
    "augment": _choice(AUGMENTS),
    "precision": _precision,
}

DEFAULTS = {
    "d_model": 64,
    "n_heads": 4,
    "n_layers": 1,
    "ffn_dim": 256,
    "dropout": 0.1,
    "lr": 5e-4,
    "batch_size": 32,
    "max_steps": 2000,
    "seed": 0,
    "lambda": 0.0,
    "task": "reconstruct",
    "augment": "none",
    "precision": 64,
}

FULL_ARCH = {"d_model": 512, "ffn_dim": 2048, "n_heads": 8}


@dataclass
class CliConfig:
    """Resolved run settings; ``explicit`` records keys set by a file or flag."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, value) -> None:
        self.values[key] = value
        self.explicit.add(key)


def parse_config(text: str) -> CliConfig:
    """Parse ``key = value`` lines over the defaults; ``#`` starts a comment."""
    conf = CliConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        try:
            parsed = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: bad value for {key}: {exc}") from exc
        if key in conf.explicit:
            log.warning("config line %d: duplicate key %r, last value wins", lineno, key)
        conf.set(key, parsed)
    return conf


def resolve_config(config_path: str | None, flags: dict, full: bool = False) -> CliConfig:
    """Defaults, then the full-size architecture (if asked), then file, then flags."""
    text = ""
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
    conf = parse_config(text)
    if full:
        for key, value in FULL_ARCH.items():
            if key not in conf.explicit:
                conf.values[key] = value
    for key, value in flags.items():
        if value is not None:
            conf.set(key, value)
    return conf


def _flag_type(key):
    parse = CONFIG_KEYS[key]

    def wrapped(text):
        try:
            return parse(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    wrapped.__name__ = key
    return wrapped


def _read_sentences(path) -> list[str]:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: malformed UTF-8") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r").split("\t", 1)[0] for line in lines]


def cmd_classify(args) -> int:
    for sentence in _read_sentences(args.file):
        print(classify_formality(sentence).code)
    return EXIT_OK


def cmd_convert(args) -> int:
    target = FormalityLabel.from_code(args.target)
    for lineno, sentence in enumerate(_read_sentences(args.file), start=1):
        try:
            print(convert_formality(sentence, target))
        except RuleError as exc:
            log.warning("line %d: %s", lineno, exc)
            print()
    return EXIT_OK


def cmd_annotate(args) -> int:
    annotated = annotate_corpus(load_raw_corpus(args.input))
    kept = filter_unknown(annotated)
    write_annotated(args.output, kept)
    log.info("annotated %d sentences, removed %d unknown", len(annotated), len(annotated) - len(kept))
    return EXIT_OK


def cmd_split(args) -> int:
    data = read_annotated(args.input)
    split = split_corpus(data, args.dev, args.test, args.seed)
    write_split(args.out_dir, split)
    log.info("train %d / dev %d / test %d", len(split.train), len(split.dev), len(split.test))
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    data = read_annotated(args.input)
    if args.column == "en":
        if any(s.en is None for s in data):
            raise DataError(f"{args.input}: English column missing")
        texts = [s.en for s in data]
    else:
        texts = [s.ja for s in data]
    vocab = build_vocab(texts, Granularity(args.granularity), args.min_count)
    vocab.save(args.output)
    log.info("vocabulary of %d tokens written to %s", len(vocab), args.output)
    return EXIT_OK


def _vocab_for(path_dir, data, column, granularity):
    path = os.path.join(path_dir, JA_VOCAB_NAME if column == "ja" else EN_VOCAB_NAME)
    if os.path.exists(path):
        return Vocab.load(path, granularity)
    texts = [getattr(s, column) for s in data]
    if any(t is None for t in texts):
        raise DataError("training data lacks the English column")
    vocab = build_vocab(texts, granularity)
    vocab.save(path)
    return vocab


def cmd_train(args) -> int:
    import torch

    from .checkpoint import load_checkpoint, save_checkpoint
    from .model import ModelConfig
    from .objectives import ObjectiveConfig, Task
    from .system import build_system
    from .trainer import TrainConfig, pretrain_probe_classifier, train, write_step_log

    flags = {key: getattr(args, key.replace("lambda", "lam")) for key in CONFIG_KEYS}
    conf = resolve_config(args.config, flags, full=args.full_size)
    try:
        objective = ObjectiveConfig(Task(conf["task"]), conf["lambda"], AUGMENTS[conf["augment"]])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    torch.set_num_threads(1)

    os.makedirs(args.out_dir, exist_ok=True)
    data = read_annotated(args.train)
    dev = read_annotated(args.dev) if args.dev else None
    bt = objective.task is Task.BACKTRANSLATE
    ja_vocab = _vocab_for(args.out_dir, data, "ja", Granularity.CHAR)
    en_vocab = _vocab_for(args.out_dir, data, "en", Granularity.WORD) if bt else None
    tc = TrainConfig(
        batch_size=conf["batch_size"], max_steps=conf["max_steps"], seed=conf["seed"],
        precision=conf["precision"], checkpoint_every=args.checkpoint_every, lr=conf["lr"],
    )
    ckpt_path = os.path.join(args.out_dir, CHECKPOINT_NAME)
    state = None
    if args.resume and os.path.exists(ckpt_path):
        system, state, saved = load_checkpoint(ckpt_path)
        tc.seed, tc.batch_size, tc.precision, tc.lr = saved.seed, saved.batch_size, saved.precision, saved.lr
        log.info("resuming from step %d", state.t if state else 0)
    else:
        try:
            cfg = ModelConfig(
                vocab_src=len(ja_vocab), vocab_tgt=len(ja_vocab), d_model=conf["d_model"],
                n_heads=conf["n_heads"], n_layers=conf["n_layers"], ffn_dim=conf["ffn_dim"],
                dropout=conf["dropout"],
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        classifier = None
        if objective.task.needs_classifier:
            clf_cfg = TrainConfig(batch_size=tc.batch_size, max_steps=args.classifier_steps,
                                  seed=tc.seed, precision=tc.precision, lr=tc.lr)
            log.info("pre-training the formality classifier for %d steps", args.classifier_steps)
            classifier = pretrain_probe_classifier(data, ja_vocab, cfg, clf_cfg)
        system = build_system(cfg, objective, seed=tc.seed,
                              en_vocab_size=len(en_vocab) if bt else None,
                              classifier=classifier, dtype=tc.dtype)

    def checkpoint(st):
        save_checkpoint(ckpt_path, system, st, tc)

    result = train(system, data, ja_vocab, tc, en_vocab=en_vocab, state=state, dev=dev,
                   checkpoint=checkpoint)
    save_checkpoint(ckpt_path, system, result.state, tc)
    resumed = state is not None
    write_step_log(os.path.join(args.out_dir, "steps.tsv"), result.log, append=resumed)
    if result.dev_log:
        write_step_log(os.path.join(args.out_dir, "dev.tsv"), result.dev_log, append=resumed)
    if result.log:
        last = result.log[-1]
        log.info("step %d: loss %.4f (rec %.4f, form %.4f)", last.step, last.loss, last.rec_loss, last.form_loss)
    return EXIT_OK


def _load_for_decoding(checkpoint_path):
    from .checkpoint import load_checkpoint

    system, _, _ = load_checkpoint(checkpoint_path)
    directory = os.path.dirname(os.path.abspath(checkpoint_path))
    ja_vocab = Vocab.load(os.path.join(directory, JA_VOCAB_NAME), Granularity.CHAR)
    en_vocab = None
    if system.en_vocab_size:
        en_vocab = Vocab.load(os.path.join(directory, EN_VOCAB_NAME), Granularity.WORD)
    return system, ja_vocab, en_vocab


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate
    from .system import translate

    system, ja_vocab, en_vocab = _load_for_decoding(args.checkpoint)
    data = read_annotated(os.path.join(args.data_dir, f"{args.split}.tsv"))
    if not data:
        raise DataError(f"{args.split} split is empty")

    def decode(sentences):
        # the stored annotation selects the augmentation vector
        styles = [s.label.bit for s in sentences]
        return translate(system, [s.ja for s in sentences], ja_vocab, en_vocab, styles)

    report = evaluate(decode, data)
    sys.stdout.write(report.text())
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.tsv())
    return EXIT_OK


def cmd_decode(args) -> int:
    from .system import resolve_styles, translate

    system, ja_vocab, en_vocab = _load_for_decoding(args.checkpoint)
    sentences = _read_sentences(args.file)
    override = FormalityLabel.from_code(args.formality) if args.formality else None
    styles = resolve_styles(sentences, override)
    for out in translate(system, sentences, ja_vocab, en_vocab, styles):
        print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="keigoseq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    add = sub.add_parser

    def sub_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = sub_parser

    p = sub.add_parser("classify", help="print F/I/U for each line of a file")
    p.add_argument("file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("convert", help="re-conjugate each line to the target formality")
    p.add_argument("file")
    p.add_argument("--target", choices=["F", "I"], required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("annotate", help="label a raw corpus and drop unknowns")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("split", help="deterministic train/dev/test split")
    p.add_argument("input")
    p.add_argument("--dev", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "build-vocab",
        help="write a vocab file",
        description="Vocab file: the lines <pad>, <s>, </s>, <unk> (ids 0-3), then one token per line.",
    )
    p.add_argument("input", help="annotated TSV")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--column", choices=["ja", "en"], default="ja")
    p.add_argument("--granularity", choices=["char", "word"], default="char")
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model on an annotated corpus")
    p.add_argument("--train", required=True, help="annotated TSV")
    p.add_argument("--dev", help="annotated TSV for dev-loss logging")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="file of 'key = value' lines")
    p.add_argument("--full-size", action="store_true", help="d_model 512, ffn 2048, 8 heads")
    p.add_argument("--task", type=_flag_type("task"))
    p.add_argument("--augment", type=_flag_type("augment"))
    p.add_argument("--lambda", dest="lam", type=_flag_type("lambda"))
    for key in ("d_model", "n_heads", "n_layers", "ffn_dim", "dropout", "lr", "batch_size",
                "max_steps", "seed", "precision"):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=_flag_type(key))
    p.add_argument("--classifier-steps", type=int, default=500)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="BLEU and formality correctness on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["dev", "test"], required=True)
    p.add_argument("--data-dir", default=".", help="directory holding dev.tsv/test.tsv")
    p.add_argument("--report", help="also write the report as TSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decode", help="greedy-decode each line of a file")
    p.add_argument("file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--formality", choices=["F", "I"], help="override the augmentation label")
    p.set_defaults(func=cmd_decode)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"keigoseq: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"keigoseq: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"keigoseq: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"keigoseq: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())
