"""Command-line entry point.

Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attention import SelectionMode
from .corpus import Vocabulary, build_vocab, encode_corpus, read_lines
from .exceptions import AmsrnError
from .trace import render, trace_record, write_traces
from .training import Checkpoint, TrainConfig, evaluate, sentence_ranking, train_amsrn, train_lstm

log = logging.getLogger("amsrn")

ABLATION_MODES = ("independent", "tied", "complement")


class UsageError(Exception):
    pass


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return v


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--valid", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=_nonneg_int, default=10)
    p.add_argument("--lr", type=_positive_float, default=0.1)
    p.add_argument("--clip", type=_positive_float, default=5.0)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--patience", type=_positive_int, default=None)
    p.add_argument("--metrics", type=Path, default=None,
                   help="per-epoch metrics log (tab-separated, appended); default OUT.metrics.tsv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amsrn", description="Attention-based memory selection LSTM language models")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a training corpus")
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--max-vocab", type=_nonneg_int, default=None)
    p.add_argument("--min-count", type=_positive_int, default=1)

    p = sub.add_parser("train-lstm", help="pretrain the LSTM language model")
    _add_training_flags(p)
    p.add_argument("--d", type=_positive_int, default=50)
    p.add_argument("--zero-output-init", action="store_true")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train-amsrn", help="train the attention model from a pretrained LSTM")
    _add_training_flags(p)
    p.add_argument("--init-lstm", required=True, type=Path)
    p.add_argument("--d", type=_positive_int, default=None, help="must match the LSTM checkpoint")
    p.add_argument("--mode", choices=[m.value for m in SelectionMode], default="tied")
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("eval", help="perplexity of a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None, help="per-sentence NLL (tab-separated)")

    p = sub.add_parser("ablate", help="compare the three memory-selection modes")
    _add_training_flags(p)
    p.add_argument("--init-lstm", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--d", type=_positive_int, default=None)
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.0)
    p.add_argument("--out", required=True, type=Path, help="comparison table (tab-separated)")

    p = sub.add_parser("trace", help="export attention weights and a highlighted rendering")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="trace file (JSON lines)")
    p.add_argument("--render", type=Path, default=None, help="text rendering; default stdout")
    p.add_argument("--threshold", type=_positive_float, default=None,
                   help="highlight weights above this value (default 2/t)")
    p.add_argument("--verbose-trace", action="store_true", help="include full w1/w2 vectors")

    p = sub.add_parser("rank-improvements", help="rank sentences by NLL reduction over a baseline")
    p.add_argument("--baseline", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--top", type=_positive_int, default=None)
    return parser


# ---------------------------------------------------------------------------

def _corpus(path: Path, vocab: Vocabulary):
    enc = encode_corpus(vocab, read_lines(path))
    if enc.skipped:
        log.warning("%s: skipped %d empty line(s)", path, enc.skipped)
    if not enc.sentences:
        raise UsageError(f"{path}: no sentences")
    return enc.sentences


def _metrics_path(args) -> Path:
    return args.metrics if args.metrics is not None else Path(f"{args.out}.metrics.tsv")


def _config(args, d: int, **extra) -> TrainConfig:
    return TrainConfig(d=d, lr=args.lr, optimizer=args.optimizer, epochs=args.epochs, clip=args.clip,
                       seed=args.seed, patience=args.patience, **extra)


def _load_lstm(args) -> Checkpoint:
    ckpt = Checkpoint.load(args.init_lstm)
    if ckpt.kind != "lstm":
        raise UsageError(f"{args.init_lstm} is not an LSTM checkpoint")
    if args.d is not None and args.d != ckpt.lstm.d:
        raise UsageError(f"--d {args.d} does not match the checkpoint (d={ckpt.lstm.d})")
    return ckpt


def cmd_build_vocab(args) -> None:
    vocab = build_vocab(read_lines(args.train), args.max_vocab, args.min_count)
    vocab.save(args.out)
    print(f"vocabulary: {len(vocab)} entries -> {args.out}")


def cmd_train_lstm(args) -> None:
    vocab = Vocabulary.load(args.vocab)
    train, valid = _corpus(args.train, vocab), _corpus(args.valid, vocab)
    config = _config(args, args.d, zero_output_init=args.zero_output_init)
    ckpt = train_lstm(config, train, valid, vocab, metrics_path=_metrics_path(args), vocab_path=args.vocab)
    ckpt.save(args.out)
    print(f"best epoch {ckpt.metadata['epoch']}: valid PPL {ckpt.metadata['best_valid_ppl']:.4f} -> {args.out}")


def cmd_train_amsrn(args) -> None:
    init = _load_lstm(args)
    vocab = Vocabulary.load(args.vocab)
    train, valid = _corpus(args.train, vocab), _corpus(args.valid, vocab)
    config = _config(args, init.lstm.d, lam=args.lam, mode=args.mode)
    ckpt = train_amsrn(config, init, train, valid, vocab, metrics_path=_metrics_path(args), vocab_path=args.vocab)
    ckpt.save(args.out)
    print(f"best epoch {ckpt.metadata['epoch']}: valid PPL {ckpt.metadata['best_valid_ppl']:.4f} -> {args.out}")


def cmd_eval(args) -> None:
    ckpt = Checkpoint.load(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    res = evaluate(ckpt, _corpus(args.test, vocab), vocab)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("sentence\ttokens\tnll\n")
            for i, (n, c) in enumerate(zip(res.sentence_nll, res.token_counts)):
                fh.write(f"{i}\t{c}\t{n!r}\n")
    print(f"PPL {res.ppl:.6f}  ({res.n_tokens} tokens, {len(res.token_counts)} sentences)")


def cmd_ablate(args) -> None:
    init = _load_lstm(args)
    vocab = Vocabulary.load(args.vocab)
    train, valid, test = (_corpus(p, vocab) for p in (args.train, args.valid, args.test))
    lstm_valid = evaluate(init, valid, vocab).ppl
    lstm_test = evaluate(init, test, vocab).ppl
    rows = []
    for mode in ABLATION_MODES:
        config = _config(args, init.lstm.d, lam=args.lam, mode=mode)
        metrics = Path(f"{args.out}.{mode}.metrics.tsv")
        ckpt = train_amsrn(config, init, train, valid, vocab, metrics_path=metrics, vocab_path=args.vocab)
        rows.append((mode, ckpt.history[0]["valid_ppl"], ckpt.metadata["best_valid_ppl"],
                     evaluate(ckpt, test, vocab).ppl, ckpt.metadata["epoch"], ckpt.n_params))
    header = ("mode", "init_valid_ppl", "valid_ppl", "test_ppl", "best_epoch", "n_params")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("# pretrained LSTM: valid_ppl=%r test_ppl=%r\n" % (lstm_valid, lstm_test))
        fh.write("\t".join(header) + "\n")
        for r in rows:
            fh.write("\t".join(repr(x) if isinstance(x, float) else str(x) for x in r) + "\n")
    print(f"{'mode':<12} {'valid PPL':>10} {'test PPL':>10}")
    print(f"{'lstm':<12} {lstm_valid:>10.3f} {lstm_test:>10.3f}")
    for r in rows:
        print(f"{r[0]:<12} {r[2]:>10.3f} {r[3]:>10.3f}")


def cmd_trace(args) -> None:
    ckpt = Checkpoint.load(args.checkpoint)
    if ckpt.amsrn is None:
        raise UsageError(f"{args.checkpoint} has no attention head")
    vocab = Vocabulary.load(args.vocab)
    sentences = _corpus(args.test, vocab)
    res = evaluate(ckpt, sentences, vocab, traces=True)
    records = [trace_record(vocab, tr, s.targets, index=i, verbose=args.verbose_trace)
               for i, (s, tr) in enumerate(zip(sentences, res.traces))]
    with open(args.out, "w", encoding="utf-8") as fh:
        write_traces(fh, records)
    text = "".join(render(r, args.threshold) for r in records)
    if args.render is not None:
        Path(args.render).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_rank_improvements(args) -> None:
    base, model = Checkpoint.load(args.baseline), Checkpoint.load(args.model)
    vocab = Vocabulary.load(args.vocab)
    lines = [line for line in read_lines(args.test) if line.split()]
    sentences = _corpus(args.test, vocab)
    b = evaluate(base, sentences, vocab).sentence_nll
    m = evaluate(model, sentences, vocab).sentence_nll
    ranked = sentence_ranking(b, m)
    if args.top is not None:
        ranked = ranked[:args.top]
    out = "rank\tsentence\timprovement\tbaseline_nll\tmodel_nll\ttext\n" + "".join(
        f"{r}\t{i}\t{g!r}\t{b[i]!r}\t{m[i]!r}\t{lines[i]}\n" for r, (i, g) in enumerate(ranked, 1))
    if args.out is not None:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "train-lstm": cmd_train_lstm,
    "train-amsrn": cmd_train_amsrn,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "trace": cmd_trace,
    "rank-improvements": cmd_rank_improvements,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"amsrn {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (AmsrnError, OSError, ValueError) as e:
        print(f"amsrn {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
