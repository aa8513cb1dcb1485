"""Command-line orchestration: vocab building, segmenter training, embedding
training, probing, and the data-scarcity simulation grid.

Exit codes: 0 success, 1 bad input (single-line diagnostic), 2 internal
assertion. Partial artifacts are removed when a command fails.
"""

from __future__ import annotations

import argparse
import os
import shutil
import statistics
import sys
from pathlib import Path

from subtok.corpus import (
    build_vocab,
    data_group_for,
    load_corpus,
    sample_tokens,
)
from subtok.errors import FormatError, SubtokError
from subtok.model import (
    ModelConfig,
    SubwordModel,
    build_segmenter,
    export_vectors,
    load_checkpoint,
    save_checkpoint,
)
from subtok.probe import (
    eval_mention_accuracy,
    eval_tag_accuracy,
    load_conll,
    load_mentions,
    span_f1,
    tag_sentences,
    train_mention_probe,
    train_tagger_probe,
    write_metrics,
)
from subtok.segment import BpeModel, MorfModel, segment_word
from subtok.train import TrainConfig, train

SIMULATE_COLUMNS = [
    "we_tokens", "task_instances", "config", "seed", "group", "batch_size",
    "epochs", "min_count", "task", "split", "metric", "value", "status",
]

CONFIG_ALIASES = {
    "w2v": "word:w-:p-",  # subword-agnostic skip-gram baseline
    "ft": "charn:w+:p-",  # fastText-style configuration
}


class ArtifactGuard:
    """Tracks artifacts written by a command so they can be removed if the
    command fails part-way."""

    def __init__(self):
        self.paths: list[Path] = []

    def register(self, path) -> Path:
        p = Path(path)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink(missing_ok=True)


def data_dir() -> Path:
    return Path(os.environ.get("SUBTOK_DATA_DIR", "."))


def default_out(args, name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return data_dir() / name


def parse_config_label(label: str) -> ModelConfig:
    """Parse `seg[:w+|w-][:p+|p-]` (seg in morf|charn|word|bpeN|bpe1eK) or
    the aliases w2v / ft into a ModelConfig."""
    label = CONFIG_ALIASES.get(label, label)
    parts = label.split(":")
    seg = parts[0]
    kwargs: dict = {"word_token": False, "position": False}
    if seg.startswith("bpe"):
        kwargs["segmenter"] = "bpe"
        suffix = seg[3:]
        if not suffix:
            raise SubtokError(f"bpe config label needs a merge count: {label!r}")
        kwargs["num_merges"] = int(float(suffix))
    elif seg in ("morf", "charn", "word"):
        kwargs["segmenter"] = seg
    else:
        raise SubtokError(f"unknown config label {label!r}")
    for part in parts[1:]:
        if part == "w+":
            kwargs["word_token"] = True
        elif part == "w-":
            kwargs["word_token"] = False
        elif part == "p+":
            kwargs["position"] = True
        elif part == "p-":
            kwargs["position"] = False
        else:
            raise SubtokError(f"unknown config flag {part!r} in {label!r}")
    return ModelConfig(**kwargs)


def model_config_from_args(args) -> ModelConfig:
    return ModelConfig(
        segmenter=args.seg,
        num_merges=args.merges,
        ngram_min=args.ngram_min,
        ngram_max=args.ngram_max,
        word_token=args.word_token,
        position=args.position,
        dim=args.dim,
        max_positions=args.max_positions,
        seed=args.seed,
    )


def add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--seg", choices=("morf", "bpe", "charn", "word"),
                   default="charn")
    p.add_argument("--merges", type=int, default=10_000,
                   help="BPE merge operations (bpe only)")
    p.add_argument("--ngram-min", type=int, default=3)
    p.add_argument("--ngram-max", type=int, default=6)
    p.add_argument("--word-token", action=argparse.BooleanOptionalAction,
                   default=False, help="append the word itself (w+/w-)")
    p.add_argument("--position", action=argparse.BooleanOptionalAction,
                   default=False, help="additive position embeddings (p+/p-)")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--max-positions", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)


def add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--subsample-t", type=float, default=1e-5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--epochs", type=int, default=None,
                   help="override the data-group epoch count")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--min-count", type=int, default=None)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_vocab(args, guard: ArtifactGuard) -> int:
    corpus = load_corpus(args.corpus)
    if args.we_tokens:
        corpus = sample_tokens(corpus, args.we_tokens)
    vocab = build_vocab(corpus, args.min_count)
    out = guard.register(default_out(args, "vocab.tsv"))
    vocab.save_tsv(out)
    print(f"wrote {len(vocab)} entries to {out}")
    return 0


def cmd_segment_learn(args, guard: ArtifactGuard) -> int:
    corpus = load_corpus(args.corpus)
    vocab = build_vocab(corpus, args.min_count)
    if args.seg == "bpe":
        model = build_segmenter(
            ModelConfig(segmenter="bpe", num_merges=args.merges), vocab)
        out = guard.register(default_out(args, "bpe.txt"))
        model.save(out)
        print(f"learned {len(model.merges)} merges -> {out}")
    elif args.seg == "morf":
        model = build_segmenter(ModelConfig(segmenter="morf"), vocab,
                                max_iters=args.max_iters)
        out = guard.register(default_out(args, "morf.tsv"))
        model.save(out)
        print(f"learned {len(model.morph_lexicon)} morphs "
              f"(cost {model.corpus_cost:.2f}) -> {out}")
    else:
        raise SubtokError(f"segmenter {args.seg!r} requires no learning")
    return 0


def _load_segmenter(args):
    if args.seg == "bpe":
        if not args.model:
            raise SubtokError("--model is required for --seg bpe")
        return BpeModel.load(args.model)
    if args.seg == "morf":
        if not args.model:
            raise SubtokError("--model is required for --seg morf")
        return MorfModel.load(args.model)
    cfg = ModelConfig(segmenter=args.seg, ngram_min=args.ngram_min,
                      ngram_max=args.ngram_max)
    return build_segmenter(cfg, vocab=None)


def cmd_segment_apply(args, guard: ArtifactGuard) -> int:
    segmenter = _load_segmenter(args)
    words = args.words or [w for line in sys.stdin for w in line.split()]
    for word in words:
        seg = segment_word(segmenter, word, args.word_token)
        parts = list(seg.subwords)
        if seg.includes_word_token:
            parts.append(f"[{word}]")
        print(word + "\t" + " ".join(parts))
    return 0


def cmd_train(args, guard: ArtifactGuard) -> int:
    corpus = load_corpus(args.corpus)
    if args.we_tokens:
        corpus = sample_tokens(corpus, args.we_tokens)
    group = data_group_for(corpus.token_count)
    min_count = args.min_count if args.min_count else group.min_count
    epochs = args.epochs if args.epochs is not None else group.epochs
    batch_size = args.batch_size if args.batch_size else group.batch_size

    vocab = build_vocab(corpus, min_count)
    config = model_config_from_args(args)
    model = SubwordModel.build(config, vocab)
    tcfg = TrainConfig(window=args.window, negatives=args.negatives,
                       lr_start=args.lr, epochs=epochs,
                       batch_size=batch_size, min_count=min_count,
                       subsample_t=args.subsample_t, threads=args.threads,
                       seed=args.seed)
    result = train(corpus, model, tcfg)
    out = guard.register(default_out(args, "checkpoint"))
    save_checkpoint(model, out)
    result.save_trace(Path(out) / "trace.tsv")
    print(f"trained {config.label} on {corpus.token_count} tokens "
          f"({group.label}: batch {batch_size}, {epochs} epochs, "
          f"min_count {min_count}); {result.processed_pairs} updates -> {out}")
    return 0


def cmd_export(args, guard: ArtifactGuard) -> int:
    model = load_checkpoint(args.checkpoint)
    out = guard.register(default_out(args, "vectors.txt"))
    export_vectors(model, out)
    print(f"wrote {len(model.vocab)} vectors to {out}")
    return 0


def _truncate_train_split(data, n: int | None):
    if n is None:
        return data
    if n < 1:
        raise SubtokError("--task-instances must be >= 1")
    data.splits["train"] = data.splits["train"][:n]
    return data


def run_probe(model, task: str, data_path, task_instances=None,
              window: int = 1, epochs: int = 100, lr: float = 0.5,
              fine_tune: bool = False, seed: int = 0):
    """Train and evaluate one probe; returns metric rows."""
    label = model.config.label
    rows = []
    if task == "mentions":
        data = _truncate_train_split(load_mentions(data_path, seed=seed),
                                     task_instances)
        probe = train_mention_probe(model, data, epochs=epochs, lr=lr,
                                    fine_tune=fine_tune, seed=seed)
        for split in ("dev", "test"):
            acc = eval_mention_accuracy(probe, model, data, split)
            rows.append(("fget", label, split, "accuracy", acc))
        return rows
    if task != "conll":
        raise SubtokError(f"unknown task {task!r}")
    data = _truncate_train_split(load_conll(data_path, seed=seed),
                                 task_instances)
    probe = train_tagger_probe(model, data, window=window, epochs=epochs,
                               lr=lr, fine_tune=fine_tune, seed=seed)
    task_name = "ner" if data.scheme == "BIO" else "mtag"
    for split in ("dev", "test"):
        sents = data.split_sentences(split)
        if data.scheme == "BIO":
            preds = tag_sentences(probe, model, sents)
            p, r, f1 = span_f1([labs for _, labs in sents], preds)
            rows.append((task_name, label, split, "precision", p))
            rows.append((task_name, label, split, "recall", r))
            rows.append((task_name, label, split, "f1", f1))
        else:
            acc = eval_tag_accuracy(probe, model, data, split)
            rows.append((task_name, label, split, "accuracy", acc))
    return rows


def cmd_probe(args, guard: ArtifactGuard) -> int:
    model = load_checkpoint(args.checkpoint)
    rows = run_probe(model, args.task, args.data,
                     task_instances=args.task_instances,
                     window=args.probe_window, epochs=args.epochs,
                     lr=args.lr, fine_tune=args.fine_tune, seed=args.seed)
    out = guard.register(default_out(args, "metrics.tsv"))
    write_metrics(out, rows)
    for row in rows:
        print("\t".join(str(x) for x in row))
    return 0


# -- simulate ---------------------------------------------------------------


def _read_existing_cells(path: Path) -> set[tuple]:
    cells = set()
    if not path.exists():
        return cells
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != SIMULATE_COLUMNS:
            raise FormatError(f"unexpected metrics header in {path}")
        for line in fh:
            vals = dict(zip(SIMULATE_COLUMNS, line.rstrip("\n").split("\t")))
            cells.add((vals["we_tokens"], vals["task_instances"],
                       vals["config"], vals["seed"]))
    return cells


def cmd_simulate(args, guard: ArtifactGuard) -> int:
    corpus = load_corpus(args.corpus)
    we_points = [int(x) for x in args.we_tokens.split(",")]
    task_points = [int(x) for x in args.task_instances.split(",")]
    configs = args.configs.split(",")
    seeds = [int(x) for x in args.seeds.split(",")]
    if corpus.token_count < max(we_points):
        raise SubtokError(
            f"corpus has {corpus.token_count} tokens; largest WE point is "
            f"{max(we_points)}")

    out_dir = Path(args.out) if args.out else data_dir() / "simulate"
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.tsv"
    done = _read_existing_cells(metrics_path)
    new_file = not metrics_path.exists()

    n_run = n_skipped = 0
    with open(metrics_path, "a", encoding="utf-8") as fh:
        if new_file:
            fh.write("\t".join(SIMULATE_COLUMNS) + "\n")
        for we_n in we_points:
            for task_n in task_points:
                for label in configs:
                    for seed in seeds:
                        key = (str(we_n), str(task_n),
                               parse_config_label(label).label, str(seed))
                        if key in done:
                            n_skipped += 1
                            continue
                        for row in _simulate_cell(args, corpus, we_n, task_n,
                                                  label, seed):
                            fh.write("\t".join(str(x) for x in row) + "\n")
                        fh.flush()
                        n_run += 1
    print(f"simulate: {n_run} cells computed, {n_skipped} skipped -> "
          f"{metrics_path}")
    return 0


def _simulate_cell(args, corpus, we_n, task_n, label, seed):
    base_cfg = parse_config_label(label)
    group = data_group_for(we_n)
    epochs = args.train_epochs if args.train_epochs is not None \
        else group.epochs
    cell = [str(we_n), str(task_n), base_cfg.label, str(seed), group.label,
            str(group.batch_size), str(group.epochs), str(group.min_count)]
    try:
        sample = sample_tokens(corpus, we_n)
        vocab = build_vocab(sample, group.min_count)
        cfg = ModelConfig(
            segmenter=base_cfg.segmenter, num_merges=base_cfg.num_merges,
            word_token=base_cfg.word_token, position=base_cfg.position,
            dim=args.dim, seed=seed)
        model = SubwordModel.build(cfg, vocab)
        tcfg = TrainConfig(window=args.window, negatives=args.negatives,
                           lr_start=args.lr, epochs=epochs,
                           batch_size=group.batch_size,
                           min_count=group.min_count,
                           subsample_t=args.subsample_t,
                           threads=args.threads, seed=seed)
        train(sample, model, tcfg)
        task = "mentions" if args.mentions else "conll"
        data_path = args.mentions or args.conll
        rows = run_probe(model, task, data_path, task_instances=task_n,
                         epochs=args.probe_epochs, seed=seed)
    except SubtokError as exc:
        return [cell + ["-", "-", "-", "0", f"failed:{exc}"]]
    out = []
    for task_name, _, split, metric, value in rows:
        if split != "test":
            continue
        out.append(cell + [task_name, split, metric, f"{value:.6f}", "ok"])
    return out


def cmd_report(args, guard: ArtifactGuard) -> int:
    path = Path(args.metrics)
    if not path.exists():
        raise SubtokError(f"no metrics table at {path}")
    groups: dict[tuple, list[float]] = {}
    failed: dict[tuple, int] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != SIMULATE_COLUMNS:
            raise FormatError(f"unexpected metrics header in {path}")
        for line in fh:
            vals = dict(zip(SIMULATE_COLUMNS, line.rstrip("\n").split("\t")))
            key = (vals["we_tokens"], vals["task_instances"], vals["config"],
                   vals["task"], vals["split"], vals["metric"])
            if vals["status"] == "ok":
                groups.setdefault(key, []).append(float(vals["value"]))
            else:
                fkey = key[:3] + ("-", "-", "-")
                failed[fkey] = failed.get(fkey, 0) + 1
    if not groups and not failed:
        raise SubtokError(f"metrics table {path} is empty")
    out = guard.register(default_out(args, "summary.tsv"))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("we_tokens\ttask_instances\tconfig\ttask\tsplit\tmetric"
                 "\tmean\tstdev\tn\tn_failed\n")
        all_keys = sorted(set(groups) | set(failed))
        for key in all_keys:
            vals = groups.get(key, [])
            n_failed = failed.get(key[:3] + ("-", "-", "-"), 0)
            if vals:
                mean = statistics.mean(vals)
                stdev = statistics.pstdev(vals)
                fh.write("\t".join(key) +
                         f"\t{mean:.6f}\t{stdev:.6f}\t{len(vals)}"
                         f"\t{n_failed}\n")
            else:
                fh.write("\t".join(key) + f"\t-\t-\t0\t{n_failed}\n")
    print(f"wrote summary to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subtok",
        description="Subword-informed word embeddings and probes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="build a vocabulary TSV from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--we-tokens", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("segment-learn", help="train a BPE or morph model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seg", choices=("bpe", "morf"), required=True)
    p.add_argument("--merges", type=int, default=10_000)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment_learn)

    p = sub.add_parser("segment-apply", help="segment words to stdout")
    p.add_argument("--seg", choices=("morf", "bpe", "charn", "word"),
                   required=True)
    p.add_argument("--model", help="segmenter model file (bpe/morf)")
    p.add_argument("--ngram-min", type=int, default=3)
    p.add_argument("--ngram-max", type=int, default=6)
    p.add_argument("--word-token", action=argparse.BooleanOptionalAction,
                   default=False)
    p.add_argument("words", nargs="*")
    p.set_defaults(func=cmd_segment_apply)

    p = sub.add_parser("train", help="train subword-informed embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--we-tokens", type=int, default=None,
                   help="train on the first N tokens only")
    add_model_flags(p)
    add_train_flags(p)
    p.add_argument("--out", help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="export vectors in text format")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("probe", help="train/evaluate a probe on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=("mentions", "conll"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task-instances", type=int, default=None)
    p.add_argument("--probe-window", type=int, default=1)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--fine-tune", action=argparse.BooleanOptionalAction,
                   default=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("simulate", help="run the data-scarcity grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mentions", help="mention TSV for the fget probe")
    p.add_argument("--conll", help="CoNLL TSV for the ner/mtag probe")
    p.add_argument("--we-tokens", required=True,
                   help="comma list of WE token counts")
    p.add_argument("--task-instances", required=True,
                   help="comma list of task training sizes")
    p.add_argument("--configs", required=True,
                   help="comma list of config labels (e.g. charn:w+:p-,w2v)")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--subsample-t", type=float, default=1e-5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--train-epochs", type=int, default=None,
                   help="desk-scale override of the group epoch count")
    p.add_argument("--probe-epochs", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate simulate metrics over seeds")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and not (args.mentions or args.conll):
        print("subtok: simulate needs --mentions or --conll", file=sys.stderr)
        return 1
    guard = ArtifactGuard()
    try:
        return args.func(args, guard)
    except SubtokError as exc:
        guard.cleanup()
        print(f"subtok: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal assertion
        guard.cleanup()
        print(f"subtok: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
