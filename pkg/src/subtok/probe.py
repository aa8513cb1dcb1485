"""Linear probes over composed word vectors for the three downstream tasks:
mention typing (accuracy), morphological tagging (per-label accuracy), and
NER (BIO span F1)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from subtok.errors import FormatError, SubtokError
from subtok.model import SubwordModel

SCHEME_BIO = "BIO"
SCHEME_FULL_TAG = "full-tag"


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class MentionDataset:
    """Labeled token-sequence mentions with a seed-reproducible 60/20/20
    split."""

    examples: list[tuple[tuple[str, ...], str]]
    label_inventory: list[str]
    splits: dict[str, list[int]]
    seed: int = 0

    def split_examples(self, split: str):
        return [self.examples[i] for i in self.splits[split]]

    @classmethod
    def from_examples(cls, examples, seed: int = 0,
                      splits: dict[str, list[int]] | None = None
                      ) -> "MentionDataset":
        examples = [(tuple(toks), label) for toks, label in examples]
        for toks, _ in examples:
            if not toks:
                raise ValueError("empty token list in mention")
        labels = sorted({label for _, label in examples})
        if splits is None:
            splits = random_split(len(examples), seed)
        return cls(examples=examples, label_inventory=labels, splits=splits,
                   seed=seed)


def random_split(n: int, seed: int) -> dict[str, list[int]]:
    """Seeded 60/20/20 split indices."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(n * 0.6)
    n_dev = int(n * 0.2)
    return {
        "train": perm[:n_train].tolist(),
        "dev": perm[n_train:n_train + n_dev].tolist(),
        "test": perm[n_train + n_dev:].tolist(),
    }


def load_mentions(source, seed: int = 0) -> MentionDataset:
    """Parse `token token ...<TAB>label` lines into a MentionDataset with a
    deterministic seeded split. `source` is a path or an iterable of lines."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    examples = []
    for ln, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].split() or not parts[1]:
            raise FormatError("expected `token token ...<TAB>label`", ln)
        examples.append((tuple(parts[0].split()), parts[1]))
    return MentionDataset.from_examples(examples, seed=seed)


@dataclass
class TagDataset:
    """Token sequences with aligned labels; scheme is BIO or full-tag."""

    sentences: list[tuple[tuple[str, ...], tuple[str, ...]]]
    scheme: str
    splits: dict[str, list[int]] = field(default_factory=dict)

    def split_sentences(self, split: str):
        return [self.sentences[i] for i in self.splits[split]]

    @property
    def label_inventory(self) -> list[str]:
        return sorted({lab for _, labs in self.sentences for lab in labs})


def _is_bio_label(label: str) -> bool:
    return label == "O" or (len(label) > 2 and label[:2] in ("B-", "I-"))


def repair_bio(labels) -> tuple[str, ...]:
    """Promote stray I-X (sequence start, after O, or after a different
    type) to B-X."""
    out = []
    prev_type = None
    for lab in labels:
        if lab.startswith("I-"):
            t = lab[2:]
            if prev_type != t:
                lab = "B-" + t
            prev_type = t
        elif lab.startswith("B-"):
            prev_type = lab[2:]
        else:
            prev_type = None
        out.append(lab)
    return tuple(out)


def load_conll(source, seed: int = 0) -> TagDataset:
    """Parse `token<TAB>label` lines (blank line separates sentences). The
    scheme is BIO iff every label is O or B-/I- prefixed; invalid BIO
    sequences are repaired on load."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    sentences = []
    toks, labs = [], []
    for ln, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            if toks:
                sentences.append((tuple(toks), tuple(labs)))
                toks, labs = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise FormatError("expected `token<TAB>label`", ln)
        toks.append(parts[0])
        labs.append(parts[1])
    if toks:
        sentences.append((tuple(toks), tuple(labs)))
    all_labels = {lab for _, labs in sentences for lab in labs}
    scheme = SCHEME_BIO if all_labels and \
        all(_is_bio_label(l) for l in all_labels) else SCHEME_FULL_TAG
    if scheme == SCHEME_BIO:
        sentences = [(t, repair_bio(l)) for t, l in sentences]
    return TagDataset(sentences=sentences, scheme=scheme,
                      splits=random_split(len(sentences), seed))


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def mention_features(model: SubwordModel, tokens) -> np.ndarray:
    """Mean of composed token vectors."""
    vecs = [model.word_vector(t) for t in tokens]
    return np.mean(vecs, axis=0)


def window_features(model: SubwordModel, tokens, i: int,
                    window: int) -> np.ndarray:
    """Concatenated composed vectors at offsets -window..+window; zero vector
    past sentence boundaries."""
    d = model.config.dim
    parts = []
    for off in range(-window, window + 1):
        j = i + off
        if 0 <= j < len(tokens):
            parts.append(model.word_vector(tokens[j]))
        else:
            parts.append(np.zeros(d, dtype=np.float32))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Softmax probe
# ---------------------------------------------------------------------------


@dataclass
class SoftmaxProbe:
    weights: np.ndarray  # (n_labels, feature_dim)
    bias: np.ndarray  # (n_labels,)
    labels: list[str]
    feature_spec: str  # "mention-average" | "token-window"
    window: int = 0

    def predict_index(self, feat: np.ndarray) -> int:
        # np.argmax breaks ties by lowest index
        return int(np.argmax(self.weights @ feat + self.bias))

    def predict(self, feat: np.ndarray) -> str:
        return self.labels[self.predict_index(feat)]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _sgd_epoch(probe: SoftmaxProbe, feats, label_ids, lr, rng,
               backprop=None):
    order = rng.permutation(len(feats))
    for i in order:
        f = feats[i] if backprop is None else feats[i]()
        z = probe.weights @ f + probe.bias
        p = _softmax(z)
        p[label_ids[i]] -= 1.0
        grad_f = probe.weights.T @ p
        probe.weights -= lr * np.outer(p, f)
        probe.bias -= lr * p
        if backprop is not None:
            backprop(i, grad_f, lr)


def _fit_probe(probe: SoftmaxProbe, train_feats, train_ids, dev_feats,
               dev_ids, epochs, lr, rng, patience=5, backprop=None):
    """SGD with early stopping on dev accuracy (kept parameters are the best
    dev-scoring ones seen). With a `backprop` hook, features are re-computed
    per example (callables) and gradients flow into the embedding model."""
    def dev_acc():
        if not dev_ids:
            return 0.0
        feats = [f() if callable(f) else f for f in dev_feats]
        hits = sum(probe.predict_index(f) == y
                   for f, y in zip(feats, dev_ids))
        return hits / len(dev_ids)

    best_acc = dev_acc()
    best = (probe.weights.copy(), probe.bias.copy())
    bad = 0
    for _ in range(epochs):
        _sgd_epoch(probe, train_feats, train_ids, lr, rng, backprop=backprop)
        acc = dev_acc()
        if acc > best_acc + 1e-12:
            best_acc = acc
            best = (probe.weights.copy(), probe.bias.copy())
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                break
    if backprop is None:
        # frozen embeddings: restore the best dev-scoring probe
        probe.weights, probe.bias = best
    return probe


def train_mention_probe(model: SubwordModel, data: MentionDataset,
                        epochs: int = 100, lr: float = 0.5,
                        fine_tune: bool = False, seed: int = 0,
                        patience: int = 5) -> SoftmaxProbe:
    """Multinomial logistic regression over mention-mean features."""
    train_ex = data.split_examples("train")
    if not train_ex:
        raise SubtokError("empty training split")
    dev_ex = data.split_examples("dev")
    labels = data.label_inventory
    lab2id = {l: i for i, l in enumerate(labels)}
    d = model.config.dim
    probe = SoftmaxProbe(weights=np.zeros((len(labels), d)),
                         bias=np.zeros(len(labels)), labels=labels,
                         feature_spec="mention-average")
    rng = np.random.default_rng(seed)
    train_ids = [lab2id[l] for _, l in train_ex]
    dev_ids = [lab2id[l] for _, l in dev_ex]

    if fine_tune:
        train_feats = [
            (lambda toks=toks: mention_features(model, toks))
            for toks, _ in train_ex]
        dev_feats = [
            (lambda toks=toks: mention_features(model, toks))
            for toks, _ in dev_ex]

        def backprop(i, grad_f, plr):
            toks = train_ex[i][0]
            per_tok = (grad_f / len(toks)).astype(np.float32)
            for t in toks:
                model.apply_composed_grad(model.word_indices(t), per_tok, plr)
    else:
        train_feats = [mention_features(model, toks) for toks, _ in train_ex]
        dev_feats = [mention_features(model, toks) for toks, _ in dev_ex]
        backprop = None

    return _fit_probe(probe, train_feats, train_ids, dev_feats, dev_ids,
                      epochs, lr, rng, patience=patience, backprop=backprop)


def eval_mention_accuracy(probe: SoftmaxProbe, model: SubwordModel,
                          data: MentionDataset, split: str = "test") -> float:
    examples = data.split_examples(split)
    if not examples:
        return 0.0
    lab2id = {l: i for i, l in enumerate(probe.labels)}
    hits = 0
    for toks, label in examples:
        pred = probe.predict_index(mention_features(model, toks))
        if pred == lab2id.get(label, -1):
            hits += 1
    return hits / len(examples)


def train_tagger_probe(model: SubwordModel, data: TagDataset,
                       window: int = 1, epochs: int = 100, lr: float = 0.5,
                       fine_tune: bool = False, seed: int = 0,
                       patience: int = 5) -> SoftmaxProbe:
    """Per-token softmax over concatenated window features."""
    if window < 0:
        raise ValueError("window must be >= 0")
    train_sents = data.split_sentences("train")
    if not train_sents:
        raise SubtokError("empty training split")
    dev_sents = data.split_sentences("dev")
    labels = data.label_inventory
    lab2id = {l: i for i, l in enumerate(labels)}
    d = model.config.dim
    feat_dim = d * (2 * window + 1)
    probe = SoftmaxProbe(weights=np.zeros((len(labels), feat_dim)),
                         bias=np.zeros(len(labels)), labels=labels,
                         feature_spec="token-window", window=window)
    rng = np.random.default_rng(seed)

    def flatten(sents):
        items = []
        for toks, labs in sents:
            for i in range(len(toks)):
                items.append((toks, i, lab2id[labs[i]]))
        return items

    train_items = flatten(train_sents)
    dev_items = flatten(dev_sents)
    train_ids = [y for _, _, y in train_items]
    dev_ids = [y for _, _, y in dev_items]

    if fine_tune:
        train_feats = [
            (lambda toks=toks, i=i: window_features(model, toks, i, window))
            for toks, i, _ in train_items]
        dev_feats = [
            (lambda toks=toks, i=i: window_features(model, toks, i, window))
            for toks, i, _ in dev_items]

        def backprop(item_i, grad_f, plr):
            toks, i, _ = train_items[item_i]
            for s, off in enumerate(range(-window, window + 1)):
                j = i + off
                if 0 <= j < len(toks):
                    g = grad_f[s * d:(s + 1) * d].astype(np.float32)
                    model.apply_composed_grad(model.word_indices(toks[j]),
                                              g, plr)
    else:
        train_feats = [window_features(model, toks, i, window)
                       for toks, i, _ in train_items]
        dev_feats = [window_features(model, toks, i, window)
                     for toks, i, _ in dev_items]
        backprop = None

    return _fit_probe(probe, train_feats, train_ids, dev_feats, dev_ids,
                      epochs, lr, rng, patience=patience, backprop=backprop)


def tag_sentences(probe: SoftmaxProbe, model: SubwordModel, sentences):
    """Predicted label sequences for (tokens, labels) pairs."""
    out = []
    for toks, _ in sentences:
        out.append(tuple(
            probe.predict(window_features(model, toks, i, probe.window))
            for i in range(len(toks))))
    return out


def eval_tag_accuracy(probe: SoftmaxProbe, model: SubwordModel,
                      data: TagDataset, split: str = "test") -> float:
    """Per-label accuracy: a token is correct iff its entire tag string
    matches exactly (no partial credit)."""
    if data.scheme != SCHEME_FULL_TAG:
        raise SubtokError("per-label accuracy applies to full-tag data")
    sents = data.split_sentences(split)
    preds = tag_sentences(probe, model, sents)
    return per_label_accuracy([labs for _, labs in sents], preds)


def per_label_accuracy(gold_seqs, pred_seqs) -> float:
    total = hits = 0
    for gold, pred in zip(gold_seqs, pred_seqs):
        if len(gold) != len(pred):
            raise SubtokError("gold/pred length mismatch")
        for g, p in zip(gold, pred):
            total += 1
            hits += g == p
    return hits / total if total else 0.0


# ---------------------------------------------------------------------------
# Span F1
# ---------------------------------------------------------------------------


def decode_spans(labels) -> set[tuple[int, int, str]]:
    """Maximal B-X (I-X)* runs as (start, end, type); a stray I-X starts a
    new span of type X."""
    spans = set()
    start = None
    cur_type = None
    for i, lab in enumerate(labels):
        if lab.startswith("B-") or (lab.startswith("I-")
                                    and cur_type != lab[2:]):
            if cur_type is not None:
                spans.add((start, i - 1, cur_type))
            start, cur_type = i, lab[2:]
        elif lab.startswith("I-"):
            pass  # continues current span
        else:
            if cur_type is not None:
                spans.add((start, i - 1, cur_type))
            start, cur_type = None, None
    if cur_type is not None:
        spans.add((start, len(labels) - 1, cur_type))
    return spans


def span_f1(gold_seqs, pred_seqs) -> tuple[float, float, float]:
    """(precision, recall, F1) over exact (start, end, type) span matches;
    0/0 ratios are defined as 0."""
    n_gold = n_pred = n_match = 0
    if len(gold_seqs) != len(pred_seqs):
        raise SubtokError("gold/pred sequence count mismatch")
    for gold, pred in zip(gold_seqs, pred_seqs):
        if len(gold) != len(pred):
            raise SubtokError("gold/pred length mismatch")
        gs = decode_spans(gold)
        ps = decode_spans(pred)
        n_gold += len(gs)
        n_pred += len(ps)
        n_match += len(gs & ps)
    precision = n_match / n_pred if n_pred else 0.0
    recall = n_match / n_gold if n_gold else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def write_metrics(path: str | Path, rows) -> None:
    """TSV rows `task<TAB>config<TAB>split<TAB>metric<TAB>value`."""
    with open(path, "w", encoding="utf-8") as fh:
        for task, config, split, metric, value in rows:
            fh.write(f"{task}\t{config}\t{split}\t{metric}\t{value:.6f}\n")
