"""Skip-gram with negative sampling over subword-composed target vectors.

The target word vector is composed from subword (and position / word-token)
rows; the context side is the word-level context matrix. Two execution
contracts: a deterministic single-threaded mode (used by all tests) and a
lock-free multi-threaded mode where torn reads are tolerated.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from subtok.corpus import (
    Corpus,
    Vocab,
    negative_sampling_weights,
    subsample_keep_probs,
)
from subtok.errors import SubtokError
from subtok.model import SubwordModel

SCORE_CLAMP = 30.0
TRACE_EVERY = 10_000
EMA_ALPHA = 0.99


@dataclass
class TrainConfig:
    window: int = 5
    negatives: int = 5
    lr_start: float = 0.025
    epochs: int = 5
    batch_size: int = 32
    min_count: int = 2
    subsample_t: float = 1e-5
    power: float = 0.75
    threads: int = 1
    seed: int = 1

    def __post_init__(self):
        if self.window < 1 or self.negatives < 1:
            raise ValueError("window and negatives must be >= 1")
        if self.lr_start <= 0:
            raise ValueError("lr_start must be > 0")

    @property
    def lr_floor(self) -> float:
        return self.lr_start * 1e-4


@dataclass
class TrainResult:
    """Loss trace rows (update_count, lr, loss_ema) plus final counters."""

    loss_trace: list[tuple[int, float, float]] = field(default_factory=list)
    processed_pairs: int = 0
    final_lr: float = 0.0

    def save_trace(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for count, lr, ema in self.loss_trace:
                fh.write(f"{count}\t{lr:.8f}\t{ema:.6f}\n")


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sgns_loss(target_vec: np.ndarray, context_id: int,
              negative_ids, context_table: np.ndarray) -> float:
    """-log sigmoid(v.c+) - sum_j log sigmoid(-v.c-_j), dot products clamped
    to +-30 before the logistic."""
    negative_ids = np.asarray(negative_ids, dtype=np.int64)
    if negative_ids.size < 1:
        raise ValueError("need at least one negative id")
    pos = float(np.clip(target_vec @ context_table[context_id],
                        -SCORE_CLAMP, SCORE_CLAMP))
    neg = np.clip(context_table[negative_ids] @ target_vec,
                  -SCORE_CLAMP, SCORE_CLAMP)
    return float(-_log_sigmoid(np.float64(pos)) - _log_sigmoid(-neg).sum())


class NegativeSampler:
    """Draws negatives from the unigram^power distribution; negatives that
    collide with the positive id are resampled up to 10 times, then dropped."""

    def __init__(self, vocab: Vocab, power: float = 0.75):
        self.weights = negative_sampling_weights(vocab, power)
        self.cum = np.cumsum(self.weights)
        self.cum[-1] = 1.0

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.searchsorted(self.cum, rng.random(n), side="right")

    def draw_avoiding(self, rng: np.random.Generator, k: int,
                      positive: int) -> np.ndarray:
        negs = self.draw(rng, k)
        for _ in range(10):
            bad = negs == positive
            if not bad.any():
                break
            negs[bad] = self.draw(rng, int(bad.sum()))
        return negs[negs != positive]

    def draw_matrix(self, rng: np.random.Generator, positives: np.ndarray,
                    k: int) -> tuple[np.ndarray, np.ndarray]:
        """(negatives (n,k), valid mask) for a batch of positive ids."""
        n = positives.shape[0]
        negs = self.draw(rng, n * k).reshape(n, k)
        for _ in range(10):
            bad = negs == positives[:, None]
            nbad = int(bad.sum())
            if nbad == 0:
                break
            negs[bad] = self.draw(rng, nbad)
        return negs, negs != positives[:, None]


def sgns_step(model: SubwordModel, center_word: str, context_word: str,
              lr: float, k: int, sampler: NegativeSampler,
              rng: np.random.Generator) -> float:
    """One (center, context) SGD update: sample k negatives, push the
    composed-vector gradient unchanged into every constituent row, and update
    the touched context rows. Returns the pair loss."""
    vocab = model.vocab
    center_id = vocab.word2id.get(center_word)
    ctx_id = vocab.word2id.get(context_word)
    if center_id is None or ctx_id is None:
        raise SubtokError(
            f"both words must be in vocab: {center_word!r}, {context_word!r}")
    negs = sampler.draw_avoiding(rng, k, ctx_id)

    idx = model.word_indices(center_word)
    v = model.compose(idx)
    ctx_table = model.params.context
    ctx_ids = np.concatenate(([ctx_id], negs))
    crows = ctx_table[ctx_ids]
    scores = crows @ v
    live = np.abs(scores) < SCORE_CLAMP
    scores = np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP)
    sig = 1.0 / (1.0 + np.exp(-scores))
    loss = float(-_log_sigmoid(scores[0]) - _log_sigmoid(-scores[1:]).sum())

    g = sig.copy()
    g[0] -= 1.0
    g *= live  # clamped scores contribute no gradient
    grad_v = g @ crows
    grad_c = np.outer(g, v)
    np.subtract.at(ctx_table, ctx_ids, (lr * grad_c).astype(ctx_table.dtype))
    model.apply_composed_grad(idx, grad_v.astype(np.float32), lr)
    return loss


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------


class _WordCSR:
    """Flattened per-word subword/position row ids for batched gathering."""

    def __init__(self, model: SubwordModel):
        sub_chunks, pos_chunks, lens, wt = [], [], [], []
        for w in model.vocab.words:
            idx = model.word_indices(w)
            sub_chunks.append(idx.sub_ids)
            pos_chunks.append(idx.pos_ids)
            lens.append(idx.sub_ids.size)
            wt.append(idx.word_token_id)
        self.flat_sub = np.concatenate(sub_chunks) if sub_chunks else \
            np.empty(0, dtype=np.int64)
        self.flat_pos = np.concatenate(pos_chunks) if pos_chunks else \
            np.empty(0, dtype=np.int64)
        self.lens = np.asarray(lens, dtype=np.int64)
        self.starts = np.concatenate(([0], np.cumsum(self.lens)[:-1]))
        self.wt_ids = np.asarray(wt, dtype=np.int64)


def _token_stream(corpus: Corpus, vocab: Vocab):
    """Flat in-vocab token id array plus the sentence index of each token."""
    ids, sent_of = [], []
    si = 0
    for sent in corpus.sentences:
        any_kept = False
        for tok in sent:
            wid = vocab.word2id.get(tok)
            if wid is not None:
                ids.append(wid)
                sent_of.append(si)
                any_kept = True
        if any_kept:
            si += 1
    return (np.asarray(ids, dtype=np.int64),
            np.asarray(sent_of, dtype=np.int64))


def _epoch_pairs(stream_ids, sent_of, keep_probs, window, rng, subsampled):
    """Generate this epoch's (center, context) pairs: subsample tokens, draw
    a radius per kept token, pair within the kept sequence and sentence."""
    n = stream_ids.size
    if subsampled:
        kept_mask = rng.random(n) < keep_probs[stream_ids]
    else:
        kept_mask = np.ones(n, dtype=bool)
    ids = stream_ids[kept_mask]
    sents = sent_of[kept_mask]
    m = ids.size
    radii = rng.integers(1, window + 1, size=m) if m else \
        np.empty(0, dtype=np.int64)
    if m == 0:
        return (np.empty(0, dtype=np.int64),) * 2

    # position within sentence, and distance to sentence end
    change = np.empty(m, dtype=bool)
    change[0] = True
    change[1:] = sents[1:] != sents[:-1]
    group_start = np.maximum.accumulate(np.where(change, np.arange(m), 0))
    pos = np.arange(m) - group_start
    sizes = np.diff(np.append(np.flatnonzero(change), m))
    sent_len = np.repeat(sizes, sizes)
    from_end = sent_len - 1 - pos

    centers, ctxs = [], []
    for off in range(1, window + 1):
        left = (radii >= off) & (pos >= off)
        if left.any():
            i = np.flatnonzero(left)
            centers.append(ids[i])
            ctxs.append(ids[i - off])
        right = (radii >= off) & (from_end >= off)
        if right.any():
            i = np.flatnonzero(right)
            centers.append(ids[i])
            ctxs.append(ids[i + off])
    if not centers:
        return (np.empty(0, dtype=np.int64),) * 2
    centers = np.concatenate(centers)
    ctxs = np.concatenate(ctxs)
    perm = rng.permutation(centers.size)
    return centers[perm], ctxs[perm]


class Trainer:
    def __init__(self, corpus: Corpus, model: SubwordModel,
                 config: TrainConfig):
        self.corpus = corpus
        self.model = model
        self.config = config
        self.csr = _WordCSR(model)
        self.sampler = NegativeSampler(model.vocab, config.power)
        self.keep_probs = subsample_keep_probs(model.vocab,
                                               config.subsample_t)
        self.stream_ids, self.sent_of = _token_stream(corpus, model.vocab)
        self.result = TrainResult()
        self._ema = None
        self._next_trace = TRACE_EVERY
        self._lock = threading.Lock()

    def _pair_rng(self, epoch: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 17, epoch])

    def _neg_rng(self, epoch: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 31, epoch])

    def _expected_total_pairs(self) -> int:
        total = 0
        subsampled = self.config.subsample_t > 0
        for epoch in range(self.config.epochs):
            c, _ = _epoch_pairs(self.stream_ids, self.sent_of,
                                self.keep_probs, self.config.window,
                                self._pair_rng(epoch), subsampled)
            total += c.size
        return total

    def run(self) -> TrainResult:
        cfg = self.config
        total = self._expected_total_pairs()
        self.result.final_lr = cfg.lr_start
        if total == 0 or cfg.epochs == 0:
            return self.result
        processed = 0
        subsampled = cfg.subsample_t > 0
        for epoch in range(cfg.epochs):
            centers, ctxs = _epoch_pairs(
                self.stream_ids, self.sent_of, self.keep_probs, cfg.window,
                self._pair_rng(epoch), subsampled)
            if centers.size == 0:
                continue
            negs, valid = self.sampler.draw_matrix(
                self._neg_rng(epoch), ctxs, cfg.negatives)
            if cfg.threads <= 1:
                processed = self._run_span(
                    centers, ctxs, negs, valid, processed, total)
            else:
                processed = self._run_threaded(
                    centers, ctxs, negs, valid, processed, total)
        self.result.processed_pairs = processed
        return self.result

    def _run_threaded(self, centers, ctxs, negs, valid, processed, total):
        n = centers.size
        t = self.config.threads
        bounds = np.linspace(0, n, t + 1).astype(np.int64)
        base = processed
        with ThreadPoolExecutor(max_workers=t) as pool:
            futures = []
            for w in range(t):
                lo, hi = int(bounds[w]), int(bounds[w + 1])
                futures.append(pool.submit(
                    self._run_span, centers[lo:hi], ctxs[lo:hi],
                    negs[lo:hi], valid[lo:hi], base + lo, total))
            for f in futures:
                f.result()
        return base + n

    def _run_span(self, centers, ctxs, negs, valid, processed, total):
        cfg = self.config
        params = self.model.params
        csr = self.csr
        d = self.model.config.dim
        use_pos = self.model.config.position
        use_wt = self.model.config.word_token
        floor = cfg.lr_floor
        B = cfg.batch_size
        for b in range(0, centers.size, B):
            lr = max(floor, cfg.lr_start * (1.0 - processed / total))
            c = centers[b:b + B]
            ctx_idx = np.concatenate(
                (ctxs[b:b + B, None], negs[b:b + B]), axis=1)
            val = valid[b:b + B]

            counts = csr.lens[c]
            offsets = np.concatenate(([0], np.cumsum(counts)))
            gather = (np.arange(offsets[-1])
                      - np.repeat(offsets[:-1], counts)
                      + np.repeat(csr.starts[c], counts))
            sel_sub = csr.flat_sub[gather]
            rows = params.subword[sel_sub]
            if use_pos:
                sel_pos = csr.flat_pos[gather]
                rows = rows + params.position[sel_pos]
            v = np.add.reduceat(rows, offsets[:-1], axis=0)
            if use_wt:
                wt = csr.wt_ids[c]
                v = v + params.subword[wt]

            crows = params.context[ctx_idx]
            scores = np.einsum("bd,bkd->bk", v, crows)
            if not np.isfinite(scores).all():
                bad = int(np.argwhere(~np.isfinite(scores))[0][0])
                word = self.model.vocab.words[int(c[bad])]
                raise SubtokError(
                    f"non-finite score at update {processed + b + bad} "
                    f"(center word {word!r})")
            live = np.abs(scores) < SCORE_CLAMP
            scores = np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP)
            sig = 1.0 / (1.0 + np.exp(-scores))
            g = sig.copy()
            g[:, 0] -= 1.0
            g[:, 1:] *= val
            g *= live

            loss = (-_log_sigmoid(scores[:, 0])
                    - (_log_sigmoid(-scores[:, 1:]) * val).sum(axis=1))
            grad_v = np.einsum("bk,bkd->bd", g, crows).astype(np.float32)
            grad_c = (g[:, :, None] * v[:, None, :]).reshape(-1, d)

            step = np.float32(lr)
            np.subtract.at(params.context, ctx_idx.reshape(-1), step * grad_c)
            gsub = np.repeat(grad_v, counts, axis=0)
            np.subtract.at(params.subword, sel_sub, step * gsub)
            if use_pos:
                np.subtract.at(params.position, sel_pos, step * gsub)
            if use_wt:
                np.subtract.at(params.subword, wt, step * grad_v)

            processed += c.shape[0]
            self._record(processed, lr, float(loss.mean()))
        return processed

    def _record(self, processed, lr, batch_loss):
        with self._lock:
            if self._ema is None:
                self._ema = batch_loss
            else:
                self._ema = EMA_ALPHA * self._ema + (1 - EMA_ALPHA) * batch_loss
            self.result.final_lr = lr
            if processed >= self._next_trace:
                self.result.loss_trace.append((processed, lr, self._ema))
                self._next_trace += TRACE_EVERY


def train(corpus: Corpus, model: SubwordModel,
          config: TrainConfig) -> TrainResult:
    """Train the model's tables in place; returns the loss trace."""
    trainer = Trainer(corpus, model, config)
    result = trainer.run()
    if not model.params.all_finite():
        raise SubtokError("non-finite parameter after training")
    return result


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    trials: int
    worst_case: str


def grad_check(dim: int = 10, trials: int = 100, seed: int = 0,
               h: float = 1e-4) -> GradCheckReport:
    """Analytic SGNS gradients vs central finite differences for every
    parameter class (subword, position, word-token, context rows), covering
    both position settings."""
    if dim > 16:
        raise ValueError("grad_check is meant for small dims (d <= 16)")
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = ""

    for trial in range(trials):
        use_pos = bool(trial % 2)
        use_wt = bool((trial // 2) % 2)
        n_sub = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        sub = rng.normal(0, 0.5, size=(n_sub, dim))
        pos = rng.normal(0, 0.5, size=(n_sub, dim))
        wt = rng.normal(0, 0.5, size=dim)
        ctx = rng.normal(0, 0.5, size=(k + 1, dim))
        neg_ids = list(range(1, k + 1))

        def compose(sub=sub, pos=pos, wt=wt):
            v = sub.sum(axis=0)
            if use_pos:
                v = v + pos.sum(axis=0)
            if use_wt:
                v = v + wt
            return v

        def loss(ctx=ctx, **kw):
            return sgns_loss(compose(**kw), 0, neg_ids, ctx)

        # analytic
        v = compose()
        scores = np.clip(ctx @ v, -SCORE_CLAMP, SCORE_CLAMP)
        sig = 1.0 / (1.0 + np.exp(-scores))
        g = sig.copy()
        g[0] -= 1.0
        grad_v = g @ ctx
        grad_ctx = np.outer(g, v)

        checks = [("subword", sub, np.tile(grad_v, (n_sub, 1)), "sub"),
                  ("context", ctx, grad_ctx, "ctx")]
        if use_pos:
            checks.append(("position", pos, np.tile(grad_v, (n_sub, 1)),
                           "pos"))
        if use_wt:
            checks.append(("word-token", wt.reshape(1, -1),
                           grad_v.reshape(1, -1), "wt"))

        for name, table, analytic, kind in checks:
            it = np.nditer(table, flags=["multi_index"])
            for _ in it:
                mi = it.multi_index
                orig = table[mi]
                table[mi] = orig + h
                lp = loss()
                table[mi] = orig - h
                lm = loss()
                table[mi] = orig
                numeric = (lp - lm) / (2 * h)
                a = analytic[mi] if analytic.ndim == 2 else analytic[mi[1]]
                denom = max(abs(a), abs(numeric), 1.0)
                rel = abs(a - numeric) / denom
                if rel > worst:
                    worst = rel
                    worst_case = (f"trial {trial} {name} row {mi} "
                                  f"(p{'+' if use_pos else '-'}"
                                  f"w{'+' if use_wt else '-'})")
    return GradCheckReport(max_rel_error=worst, trials=trials,
                           worst_case=worst_case)
