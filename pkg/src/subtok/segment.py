"""Unsupervised segmentation of word types into ordered subword sequences:
BPE, character n-grams, a simplified MDL morph splitter, and the degenerate
whole-word segmenter used by the skip-gram baseline."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from subtok.corpus import Vocab
from subtok.errors import FormatError

END_OF_WORD = "</w>"

# namespaces for SubwordVocab keys
NS_SUBWORD = "sub"
NS_WORD_TOKEN = "word"


@dataclass(frozen=True)
class Segmentation:
    """An ordered subword decomposition of one word. When
    includes_word_token is true the whole word is appended as an extra unit
    living in its own namespace."""

    word: str
    subwords: tuple[str, ...]
    includes_word_token: bool

    def keys(self):
        """(namespace, string) keys in sequence order."""
        out = [(NS_SUBWORD, s) for s in self.subwords]
        if self.includes_word_token:
            out.append((NS_WORD_TOKEN, self.word))
        return out


# ---------------------------------------------------------------------------
# BPE
# ---------------------------------------------------------------------------


@dataclass
class BpeModel:
    """Ordered merge list learned by greedy pair counting over a word
    frequency dictionary."""

    merges: list[tuple[str, str]]
    num_merges: int
    symbol_vocab: set[str] = field(default_factory=set)
    _ranks: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _cache: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    def segment(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is None:
            cached = apply_bpe(self, word)
            self._cache[word] = cached
        return cached

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#bpe v1 {self.num_merges}\n")
            for left, right in self.merges:
                fh.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith("#bpe v1 "):
                raise FormatError(f"bad BPE header {header!r} in {path}", 1)
            num_merges = int(header.split()[2])
            merges = []
            for ln, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise FormatError("expected `left<SPACE>right`", ln)
                merges.append((parts[0], parts[1]))
        model = cls(merges=merges, num_merges=num_merges)
        model.symbol_vocab = {a + b for a, b in merges}
        return model


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (END_OF_WORD,)


def _pair_sort_key(pair: tuple[str, str]):
    """Lexicographic on the pair, except the end-of-word marker sorts after
    every ordinary symbol (its '<' would otherwise outrank letters)."""
    return tuple((s == END_OF_WORD, s) for s in pair)


def learn_bpe(vocab: Vocab, num_merges: int) -> BpeModel:
    """Greedy frequency-based merging over the vocab's word types, each a
    character sequence plus a terminal end-of-word marker. Ties on pair count
    go to the lexicographically smallest pair; learning stops early when no
    pair occurs at least twice."""
    if num_merges < 1:
        raise ValueError("num_merges must be >= 1")
    if len(vocab) == 0:
        raise ValueError("vocab must be non-empty")

    words = [list(_word_symbols(w)) for w in vocab.words]
    freqs = [int(c) for c in vocab.counts]

    # pair -> weighted count, plus an index of which words contain the pair
    stats: Counter = Counter()
    index: defaultdict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, (syms, f) in enumerate(zip(words, freqs)):
        for a, b in zip(syms, syms[1:]):
            stats[(a, b)] += f
            index[(a, b)].add(wi)

    merges: list[tuple[str, str]] = []
    symbol_vocab: set[str] = {s for syms in words for s in syms}
    for _ in range(num_merges):
        if not stats:
            break
        best = min(stats.items(),
                   key=lambda kv: (-kv[1], _pair_sort_key(kv[0])))[0]
        if stats[best] < 2:
            break
        merges.append(best)
        merged_sym = best[0] + best[1]
        symbol_vocab.add(merged_sym)

        for wi in list(index[best]):
            syms = words[wi]
            f = freqs[wi]
            new_syms = _merge_once(syms, best)
            # update pair stats for this word
            for a, b in zip(syms, syms[1:]):
                stats[(a, b)] -= f
                if stats[(a, b)] <= 0:
                    del stats[(a, b)]
                index[(a, b)].discard(wi)
            for a, b in zip(new_syms, new_syms[1:]):
                stats[(a, b)] += f
                index[(a, b)].add(wi)
            words[wi] = new_syms

    return BpeModel(merges=merges, num_merges=num_merges,
                    symbol_vocab=symbol_vocab)


def _merge_once(syms: list[str], pair: tuple[str, str]) -> list[str]:
    """Merge all non-overlapping occurrences of `pair`, left to right."""
    out = []
    i = 0
    a, b = pair
    n = len(syms)
    while i < n:
        if i + 1 < n and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def apply_bpe(model: BpeModel, word: str) -> tuple[str, ...]:
    """Decompose `word` into characters plus the end-of-word marker and
    replay the learned merges in order. Characters unseen at training time
    stay singleton symbols.

    Implemented by repeatedly merging the lowest-ranked pair present; merges
    can only create pairs of later rank, so this equals an in-order replay.
    """
    if not word:
        raise ValueError("word must be non-empty")
    syms = list(_word_symbols(word))
    ranks = model._ranks
    while len(syms) > 1:
        best_rank = None
        best_pair = None
        for a, b in zip(syms, syms[1:]):
            r = ranks.get((a, b))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_pair = (a, b)
        if best_pair is None:
            break
        syms = _merge_once(syms, best_pair)
    return tuple(syms)


# ---------------------------------------------------------------------------
# Character n-grams
# ---------------------------------------------------------------------------


def char_ngrams(word: str, n_min: int = 3, n_max: int = 6) -> tuple[str, ...]:
    """All contiguous substrings of the '<'-word-'>' wrapped form with length
    in [n_min, n_max], shortest first, left to right within each length.
    Duplicates are kept."""
    if not (1 <= n_min <= n_max):
        raise ValueError("need 1 <= n_min <= n_max")
    if not word:
        raise ValueError("word must be non-empty")
    wrapped = f"<{word}>"
    L = len(wrapped)
    out = []
    for n in range(n_min, min(n_max, L) + 1):
        for i in range(L - n + 1):
            out.append(wrapped[i:i + n])
    return tuple(out)


@dataclass(frozen=True)
class CharNgramSegmenter:
    n_min: int = 3
    n_max: int = 6

    def segment(self, word: str) -> tuple[str, ...]:
        return char_ngrams(word, self.n_min, self.n_max)


@dataclass(frozen=True)
class WholeWordSegmenter:
    """Degenerate segmenter: one subword, the word itself. With w-/p- this
    reduces the trainer to plain word-level skip-gram."""

    def segment(self, word: str) -> tuple[str, ...]:
        if not word:
            raise ValueError("word must be non-empty")
        return (word,)


# ---------------------------------------------------------------------------
# Morfessor-lite: recursive binary MDL splitting
# ---------------------------------------------------------------------------


@dataclass
class MorfModel:
    """Simplified MDL morph model: a morph lexicon with counts and the final
    two-part cost (token cost + lexicon character cost)."""

    morph_lexicon: dict[str, int]
    corpus_cost: float
    cost_history: list[float] = field(default_factory=list)
    lam: float = 1.0
    _cache: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def segment(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is None:
            cached = _viterbi_segment(word, self.morph_lexicon, self.lam)
            self._cache[word] = cached
        return cached

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for morph in sorted(self.morph_lexicon):
                fh.write(f"{morph}\t{self.morph_lexicon[morph]}\n")

    @classmethod
    def load(cls, path: str | Path, lam: float = 1.0) -> "MorfModel":
        lexicon: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise FormatError("expected morph<TAB>count", ln)
                lexicon[parts[0]] = int(parts[1])
        model = cls(morph_lexicon=lexicon, corpus_cost=0.0, lam=lam)
        model.corpus_cost = _total_cost_from_counts(lexicon, lam)
        return model


def _total_cost_from_counts(counts: dict[str, int], lam: float) -> float:
    """Two-part cost: sum over morph tokens of -log p(morph) with add-one
    smoothing, plus lam * total characters in the lexicon."""
    total = sum(counts.values())
    lex = len(counts)
    denom = total + lex
    cost = 0.0
    for m, c in counts.items():
        cost += c * -math.log((c + 1) / denom)
    cost += lam * sum(len(m) for m in counts)
    return cost


def _analyses_cost(analyses: dict[str, tuple[str, ...]],
                   freqs: dict[str, int], lam: float) -> float:
    counts: Counter = Counter()
    for w, morphs in analyses.items():
        f = freqs[w]
        for m in morphs:
            counts[m] += f
    return _total_cost_from_counts(counts, lam)


def _best_split(word: str, morph_cost, memo) -> tuple[float, tuple[str, ...]]:
    """Cheapest segmentation of `word` under a per-morph cost function,
    over all ordered partitions (recursive binary splits with memoization)."""
    hit = memo.get(word)
    if hit is not None:
        return hit
    best_cost = morph_cost(word)
    best_seg = (word,)
    for i in range(1, len(word)):
        lc, lseg = _best_split(word[:i], morph_cost, memo)
        rc, rseg = _best_split(word[i:], morph_cost, memo)
        if lc + rc < best_cost:
            best_cost = lc + rc
            best_seg = lseg + rseg
    memo[word] = (best_cost, best_seg)
    return best_cost, best_seg


def learn_morfessor_lite(vocab: Vocab, max_iters: int = 10,
                         lam: float = 1.0) -> MorfModel:
    """Iterative re-estimation of word analyses. Each pass re-segments every
    word type (optimal partition under the current morph statistics, with an
    amortized lexicon penalty for novel morphs); a pass that fails to lower
    the total cost is reverted and training stops."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if len(vocab) == 0:
        raise ValueError("vocab must be non-empty")

    freqs = {w: int(c) for w, c in zip(vocab.words, vocab.counts)}
    analyses: dict[str, tuple[str, ...]] = {w: (w,) for w in vocab.words}
    counts: Counter = Counter({w: freqs[w] for w in vocab.words})

    cost_history = [_analyses_cost(analyses, freqs, lam)]

    for _ in range(max_iters):
        prev_analyses = dict(analyses)
        for w in vocab.words:
            f = freqs[w]
            # remove this word's current contribution
            for m in analyses[w]:
                counts[m] -= f
                if counts[m] <= 0:
                    del counts[m]
            total = sum(counts.values())
            lex = len(counts)
            denom = total + lex + 1  # +1: room for one novel morph

            def morph_cost(m, _f=f, _counts=counts, _denom=denom):
                c = _counts.get(m, 0)
                cost = _f * -math.log((c + 1) / _denom)
                if c == 0:
                    cost += lam * len(m)  # lexicon growth penalty
                return cost

            _, seg = _best_split(w, morph_cost, {})
            analyses[w] = seg
            for m in seg:
                counts[m] += f

        cost = _analyses_cost(analyses, freqs, lam)
        if cost < cost_history[-1] - 1e-6:
            cost_history.append(cost)
        else:
            if cost > cost_history[-1]:
                analyses = prev_analyses
            else:
                cost_history.append(cost)
            break

    final_counts: Counter = Counter()
    for w, morphs in analyses.items():
        for m in morphs:
            final_counts[m] += freqs[w]
    model = MorfModel(morph_lexicon=dict(final_counts),
                      corpus_cost=cost_history[-1],
                      cost_history=cost_history, lam=lam)
    model._cache.update(analyses)
    return model


def _viterbi_segment(word: str, lexicon: dict[str, int],
                     lam: float) -> tuple[str, ...]:
    """Segment an arbitrary word with the learned lexicon; substrings absent
    from the lexicon fall back to a high per-character cost so known morphs
    are preferred."""
    if not word:
        raise ValueError("word must be non-empty")
    total = sum(lexicon.values())
    lex = len(lexicon)
    denom = total + lex + 1
    unk_char_cost = -math.log(1.0 / denom) + lam

    def morph_cost(m):
        c = lexicon.get(m, 0)
        if c > 0:
            return -math.log((c + 1) / denom)
        return len(m) * unk_char_cost

    n = len(word)
    best = [0.0] + [math.inf] * n
    back = [0] * (n + 1)
    for j in range(1, n + 1):
        for i in range(max(0, j - 30), j):
            c = best[i] + morph_cost(word[i:j])
            if c < best[j]:
                best[j] = c
                back[j] = i
    out = []
    j = n
    while j > 0:
        i = back[j]
        out.append(word[i:j])
        j = i
    return tuple(reversed(out))


# ---------------------------------------------------------------------------
# Shared segmentation surface
# ---------------------------------------------------------------------------

Segmenter = BpeModel | MorfModel | CharNgramSegmenter | WholeWordSegmenter


def segment_word(segmenter, word: str,
                 include_word_token: bool) -> Segmentation:
    """Delegate to the configured segmenter; with include_word_token the
    whole word is appended as a word-token unit in its own namespace."""
    if not word:
        raise ValueError("word must be non-empty")
    return Segmentation(word=word, subwords=tuple(segmenter.segment(word)),
                        includes_word_token=include_word_token)


@dataclass
class SubwordVocab:
    """Dense ids for (namespace, string) keys; word-token keys never collide
    with identical subword strings."""

    entries: dict[tuple[str, str], int]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self.entries

    def id_of(self, key: tuple[str, str]) -> int:
        return self.entries[key]

    def get(self, key: tuple[str, str], default=None):
        return self.entries.get(key, default)

    def save_tsv(self, path: str | Path) -> None:
        items = sorted(self.entries.items(), key=lambda kv: kv[1])
        with open(path, "w", encoding="utf-8") as fh:
            for (ns, s), i in items:
                fh.write(f"{ns}\t{s}\t{i}\n")

    @classmethod
    def load_tsv(cls, path: str | Path) -> "SubwordVocab":
        entries: dict[tuple[str, str], int] = {}
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError("expected ns<TAB>key<TAB>id", ln)
                ns, s, i = parts
                if ns not in (NS_SUBWORD, NS_WORD_TOKEN):
                    raise FormatError(f"unknown namespace {ns!r}", ln)
                entries[(ns, s)] = int(i)
        return cls(entries=entries)


def build_subword_vocab(vocab: Vocab, segmenter,
                        include_word_token: bool) -> SubwordVocab:
    """Union of subword keys over all vocab words (plus word-token keys when
    requested), ids assigned by first occurrence in vocab id order."""
    if len(vocab) == 0:
        raise ValueError("vocab must be non-empty")
    entries: dict[tuple[str, str], int] = {}
    for w in vocab.words:
        seg = segment_word(segmenter, w, include_word_token)
        for key in seg.keys():
            if key not in entries:
                entries[key] = len(entries)
    return SubwordVocab(entries=entries)
