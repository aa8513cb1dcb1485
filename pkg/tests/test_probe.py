import numpy as np
import pytest

from subtok.corpus import build_vocab, tokenize_corpus
from subtok.errors import FormatError, SubtokError
from subtok.model import ModelConfig, SubwordModel
from subtok.probe import (
    MentionDataset,
    decode_spans,
    eval_mention_accuracy,
    eval_tag_accuracy,
    load_conll,
    load_mentions,
    mention_features,
    per_label_accuracy,
    repair_bio,
    span_f1,
    train_mention_probe,
    train_tagger_probe,
    window_features,
    write_metrics,
)


def charn_model(text, **cfg):
    defaults = dict(segmenter="charn", dim=12, seed=4)
    defaults.update(cfg)
    corpus = tokenize_corpus(text)
    vocab = build_vocab(corpus, 1)
    return SubwordModel.build(ModelConfig(**defaults), vocab)


class TestLoadMentions:
    def test_basic(self):
        data = load_mentions(["Bill Clinton\t/person/politician\n"])
        assert data.examples[0] == (("Bill", "Clinton"),
                                    "/person/politician")

    def test_split_sizes(self):
        lines = [f"w{i}\t/t{i % 2}\n" for i in range(10)]
        data = load_mentions(lines, seed=3)
        assert (len(data.splits["train"]), len(data.splits["dev"]),
                len(data.splits["test"])) == (6, 2, 2)

    def test_duplicates_kept(self):
        data = load_mentions(["a\t/x\n", "a\t/x\n"])
        assert len(data.examples) == 2

    def test_malformed_line_number(self):
        with pytest.raises(FormatError) as exc:
            load_mentions(["ok\t/x\n", "badline\n"])
        assert exc.value.line_number == 2

    def test_split_reproducible(self):
        lines = [f"w{i}\t/t\n" for i in range(20)]
        assert load_mentions(lines, seed=5).splits == \
            load_mentions(lines, seed=5).splits


class TestLoadConll:
    def test_sentence_boundaries(self):
        lines = ["a\tO\n", "b\tO\n", "c\tO\n", "\n", "d\tO\n", "e\tO\n"]
        data = load_conll(lines)
        assert [len(t) for t, _ in data.sentences] == [3, 2]

    def test_bio_scheme_inferred(self):
        data = load_conll(["x\tB-PER\n", "y\tO\n"])
        assert data.scheme == "BIO"

    def test_full_tag_scheme_inferred(self):
        data = load_conll(["x\tPOS=V|Tense=Past\n"])
        assert data.scheme == "full-tag"

    def test_arity_error(self):
        with pytest.raises(FormatError) as exc:
            load_conll(["a\tO\n", "b\tO\textra\n"])
        assert exc.value.line_number == 2

    def test_bio_repair_on_load(self):
        data = load_conll(["a\tI-PER\n", "b\tI-PER\n", "c\tO\n",
                           "d\tI-LOC\n"])
        assert data.sentences[0][1] == ("B-PER", "I-PER", "O", "B-LOC")


class TestRepairBio:
    def test_stray_after_other_type(self):
        assert repair_bio(["B-PER", "I-LOC"]) == ("B-PER", "B-LOC")

    def test_valid_untouched(self):
        labs = ("B-PER", "I-PER", "O", "B-LOC")
        assert repair_bio(labs) == labs


class TestSpanF1:
    def test_stray_span_case(self):
        # gold span (0,1,PER); pred span (0,0,PER): no exact match
        p, r, f1 = span_f1([("B-PER", "I-PER", "O")], [("B-PER", "O", "O")])
        assert (p, r, f1) == (0.0, 0.0, 0.0)

    def test_perfect(self):
        seqs = [("B-PER", "I-PER", "O", "B-LOC")]
        assert span_f1(seqs, seqs) == (1.0, 1.0, 1.0)

    def test_all_o_pred(self):
        p, r, f1 = span_f1([("B-PER", "O")], [("O", "O")])
        assert (p, r, f1) == (0.0, 0.0, 0.0)

    def test_partial(self):
        gold = [("B-PER", "O", "B-LOC", "I-LOC")]
        pred = [("B-PER", "O", "B-LOC", "O")]
        p, r, f1 = span_f1(gold, pred)
        assert p == pytest.approx(0.5)
        assert r == pytest.approx(0.5)
        assert f1 == pytest.approx(0.5)

    def test_stray_i_starts_span(self):
        assert decode_spans(("O", "I-PER", "I-PER")) == {(1, 2, "PER")}
        assert decode_spans(("I-PER", "I-LOC")) == {(0, 0, "PER"),
                                                    (1, 1, "LOC")}

    def test_swap_symmetry(self):
        gold = [("B-PER", "I-PER", "O", "B-LOC")]
        pred = [("B-PER", "O", "O", "B-LOC")]
        p1, r1, f1a = span_f1(gold, pred)
        p2, r2, f1b = span_f1(pred, gold)
        assert (p1, r1) == (r2, p2)
        assert f1a == pytest.approx(f1b)

    def test_length_mismatch(self):
        with pytest.raises(SubtokError):
            span_f1([("O", "O")], [("O",)])

    def test_f1_bounded(self):
        rng = np.random.default_rng(0)
        labels = ["O", "B-X", "I-X", "B-Y", "I-Y"]
        for _ in range(50):
            n = int(rng.integers(1, 12))
            gold = [tuple(labels[i] for i in rng.integers(0, 5, n))]
            pred = [tuple(labels[i] for i in rng.integers(0, 5, n))]
            p, r, f1 = span_f1(gold, pred)
            assert 0 <= f1 <= 1
            assert f1 <= max(p, r) + 1e-12


class TestPerLabelAccuracy:
    def test_no_partial_credit(self):
        gold = [("POS=V|Tense=Past",)]
        pred = [("POS=V|Tense=Pres",)]
        assert per_label_accuracy(gold, pred) == 0.0

    def test_exact(self):
        gold = [("A", "B"), ("C", "D")]
        assert per_label_accuracy(gold, gold) == 1.0

    def test_three_of_four(self):
        gold = [("A", "B", "C", "D")]
        pred = [("A", "B", "C", "X")]
        assert per_label_accuracy(gold, pred) == 0.75


class TestMentionProbe:
    def _separable_setup(self):
        model = charn_model("redaa redbb redcc bluaa blubb blucc\n" * 5)
        # make the two families linearly separable by construction
        rng = np.random.default_rng(0)
        model.params.subword[:] = rng.normal(
            0, 0.2, model.params.subword.shape).astype(np.float32)
        lines = []
        for w in model.vocab.words:
            label = "/red" if w.startswith("red") else "/blu"
            for _ in range(6):
                lines.append(f"{w}\t{label}\n")
        return model, load_mentions(lines, seed=1)

    def test_separable_train_accuracy(self):
        model, data = self._separable_setup()
        probe = train_mention_probe(model, data, epochs=200, lr=0.5, seed=0)
        acc = eval_mention_accuracy(probe, model, data, "train")
        assert acc >= 0.99

    def test_zero_epochs_chance_level(self):
        model, data = self._separable_setup()
        probe = train_mention_probe(model, data, epochs=0, lr=0.5)
        acc = eval_mention_accuracy(probe, model, data, "dev")
        assert 0.0 <= acc <= 1.0
        assert not probe.weights.any()

    def test_frozen_leaves_tables_unchanged(self):
        model, data = self._separable_setup()
        sub = model.params.subword.copy()
        ctx = model.params.context.copy()
        train_mention_probe(model, data, epochs=20, fine_tune=False)
        assert np.array_equal(model.params.subword, sub)
        assert np.array_equal(model.params.context, ctx)

    def test_fine_tune_updates_tables(self):
        model, data = self._separable_setup()
        sub = model.params.subword.copy()
        train_mention_probe(model, data, epochs=5, fine_tune=True, lr=0.3)
        assert not np.array_equal(model.params.subword, sub)

    def test_empty_train_split_error(self):
        model, _ = self._separable_setup()
        data = MentionDataset.from_examples(
            [(("a",), "/x"), (("b",), "/y")],
            splits={"train": [], "dev": [0], "test": [1]})
        with pytest.raises(SubtokError):
            train_mention_probe(model, data)

    def test_tie_break_lowest_label_index(self):
        model, data = self._separable_setup()
        probe = train_mention_probe(model, data, epochs=0)
        feat = mention_features(model, ("redaa",))
        assert probe.predict(feat) == probe.labels[0]


class TestTaggerProbe:
    def _suffix_tag_data(self, model):
        lines = []
        for w in model.vocab.words:
            tag = "POS=R" if w.startswith("red") else "POS=B"
            for _ in range(4):
                lines.append(f"{w}\t{tag}\n")
                lines.append("\n")
        return load_conll(lines, seed=2)

    def test_feature_dims(self):
        model = charn_model("aa bb cc\n" * 3)
        toks = ("aa", "bb", "cc")
        assert window_features(model, toks, 1, 0).shape == (12,)
        assert window_features(model, toks, 1, 1).shape == (36,)

    def test_boundary_zero_padding(self):
        model = charn_model("aa bb\n" * 3)
        f = window_features(model, ("aa",), 0, 1)
        assert not f[:12].any()  # left of sentence start
        assert not f[24:].any()  # right of sentence end

    def test_suffix_tagging_learnable(self):
        model = charn_model("redaa redbb redcc bluaa blubb blucc\n" * 5)
        rng = np.random.default_rng(1)
        model.params.subword[:] = rng.normal(
            0, 0.2, model.params.subword.shape).astype(np.float32)
        data = self._suffix_tag_data(model)
        probe = train_tagger_probe(model, data, window=0, epochs=200, lr=0.5)
        acc = eval_tag_accuracy(probe, model, data, "dev")
        assert acc >= 0.95

    def test_frozen_contract(self):
        model = charn_model("redaa bluaa\n" * 4)
        data = self._suffix_tag_data(model)
        sub = model.params.subword.copy()
        train_tagger_probe(model, data, window=1, epochs=5)
        assert np.array_equal(model.params.subword, sub)

    def test_accuracy_needs_full_tag_scheme(self):
        model = charn_model("aa bb\n" * 3)
        data = load_conll(["aa\tB-PER\n", "\n", "bb\tO\n"] * 4, seed=0)
        probe = train_tagger_probe(model, data, window=0, epochs=1)
        with pytest.raises(SubtokError):
            eval_tag_accuracy(probe, model, data)


class TestOovProperty:
    def test_charn_nonzero_whole_word_zero(self):
        text = "walked jumped talked\n" * 4
        charn = charn_model(text)
        word = charn_model(text, segmenter="word")
        oov = "walker"
        cv, c_unknown = charn.word_vector_checked(oov)
        wv, w_unknown = word.word_vector_checked(oov)
        assert not c_unknown and cv.any()
        assert w_unknown and not wv.any()


class TestMetricsOutput:
    def test_tsv_format(self, tmp_path):
        rows = [("fget", "charn:w+:p-", "test", "accuracy", 0.75)]
        write_metrics(tmp_path / "m.tsv", rows)
        line = (tmp_path / "m.tsv").read_text().strip()
        assert line == "fget\tcharn:w+:p-\ttest\taccuracy\t0.750000"
