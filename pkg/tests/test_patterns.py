import math
from fractions import Fraction

import pandas as pd
import pytest

from imgcred.core.errors import DataError, SingleClassError
from imgcred.schemas.instance_schemas import Domain
from imgcred.schemas.pattern_schemas import CorpusRecord, PatternList, ScoreMethod
from imgcred.services.pattern_service import (
    chi_squared,
    extract_ngrams,
    info_gain_ratio,
    load_corpus,
    load_patterns,
    rank_patterns,
    save_patterns,
    score_patterns,
    tokenize,
    tokenize_corpus,
    weak_label,
    weak_label_dataset,
    write_scores_csv,
)


def _h(*counts):
    total = sum(counts)
    return -sum(c / total * math.log2(c / total) for c in counts if c)


@pytest.fixture
def planted_corpus():
    fillers = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
    records = [CorpusRecord(id=f"f{i}", text=f"Is it real {word}", label=1) for i, word in enumerate(fillers)]
    records += [CorpusRecord(id=f"r{i}", text=f"nice weather today {word}", label=0) for i, word in enumerate(fillers)]
    return tokenize_corpus(records)


class TestTokens:
    def test_tokenize(self):
        assert tokenize("Is it REAL?! http://x.co/a @User #Tag") == [
            "is", "it", "real", "?", "!", "http://x.co/a", "@user", "#tag",
        ]

    def test_ngrams(self):
        counts = extract_ngrams(["a", "b", "a", "b"], max_n=2)
        assert counts[("a",)] == 2
        assert counts[("a", "b")] == 2
        assert counts[("b", "a")] == 1
        assert ("a", "b", "a") not in counts
        with pytest.raises(ValueError):
            extract_ngrams(["a"], max_n=4)


class TestScores:
    def test_chi_squared_against_exact_arithmetic(self):
        a, b, c, d = 30, 10, 5, 55
        exact = Fraction((a + b + c + d) * (a * d - b * c) ** 2, (a + b) * (c + d) * (a + c) * (b + d))
        assert chi_squared((a, b, c, d)) == pytest.approx(float(exact), rel=1e-12)
        assert chi_squared((a, b, c, d)) == pytest.approx(46.886, abs=1e-3)

    def test_chi_squared_edges(self):
        assert chi_squared((10, 10, 10, 10)) == 0.0
        assert chi_squared((5, 0, 0, 5)) == 10.0
        assert chi_squared((0, 0, 5, 5)) == 0.0

    def test_gain_ratio(self):
        assert info_gain_ratio((5, 0, 0, 5)) == pytest.approx(1.0)
        assert info_gain_ratio((10, 10, 10, 10)) == pytest.approx(0.0, abs=1e-12)
        assert info_gain_ratio((0, 0, 5, 5)) == 0.0
        a, b, c, d = 8, 2, 12, 28
        total = a + b + c + d
        gain = _h(a + c, b + d) - (a + b) / total * _h(a, b) - (c + d) / total * _h(c, d)
        assert info_gain_ratio((a, b, c, d)) == pytest.approx(gain / _h(a + b, c + d), rel=1e-12)

    def test_doc_counts(self, planted_corpus):
        scores = {s.ngram: s for s in score_patterns(planted_corpus, max_n=3)}
        trigram = scores[("is", "it", "real")]
        assert trigram.doc_counts == (6, 0, 0, 6)
        assert trigram.tf == 6
        assert trigram.fake_indicative
        assert not scores[("nice",)].fake_indicative

    def test_min_df_drops_rare_ngrams(self, planted_corpus):
        ngrams = {s.ngram for s in score_patterns(planted_corpus, max_n=3, min_df=2)}
        assert ("real", "alpha") not in ngrams
        assert ("is", "it", "real") in ngrams

    def test_single_class(self):
        corpus = tokenize_corpus([CorpusRecord(id="a", text="x", label=1)])
        with pytest.raises(SingleClassError):
            score_patterns(corpus)


class TestRanking:
    @pytest.mark.parametrize("method", list(ScoreMethod))
    def test_planted_trigram_ranks_first(self, planted_corpus, method):
        ranked = rank_patterns(planted_corpus, max_n=3, method=method, top_k=5)
        assert ranked.method == method
        assert ranked.patterns[:3] == [("is", "it", "real"), ("is", "it"), ("it", "real")]
        assert all(("nice",) != p for p in ranked.patterns)

    def test_top_k(self, planted_corpus):
        assert len(rank_patterns(planted_corpus, top_k=2).patterns) == 2
        with pytest.raises(ValueError):
            rank_patterns(planted_corpus, top_k=0)

    def test_scores_csv_is_best_first(self, planted_corpus, tmp_path):
        path = write_scores_csv(score_patterns(planted_corpus), tmp_path / "scores.csv")
        frame = pd.read_csv(path)
        assert frame.loc[0, "ngram"] == "is it real"
        assert list(frame["chi2"]) == sorted(frame["chi2"], reverse=True)


class TestWeakLabel:
    def test_contiguous_match_only(self):
        patterns = PatternList(method=ScoreMethod.CHI2, patterns=[("is", "it", "real")])
        texts = [
            ("a", tokenize("Wait, is it real?")),
            ("b", tokenize("is it true")),
            ("c", tokenize("real it is")),
        ]
        assert weak_label(texts, patterns) == [("a", 1)]

    def test_needs_patterns(self):
        with pytest.raises(ValueError):
            weak_label([("a", ["x"])], PatternList(method=ScoreMethod.CHI2, patterns=[]))

    def test_auxiliary_dataset(self):
        patterns = PatternList(method=ScoreMethod.CHI2, patterns=[("fake",), ("is", "it", "real")])
        data = weak_label_dataset(
            [("p1", "is it real?"), ("p2", "hello there"), ("p3", "FAKE photo")],
            patterns,
            trusted_real=[("t1", "official statement")],
            image_paths={"p1": "/img/p1.pgm"},
        )
        assert [(inst.id, inst.label) for inst in data.instances] == [("p1", 1), ("p3", 1), ("t1", 0)]
        assert all(inst.domain == Domain.AUXILIARY for inst in data.instances)
        assert data.instances[0].image_path == "/img/p1.pgm"


class TestFiles:
    def test_pattern_file_round_trip(self, tmp_path):
        patterns = PatternList(method=ScoreMethod.GAIN_RATIO, patterns=[("is", "it", "real"), ("rumor",)])
        assert load_patterns(save_patterns(patterns, tmp_path / "p.json")) == patterns

    def test_bad_pattern_files(self, tmp_path):
        with pytest.raises(DataError):
            load_patterns(tmp_path / "absent.json")
        path = tmp_path / "long.json"
        path.write_text('{"method": "chi2", "patterns": [["a", "b", "c", "d"]]}', encoding="utf-8")
        with pytest.raises(DataError):
            load_patterns(path)

    def test_corpus_errors_name_the_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x", "label": 1}\n{"id": "b", "text": "y", "label": 7}\n',
                        encoding="utf-8")
        with pytest.raises(DataError, match="line 2"):
            load_corpus(path)
