"""Caption and retrieval metric behavior against hand arithmetic and oracles."""

import math

import numpy as np
import pytest

from newscap.errors import ConfigError, DimensionError, MissingTruthError
from newscap.metrics import (
    CiderConfig,
    DocFreqTable,
    build_docfreq,
    cider_d,
    clip_score,
    gaussian_penalty,
    retrieval_metrics,
    tfidf,
    tokenize,
)
from newscap.retrieval import Ranking

import oracles

VOCAB = [
    "game", "city", "storm", "final", "crowd", "goal", "river", "police",
    "vote", "march", "fire", "team", "street", "night", "border", "court",
]


def random_caption(rng, lo=3, hi=12):
    n = int(rng.integers(lo, hi + 1))
    return " ".join(rng.choice(VOCAB) for _ in range(n))


class TestTokenize:
    def test_simple_sentence(self):
        cap = tokenize("A man runs.")
        assert cap.tokens == ("a", "man", "runs")
        assert cap.length == 3

    def test_empty_input(self):
        assert tokenize("").length == 0

    def test_character_class_rules(self):
        cap = tokenize("O'Neill won 2-1!")
        assert cap.tokens == ("o'neill", "won", "2", "1")

    def test_matches_oracle_on_random_text(self, rng):
        texts = ["Fans cheered, 3-0!", "MVP: J. Smith?", "  spaced   out  "]
        for text in texts:
            assert list(tokenize(text).tokens) == oracles.tokenize_brute(text)


class TestGaussianPenalty:
    def test_equal_lengths(self):
        assert gaussian_penalty(100, 100, 6) == 1.0

    def test_ten_word_gap_costs_three_quarters(self):
        value = gaussian_penalty(110, 100, 6)
        assert value == pytest.approx(0.2494, abs=1e-4)
        assert value == pytest.approx(math.exp(-100.0 / 72.0))
        assert 1.0 - value > 0.75

    def test_thirty_word_gap(self):
        assert gaussian_penalty(100, 130, 6) == pytest.approx(
            math.exp(-900.0 / 72.0)
        )

    def test_symmetric_and_strictly_decreasing(self):
        for d in range(1, 40):
            assert gaussian_penalty(100 + d, 100, 6) == gaussian_penalty(
                100, 100 + d, 6
            )
            assert gaussian_penalty(100 + d, 100, 6) < gaussian_penalty(
                100 + d - 1, 100, 6
            )

    def test_maximized_only_at_equality(self):
        peak = gaussian_penalty(50, 50, 3)
        assert peak == 1.0
        assert gaussian_penalty(51, 50, 3) < peak

    def test_bad_sigma(self):
        with pytest.raises(ConfigError):
            gaussian_penalty(10, 10, 0)


class TestDocFreq:
    def test_single_group_single_caption(self):
        dft = build_docfreq([[tokenize("a b")]], max_n=2)
        assert dft.corpus_size == 1
        assert dft.df[("a",)] == 1
        assert dft.df[("b",)] == 1
        assert dft.df[("a", "b")] == 1

    def test_disjoint_groups(self):
        dft = build_docfreq(
            [[tokenize("x y")], [tokenize("p q")]], max_n=2
        )
        assert all(v == 1 for v in dft.df.values())
        assert dft.corpus_size == 2

    def test_matches_brute_force(self, rng):
        groups = [
            [tokenize(random_caption(rng)) for _ in range(2)] for _ in range(5)
        ]
        dft = build_docfreq(groups, max_n=4)
        size, df = oracles.docfreq_brute(
            [[list(r.tokens) for r in g] for g in groups], max_n=4
        )
        assert dft.corpus_size == size
        assert dft.df == df

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigError):
            build_docfreq([])

    def test_json_roundtrip(self, rng, tmp_path):
        groups = [[tokenize(random_caption(rng))] for _ in range(4)]
        dft = build_docfreq(groups, max_n=3)
        path = tmp_path / "df.json"
        dft.save(path)
        back = DocFreqTable.load(path)
        assert back.corpus_size == dft.corpus_size
        assert back.df == dft.df


class TestTfidf:
    def test_corpus_of_one_zeroes_idf(self):
        dft = DocFreqTable(corpus_size=1, df={("a",): 1})
        vec = tfidf(tokenize("a a b"), 1, dft)
        assert all(w == 0.0 for w in vec.weights.values())

    def test_hand_arithmetic(self):
        dft = DocFreqTable(corpus_size=10, df={("a",): 10, ("b",): 1})
        vec = tfidf(tokenize("a a b"), 1, dft)
        assert vec.weights[("a",)] == pytest.approx(0.0)
        assert vec.weights[("b",)] == pytest.approx(math.log(10) / 3)

    def test_too_short_caption_yields_empty_vector(self):
        dft = DocFreqTable(corpus_size=10, df={})
        assert tfidf(tokenize("a b c"), 4, dft).weights == {}


class TestCiderD:
    def test_self_agreement_scores_ten(self):
        refs_corpus = [[tokenize("a b c d e")], [tokenize("x y z w v")]]
        dft = build_docfreq(refs_corpus, max_n=4)
        cap = tokenize("a b c d e")
        assert cider_d(cap, [cap], dft) == pytest.approx(10.0, abs=1e-6)

    def test_disjoint_tokens_score_zero(self):
        dft = build_docfreq([[tokenize("a b c")], [tokenize("d e f")]], max_n=4)
        assert cider_d(tokenize("a b c"), [tokenize("d e f")], dft) == 0.0

    def test_three_group_fixture_matches_oracle(self):
        groups = [[tokenize("a b c")], [tokenize("a b d")], [tokenize("c d e")]]
        dft = build_docfreq(groups, max_n=4)
        cand = tokenize("a b c")
        ref = tokenize("a b d")
        got = cider_d(cand, [ref], dft)
        want = oracles.cider_d_brute(
            list(cand.tokens), [list(ref.tokens)], dft.corpus_size, dft.df,
            sigma=6.0, max_n=4,
        )
        assert got == pytest.approx(want, abs=1e-6)

    def test_randomized_fixture_matches_oracle(self, rng):
        groups = [
            [tokenize(random_caption(rng)) for _ in range(2)] for _ in range(20)
        ]
        dft = build_docfreq(groups, max_n=4)
        for i in range(20):
            cand = tokenize(random_caption(rng))
            got = cider_d(cand, groups[i], dft)
            want = oracles.cider_d_brute(
                list(cand.tokens),
                [list(r.tokens) for r in groups[i]],
                dft.corpus_size,
                dft.df,
                sigma=6.0,
                max_n=4,
            )
            assert got == pytest.approx(want, abs=1e-6)

    def test_bounded_and_reference_order_invariant(self, rng):
        groups = [
            [tokenize(random_caption(rng)) for _ in range(3)] for _ in range(8)
        ]
        dft = build_docfreq(groups, max_n=4)
        for group in groups:
            cand = tokenize(random_caption(rng))
            s = cider_d(cand, group, dft)
            assert 0.0 <= s <= 10.0 + 1e-6
            assert cider_d(cand, list(reversed(group)), dft) == pytest.approx(s)

    def test_empty_refs_rejected(self):
        dft = DocFreqTable(corpus_size=2, df={})
        with pytest.raises(ConfigError):
            cider_d(tokenize("a"), [], dft)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            CiderConfig(sigma=0.0)
        with pytest.raises(ConfigError):
            CiderConfig(max_n=5)


class TestClipScore:
    def test_identical(self):
        v = np.array([1.0, 0.0, 0.0])
        assert clip_score(v, v) == pytest.approx(2.5)

    def test_orthogonal(self):
        assert clip_score([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_antiparallel_clamped(self):
        assert clip_score([1.0, 0.0], [-1.0, 0.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            clip_score([1.0, 0.0], [1.0, 0.0, 0.0])


def make_ranking(qid, ids):
    n = len(ids)
    return Ranking(
        query_id=qid,
        entries=tuple((cid, float(n - i)) for i, cid in enumerate(ids)),
    )


class TestRetrievalMetrics:
    def test_perfect_rankings(self):
        rankings = [make_ranking(f"q{i}", [f"d{i}", "x", "y"]) for i in range(5)]
        truth = {f"q{i}": {f"d{i}"} for i in range(5)}
        report = retrieval_metrics(rankings, truth, ks=(1, 10))
        assert report["mAP"] == 1.0
        assert report["recall"][1] == 1.0
        assert report["recall"][10] == 1.0

    def test_single_query_rank_two(self):
        rankings = [make_ranking("q", ["x", "d", "y"])]
        truth = {"q": {"d"}}
        report = retrieval_metrics(rankings, truth, ks=(1, 10))
        assert report["mAP"] == 0.5
        assert report["recall"][1] == 0.0
        assert report["recall"][10] == 1.0

    def test_randomized_fixture_matches_oracle(self, rng):
        for _ in range(50):
            n_docs = int(rng.integers(5, 30))
            docs = [f"d{i}" for i in range(n_docs)]
            rankings = []
            relevant_sets = []
            truth = {}
            for q in range(int(rng.integers(1, 8))):
                perm = list(rng.permutation(docs))
                qid = f"q{q}"
                rankings.append(make_ranking(qid, perm))
                rel = set(rng.choice(docs, size=int(rng.integers(1, 4)), replace=False))
                if rng.random() < 0.2:
                    rel.add("absent")
                truth[qid] = rel
                relevant_sets.append(rel)
            report = retrieval_metrics(rankings, truth, ks=(1, 5, 10))
            ranked_lists = [r.ids() for r in rankings]
            assert report["mAP"] == oracles.map_brute(ranked_lists, relevant_sets)
            for k in (1, 5, 10):
                assert report["recall"][k] == oracles.recall_at_k_brute(
                    ranked_lists, relevant_sets, k
                )

    def test_recall_nondecreasing_in_k(self, rng):
        docs = [f"d{i}" for i in range(20)]
        rankings = []
        truth = {}
        for q in range(10):
            perm = list(rng.permutation(docs))
            rankings.append(make_ranking(f"q{q}", perm))
            truth[f"q{q}"] = {docs[int(rng.integers(0, 20))]}
        report = retrieval_metrics(rankings, truth, ks=(1, 2, 5, 10, 20))
        values = [report["recall"][k] for k in (1, 2, 5, 10, 20)]
        assert values == sorted(values)
        assert all(0.0 <= v <= 1.0 for v in values)
        assert 0.0 <= report["mAP"] <= 1.0

    def test_missing_truth_rejected(self):
        rankings = [make_ranking("q", ["a"])]
        with pytest.raises(MissingTruthError):
            retrieval_metrics(rankings, {}, ks=(1,))
