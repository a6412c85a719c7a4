from itertools import permutations
from math import log2
from emoretrieval.container import FeatureRecord, FeatureSet
from emoretrieval.data_io import load_features
from emoretrieval.emotion_space import label_mapping, similarity_matrix
from emoretrieval.evaluation import (
    RankedResult,
    Retriever,
    retrieve,
    mrr,
    precision_at_k,
    ndcg_per_query,
    ndcg_at_k,
    evaluation_sets,
    evaluate,
    emotion_structure_correlation,
    export_embeddings,
)
from emoretrieval.exceptions import DataFormatError, ShapeError
from emoretrieval.nn.base import ProjectionNet
import numpy as np
from numpy.testing import assert_allclose
import pytest


def _cosine(a, b):
    return sum(x * y for x, y in zip(a, b)) / (np.sqrt(sum(a * a)) * np.sqrt(sum(b * b)))


def _result(relevance, graded=None, ideal=None):
    n = len(relevance)
    return RankedResult(
        "q",
        [str(i) for i in range(n)],
        np.zeros(n),
        np.asarray(relevance, dtype=np.float64),
        None if graded is None else np.asarray(graded, dtype=np.float64),
        None if ideal is None else np.asarray(ideal, dtype=np.float64),
    )


@pytest.fixture(scope="module")
def nets(small_bundle):
    rng = np.random.default_rng(0)
    return dict(
        speech=ProjectionNet.initialize(8, output_dim=5, hidden_dims=(7,), rng=rng),
        music=ProjectionNet.initialize(6, output_dim=5, hidden_dims=(7,), rng=rng),
    )


@pytest.mark.parametrize("seed", range(100))
def test_retrieve_oracle(seed):
    rng = np.random.default_rng(seed)
    n_corpus = rng.integers(1, 12)
    queries = rng.normal(size=(3, 4))
    corpus = rng.normal(size=(n_corpus, 4))
    ids = [f"m{v}" for v in rng.permutation(100)[:n_corpus]]
    k = int(rng.integers(1, n_corpus + 3))
    results = retrieve(queries, corpus, k, corpus_ids=ids)
    for q, result in enumerate(results):
        scores = [_cosine(queries[q], c) for c in corpus]
        expected = sorted(range(n_corpus), key=lambda j: (-scores[j], ids[j]))
        expected = expected[: min(k, n_corpus)]
        assert result.query_id == str(q)
        assert result.candidate_ids == [ids[j] for j in expected]
        assert_allclose(result.scores, [scores[j] for j in expected])


def test_retrieve_ties():
    corpus = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    (result,) = retrieve(np.array([[1.0, 0.0]]), corpus, corpus_ids=["b", "c", "a", "d"])
    assert result.candidate_ids == ["a", "b", "c", "d"]

    (result,) = retrieve(np.array([[1.0, 0.0]]), corpus)
    assert result.candidate_ids == ["00000000", "00000001", "00000002", "00000003"]
    assert len(result) == 4

    with pytest.raises(DataFormatError):
        retrieve(np.ones((1, 2)), np.ones((0, 2)))
    with pytest.raises(ShapeError):
        retrieve(np.ones((1, 3)), corpus)


def _dcg(gains, k):
    return sum(g / log2(i + 2) for i, g in enumerate(gains[:k]))


@pytest.mark.parametrize("seed", range(100))
def test_metric_oracles(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    results = []
    corpora = []
    for _ in range(3):
        n = int(rng.integers(k, 8))
        corpus_gains = rng.uniform(size=n)
        corpus_gains[rng.uniform(size=n) < 0.2] = 0
        relevance = (rng.uniform(size=n) < 0.3).astype(float)
        order = rng.permutation(n)
        ideal = np.sort(corpus_gains)[::-1]
        results.append(_result(relevance[order], corpus_gains[order], ideal))
        corpora.append(corpus_gains)

    reciprocal = []
    precision = []
    ndcg = []
    for result, corpus_gains in zip(results, corpora):
        rel = list(result.relevance)
        reciprocal.append(1 / (rel.index(1) + 1) if 1 in rel else 0)
        precision.append(sum(rel[:k]) / k)
        idcg = max(
            _dcg([corpus_gains[j] for j in ranking], k)
            for ranking in permutations(range(corpus_gains.size), k)
        )
        ndcg.append(_dcg(result.graded, k) / idcg if idcg > 0 else np.nan)

    assert_allclose(mrr(results), np.mean(reciprocal), rtol=0, atol=1e-12)
    assert_allclose(precision_at_k(results, k), np.mean(precision), rtol=0, atol=1e-12)
    assert_allclose(ndcg_per_query(results, k), ndcg, rtol=0, atol=1e-12)
    if not np.isnan(ndcg).all():
        assert_allclose(ndcg_at_k(results, k), np.nanmean(ndcg), rtol=0, atol=1e-12)


def _rank_by(scores, relevance):
    order = np.lexsort((np.arange(scores.size), -scores))
    return RankedResult("q", [str(i) for i in order], scores[order], relevance[order])


@pytest.mark.parametrize("seed", range(50))
def test_metrics_monotone_scores(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    results = []
    transformed = []
    for _ in range(4):
        n = int(rng.integers(k, 15))
        # Rounded so that tied scores occur
        scores = np.round(rng.uniform(-1, 1, size=n), 1)
        relevance = (rng.uniform(size=n) < 0.3).astype(float)
        results.append(_rank_by(scores, relevance))
        transformed.append(_rank_by(np.exp(3 * scores) + scores ** 3, relevance))
    assert mrr(transformed) == mrr(results)
    assert precision_at_k(transformed, k) == precision_at_k(results, k)


@pytest.mark.parametrize("seed", range(50))
def test_ndcg_adjacent_swap(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 8))
    n = int(rng.integers(2, 12))
    graded = rng.uniform(size=n)
    ideal = np.sort(graded)[::-1]
    i = int(rng.integers(n - 1))
    low, high = sorted(graded[i : i + 2])
    graded[i], graded[i + 1] = low, high
    swapped = graded.copy()
    swapped[i], swapped[i + 1] = high, low
    before = ndcg_at_k([_result(np.zeros(n), graded, ideal)], k)
    after = ndcg_at_k([_result(np.zeros(n), swapped, ideal)], k)
    assert after >= before - 1e-12
    if i >= k:
        assert_allclose(after, before, rtol=0, atol=1e-12)
    elif high > low:
        assert after > before


def test_metrics_edge_cases():
    assert np.isnan(mrr([]))
    assert np.isnan(precision_at_k([]))
    assert mrr([_result([0, 0, 0])]) == 0
    assert mrr([_result([0, 0, 1]), _result([1, 0])]) == (1 / 3 + 1) / 2

    with pytest.warns(UserWarning):
        assert precision_at_k([_result([1, 0])], k=5) == 0.5

    perfect = _result([1, 1, 0], graded=[0.9, 0.5, 0.1])
    assert ndcg_at_k([perfect], 3) == 1
    zero = _result([0, 0], graded=[0, 0])
    assert np.isnan(ndcg_per_query([zero, perfect], 3)[0])
    assert ndcg_at_k([zero, perfect], 3) == 1
    assert np.isnan(ndcg_at_k([zero], 3))

    with pytest.raises(ValueError):
        mrr([RankedResult("q", ["a"], np.zeros(1))])


def test_retriever(small_bundle, nets, rng):
    corpus = small_bundle.feature_set("music", "test")
    queries = small_bundle.feature_set("speech", "test")
    corpus_emb = rng.normal(size=(len(corpus), 5))
    retriever = Retriever(corpus, corpus_emb, small_bundle.speech_taxonomy)
    results = retriever.retrieve(rng.normal(size=(len(queries), 5)), queries.ids, queries.labels)
    assert len(results) == len(queries)

    mapping = label_mapping(small_bundle.speech_taxonomy, small_bundle.music_taxonomy)
    similarity = similarity_matrix(small_bundle.speech_taxonomy, small_bundle.music_taxonomy)
    label_of = dict(zip(corpus.ids, corpus.labels))
    for result, label in zip(results, queries.labels):
        assert len(result) == len(corpus)
        for candidate, rel, gain in zip(result.candidate_ids, result.relevance, result.graded):
            assert rel == (label_of[candidate] == mapping[label])
            assert gain == similarity.lookup(label, label_of[candidate])
        assert_allclose(np.sort(result.graded)[::-1], result.ideal_gains)

    with pytest.raises(ShapeError):
        Retriever(corpus, corpus_emb[1:], small_bundle.speech_taxonomy)


def test_evaluation_sets(small_bundle):
    queries, corpus, corpus_split = evaluation_sets(small_bundle, "test")
    assert corpus_split == "test"
    assert "noise" in corpus.labels
    assert "neutral" in queries.labels

    queries, corpus, _ = evaluation_sets(small_bundle, "test", include_noise=False)
    assert "noise" not in corpus.labels
    assert "neutral" not in queries.labels
    assert len(queries) == len(small_bundle.feature_set("speech", "test")) * 3 // 4

    speech_only = dict(small_bundle.splits)
    for record in small_bundle.music:
        if speech_only[record.id] == "valid":
            speech_only[record.id] = "train"
    bundle = type(small_bundle)(
        small_bundle.speech,
        small_bundle.music,
        small_bundle.speech_taxonomy,
        small_bundle.music_taxonomy,
        speech_only,
        small_bundle.tags,
    )
    _, corpus, corpus_split = evaluation_sets(bundle, "valid")
    assert corpus_split == "train"
    assert len(corpus) == len(bundle.feature_set("music", "train"))


def test_evaluate(small_bundle, nets):
    report = evaluate(nets, small_bundle, "test", k=3)
    assert set(report.metrics) == {"MRR", "P@3", "NDCG@3"}
    for value in report.metrics.values():
        assert 0 <= value <= 1
    assert report.n_queries == len(small_bundle.feature_set("speech", "test"))
    assert report.corpus_size == len(small_bundle.feature_set("music", "test"))
    assert report.ndcg_excluded == 0
    assert not report.corpus_smaller_than_k
    assert report.as_dict()["metrics"] == report.metrics

    without_noise = evaluate(nets, small_bundle, "test", k=3, include_noise=False)
    assert without_noise.n_queries == report.n_queries * 3 // 4

    with pytest.warns(UserWarning):
        large = evaluate(nets, small_bundle, "test", k=1000)
    assert large.corpus_smaller_than_k
    assert large.metrics["MRR"] == report.metrics["MRR"]

    with pytest.raises(ValueError):
        evaluate(nets, small_bundle, k=0)


def test_emotion_structure_correlation(small_bundle, nets):
    value = emotion_structure_correlation(nets, small_bundle)
    assert -1 <= value <= 1


def test_export_embeddings(small_bundle, nets, tmp_path):
    paths = export_embeddings(nets, small_bundle, tmp_path / "out", split="test")
    speech = load_features(paths["speech"])
    test_speech = small_bundle.feature_set("speech", "test")
    assert [r.id for r in speech] == test_speech.ids
    assert speech[0].modality == "embedding"
    assert speech[0].dim == 5
    assert_allclose(speech[0].vector, nets["speech"](test_speech.matrix[:1])[0])
    assert len(load_features(paths["music"])) == len(small_bundle.feature_set("music", "test"))
