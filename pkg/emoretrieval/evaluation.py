"""Speech-to-music retrieval and its ranking metrics"""
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union
import logging
import warnings
import numpy as np

from emoretrieval.common.stats import dcg_at_k, ideal_dcg_at_k, row_spearman
from emoretrieval.container import DatasetBundle, FeatureRecord, FeatureSet
from emoretrieval.data_io import write_features
from emoretrieval.emotion_space import NOISE_LABEL, Taxonomy, label_mapping, similarity_matrix
from emoretrieval.exceptions import DataFormatError, ShapeError
from emoretrieval.nn.base import ProjectionNet
from emoretrieval.nn.distance import cosine_similarity_matrix
from emoretrieval.objective import feature_similarity_matrix

__all__ = [
    "RankedResult",
    "Retriever",
    "retrieve",
    "mrr",
    "precision_at_k",
    "ndcg_per_query",
    "ndcg_at_k",
    "EvaluationReport",
    "evaluation_sets",
    "evaluate",
    "emotion_structure_correlation",
    "embed",
    "export_embeddings",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedResult:
    """Ranking of the music corpus for one speech query.

    ``relevance`` is 1 where the candidate carries the music label most
    similar to the query label, ``graded`` the VA similarity between the
    query and candidate labels. ``ideal_gains`` holds the graded relevance of
    the whole corpus in descending order, so the ideal DCG is available even
    when only the top k candidates are ranked.
    """

    query_id: str
    candidate_ids: Sequence[str]
    scores: np.ndarray = field(repr=False)
    relevance: Optional[np.ndarray] = field(default=None, repr=False)
    graded: Optional[np.ndarray] = field(default=None, repr=False)
    ideal_gains: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.candidate_ids)

    @property
    def corpus_size(self) -> int:
        if self.ideal_gains is None:
            return len(self)
        return self.ideal_gains.size


def _rank(query_emb: np.ndarray, corpus_emb: np.ndarray, corpus_ids: Sequence[str], k):
    if corpus_emb.shape[0] == 0:
        raise DataFormatError("Retrieval corpus is empty")
    if query_emb.ndim != 2 or query_emb.shape[1] != corpus_emb.shape[1]:
        raise ShapeError(
            f"Query embeddings {query_emb.shape} do not match corpus {corpus_emb.shape}"
        )
    n_corpus = corpus_emb.shape[0]
    k = n_corpus if k is None else min(k, n_corpus)
    scores = cosine_similarity_matrix(query_emb, corpus_emb)
    id_rank = np.empty(n_corpus, dtype=np.int64)
    id_rank[np.argsort(np.asarray(corpus_ids, dtype=object), kind="stable")] = np.arange(
        n_corpus
    )
    # Sort by descending score, ties by candidate id
    order = np.lexsort((np.broadcast_to(id_rank, scores.shape), -scores), axis=-1)
    order = order[:, :k]
    return order, np.take_along_axis(scores, order, axis=1)


def retrieve(
    speech_emb: np.ndarray,
    music_corpus_emb: np.ndarray,
    k: Optional[int] = None,
    corpus_ids: Optional[Sequence[str]] = None,
    query_ids: Optional[Sequence[str]] = None,
) -> List[RankedResult]:
    """Exact top-k retrieval by cosine similarity

    Parameters
    ----------
    speech_emb : ndarray
        Embedded queries, shape (n_queries, d)
    music_corpus_emb : ndarray
        Embedded corpus, shape (n_corpus, d)
    k : int
        Number of candidates per query. The full corpus if None.
    corpus_ids, query_ids : sequence of str
        Identifiers. Row positions (zero-padded) if None.

    Returns
    -------
    list of RankedResult
        Without relevance; see ``Retriever`` for labelled retrieval
    """
    speech_emb = np.asarray(speech_emb, dtype=np.float64)
    music_corpus_emb = np.asarray(music_corpus_emb, dtype=np.float64)
    if corpus_ids is None:
        corpus_ids = [f"{i:08d}" for i in range(music_corpus_emb.shape[0])]
    if query_ids is None:
        query_ids = [str(i) for i in range(speech_emb.shape[0])]
    order, scores = _rank(speech_emb, music_corpus_emb, corpus_ids, k)
    return [
        RankedResult(query_ids[q], [corpus_ids[j] for j in order[q]], scores[q])
        for q in range(order.shape[0])
    ]


class Retriever:
    def __init__(
        self,
        corpus: FeatureSet,
        corpus_emb: np.ndarray,
        query_taxonomy: Taxonomy,
    ):
        """Retrieval against a fixed, embedded music corpus, with binary and
        graded relevance assigned from the emotion labels

        Parameters
        ----------
        corpus : FeatureSet
            Music items of the corpus
        corpus_emb : ndarray
            Their joint-space embeddings, one row per item
        query_taxonomy : Taxonomy
            Taxonomy of the speech queries
        """
        if len(corpus) != corpus_emb.shape[0]:
            raise ShapeError(
                f"{len(corpus)} corpus items but {corpus_emb.shape[0]} embeddings"
            )
        self.corpus = corpus
        self.corpus_emb = np.asarray(corpus_emb, dtype=np.float64)
        self.query_taxonomy = query_taxonomy
        self.similarity = similarity_matrix(query_taxonomy, corpus.taxonomy)
        mapping = label_mapping(query_taxonomy, corpus.taxonomy)
        self._relevant_label = np.array(
            [corpus.taxonomy.index(mapping[l]) for l in query_taxonomy.labels]
        )

    def retrieve(
        self,
        query_emb: np.ndarray,
        query_ids: Sequence[str],
        query_labels: Sequence[str],
        k: Optional[int] = None,
    ) -> List[RankedResult]:
        order, scores = _rank(
            np.asarray(query_emb, dtype=np.float64), self.corpus_emb, self.corpus.ids, k
        )
        corpus_labels = self.corpus.label_index
        results = []
        for q, (query_id, label) in enumerate(zip(query_ids, query_labels)):
            label_index = self.query_taxonomy.index(label)
            gains = self.similarity.values[label_index, corpus_labels]
            candidates = order[q]
            relevance = (corpus_labels[candidates] == self._relevant_label[label_index])
            results.append(
                RankedResult(
                    query_id=query_id,
                    candidate_ids=[self.corpus.ids[j] for j in candidates],
                    scores=scores[q],
                    relevance=relevance.astype(np.float64),
                    graded=gains[candidates],
                    ideal_gains=np.sort(gains)[::-1].copy(),
                )
            )
        return results


def _require(result: RankedResult, name: str) -> np.ndarray:
    value = getattr(result, name)
    if value is None:
        raise ValueError(f"RankedResult of query {result.query_id} carries no {name}")
    return value


def mrr(results: Sequence[RankedResult]) -> float:
    """Mean over queries of 1 / rank of the first relevant candidate (0 for
    a query without relevant candidate in its ranking)"""
    if len(results) == 0:
        return float("nan")
    reciprocal = []
    for result in results:
        hits = np.flatnonzero(_require(result, "relevance"))
        reciprocal.append(1.0 / (hits[0] + 1) if hits.size else 0.0)
    return float(np.mean(reciprocal))


def precision_at_k(results: Sequence[RankedResult], k: int = 5) -> float:
    """Mean over queries of the fraction of relevant candidates in the top
    k. A ranking shorter than k is scored over the candidates available,
    with a warning."""
    if len(results) == 0:
        return float("nan")
    short = False
    precision = []
    for result in results:
        relevance = _require(result, "relevance")[:k]
        if relevance.size < k:
            short = True
        precision.append(relevance.sum() / max(relevance.size, 1))
    if short:
        warnings.warn(f"Ranking shorter than k={k}; precision computed over available")
    return float(np.mean(precision))


def ndcg_per_query(results: Sequence[RankedResult], k: int = 5) -> np.ndarray:
    """NDCG@k of every query, NaN where the ideal DCG is 0"""
    values = np.full(len(results), np.nan)
    for i, result in enumerate(results):
        graded = _require(result, "graded")
        ideal = result.ideal_gains if result.ideal_gains is not None else graded
        idcg = ideal_dcg_at_k(ideal, k)
        if idcg > 0:
            values[i] = dcg_at_k(np.ascontiguousarray(graded, dtype=np.float64), k) / idcg
    return values


def ndcg_at_k(results: Sequence[RankedResult], k: int = 5) -> float:
    """Mean NDCG@k with linear gains, over the queries with a non-zero ideal
    DCG"""
    values = ndcg_per_query(results, k)
    if np.isnan(values).all():
        return float("nan")
    return float(np.nanmean(values))


@dataclass
class EvaluationReport:
    """Metrics of one evaluation run, keyed ``MRR``, ``P@k``, ``NDCG@k``"""

    metrics: Dict[str, float]
    split: str
    corpus_split: str
    n_queries: int
    corpus_size: int
    k: int
    ndcg_excluded: int = 0
    corpus_smaller_than_k: bool = False

    def as_dict(self) -> dict:
        return dict(
            metrics=dict(self.metrics),
            split=self.split,
            corpus_split=self.corpus_split,
            n_queries=self.n_queries,
            corpus_size=self.corpus_size,
            k=self.k,
            ndcg_excluded=self.ndcg_excluded,
            corpus_smaller_than_k=self.corpus_smaller_than_k,
        )


def embed(net: ProjectionNet, features: FeatureSet) -> np.ndarray:
    """Project every item of a FeatureSet into the joint space"""
    return net(features.matrix)


def evaluation_sets(
    bundle: DatasetBundle,
    split: str = "test",
    include_noise: bool = True,
    noise_label: str = NOISE_LABEL,
):
    """Queries and corpus of an evaluation on ``split``.

    The queries are the speech items of the split, the corpus the music
    items of the same split. A split without music falls back to the
    training music. With ``include_noise`` false, noise items leave the
    corpus and queries whose relevant label is the noise label are dropped.

    Returns
    -------
    queries : FeatureSet
    corpus : FeatureSet
    corpus_split : str
    """
    queries = bundle.feature_set("speech", split)
    corpus_split = split
    corpus = bundle.feature_set("music", split)
    if len(corpus) == 0:
        logger.info(f"No music items in split {split}, using the train music corpus")
        corpus_split = "train"
        corpus = bundle.feature_set("music", "train")
    if not include_noise:
        corpus = corpus.subset(np.array([l != noise_label for l in corpus.labels], bool))
        mapping = label_mapping(bundle.speech_taxonomy, bundle.music_taxonomy)
        keep = np.array([mapping[l] != noise_label for l in queries.labels], bool)
        queries = queries.subset(keep)
    return queries, corpus, corpus_split


def evaluate(
    nets: Mapping[str, ProjectionNet],
    bundle: DatasetBundle,
    split: str = "test",
    k: int = 5,
    include_noise: bool = True,
    noise_label: str = NOISE_LABEL,
) -> EvaluationReport:
    """MRR over the full ranking, P@k and NDCG@k of the speech queries of a
    split against the music corpus

    Parameters
    ----------
    nets : dict
        Projection networks by name; ``speech`` and ``music`` are used
    bundle : DatasetBundle
    split : str
        Split of the queries
    k : int
        Cut-off rank of P@k and NDCG@k
    include_noise : bool
        Keep the noise items in the corpus
    noise_label : str
        Music label of the noise items

    Returns
    -------
    EvaluationReport
    """
    if k <= 0:
        raise ValueError(f"Invalid k: {k}")
    queries, corpus, corpus_split = evaluation_sets(bundle, split, include_noise, noise_label)
    if len(queries) == 0:
        raise DataFormatError(f"No speech queries in split {split}")
    retriever = Retriever(corpus, embed(nets["music"], corpus), bundle.speech_taxonomy)
    results = retriever.retrieve(embed(nets["speech"], queries), queries.ids, queries.labels)

    top_k = [_truncate(r, k) for r in results]
    smaller = len(corpus) < k
    ndcg = ndcg_per_query(top_k, k)
    metrics = {
        "MRR": mrr(results),
        f"P@{k}": precision_at_k(top_k, k),
        f"NDCG@{k}": float(np.nanmean(ndcg)) if not np.isnan(ndcg).all() else float("nan"),
    }
    return EvaluationReport(
        metrics=metrics,
        split=split,
        corpus_split=corpus_split,
        n_queries=len(queries),
        corpus_size=len(corpus),
        k=k,
        ndcg_excluded=int(np.isnan(ndcg).sum()),
        corpus_smaller_than_k=smaller,
    )


def _truncate(result: RankedResult, k: int) -> RankedResult:
    return RankedResult(
        result.query_id,
        result.candidate_ids[:k],
        result.scores[:k],
        result.relevance[:k],
        result.graded[:k],
        result.ideal_gains,
    )


def emotion_structure_correlation(
    nets: Mapping[str, ProjectionNet],
    bundle: DatasetBundle,
    split: str = "test",
) -> float:
    """Mean over speech items of the split of the Spearman correlation
    between their row of label VA similarities and their row of feature
    similarities against the music items of the split. Rows with an
    undefined correlation are skipped."""
    queries, corpus, _ = evaluation_sets(bundle, split)
    similarity = similarity_matrix(bundle.speech_taxonomy, bundle.music_taxonomy).values
    S_y = similarity[queries.label_index][:, corpus.label_index]
    S_z = feature_similarity_matrix(embed(nets["speech"], queries), embed(nets["music"], corpus))
    correlation = row_spearman(S_y, S_z)
    if np.isnan(correlation).all():
        return float("nan")
    return float(np.nanmean(correlation))


def export_embeddings(
    nets: Mapping[str, ProjectionNet],
    bundle: DatasetBundle,
    path: Union[str, PathLike],
    split: Optional[str] = None,
) -> Dict[str, Path]:
    """Write the joint-space embeddings of both domains as feature files
    (modality ``embedding``, labels preserved) into the directory ``path``

    Returns
    -------
    paths : dict
        ``speech`` and ``music`` to the written files
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for domain in ("speech", "music"):
        features = bundle.feature_set(domain, split)
        vectors = embed(nets[domain], features)
        records = [
            FeatureRecord(i, domain, "embedding", v, l)
            for i, v, l in zip(features.ids, vectors, features.labels)
        ]
        paths[domain] = directory / f"{domain}.emf"
        write_features(paths[domain], records, features.taxonomy.name)
        logger.info(f"Exported {len(records)} {domain} embeddings to {paths[domain]}")
    return paths
