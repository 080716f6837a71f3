"""Scikit-learn style facade over the retrieval, scoring, and normalizing core.

These estimators exist so the pipeline composes with the wider ecosystem
(``get_params``/``set_params``, ``clone``, pipelines). They hold no logic
of their own beyond input coercion; the contracts live in the functional
modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import retrieval
from .errors import ConfigError
from .metrics import CiderConfig, DocFreqTable, build_docfreq, cider_d, tokenize
from .normalizer import (
    Caption,
    EntityPool,
    NormalizerConfig,
    build_entity_pool,
    normalize,
)
from .store import EmbeddingStore, build_store, ingest


def _as_store(X, what: str) -> EmbeddingStore:
    if isinstance(X, EmbeddingStore):
        return X
    if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__"):
        return ingest(X)
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ConfigError(
            f"{what} must be an EmbeddingStore, a RECAPEMB path, or an "
            f"(N, D) array; got ndim={arr.ndim}"
        )
    ids = [str(i) for i in range(arr.shape[0])]
    return build_store(ids, arr)


class TwoStageRetriever(BaseEstimator):
    """Fit on a database of embeddings, predict rankings for queries.

    Parameters
    ----------
    top_k : int, default 100
        Candidates surviving the global cosine stage.
    rerank : bool, default True
        Whether to re-order survivors by patch-level MNNS.
    threads : int, default 1
        Worker threads used across queries in ``predict``.
    """

    def __init__(self, top_k: int = 100, rerank: bool = True, threads: int = 1):
        self.top_k = top_k
        self.rerank = rerank
        self.threads = threads

    def fit(self, X, y=None):
        """Index the database. X is an EmbeddingStore, path, or (N, D) array."""
        self.db_ = _as_store(X, "database")
        return self

    def _check_fitted(self):
        if not hasattr(self, "db_"):
            raise ConfigError("retriever is not fitted; call fit(db) first")

    def predict(self, X) -> list[retrieval.Ranking]:
        """Rank database records for each query, preserving query order."""
        self._check_fitted()
        cfg = retrieval.RetrievalConfig(top_k=self.top_k, rerank=self.rerank)
        queries = X if isinstance(X, (list, tuple)) else _as_store(X, "queries")
        return retrieval.retrieve_many(queries, self.db_, cfg, threads=self.threads)

    def rank(self, query) -> retrieval.Ranking:
        self._check_fitted()
        cfg = retrieval.RetrievalConfig(top_k=self.top_k, rerank=self.rerank)
        return retrieval.retrieve(query, self.db_, cfg)


class CiderScorer(BaseEstimator):
    """Fit document frequencies on reference groups, score candidates.

    ``fit`` receives one list of reference strings per item; ``predict``
    scores candidate strings against the same-index reference group.
    """

    def __init__(self, sigma: float = 6.0, max_n: int = 4):
        self.sigma = sigma
        self.max_n = max_n

    def fit(self, X, y=None):
        groups = [[tokenize(ref) for ref in group] for group in X]
        self.docfreq_ = build_docfreq(groups, max_n=self.max_n)
        self.reference_groups_ = groups
        return self

    def predict(self, X, references=None) -> np.ndarray:
        if not hasattr(self, "docfreq_"):
            raise ConfigError("scorer is not fitted; call fit(reference_groups)")
        cfg = CiderConfig(sigma=self.sigma, max_n=self.max_n)
        if references is None:
            groups = self.reference_groups_
            if len(X) != len(groups):
                raise ConfigError(
                    f"{len(X)} candidates but {len(groups)} fitted reference "
                    f"groups; pass references= explicitly"
                )
        else:
            groups = [[tokenize(r) for r in group] for group in references]
        scores = [
            cider_d(tokenize(cand), group, self.docfreq_, cfg)
            for cand, group in zip(X, groups)
        ]
        return np.asarray(scores, dtype=np.float64)


class CaptionNormalizer(BaseEstimator, TransformerMixin):
    """Stateless transformer applying entity-aware length normalization.

    ``transform`` accepts plain caption strings or dicts with ``caption``
    plus optional ``entities`` (explicit entity phrases) and optional
    ``web_caption``/``title``/``summary`` pool sources; it returns the
    normalized caption strings.
    """

    def __init__(
        self,
        max_words: int = 104,
        min_words: int = 90,
        importance_mode: str = "tail",
    ):
        self.max_words = max_words
        self.min_words = min_words
        self.importance_mode = importance_mode

    def fit(self, X, y=None):
        return self

    def _config(self) -> NormalizerConfig:
        return NormalizerConfig(
            max_words=self.max_words,
            min_words=self.min_words,
            importance_mode=self.importance_mode,
        )

    def transform(self, X, dft: DocFreqTable | None = None) -> list[str]:
        cfg = self._config()
        out = []
        for item in X:
            if isinstance(item, str):
                caption = Caption.from_text(item)
                pool = EntityPool.empty()
            else:
                caption = Caption.from_text(
                    item["caption"], entities=item.get("entities")
                )
                pool = build_entity_pool(
                    web_caption=item.get("web_caption"),
                    title=item.get("title"),
                    summary=item.get("summary"),
                )
            out.append(normalize(caption, pool, cfg, dft=dft).text)
        return out
