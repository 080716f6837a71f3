"""Two-stage retrieval: global cosine top-k, then patch-level re-ranking.

Stage 1 is an exact brute-force dot-product scan over unit vectors. Stage 2
re-orders the surviving candidates by mutual nearest neighbor similarity
(MNNS, also written MMNS in places): for every query patch take its best
cosine match among the candidate's patches, for every candidate patch its
best match among the query's, and average the two directions.

Determinism contract: identical inputs produce identical rankings at any
thread count. Ties are broken by candidate id ascending, per-candidate
aggregations run in float64 in fixed row order, and the patch similarity
matrix is one dense matrix product whose reduction order does not depend
on parallel scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MissingPatchesError
from .store import EmbeddingRecord, EmbeddingStore
from .validation import as_matrix, require_patch_rows, require_same_dim


@dataclass(frozen=True)
class Ranking:
    """Scored candidates for one query, best first.

    Entries are sorted by score descending with ties broken by candidate
    id ascending; candidate ids are unique.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]

    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def top(self) -> str:
        return self.entries[0][0]


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 100
    rerank: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")


def _sorted_entries(ids, scores) -> tuple[tuple[str, float], ...]:
    """Sort by score descending, candidate id ascending on ties."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return tuple((ids[i], float(scores[i])) for i in order)


def global_topk(query: EmbeddingRecord, db: EmbeddingStore, k: int) -> Ranking:
    """Exact top-k candidates by cosine similarity of global vectors.

    Vectors are unit-normalized at ingest, so cosine reduces to a dot
    product. Returns all records when the database holds fewer than k.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if len(db) == 0:
        raise ConfigError("database store is empty")
    require_same_dim(query.dim, db.dim, "query vs database")
    scores = db.globals @ query.global_vec.astype(np.float32, copy=False)
    scores = scores.astype(np.float64)
    k = min(k, len(db))
    if k < len(db):
        # argpartition narrows the field, then every candidate tied with the
        # k-th score joins the pool so the id tie-break stays exact.
        part = np.argpartition(-scores, k - 1)
        kth = scores[part[k - 1]]
        pool_idx = np.nonzero(scores >= kth)[0]
        pool = [(db.ids[i], scores[i]) for i in pool_idx]
    else:
        pool = list(zip(db.ids, scores))
    pool.sort(key=lambda e: (-e[1], e[0]))
    return Ranking(
        query_id=query.id,
        entries=tuple((cid, float(s)) for cid, s in pool[:k]),
    )


def mnns_score(query_patches, candidate_patches) -> float:
    """Mutual nearest neighbor similarity between two unit-row patch sets.

    Returns ``0.5 * (mean_i max_j S_ij + mean_j max_i S_ij)`` where
    ``S = Q @ C.T``. Symmetric in its arguments and equal to 1 when the
    matrices coincide. The similarity matrix is a single dense product;
    the directional means accumulate in float64.
    """
    q = as_matrix(query_patches, "query patches")
    c = as_matrix(candidate_patches, "candidate patches")
    require_patch_rows(q, "query")
    require_patch_rows(c, "candidate")
    require_same_dim(q.shape[1], c.shape[1], "query vs candidate patches")
    sims = q @ c.T
    forward = float(np.mean(sims.max(axis=1), dtype=np.float64))
    backward = float(np.mean(sims.max(axis=0), dtype=np.float64))
    return 0.5 * (forward + backward)


def rerank(
    query: EmbeddingRecord, candidates: Ranking, db: EmbeddingStore
) -> Ranking:
    """Reorder a candidate ranking by patch-level MNNS.

    The candidate set is preserved; only the order and scores change, and
    the output scores are MNNS values rather than global cosines.
    """
    if query.patches is None:
        raise MissingPatchesError(f"query {query.id!r} carries no patch matrix")
    ids = []
    scores = []
    for cid, _ in candidates.entries:
        rec = db.get(cid)
        if rec.patches is None:
            raise MissingPatchesError(f"candidate {cid!r} carries no patch matrix")
        ids.append(cid)
        scores.append(mnns_score(query.patches, rec.patches))
    return Ranking(query_id=candidates.query_id, entries=_sorted_entries(ids, scores))


def retrieve(
    query: EmbeddingRecord, db: EmbeddingStore, cfg: RetrievalConfig | None = None
) -> Ranking:
    """Run the full pipeline: global top-k, then MNNS re-ranking if enabled."""
    cfg = cfg or RetrievalConfig()
    ranking = global_topk(query, db, cfg.top_k)
    if cfg.rerank:
        ranking = rerank(query, ranking, db)
    return ranking


def retrieve_many(
    queries,
    db: EmbeddingStore,
    cfg: RetrievalConfig | None = None,
    threads: int = 1,
) -> list[Ranking]:
    """Retrieve for several queries, preserving input order in the output.

    Queries are independent, so they may be fanned out across a thread
    pool; results are collected by position, keeping the output identical
    at any thread count.
    """
    cfg = cfg or RetrievalConfig()
    queries = list(queries)
    if threads <= 1 or len(queries) <= 1:
        return [retrieve(q, db, cfg) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: retrieve(q, db, cfg), queries))


def ranking_to_json_line(ranking: Ranking) -> str:
    """One JSON object per query; scores fixed at six decimal digits."""
    results = ", ".join(
        f'{{"id": {json.dumps(cid, ensure_ascii=False)}, "score": {score:.6f}}}'
        for cid, score in ranking.entries
    )
    qid = json.dumps(ranking.query_id, ensure_ascii=False)
    return f'{{"query_id": {qid}, "results": [{results}]}}'


def write_rankings(rankings, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ranking in rankings:
            fh.write(ranking_to_json_line(ranking))
            fh.write("\n")


def read_rankings(path) -> list[Ranking]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                Ranking(
                    query_id=obj["query_id"],
                    entries=tuple(
                        (e["id"], float(e["score"])) for e in obj["results"]
                    ),
                )
            )
    return out
