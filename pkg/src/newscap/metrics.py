"""Caption and retrieval metrics.

The caption score couples n-gram TF-IDF agreement with a Gaussian penalty
on the word-count difference between candidate and reference: the penalty
is ``exp(-(len_c - len_s)^2 / (2 sigma^2))``, so at sigma=6 a ten-word gap
already costs more than 75% of the score. Per n-gram order the score of a
candidate against m references is

    (10 / m) * sum_j penalty_j * <min(g_c, g_sj), g_sj> / (|g_c| |g_sj|)

with min taken element-wise (the candidate vector clipped to the
reference) and a zero norm on either side contributing nothing; the final
value is the mean over n = 1..max_n.

Retrieval quality is reported as mean average precision and Recall@K over
per-query rankings against ground-truth relevance sets.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, MissingTruthError
from .validation import as_vector

_TOKEN_CLEANER = re.compile(r"[^a-z0-9']")


@dataclass(frozen=True)
class TokenizedCaption:
    raw: str
    tokens: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenizedCaption:
    """Lowercase, map every character outside [a-z0-9'] to a space, split."""
    cleaned = _TOKEN_CLEANER.sub(" ", text.lower())
    return TokenizedCaption(raw=text, tokens=tuple(cleaned.split()))


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class DocFreqTable:
    """Document frequencies over a reference corpus.

    ``corpus_size`` counts reference groups (one group per image);
    ``df[g]`` counts the groups in which n-gram ``g`` occurs in at least
    one reference.
    """

    corpus_size: int
    df: dict[tuple[str, ...], int] = field(repr=False)

    def __post_init__(self):
        if self.corpus_size < 1:
            raise ConfigError(f"corpus_size must be >= 1, got {self.corpus_size}")
        if self.df and max(self.df.values()) > self.corpus_size:
            raise ConfigError(
                "document frequencies cannot exceed the corpus size"
            )

    def idf(self, gram: tuple[str, ...]) -> float:
        # Unseen n-grams fall back to df=1: rare terms keep full weight
        # instead of dividing by zero.
        return math.log(self.corpus_size / self.df.get(gram, 1))

    def to_json(self) -> str:
        return json.dumps(
            {
                "corpus_size": self.corpus_size,
                "df": {" ".join(k): v for k, v in sorted(self.df.items())},
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "DocFreqTable":
        obj = json.loads(text)
        return cls(
            corpus_size=int(obj["corpus_size"]),
            df={tuple(k.split(" ")): int(v) for k, v in obj["df"].items()},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DocFreqTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class NGramTfIdf:
    n: int
    weights: dict[tuple[str, ...], float] = field(repr=False)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))


@dataclass(frozen=True)
class CiderConfig:
    sigma: float = 6.0
    max_n: int = 4

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 1 <= self.max_n <= 4:
            raise ConfigError(f"max_n must lie in [1, 4], got {self.max_n}")


def gaussian_penalty(len_c: int, len_s: int, sigma: float) -> float:
    """Length-difference discount exp(-(len_c - len_s)^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    diff = float(len_c - len_s)
    return math.exp(-(diff * diff) / (2.0 * sigma * sigma))


def build_docfreq(reference_groups, max_n: int = 4) -> DocFreqTable:
    """Count, per n-gram, how many reference groups contain it.

    ``reference_groups`` is one list of TokenizedCaption per image.
    """
    groups = list(reference_groups)
    if not groups:
        raise ConfigError("document frequencies need at least one reference group")
    df: dict[tuple[str, ...], int] = {}
    for group in groups:
        seen: set[tuple[str, ...]] = set()
        for ref in group:
            for n in range(1, max_n + 1):
                seen.update(ngram_counts(ref.tokens, n))
        for gram in seen:
            df[gram] = df.get(gram, 0) + 1
    return DocFreqTable(corpus_size=len(groups), df=df)


def tfidf(caption: TokenizedCaption, n: int, dft: DocFreqTable) -> NGramTfIdf:
    """TF-IDF vector over the caption's n-grams.

    TF is the n-gram count over the caption's total n-gram count; IDF is
    log(corpus_size / df). Captions shorter than n tokens yield the empty
    vector.
    """
    counts = ngram_counts(caption.tokens, n)
    total = sum(counts.values())
    if total == 0:
        return NGramTfIdf(n=n, weights={})
    weights = {
        gram: (cnt / total) * dft.idf(gram) for gram, cnt in counts.items()
    }
    return NGramTfIdf(n=n, weights=weights)


def _clipped_cosine(cand: NGramTfIdf, ref: NGramTfIdf) -> float:
    """<min(cand, ref), ref> / (|cand| |ref|); zero when either norm is."""
    cn = cand.norm()
    rn = ref.norm()
    if cn == 0.0 or rn == 0.0:
        return 0.0
    dot = 0.0
    for gram, rw in ref.weights.items():
        cw = cand.weights.get(gram, 0.0)
        dot += min(cw, rw) * rw
    return dot / (cn * rn)


def cider_d(
    candidate: TokenizedCaption,
    refs,
    dft: DocFreqTable,
    cfg: CiderConfig | None = None,
) -> float:
    """Length-penalized clipped TF-IDF agreement, averaged over n-gram orders.

    Scores lie in [0, 10]; a candidate identical to its single reference
    scores 10 whenever all of its n-grams carry positive IDF.
    """
    cfg = cfg or CiderConfig()
    refs = list(refs)
    if not refs:
        raise ConfigError("cider_d needs at least one reference caption")
    per_n = []
    for n in range(1, cfg.max_n + 1):
        cand_vec = tfidf(candidate, n, dft)
        acc = 0.0
        for ref in refs:
            pen = gaussian_penalty(candidate.length, ref.length, cfg.sigma)
            acc += pen * _clipped_cosine(cand_vec, tfidf(ref, n, dft))
        per_n.append(10.0 / len(refs) * acc)
    return sum(per_n) / len(per_n)


def clip_score(image_emb, text_emb, w: float = 2.5) -> float:
    """w * max(cos(image, text), 0) over unit embeddings."""
    if w <= 0:
        raise ConfigError(f"weight must be positive, got {w}")
    img = as_vector(image_emb, "image embedding")
    txt = as_vector(text_emb, "text embedding")
    if img.shape[0] != txt.shape[0]:
        raise DimensionError(
            f"image vs text embedding: dimension mismatch "
            f"({img.shape[0]} vs {txt.shape[0]})"
        )
    cos = float(np.dot(img.astype(np.float64), txt.astype(np.float64)))
    return w * max(cos, 0.0)


def average_precision(ranked_ids, relevant) -> float:
    """Standard AP: mean of precision@rank over ranks holding relevant ids.

    The denominator is the full relevant-set size, so with a single
    relevant item this is 1/rank, or 0 when it never appears.
    """
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits = 0
    acc = 0.0
    for rank, cid in enumerate(ranked_ids, start=1):
        if cid in relevant:
            hits += 1
            acc += hits / rank
    return acc / len(relevant)


def retrieval_metrics(rankings, truth, ks=(1, 10)) -> dict:
    """mAP plus Recall@K over per-query rankings.

    ``truth`` maps query id to its set of relevant candidate ids. Every
    ranked query must appear in it. Recall@K is the fraction of queries
    with at least one relevant id among the top K.
    """
    rankings = list(rankings)
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise ConfigError(f"recall cutoffs must be >= 1, got {ks}")
    aps = []
    hits_at = {k: 0 for k in ks}
    for ranking in rankings:
        if ranking.query_id not in truth:
            raise MissingTruthError(
                f"query {ranking.query_id!r} has no ground-truth entry"
            )
        relevant = set(truth[ranking.query_id])
        ranked_ids = ranking.ids()
        aps.append(average_precision(ranked_ids, relevant))
        for k in ks:
            if any(cid in relevant for cid in ranked_ids[:k]):
                hits_at[k] += 1
    n = len(rankings)
    return {
        "mAP": sum(aps) / n if n else 0.0,
        "recall": {k: hits_at[k] / n if n else 0.0 for k in ks},
    }
