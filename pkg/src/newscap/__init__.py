"""Image-to-article retrieval and caption post-processing toolkit.

The pipeline matches transformed query images to their source articles
with a two-stage embedding search (exact global cosine, then patch-level
mutual nearest neighbor re-ranking), assembles article context into
generator prompts, scores captions with a length-penalized n-gram metric,
and length-normalizes captions while protecting named entities.
"""

from .context import (
    ArticleCorpus,
    ArticleRecord,
    ContextBundle,
    build_prompt,
    load_corpus,
    match_web_caption,
    read_generated,
    save_corpus,
)
from .errors import (
    ConfigError,
    DegenerateVectorError,
    DimensionError,
    DuplicateIdError,
    EmptyPatchError,
    FormatError,
    IncompleteBundleError,
    IoError,
    MissingPatchesError,
    MissingTruthError,
    NewscapError,
    NoCandidatesError,
    NotFoundError,
)
from .estimators import CaptionNormalizer, CiderScorer, TwoStageRetriever
from .metrics import (
    CiderConfig,
    DocFreqTable,
    NGramTfIdf,
    TokenizedCaption,
    average_precision,
    build_docfreq,
    cider_d,
    clip_score,
    gaussian_penalty,
    retrieval_metrics,
    tfidf,
    tokenize,
)
from .normalizer import (
    Caption,
    EntityPool,
    NormalizerConfig,
    build_entity_pool,
    enrich,
    gaussian_truncate,
    normalize,
    recognize_entities,
    semantic_truncate,
)
from .retrieval import (
    Ranking,
    RetrievalConfig,
    global_topk,
    mnns_score,
    read_rankings,
    rerank,
    retrieve,
    retrieve_many,
    write_rankings,
)
from .store import (
    EmbeddingRecord,
    EmbeddingStore,
    build_store,
    get,
    ingest,
    write,
)

__version__ = "0.1.0"

__all__ = [
    "ArticleCorpus",
    "ArticleRecord",
    "Caption",
    "CaptionNormalizer",
    "CiderConfig",
    "CiderScorer",
    "ConfigError",
    "ContextBundle",
    "DegenerateVectorError",
    "DimensionError",
    "DocFreqTable",
    "DuplicateIdError",
    "EmbeddingRecord",
    "EmbeddingStore",
    "EmptyPatchError",
    "EntityPool",
    "FormatError",
    "IncompleteBundleError",
    "IoError",
    "MissingPatchesError",
    "MissingTruthError",
    "NGramTfIdf",
    "NewscapError",
    "NoCandidatesError",
    "NormalizerConfig",
    "NotFoundError",
    "Ranking",
    "RetrievalConfig",
    "TokenizedCaption",
    "TwoStageRetriever",
    "average_precision",
    "build_docfreq",
    "build_entity_pool",
    "build_prompt",
    "build_store",
    "cider_d",
    "clip_score",
    "enrich",
    "gaussian_penalty",
    "gaussian_truncate",
    "get",
    "global_topk",
    "ingest",
    "load_corpus",
    "match_web_caption",
    "mnns_score",
    "normalize",
    "read_generated",
    "read_rankings",
    "recognize_entities",
    "rerank",
    "retrieval_metrics",
    "retrieve",
    "retrieve_many",
    "save_corpus",
    "semantic_truncate",
    "tfidf",
    "tokenize",
    "write",
    "write_rankings",
]
