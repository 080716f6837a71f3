"""Caption length normalization that protects named entities.

Three phases share one heuristic entity recognizer:

* hard truncation keeps the first ``max_words`` words;
* semantic truncation drops ordinary words from the tail first so entity
  words survive, falling back to hard truncation when only entities are
  left;
* enrichment appends entity phrases from external sources (web caption,
  article title, article summary, in that priority) to captions below
  ``min_words``.

``normalize`` runs enrichment then semantic truncation, which keeps the
hard upper bound while topping up short captions. Word counts matter
because the caption metric discounts length differences exponentially.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .metrics import DocFreqTable, tokenize

_SENTENCE_END = (".", "!", "?")

ENTITY_SOURCE_PRIORITY = ("web_caption", "title", "summary")


@dataclass(frozen=True)
class Caption:
    """Whitespace-delimited words plus a per-word entity flag."""

    words: tuple[str, ...]
    entity_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.words) != len(self.entity_mask):
            raise ConfigError(
                f"entity mask length {len(self.entity_mask)} does not match "
                f"word count {len(self.words)}"
            )
        if any(not w for w in self.words):
            raise ConfigError("caption words must be nonempty strings")

    def __len__(self) -> int:
        return len(self.words)

    @property
    def text(self) -> str:
        return " ".join(self.words)

    @classmethod
    def from_text(cls, text: str, entities=None) -> "Caption":
        """Split on whitespace and flag entities.

        Explicit ``entities`` (a list of phrase strings) override the
        heuristic recognizer: every case-insensitive contiguous occurrence
        of each phrase is flagged.
        """
        words = tuple(text.split())
        if entities is not None:
            mask = mark_phrases(words, entities)
        else:
            mask = tuple(recognize_entities(words))
        return cls(words=words, entity_mask=mask)


@dataclass(frozen=True)
class NormalizerConfig:
    max_words: int = 104
    min_words: int = 90
    importance_mode: str = "tail"

    def __post_init__(self):
        if self.max_words < 1 or self.min_words < 1:
            raise ConfigError("word thresholds must be >= 1")
        if self.min_words > self.max_words:
            raise ConfigError(
                f"min_words {self.min_words} exceeds max_words {self.max_words}"
            )
        if self.importance_mode not in ("tail", "idf"):
            raise ConfigError(
                f"importance_mode must be 'tail' or 'idf', "
                f"got {self.importance_mode!r}"
            )


@dataclass(frozen=True)
class EntityPool:
    """Entity phrases available for enrichment, in priority order."""

    entries: tuple[tuple[tuple[str, ...], str], ...]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def empty(cls) -> "EntityPool":
        return cls(entries=())


def _first_alpha(word: str) -> str | None:
    for ch in word:
        if ch.isalpha():
            return ch
    return None


def recognize_entities(words) -> list[bool]:
    """Heuristic entity flags for a word sequence.

    Flags (a) maximal runs of capitalized words unless the run is a lone
    sentence-initial word, (b) words containing a digit, and (c) all-caps
    words of length >= 2. Sentence starts are position 0 and positions
    after a word ending in '.', '!' or '?'.
    """
    words = list(words)
    n = len(words)
    mask = [False] * n

    def sentence_start(i: int) -> bool:
        return i == 0 or words[i - 1].endswith(_SENTENCE_END)

    i = 0
    while i < n:
        first = _first_alpha(words[i])
        if first is not None and first.isupper():
            j = i
            while j < n:
                nxt = _first_alpha(words[j])
                if nxt is None or not nxt.isupper():
                    break
                j += 1
            run_len = j - i
            if run_len >= 2 or not sentence_start(i):
                for p in range(i, j):
                    mask[p] = True
            i = j
        else:
            i += 1

    for p, word in enumerate(words):
        if any(ch.isdigit() for ch in word):
            mask[p] = True
        elif len(word) >= 2 and word.isupper():
            mask[p] = True
    return mask


def mark_phrases(words, phrases) -> tuple[bool, ...]:
    """Flag every contiguous case-insensitive occurrence of each phrase."""
    lowered = [w.lower() for w in words]
    mask = [False] * len(words)
    for phrase in phrases:
        target = [w.lower() for w in str(phrase).split()]
        if not target:
            continue
        m = len(target)
        for start in range(len(words) - m + 1):
            if lowered[start : start + m] == target:
                for p in range(start, start + m):
                    mask[p] = True
    return tuple(mask)


def gaussian_truncate(caption: Caption, max_words: int) -> Caption:
    """Keep the first ``max_words`` words; shorter captions pass through."""
    if max_words < 1:
        raise ConfigError(f"max_words must be >= 1, got {max_words}")
    if len(caption) <= max_words:
        return caption
    return Caption(
        words=caption.words[:max_words],
        entity_mask=caption.entity_mask[:max_words],
    )


def _word_idf(word: str, dft: DocFreqTable) -> float:
    tokens = tokenize(word).tokens
    if not tokens:
        # Pure punctuation carries no content; treat as most removable.
        return 0.0
    return dft.idf((tokens[0],))


def semantic_truncate(
    caption: Caption,
    max_words: int,
    dft: DocFreqTable | None = None,
    importance_mode: str = "tail",
) -> Caption:
    """Truncate to ``max_words`` while keeping entity words intact.

    Ordinary (non-entity) words are removed one at a time, by default from
    the caption tail backward; in ``idf`` mode the lowest-IDF words go
    first (ties broken toward the tail), which needs a document-frequency
    table. When every surviving word is an entity and the caption is still
    too long, the remainder is hard-truncated.
    """
    if max_words < 1:
        raise ConfigError(f"max_words must be >= 1, got {max_words}")
    n = len(caption)
    if n <= max_words:
        return caption

    excess = n - max_words
    plain = [i for i in range(n) if not caption.entity_mask[i]]
    if importance_mode == "idf":
        if dft is None:
            raise ConfigError("idf importance mode needs a document-frequency table")
        plain.sort(key=lambda i: (_word_idf(caption.words[i], dft), -i))
        drop = set(plain[:excess])
    elif importance_mode == "tail":
        drop = set(plain[-excess:]) if excess <= len(plain) else set(plain)
    else:
        raise ConfigError(f"unknown importance_mode {importance_mode!r}")

    words = [w for i, w in enumerate(caption.words) if i not in drop]
    mask = [m for i, m in enumerate(caption.entity_mask) if i not in drop]
    survivor = Caption(words=tuple(words), entity_mask=tuple(mask))
    # Fewer ordinary words than the excess: everything left is an entity.
    return gaussian_truncate(survivor, max_words)


def enrich(caption: Caption, pool: EntityPool, min_words: int) -> Caption:
    """Append pool entities until the caption reaches ``min_words``.

    Entities whose full word sequence already occurs in the caption
    (case-insensitive) are skipped; appended words are flagged as
    entities. Stops when the pool runs dry, never removes words, and
    overshoots ``min_words`` by at most the last entity's length minus 1.
    """
    if min_words < 1:
        raise ConfigError(f"min_words must be >= 1, got {min_words}")
    if len(caption) >= min_words:
        return caption
    words = list(caption.words)
    mask = list(caption.entity_mask)
    lowered = [w.lower() for w in words]

    def present(target: list[str]) -> bool:
        m = len(target)
        return any(
            lowered[s : s + m] == target for s in range(len(lowered) - m + 1)
        )

    for phrase, _source in pool.entries:
        if len(words) >= min_words:
            break
        target = [w.lower() for w in phrase]
        if not target or present(target):
            continue
        words.extend(phrase)
        mask.extend([True] * len(phrase))
        lowered.extend(target)
    if len(words) == len(caption):
        return caption
    return Caption(words=tuple(words), entity_mask=tuple(mask))


def normalize(
    caption: Caption,
    pool: EntityPool,
    cfg: NormalizerConfig | None = None,
    dft: DocFreqTable | None = None,
) -> Caption:
    """Enrich below ``min_words``, then entity-aware truncate to ``max_words``.

    Enrichment runs first so the hard upper bound always holds on the
    output; applying the pipeline twice is the identity.
    """
    cfg = cfg or NormalizerConfig()
    enriched = enrich(caption, pool, cfg.min_words)
    return semantic_truncate(
        enriched, cfg.max_words, dft=dft, importance_mode=cfg.importance_mode
    )


def extract_entity_phrases(text: str) -> list[tuple[str, ...]]:
    """Maximal runs of recognized entity words in a source text."""
    words = text.split()
    mask = recognize_entities(words)
    phrases = []
    i = 0
    while i < len(words):
        if mask[i]:
            j = i
            while j < len(words) and mask[j]:
                j += 1
            phrases.append(tuple(words[i:j]))
            i = j
        else:
            i += 1
    return phrases


def build_entity_pool(
    web_caption: str | None = None,
    title: str | None = None,
    summary: str | None = None,
) -> EntityPool:
    """Collect entity phrases from context sources in priority order.

    Web captions are image-specific, titles article-specific, summaries
    broadest, so they rank in that order; duplicate phrases keep their
    first (highest-priority) occurrence.
    """
    sources = {"web_caption": web_caption, "title": title, "summary": summary}
    entries = []
    seen: set[tuple[str, ...]] = set()
    for name in ENTITY_SOURCE_PRIORITY:
        text = sources[name]
        if not text:
            continue
        for phrase in extract_entity_phrases(text):
            key = tuple(w.lower() for w in phrase)
            if key in seen:
                continue
            seen.add(key)
            entries.append((phrase, name))
    return EntityPool(entries=tuple(entries))
