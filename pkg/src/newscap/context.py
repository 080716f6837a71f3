"""Article corpus ingestion, web-caption matching, and prompt assembly.

Summaries and generic captions come from external model runs and are
ingested as files; nothing here calls a model or the network, which keeps
this layer deterministic and testable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import prompts
from .errors import (
    DimensionError,
    DuplicateIdError,
    FormatError,
    IncompleteBundleError,
    IoError,
    NoCandidatesError,
    NotFoundError,
)
from .validation import as_vector


@dataclass(frozen=True)
class ArticleRecord:
    id: str
    title: str = ""
    body: str = ""
    url: str = ""
    image_ids: tuple[str, ...] = ()
    summary: str | None = None
    web_captions: tuple[tuple[str, str], ...] | None = None


@dataclass(frozen=True)
class ContextBundle:
    """The three context signals fed to the caption generator."""

    generic_caption: str
    title: str
    summary: str
    web_caption: str | None = None


class ArticleCorpus:
    """Id-indexed, insertion-ordered, read-only article collection."""

    def __init__(self, records):
        self._records: dict[str, ArticleRecord] = {}
        for rec in records:
            if rec.id in self._records:
                raise DuplicateIdError(f"duplicate article id: {rec.id!r}")
            self._records[rec.id] = rec

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    def __contains__(self, article_id: str) -> bool:
        return article_id in self._records

    def get(self, article_id: str) -> ArticleRecord:
        rec = self._records.get(article_id)
        if rec is None:
            raise NotFoundError(f"unknown article id: {article_id!r}")
        return rec

    def image_index(self) -> dict[str, str]:
        """Map every referenced image id to its owning article id."""
        index: dict[str, str] = {}
        for rec in self._records.values():
            for img in rec.image_ids:
                index.setdefault(img, rec.id)
        return index


def _parse_web_captions(raw, lineno: int):
    if raw is None:
        return None
    pairs = []
    for item in raw:
        if isinstance(item, dict):
            pairs.append((str(item["image_ref"]), str(item["caption"])))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            pairs.append((str(item[0]), str(item[1])))
        else:
            raise FormatError(
                f"line {lineno}: web_captions entries must be "
                f"{{image_ref, caption}} objects or two-element arrays"
            )
    return tuple(pairs)


def _parse_article(obj: dict, lineno: int) -> ArticleRecord:
    try:
        article_id = str(obj["id"])
    except KeyError as exc:
        raise FormatError(f"line {lineno}: missing required field 'id'") from exc
    if not article_id:
        raise FormatError(f"line {lineno}: article id must be nonempty")
    return ArticleRecord(
        id=article_id,
        title=str(obj.get("title", "")),
        body=str(obj.get("body", "")),
        url=str(obj.get("url", "")),
        image_ids=tuple(str(i) for i in obj.get("image_ids", [])),
        summary=None if obj.get("summary") is None else str(obj["summary"]),
        web_captions=_parse_web_captions(obj.get("web_captions"), lineno),
    )


def load_corpus(path) -> ArticleCorpus:
    """Read a JSON-lines article corpus, preserving line order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"line {lineno}: expected a JSON object")
            records.append(_parse_article(obj, lineno))
    return ArticleCorpus(records)


def save_corpus(corpus: ArticleCorpus, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in corpus:
                obj = {
                    "id": rec.id,
                    "title": rec.title,
                    "body": rec.body,
                    "url": rec.url,
                    "image_ids": list(rec.image_ids),
                }
                if rec.summary is not None:
                    obj["summary"] = rec.summary
                if rec.web_captions is not None:
                    obj["web_captions"] = [
                        {"image_ref": ref, "caption": cap}
                        for ref, cap in rec.web_captions
                    ]
                fh.write(json.dumps(obj, ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"failed to write {path}: {exc}") from exc


def match_web_caption(retrieved_image_emb, crawled) -> tuple[str, float]:
    """Pick the crawled caption whose image is most similar to the query.

    ``crawled`` is a list of (caption, embedding) pairs; ties keep the
    earliest pair.
    """
    crawled = list(crawled)
    if not crawled:
        raise NoCandidatesError("no crawled caption candidates to match against")
    query = as_vector(retrieved_image_emb, "retrieved image embedding").astype(
        np.float64
    )
    best_caption = None
    best_score = -np.inf
    for caption, emb in crawled:
        vec = as_vector(emb, "crawled image embedding")
        if vec.shape[0] != query.shape[0]:
            raise DimensionError(
                f"crawled embedding dimension {vec.shape[0]} does not match "
                f"query dimension {query.shape[0]}"
            )
        score = float(np.dot(query, vec.astype(np.float64)))
        if score > best_score:
            best_score = score
            best_caption = caption
    return best_caption, best_score


def build_prompt(bundle: ContextBundle) -> tuple[str, str]:
    """Render the generator prompt pair from a context bundle.

    The system text is fixed; the user text substitutes the generic
    caption, web caption (the literal string "None" when absent), title,
    and article summary into the versioned template.
    """
    if not bundle.generic_caption:
        raise IncompleteBundleError("bundle has no generic caption")
    if not bundle.summary:
        raise IncompleteBundleError("bundle has no article summary")
    web = bundle.web_caption if bundle.web_caption else prompts.MISSING_WEB_CAPTION
    user = prompts.USER_PROMPT_TEMPLATE.format(
        generic_caption=bundle.generic_caption,
        web_caption=web,
        title=bundle.title,
        summary=bundle.summary,
    )
    return prompts.SYSTEM_PROMPT, user


def read_generated(path) -> dict[str, str]:
    """Read a JSON-lines id-to-text file produced by an external model run.

    Accepts either a ``text`` or a ``caption`` field per line.
    """
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "id" not in obj:
                raise FormatError(f"line {lineno}: expected an object with 'id'")
            if "text" in obj:
                text = str(obj["text"])
            elif "caption" in obj:
                text = str(obj["caption"])
            else:
                raise FormatError(
                    f"line {lineno}: expected a 'text' or 'caption' field"
                )
            rid = str(obj["id"])
            if rid in out:
                raise DuplicateIdError(f"line {lineno}: duplicate id {rid!r}")
            out[rid] = text
    return out
