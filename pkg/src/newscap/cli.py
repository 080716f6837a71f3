"""Batch command-line interface.

Subcommands cover the whole pipeline: ingest-embeddings, retrieve, eval,
normalize, build-prompt, match-web-captions, cider, docfreq. Options can
come from a plain ``key = value`` config file via ``--config``; explicit
flags win over config values. Progress and diagnostics go to stderr so
stdout stays machine-parseable.

Exit codes: 0 success, 1 processing error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import context as ctx
from . import metrics, normalizer, retrieval, store
from .errors import (
    DuplicateIdError,
    FormatError,
    IoError,
    NewscapError,
    NotFoundError,
)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return p


def _load_config(path) -> dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment; keys use '_' or '-'."""
    _require_file(path, "config")
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(
                    f"{path}: line {lineno}: expected 'key = value'"
                )
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


_TRUE_WORDS = ("1", "true", "yes", "on")


def _opt(ns, config: dict, key: str, default, cast=str):
    """Effective option value: explicit flag, then config file, then default."""
    val = getattr(ns, key, None)
    if val is not None:
        return val
    raw = config.get(key)
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in _TRUE_WORDS
    return cast(raw)


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(
                    f"{path}: line {lineno}: malformed JSON: {exc.msg}"
                ) from exc


def _read_id_map(path, value_key: str):
    """JSON-lines {id, <value_key>} into an ordered dict, rejecting duplicates."""
    out = {}
    for lineno, obj in _read_jsonl(path):
        if "id" not in obj or value_key not in obj:
            raise FormatError(
                f"{path}: line {lineno}: expected fields 'id' and '{value_key}'"
            )
        rid = str(obj["id"])
        if rid in out:
            raise DuplicateIdError(f"{path}: line {lineno}: duplicate id {rid!r}")
        out[rid] = obj[value_key]
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(ns, config) -> int:
    path = _require_file(_opt(ns, config, "input", None), "embedding")
    st = store.ingest(path, normalize=_opt(ns, config, "normalize", True, bool))
    output = _opt(ns, config, "output", None)
    if output:
        store.write(st, output)
    summary = {
        "records": len(st),
        "dim": st.dim,
        "patch_count": st.patch_count if st.patch_count is not None else 0,
    }
    print(json.dumps(summary))
    _log(f"ingest-embeddings: {len(st)} records, dim {st.dim}")
    return 0


def cmd_retrieve(ns, config) -> int:
    db_path = _require_file(_opt(ns, config, "db", None), "database embedding")
    query_path = _require_file(_opt(ns, config, "queries", None), "query embedding")
    output = _opt(ns, config, "output", None)
    threads = max(1, _opt(ns, config, "threads", 1, int))
    cfg = retrieval.RetrievalConfig(
        top_k=_opt(ns, config, "top_k", 100, int),
        rerank=_opt(ns, config, "rerank", True, bool),
    )
    db = store.ingest(db_path)
    queries = store.ingest(query_path)

    def one(pos: int) -> str:
        query = queries.record_at(pos)
        try:
            ranking = retrieval.retrieve(query, db, cfg)
        except NewscapError as exc:
            raise NewscapError(f"query {query.id!r}: {exc}") from exc
        return retrieval.ranking_to_json_line(ranking)

    # BLAS pinned to one thread: per-query numerics stay identical at any
    # pool width and the pool scales across queries instead.
    with threadpool_limits(limits=1):
        if threads == 1 or len(queries) <= 1:
            lines = [one(i) for i in range(len(queries))]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                lines = list(pool.map(one, range(len(queries))))
    with open(output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    _log(
        f"retrieve: {len(queries)} queries against {len(db)} records "
        f"(top_k={cfg.top_k}, rerank={cfg.rerank}, threads={threads})"
    )
    return 0


def _load_truth(path) -> dict[str, set[str]]:
    truth: dict[str, set[str]] = {}
    for lineno, obj in _read_jsonl(path):
        if "query_id" not in obj or "relevant" not in obj:
            raise FormatError(
                f"{path}: line {lineno}: expected fields 'query_id' and 'relevant'"
            )
        qid = str(obj["query_id"])
        if qid in truth:
            raise DuplicateIdError(f"{path}: line {lineno}: duplicate query {qid!r}")
        truth[qid] = {str(r) for r in obj["relevant"]}
    return truth


def _cider_scores(candidates, references, dft, cfg) -> dict[str, float]:
    scores = {}
    for cid, text in candidates.items():
        group = references.get(cid)
        if group is None:
            raise NotFoundError(f"candidate {cid!r} has no reference captions")
        refs = [metrics.tokenize(r) for r in group]
        scores[cid] = metrics.cider_d(metrics.tokenize(text), refs, dft, cfg)
    return scores


def cmd_eval(ns, config) -> int:
    rankings_path = _require_file(_opt(ns, config, "rankings", None), "ranking")
    truth_path = _require_file(_opt(ns, config, "truth", None), "ground-truth")
    ks = [int(k) for k in str(_opt(ns, config, "ks", "1,10")).split(",") if k]
    rankings = retrieval.read_rankings(rankings_path)
    truth = _load_truth(truth_path)
    base = metrics.retrieval_metrics(rankings, truth, ks=ks)
    report = {"mAP": base["mAP"], "recall": base["recall"]}

    cand_path = _opt(ns, config, "candidates", None)
    refs_path = _opt(ns, config, "references", None)
    if cand_path or refs_path:
        if not (cand_path and refs_path):
            raise FormatError("caption scoring needs --candidates and --references")
        candidates = _read_id_map(_require_file(cand_path, "candidate"), "caption")
        references = _read_id_map(_require_file(refs_path, "reference"), "references")
        dft_path = _opt(ns, config, "docfreq", None)
        if dft_path:
            dft = metrics.DocFreqTable.load(_require_file(dft_path, "docfreq"))
        else:
            groups = [
                [metrics.tokenize(r) for r in group] for group in references.values()
            ]
            dft = metrics.build_docfreq(groups)
        cfg = metrics.CiderConfig(
            sigma=_opt(ns, config, "sigma", 6.0, float),
            max_n=_opt(ns, config, "max_n", 4, int),
        )
        scores = _cider_scores(candidates, references, dft, cfg)
        report["cider"] = sum(scores.values()) / len(scores) if scores else 0.0

    img_path = _opt(ns, config, "clip_image_emb", None)
    txt_path = _opt(ns, config, "clip_text_emb", None)
    if img_path or txt_path:
        if not (img_path and txt_path):
            raise FormatError(
                "clip scoring needs --clip-image-emb and --clip-text-emb"
            )
        images = store.ingest(_require_file(img_path, "image embedding"))
        texts = store.ingest(_require_file(txt_path, "text embedding"))
        w = _opt(ns, config, "clip_weight", 2.5, float)
        vals = []
        for rec in texts:
            img = images.get(rec.id)
            vals.append(metrics.clip_score(img.global_vec, rec.global_vec, w=w))
        report["clip_score"] = sum(vals) / len(vals) if vals else 0.0

    payload = json.dumps(report, ensure_ascii=False)
    output = _opt(ns, config, "output", None)
    if output:
        Path(output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    _log(f"eval: {len(rankings)} rankings scored")
    return 0


def cmd_normalize(ns, config) -> int:
    input_path = _require_file(_opt(ns, config, "input", None), "caption")
    output = _opt(ns, config, "output", None)
    cfg = normalizer.NormalizerConfig(
        max_words=_opt(ns, config, "max_words", 104, int),
        min_words=_opt(ns, config, "min_words", 90, int),
        importance_mode=_opt(ns, config, "importance_mode", "tail"),
    )
    dft = None
    dft_path = _opt(ns, config, "docfreq", None)
    if dft_path:
        dft = metrics.DocFreqTable.load(_require_file(dft_path, "docfreq"))

    lines = []
    count = 0
    for lineno, obj in _read_jsonl(input_path):
        if "id" not in obj or "caption" not in obj:
            raise FormatError(
                f"{input_path}: line {lineno}: expected fields 'id' and 'caption'"
            )
        caption = normalizer.Caption.from_text(
            str(obj["caption"]), entities=obj.get("entities")
        )
        pool = normalizer.build_entity_pool(
            web_caption=obj.get("web_caption"),
            title=obj.get("title"),
            summary=obj.get("summary"),
        )
        result = normalizer.normalize(caption, pool, cfg, dft=dft)
        lines.append(
            json.dumps({"id": str(obj["id"]), "caption": result.text},
                       ensure_ascii=False)
        )
        count += 1
    with open(output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    _log(f"normalize: {count} captions (max={cfg.max_words}, min={cfg.min_words})")
    return 0


def cmd_build_prompt(ns, config) -> int:
    rankings_path = _require_file(_opt(ns, config, "rankings", None), "ranking")
    corpus_path = _require_file(_opt(ns, config, "corpus", None), "corpus")
    generic_path = _require_file(
        _opt(ns, config, "generic_captions", None), "generic caption"
    )
    output = _opt(ns, config, "output", None)

    corpus = ctx.load_corpus(corpus_path)
    image_index = corpus.image_index()
    generic = ctx.read_generated(generic_path)
    summaries = {}
    summaries_path = _opt(ns, config, "summaries", None)
    if summaries_path:
        summaries = ctx.read_generated(_require_file(summaries_path, "summary"))
    web_override = {}
    web_path = _opt(ns, config, "web_captions", None)
    if web_path:
        web_override = ctx.read_generated(_require_file(web_path, "web caption"))

    lines = []
    for ranking in retrieval.read_rankings(rankings_path):
        if not ranking.entries:
            _log(f"build-prompt: query {ranking.query_id!r} has no candidates; skipped")
            continue
        top_id = ranking.top()
        if top_id in corpus:
            article = corpus.get(top_id)
        elif top_id in image_index:
            article = corpus.get(image_index[top_id])
        else:
            raise NotFoundError(
                f"ranked candidate {top_id!r} matches no article or image id"
            )
        web_caption = web_override.get(ranking.query_id)
        if web_caption is None and article.web_captions:
            for image_ref, caption in article.web_captions:
                if image_ref == top_id:
                    web_caption = caption
                    break
        generic_caption = generic.get(ranking.query_id)
        if generic_caption is None:
            raise NotFoundError(
                f"query {ranking.query_id!r} has no generic caption"
            )
        summary = summaries.get(article.id, article.summary or "")
        bundle = ctx.ContextBundle(
            generic_caption=generic_caption,
            title=article.title,
            summary=summary,
            web_caption=web_caption,
        )
        try:
            system_text, user_text = ctx.build_prompt(bundle)
        except NewscapError as exc:
            raise NewscapError(f"article {article.id!r}: {exc}") from exc
        lines.append(
            json.dumps(
                {
                    "query_id": ranking.query_id,
                    "article_id": article.id,
                    "system": system_text,
                    "user": user_text,
                },
                ensure_ascii=False,
            )
        )
    with open(output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    _log(f"build-prompt: {len(lines)} prompts")
    return 0


def cmd_match_web_captions(ns, config) -> int:
    images_path = _require_file(_opt(ns, config, "images", None), "image embedding")
    crawled_path = _require_file(_opt(ns, config, "crawled", None), "crawled pair")
    output = _opt(ns, config, "output", None)
    images = store.ingest(images_path)
    lines = []
    for lineno, obj in _read_jsonl(crawled_path):
        if "id" not in obj or "pairs" not in obj:
            raise FormatError(
                f"{crawled_path}: line {lineno}: expected fields 'id' and 'pairs'"
            )
        rid = str(obj["id"])
        rec = images.get(rid)
        pairs = []
        for idx, p in enumerate(obj["pairs"]):
            emb = np.asarray(p["embedding"], dtype=np.float64)
            norm = np.linalg.norm(emb)
            if not np.isfinite(norm) or norm == 0.0:
                raise FormatError(
                    f"{crawled_path}: line {lineno}: pair {idx} has a zero or "
                    f"non-finite embedding"
                )
            # stored image vectors are unit; bring raw JSON vectors to unit
            # norm so the match is by cosine
            pairs.append((str(p["caption"]), emb / norm))
        caption, score = ctx.match_web_caption(rec.global_vec, pairs)
        cap = json.dumps(caption, ensure_ascii=False)
        lines.append(f'{{"id": {json.dumps(rid)}, "caption": {cap}, '
                     f'"score": {score:.6f}}}')
    with open(output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    _log(f"match-web-captions: {len(lines)} queries matched")
    return 0


def cmd_cider(ns, config) -> int:
    cand_path = _require_file(_opt(ns, config, "candidates", None), "candidate")
    refs_path = _require_file(_opt(ns, config, "references", None), "reference")
    candidates = _read_id_map(cand_path, "caption")
    references = _read_id_map(refs_path, "references")
    dft_path = _opt(ns, config, "docfreq", None)
    if dft_path:
        dft = metrics.DocFreqTable.load(_require_file(dft_path, "docfreq"))
    else:
        groups = [
            [metrics.tokenize(r) for r in group] for group in references.values()
        ]
        dft = metrics.build_docfreq(groups)
    cfg = metrics.CiderConfig(
        sigma=_opt(ns, config, "sigma", 6.0, float),
        max_n=_opt(ns, config, "max_n", 4, int),
    )
    scores = _cider_scores(candidates, references, dft, cfg)
    mean = sum(scores.values()) / len(scores) if scores else 0.0
    payload = json.dumps({"cider": mean, "scores": scores}, ensure_ascii=False)
    output = _opt(ns, config, "output", None)
    if output:
        Path(output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    _log(f"cider: {len(scores)} captions scored, mean {mean:.4f}")
    return 0


def cmd_docfreq(ns, config) -> int:
    refs_path = _require_file(_opt(ns, config, "references", None), "reference")
    output = _opt(ns, config, "output", None)
    references = _read_id_map(refs_path, "references")
    groups = [
        [metrics.tokenize(r) for r in group] for group in references.values()
    ]
    dft = metrics.build_docfreq(groups, max_n=_opt(ns, config, "max_n", 4, int))
    dft.save(output)
    _log(
        f"docfreq: {dft.corpus_size} reference groups, {len(dft.df)} n-grams"
    )
    return 0


# --------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags win")

    parser = argparse.ArgumentParser(
        prog="newscap",
        description="Image-to-article retrieval and caption post-processing.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser(
        "ingest-embeddings",
        parents=[common],
        help="validate and normalize a RECAPEMB embedding file",
    )
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="write the normalized store here")
    p.add_argument(
        "--no-normalize", dest="normalize", action="store_false", default=None
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser(
        "retrieve", parents=[common], help="rank database records per query"
    )
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--no-rerank", dest="rerank", action="store_false", default=None)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser(
        "eval", parents=[common], help="score rankings and optionally captions"
    )
    p.add_argument("--rankings", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--ks")
    p.add_argument("--candidates")
    p.add_argument("--references")
    p.add_argument("--docfreq")
    p.add_argument("--sigma", type=float)
    p.add_argument("--max-n", dest="max_n", type=int)
    p.add_argument("--clip-image-emb", dest="clip_image_emb")
    p.add_argument("--clip-text-emb", dest="clip_text_emb")
    p.add_argument("--clip-weight", dest="clip_weight", type=float)
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "normalize", parents=[common], help="length-normalize captions"
    )
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-words", dest="max_words", type=int)
    p.add_argument("--min-words", dest="min_words", type=int)
    p.add_argument(
        "--importance-mode", dest="importance_mode", choices=("tail", "idf")
    )
    p.add_argument("--docfreq")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser(
        "build-prompt",
        parents=[common],
        help="assemble generator prompts from rankings and context",
    )
    p.add_argument("--rankings", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--generic-captions", dest="generic_captions", required=True)
    p.add_argument("--summaries")
    p.add_argument("--web-captions", dest="web_captions")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_prompt)

    p = sub.add_parser(
        "match-web-captions",
        parents=[common],
        help="match crawled captions to retrieved images by embedding",
    )
    p.add_argument("--images", required=True)
    p.add_argument("--crawled", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_match_web_captions)

    p = sub.add_parser("cider", parents=[common], help="score captions only")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--docfreq")
    p.add_argument("--sigma", type=float)
    p.add_argument("--max-n", dest="max_n", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_cider)

    p = sub.add_parser(
        "docfreq", parents=[common], help="build a document-frequency table"
    )
    p.add_argument("--references", required=True)
    p.add_argument("--max-n", dest="max_n", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_docfreq)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if not hasattr(ns, "func"):
        parser.print_help(file=sys.stderr)
        return 2
    try:
        config = _load_config(ns.config) if getattr(ns, "config", None) else {}
        return ns.func(ns, config)
    except (OSError, IoError) as exc:
        _log(f"error: {exc}")
        return 2
    except NewscapError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
