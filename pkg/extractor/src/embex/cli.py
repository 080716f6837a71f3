"""Command-line entry point for the embedding exporter."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractError, ExtractorConfig, extract, extract_texts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embex",
        description="Export image (or text) embeddings as RECAPEMB v1.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--image-dir", help="directory of images; id = file stem")
    source.add_argument("--texts", help="JSON-lines {id, text} file to embed")
    parser.add_argument("--output", required=True)
    parser.add_argument(
        "--backbone",
        default="dinov2-vitg14",
        help="grid-stats (offline, deterministic) or a pretrained hub model",
    )
    parser.add_argument(
        "--include-patches",
        action=argparse.BooleanOptionalAction,
        default=True,
    )
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--dim", type=int, default=64,
                        help="feature dimension (grid-stats only)")
    parser.add_argument("--grid", type=int, default=4,
                        help="patch grid side (grid-stats only)")
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = ExtractorConfig(
        image_dir=ns.image_dir or "",
        output=ns.output,
        backbone=ns.backbone,
        include_patches=ns.include_patches,
        batch_size=ns.batch_size,
        device=ns.device,
        dim=ns.dim,
        grid=ns.grid,
    )
    try:
        if ns.texts:
            report = extract_texts(cfg, ns.texts)
        else:
            report = extract(cfg)
    except (ExtractError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {len(report['processed'])} records "
        f"(dim {report['dim']}, patches {report['patch_count']}) "
        f"to {ns.output}; skipped {len(report['skipped'])}",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
