"""Walk an image directory, embed every readable image, export RECAPEMB v1.

Record ids are file stems, so stems must be unique across extensions.
Unreadable files are skipped with a warning and listed in the sidecar
report next to the output file; an export with zero successful images is
an error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .backbones import make_backbone
from .format import write_records

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp", ".tif",
                  ".tiff")


class ExtractError(Exception):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    image_dir: str
    output: str
    backbone: str = "dinov2-vitg14"
    include_patches: bool = True
    batch_size: int = 8
    device: str = "cpu"
    # grid-stats knobs; ignored by pretrained backbones
    dim: int = 64
    grid: int = 4

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExtractError(f"batch_size must be >= 1, got {self.batch_size}")


def list_images(image_dir: Path) -> list[Path]:
    # record ids are stems, so order by stem (stems are unique, see below)
    files = sorted(
        (
            p
            for p in image_dir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        ),
        key=lambda p: (p.stem, p.name),
    )
    stems: dict[str, Path] = {}
    for p in files:
        if p.stem in stems:
            raise ExtractError(
                f"duplicate file stem {p.stem!r}: {stems[p.stem].name} "
                f"and {p.name}"
            )
        stems[p.stem] = p
    return files


def _report_path(output: Path) -> Path:
    return output.with_name(output.name + ".report.json")


def extract(cfg: ExtractorConfig) -> dict:
    """Run the export; returns the sidecar report dict."""
    image_dir = Path(cfg.image_dir)
    if not image_dir.is_dir():
        raise ExtractError(f"image directory not found: {cfg.image_dir}")
    output = Path(cfg.output)
    backbone = make_backbone(cfg.backbone, cfg.dim, cfg.grid, cfg.device)

    files = list_images(image_dir)
    processed: list[str] = []
    skipped: list[dict] = []
    rows = []
    for path in files:
        try:
            with Image.open(path) as img:
                global_vec, patches = backbone.embed_image(img)
        except Exception as exc:  # unreadable or undecodable image
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            skipped.append({"file": path.name, "reason": str(exc)})
            continue
        rows.append((path.stem, global_vec, patches if cfg.include_patches else None))
        processed.append(path.stem)

    if not processed:
        raise ExtractError(f"no readable images in {cfg.image_dir}")

    dim = rows[0][1].shape[0]
    patch_count = rows[0][2].shape[0] if cfg.include_patches else None
    write_records(output, rows, dim=dim, patch_count=patch_count)

    report = {
        "backbone": cfg.backbone,
        "dim": int(dim),
        "patch_count": int(patch_count) if patch_count else 0,
        "processed": processed,
        "skipped": skipped,
    }
    _report_path(output).write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return report


def extract_texts(cfg: ExtractorConfig, texts_path: str) -> dict:
    """Embed JSON-lines ``{"id", "text"}`` records into a global-only file."""
    backbone = make_backbone("grid-stats", cfg.dim, cfg.grid, cfg.device)
    rows = []
    seen = set()
    with open(texts_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            rid = str(obj["id"])
            if rid in seen:
                raise ExtractError(f"line {lineno}: duplicate id {rid!r}")
            seen.add(rid)
            rows.append((rid, backbone.embed_text(str(obj["text"])), None))
    if not rows:
        raise ExtractError(f"no text records in {texts_path}")
    output = Path(cfg.output)
    write_records(output, rows, dim=cfg.dim, patch_count=None)
    report = {
        "backbone": "grid-stats-text",
        "dim": cfg.dim,
        "patch_count": 0,
        "processed": [rid for rid, _, _ in rows],
        "skipped": [],
    }
    _report_path(output).write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return report
