"""Embedding exporter: images (or texts) in, RECAPEMB v1 files out."""

from .backbones import GridStatsBackbone, make_backbone
from .extract import ExtractError, ExtractorConfig, extract, extract_texts
from .format import read_ids, write_records

__version__ = "0.1.0"

__all__ = [
    "ExtractError",
    "ExtractorConfig",
    "GridStatsBackbone",
    "extract",
    "extract_texts",
    "make_backbone",
    "read_ids",
    "write_records",
]
