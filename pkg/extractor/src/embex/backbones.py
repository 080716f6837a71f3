"""Vision backbones producing global and patch features per image.

Two families:

* ``grid-stats``: dependency-light, fully deterministic features built
  from per-cell pixel statistics projected through fixed random matrices.
  No weights, no network; intended for tests, fixtures, and plumbing
  validation.
* ``dinov2``: loads a pretrained vision transformer through torch hub
  (network access and torch required); the global vector is the class
  token, the patches are the remaining patch tokens.

A backbone returns raw, unnormalized float32 features; normalization is
the consuming store's job.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

# grid-stats works on a fixed canvas so features do not depend on the
# original resolution
_CANVAS = 224
_STAT_FEATURES = 12
_PROJECTION_SEED = 1318


class GridStatsBackbone:
    """Per-cell pixel statistics through a fixed random projection."""

    def __init__(self, dim: int = 64, grid: int = 4):
        if dim < 1 or grid < 1:
            raise ValueError("dim and grid must be >= 1")
        self.dim = dim
        self.grid = grid
        self.patch_count = grid * grid
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.standard_normal(
            (_STAT_FEATURES, dim)
        ).astype(np.float32) / np.sqrt(_STAT_FEATURES)

    def _cell_stats(self, cell: np.ndarray, row: int, col: int) -> np.ndarray:
        rgb_mean = cell.mean(axis=(0, 1))
        rgb_std = cell.std(axis=(0, 1))
        lum = cell.mean(axis=2)
        gx = np.abs(np.diff(lum, axis=1)).mean()
        gy = np.abs(np.diff(lum, axis=0)).mean()
        pos = np.array(
            [row / max(self.grid - 1, 1), col / max(self.grid - 1, 1)],
            dtype=np.float64,
        )
        lum_range = lum.max() - lum.min()
        lum_center = lum[lum.shape[0] // 4 : -lum.shape[0] // 4 or None,
                         lum.shape[1] // 4 : -lum.shape[1] // 4 or None].mean()
        feats = np.concatenate(
            [rgb_mean, rgb_std, [gx, gy], pos, [lum_range, lum_center]]
        )
        return feats.astype(np.float64)

    def embed_image(self, image: Image.Image) -> tuple[np.ndarray, np.ndarray]:
        """(global, patches) raw float32 features for one image."""
        rgb = image.convert("RGB").resize((_CANVAS, _CANVAS), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
        step = _CANVAS // self.grid
        stats = []
        for row in range(self.grid):
            for col in range(self.grid):
                cell = arr[
                    row * step : (row + 1) * step, col * step : (col + 1) * step
                ]
                stats.append(self._cell_stats(cell, row, col))
        stats = np.stack(stats)
        patches = (stats @ self._projection.astype(np.float64)).astype(np.float32)
        global_vec = (
            stats.mean(axis=0) @ self._projection.astype(np.float64)
        ).astype(np.float32)
        return global_vec, patches

    def embed_text(self, text: str) -> np.ndarray:
        """Deterministic hashed character-trigram projection of a string."""
        vec = np.zeros(self.dim, dtype=np.float64)
        lowered = f"  {text.lower()} "
        for i in range(len(lowered) - 2):
            gram = lowered[i : i + 3]
            h = hash_trigram(gram)
            vec[h % self.dim] += 1.0 if (h >> 16) % 2 else -1.0
        return vec.astype(np.float32)


def hash_trigram(gram: str) -> int:
    """Stable FNV-1a over UTF-8 bytes; Python's hash() is salted per run."""
    h = 0x811C9DC5
    for byte in gram.encode("utf-8"):
        h = ((h ^ byte) * 0x01000193) & 0xFFFFFFFF
    return h


class TorchHubBackbone:
    """Pretrained vision transformer via torch hub (network required)."""

    HUB_NAMES = {
        "dinov2-vitg14": ("facebookresearch/dinov2", "dinov2_vitg14_reg"),
        "dinov2-vitl14": ("facebookresearch/dinov2", "dinov2_vitl14_reg"),
    }

    def __init__(self, name: str, device: str = "cpu"):
        try:
            import torch
        except ImportError as exc:
            raise RuntimeError(
                f"backbone {name!r} needs torch installed"
            ) from exc
        repo, entry = self.HUB_NAMES[name]
        self._torch = torch
        self.device = device
        self.model = torch.hub.load(repo, entry).to(device).eval()
        self.dim = self.model.embed_dim
        self.patch_count = None  # depends on input resolution; set on first use

    def embed_image(self, image: Image.Image):
        torch = self._torch
        rgb = image.convert("RGB").resize((_CANVAS, _CANVAS), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
        mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
        std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
        tensor = torch.from_numpy(((arr - mean) / std).transpose(2, 0, 1))
        with torch.no_grad():
            out = self.model.forward_features(
                tensor.unsqueeze(0).to(self.device)
            )
        global_vec = out["x_norm_clstoken"][0].cpu().numpy().astype(np.float32)
        patches = out["x_norm_patchtokens"][0].cpu().numpy().astype(np.float32)
        self.patch_count = patches.shape[0]
        return global_vec, patches


def make_backbone(name: str, dim: int, grid: int, device: str):
    if name == "grid-stats":
        return GridStatsBackbone(dim=dim, grid=grid)
    if name in TorchHubBackbone.HUB_NAMES:
        return TorchHubBackbone(name, device=device)
    known = ["grid-stats", *TorchHubBackbone.HUB_NAMES]
    raise ValueError(f"unknown backbone {name!r}; available: {', '.join(known)}")
