"""Extractor export behavior and conformance with the consuming pipeline.

The conformance tests drive the primary component only through its
external interfaces: the RECAPEMB v1 file and the ``newscap
ingest-embeddings`` subcommand.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from embex.cli import main
from embex.extract import ExtractorConfig, extract, list_images
from embex.format import read_ids, read_records


def make_image(path, seed, size=(96, 72)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    # add structure so cells differ
    arr[:, : size[0] // 2, 0] = 255 - arr[:, : size[0] // 2, 0]
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    for i, name in enumerate(["cat", "boat", "arena"]):
        make_image(d / f"{name}.png", seed=100 + i)
    return d


def run_ingest(emb_path, out_path=None):
    """Invoke the consuming pipeline's CLI on an exported file."""
    argv = [sys.executable, "-m", "newscap.cli", "ingest-embeddings",
            "--input", str(emb_path)]
    if out_path is not None:
        argv += ["--output", str(out_path)]
    return subprocess.run(argv, capture_output=True, text=True)


class TestExtract:
    def test_three_image_fixture(self, image_dir, tmp_path):
        out = tmp_path / "images.emb"
        cfg = ExtractorConfig(
            image_dir=str(image_dir), output=str(out), backbone="grid-stats"
        )
        report = extract(cfg)
        stems = sorted(p.stem for p in image_dir.iterdir())
        assert report["processed"] == stems
        assert read_ids(out) == stems
        assert report["dim"] == 64
        assert report["patch_count"] == 16
        assert (tmp_path / "images.emb.report.json").is_file()

    def test_rerun_yields_identical_files(self, image_dir, tmp_path):
        out1 = tmp_path / "a.emb"
        out2 = tmp_path / "b.emb"
        for out in (out1, out2):
            extract(
                ExtractorConfig(
                    image_dir=str(image_dir), output=str(out),
                    backbone="grid-stats",
                )
            )
        assert out1.read_bytes() == out2.read_bytes()

    def test_same_pixels_same_vectors(self, tmp_path):
        d = tmp_path / "imgs"
        d.mkdir()
        make_image(d / "one.png", seed=5)
        (d / "two.png").write_bytes((d / "one.png").read_bytes())
        out = tmp_path / "pair.emb"
        extract(
            ExtractorConfig(
                image_dir=str(d), output=str(out), backbone="grid-stats"
            )
        )
        records = {rid: (g, p) for rid, g, p in read_records(out)}
        assert np.array_equal(records["one"][0], records["two"][0])
        assert np.array_equal(records["one"][1], records["two"][1])

    def test_duplicate_stems_rejected(self, image_dir, tmp_path, capsys):
        make_image(image_dir / "cat.bmp", seed=9)
        rc = main(
            ["--image-dir", str(image_dir), "--output", str(tmp_path / "x.emb"),
             "--backbone", "grid-stats"]
        )
        assert rc == 1
        assert "cat" in capsys.readouterr().err

    def test_unreadable_image_skipped_and_reported(self, image_dir, tmp_path,
                                                   capsys):
        (image_dir / "broken.png").write_bytes(b"not a png at all")
        out = tmp_path / "partial.emb"
        rc = main(
            ["--image-dir", str(image_dir), "--output", str(out),
             "--backbone", "grid-stats"]
        )
        assert rc == 0
        assert "broken.png" in capsys.readouterr().err
        report = json.loads((tmp_path / "partial.emb.report.json").read_text())
        assert [s["file"] for s in report["skipped"]] == ["broken.png"]
        assert read_ids(out) == ["arena", "boat", "cat"]

    def test_zero_successes_fails(self, tmp_path):
        d = tmp_path / "junk"
        d.mkdir()
        (d / "bad.png").write_bytes(b"nope")
        rc = main(
            ["--image-dir", str(d), "--output", str(tmp_path / "x.emb"),
             "--backbone", "grid-stats"]
        )
        assert rc == 1

    def test_unknown_backbone_named(self, image_dir, tmp_path, capsys):
        rc = main(
            ["--image-dir", str(image_dir), "--output", str(tmp_path / "x.emb"),
             "--backbone", "imaginary"]
        )
        assert rc == 1
        assert "imaginary" in capsys.readouterr().err

    def test_list_images_sorted_and_unique(self, image_dir):
        files = list_images(image_dir)
        assert [p.stem for p in files] == ["arena", "boat", "cat"]


class TestPrimaryConformance:
    def test_export_ingests_cleanly(self, image_dir, tmp_path):
        out = tmp_path / "images.emb"
        extract(
            ExtractorConfig(
                image_dir=str(image_dir), output=str(out), backbone="grid-stats"
            )
        )
        normalized = tmp_path / "normalized.emb"
        proc = run_ingest(out, normalized)
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary == {"records": 3, "dim": 64, "patch_count": 16}
        # ids survive the consuming side's round trip unchanged
        assert read_ids(normalized) == ["arena", "boat", "cat"]
        norms = [
            float(np.linalg.norm(g.astype(np.float64)))
            for _, g, _ in read_records(normalized)
        ]
        assert all(abs(n - 1.0) <= 1e-5 for n in norms)

    def test_global_only_export_ingests(self, image_dir, tmp_path):
        out = tmp_path / "flat.emb"
        rc = main(
            ["--image-dir", str(image_dir), "--output", str(out),
             "--backbone", "grid-stats", "--no-include-patches"]
        )
        assert rc == 0
        proc = run_ingest(out)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["patch_count"] == 0


class TestTextMode:
    def test_text_embeddings_roundtrip(self, tmp_path):
        texts = tmp_path / "captions.jsonl"
        texts.write_text(
            json.dumps({"id": "t1", "text": "A crowd at the stadium"}) + "\n"
            + json.dumps({"id": "t2", "text": "Flood waters in the town"}) + "\n"
        )
        out = tmp_path / "texts.emb"
        rc = main(["--texts", str(texts), "--output", str(out), "--dim", "32"])
        assert rc == 0
        records = read_records(out)
        assert [rid for rid, _, _ in records] == ["t1", "t2"]
        assert all(g.shape == (32,) for _, g, _ in records)
        proc = run_ingest(out)
        assert proc.returncode == 0, proc.stderr

    def test_text_mode_deterministic(self, tmp_path):
        texts = tmp_path / "t.jsonl"
        texts.write_text(json.dumps({"id": "a", "text": "same words"}) + "\n")
        out1, out2 = tmp_path / "1.emb", tmp_path / "2.emb"
        assert main(["--texts", str(texts), "--output", str(out1)]) == 0
        assert main(["--texts", str(texts), "--output", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_duplicate_text_id_rejected(self, tmp_path):
        texts = tmp_path / "t.jsonl"
        texts.write_text(
            json.dumps({"id": "a", "text": "x"}) + "\n"
            + json.dumps({"id": "a", "text": "y"}) + "\n"
        )
        rc = main(["--texts", str(texts), "--output", str(tmp_path / "o.emb")])
        assert rc == 1
