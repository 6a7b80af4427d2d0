import logging

import numpy as np
import pytest
from PIL import Image
from pydantic import ValidationError
from scipy import stats

from hpgn import data
from hpgn.data import QfMode, compressed_low, ingest, make_batch, make_example, pair_qf, sample_qf
from hpgn.errors import ConfigurationError, IngestionError
from hpgn.jpeg_prior import QualityFactor, compress_roundtrip, qf_to_qm
from hpgn.metrics import psnr
from hpgn.storage import write_png


class TestQfMode:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("fixed(80)", QfMode.fixed(80)),
            ("80", QfMode.fixed(80)),
            (" random( 10 , 90 ) ", QfMode.random(10, 90)),
        ],
    )
    def test_parse(self, text, expected):
        assert QfMode.parse(text) == expected
        assert QfMode.parse(str(expected)) == expected

    @pytest.mark.parametrize("text", ["random(90,10)", "random(0,50)", "fixed(101)"])
    def test_invalid_ranges(self, text):
        with pytest.raises(ValidationError):
            QfMode.parse(text)

    @pytest.mark.parametrize("text", ["uniform(1,2)", "fixed(1,2)", "random(5)"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            QfMode.parse(text)


class TestSampleQf:
    def test_fixed(self, rng):
        assert {sample_qf(rng, QfMode.fixed(80)).value for _ in range(50)} == {80}

    def test_degenerate_range(self, rng):
        assert {sample_qf(rng, QfMode.random(10, 10)).value for _ in range(50)} == {10}

    def test_uniform(self):
        """10⁴ draws from random(10,90) pass a chi-square test at α = 0.01"""
        rng = np.random.default_rng(2024)
        draws = np.array([sample_qf(rng, QfMode.random(10, 90)).value for _ in range(10_000)])
        assert draws.min() >= 10 and draws.max() <= 90
        counts = np.bincount(draws - 10, minlength=81)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_deterministic_stream(self):
        mode = QfMode.random(1, 100)
        first = [sample_qf(np.random.default_rng(5), mode).value for _ in range(3)]
        rng = np.random.default_rng(5)
        assert sample_qf(rng, mode).value == first[0]


class TestIngest:
    def test_pairs_sorted(self, make_corpus):
        pairs = ingest(make_corpus(count=2))
        assert [p.name for p in pairs] == ["000.png", "001.png"]
        assert pairs[0].low.shape == pairs[0].high.shape == (48, 64, 3)
        assert not pairs[0].precompressed

    def test_unmatched_file(self, make_corpus, natural_image):
        root = make_corpus(count=2)
        write_png(root / "low" / "extra.png", natural_image())
        with pytest.raises(IngestionError, match="extra.png"):
            ingest(root)

    def test_unrecognised_extension(self, make_corpus):
        """Files of other types are reported, not skipped"""
        root = make_corpus(count=2)
        (root / "low" / "000.bmp").write_bytes(b"BM")
        with pytest.raises(IngestionError, match="000.bmp"):
            ingest(root)

    def test_duplicate_stem(self, make_corpus):
        """Two low files for one stem are ambiguous"""
        root = make_corpus(count=2, height=64, width=64)
        with Image.open(root / "low" / "001.png") as image:
            image.convert("RGB").save(root / "low" / "001.jpg", quality=90)
        with pytest.raises(IngestionError, match="share the stem '001'"):
            ingest(root)

    def test_dotfiles_ignored(self, make_corpus):
        root = make_corpus(count=2)
        (root / "high" / ".DS_Store").write_bytes(b"\0")
        assert len(ingest(root)) == 2

    def test_missing_directory(self, tmp_path):
        with pytest.raises(IngestionError, match="missing directory"):
            ingest(tmp_path)

    def test_empty(self, tmp_path):
        (tmp_path / "low").mkdir()
        (tmp_path / "high").mkdir()
        with pytest.raises(IngestionError):
            ingest(tmp_path)

    def test_size_mismatch_is_skipped(self, make_corpus, natural_image, caplog):
        root = make_corpus(count=2)
        write_png(root / "low" / "009.png", natural_image(16, 16))
        write_png(root / "high" / "009.png", natural_image(16, 20))
        with caplog.at_level(logging.WARNING):
            pairs = ingest(root)
        assert len(pairs) == 2
        assert "009" in caplog.text

    def test_manifest_marks_precompressed(self, make_corpus):
        root = make_corpus(count=2)
        (root / "qf.txt").write_text("# prepared\n000.png 35\n")
        pairs = ingest(root)
        assert pairs[0].precompressed and pairs[0].qf_assigned.value == 35
        assert not pairs[1].precompressed and pairs[1].qf_assigned is None

    def test_bad_manifest(self, make_corpus):
        root = make_corpus(count=1)
        (root / "qf.txt").write_text("000.png high\n")
        with pytest.raises(IngestionError, match="qf.txt:1"):
            ingest(root)

    def test_jpeg_low_images(self, make_corpus):
        """JPEG inputs are already compressed; their QF is estimated on demand"""
        root = make_corpus(count=1, height=64, width=64)
        low_png = root / "low" / "000.png"
        with Image.open(low_png) as image:
            image.convert("RGB").save(root / "low" / "000.jpg", quality=40)
        low_png.unlink()
        (pair,) = ingest(root)
        assert pair.precompressed
        assert 1 <= pair_qf(pair, np.random.default_rng(0), QfMode.fixed(80)).value <= 100
        with pytest.raises(IngestionError):
            ingest(root, allow_encoded=False)


class TestMakeExample:
    def test_qf100_is_nearly_the_low_crop(self, make_corpus, tiny_config):
        (pair,) = ingest(make_corpus(count=1))
        config = tiny_config.model_copy(update={"qf_mode": QfMode.fixed(100)})
        example = make_example(pair, np.random.default_rng(0), config)
        y, x = example.offset
        low_crop = pair.low[y : y + 16, x : x + 16].transpose(2, 0, 1)
        comp = np.round(example.comp * 255).astype(np.uint8)
        assert psnr(comp, low_crop) >= 45
        assert example.qf.value == 100 and example.qm == qf_to_qm(100)

    def test_crops_are_aligned(self, make_corpus, tiny_config):
        (pair,) = ingest(make_corpus(count=1))
        example = make_example(pair, np.random.default_rng(1), tiny_config)
        y, x = example.offset
        expected = np.round(example.high * 255).astype(np.uint8).transpose(1, 2, 0)
        np.testing.assert_array_equal(expected, pair.high[y : y + 16, x : x + 16])
        comp = compress_roundtrip(pair.low, example.qf.value)[y : y + 16, x : x + 16]
        np.testing.assert_array_equal(np.round(example.comp * 255).astype(np.uint8).transpose(1, 2, 0), comp)

    def test_deterministic(self, make_corpus, tiny_config):
        (pair,) = ingest(make_corpus(count=1))
        a = make_example(pair, np.random.default_rng(9), tiny_config)
        b = make_example(pair, np.random.default_rng(9), tiny_config)
        assert a.comp.tobytes() == b.comp.tobytes() and a.high.tobytes() == b.high.tobytes()
        assert a.qf == b.qf and a.offset == b.offset

    def test_flip(self, make_corpus, tiny_config):
        """Flipped examples mirror both crops together"""
        (pair,) = ingest(make_corpus(count=1))
        config = tiny_config.model_copy(update={"flip": True})
        rng = np.random.default_rng(2)
        for _ in range(10):
            example = make_example(pair, rng, config)
            y, x = example.offset
            high = pair.high[y : y + 16, x : x + 16].transpose(2, 0, 1) / 255.0
            assert np.array_equal(example.high, high) or np.array_equal(example.high, high[:, :, ::-1])

    def test_crop_too_large(self, make_corpus, tiny_config):
        (pair,) = ingest(make_corpus(count=1, height=12, width=40))
        with pytest.raises(ConfigurationError, match="smaller crop"):
            make_example(pair, np.random.default_rng(0), tiny_config)


class TestMakeBatch:
    def test_cycles_through_pairs(self, make_corpus, tiny_config):
        pairs = ingest(make_corpus(count=3))
        rng = np.random.default_rng(0)
        names = [make_batch(pairs, rng, tiny_config, step).names for step in range(3)]
        assert names == [["000.png", "001.png"], ["002.png", "000.png"], ["001.png", "002.png"]]

    def test_shapes(self, make_corpus, tiny_config):
        batch = make_batch(ingest(make_corpus(count=2)), np.random.default_rng(0), tiny_config, 0)
        assert batch.comp.shape == batch.high.shape == (2, 3, 16, 16)
        assert len(batch.qfs) == len(batch.qms) == 2
        assert all(10 <= q.value <= 90 for q in batch.qfs)


class TestCompressedLow:
    def test_fresh_round_trip_per_qf(self, make_corpus):
        """Each call recompresses; no decoded images are held between calls"""
        (pair,) = ingest(make_corpus(count=1))
        for qf in (15, 55, 95):
            np.testing.assert_array_equal(compressed_low(pair, QualityFactor(value=qf)), compress_roundtrip(pair.low, qf))
        assert not any(hasattr(getattr(data, name), "cache_info") for name in dir(data))

    def test_precompressed_is_returned_as_is(self, make_corpus):
        root = make_corpus(count=1)
        (root / "qf.txt").write_text("000.png 40\n")
        (pair,) = ingest(root)
        assert compressed_low(pair, QualityFactor(value=80)) is pair.low
