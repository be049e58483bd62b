import numpy as np
import pytest

import pointmask as pm
from pointmask import errors, formats


def make_ppm(width, height, pixel_bytes):
    return f"P6\n{width} {height}\n255\n".encode() + pixel_bytes


class TestReadImage:
    def test_all_black_ppm(self, tmp_path):
        path = tmp_path / "black.ppm"
        path.write_bytes(make_ppm(2, 2, bytes(12)))
        img = pm.read_image(path)
        assert img.pixels.shape == (2, 2, 3)
        assert img.pixels.sum() == 0
        assert img.normalized.sum() == 0.0

    def test_max_value_normalizes_to_one(self, tmp_path):
        path = tmp_path / "white.ppm"
        path.write_bytes(make_ppm(1, 1, bytes([255, 255, 255])))
        img = pm.read_image(path)
        assert img.normalized[0, 0, 0] == 1.0

    def test_normalized_is_exact_division(self, tmp_path):
        rng = np.random.default_rng(3)
        px = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
        path = tmp_path / "img.ppm"
        path.write_bytes(make_ppm(7, 5, px.tobytes()))
        img = pm.read_image(path)
        assert np.array_equal(img.normalized, img.pixels.astype(np.float64) / 255)

    def test_grayscale_png_rejected(self, tmp_path):
        from PIL import Image
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), np.uint8), mode="L").save(path)
        with pytest.raises(errors.UnsupportedFormat):
            pm.read_image(path)

    def test_rgb_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        px = rng.integers(0, 256, (6, 4, 3)).astype(np.uint8)
        path = tmp_path / "img.png"
        pm.write_image(path, pm.RasterImage(px))
        img = pm.read_image(path)
        assert np.array_equal(img.pixels, px)

    def test_16bit_ppm_rejected(self, tmp_path):
        path = tmp_path / "deep.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(errors.UnsupportedFormat):
            pm.read_image(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(errors.MissingFile):
            pm.read_image(tmp_path / "nope.ppm")

    def test_truncated_ppm(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(make_ppm(2, 2, bytes(5)))
        with pytest.raises(errors.CorruptData):
            pm.read_image(path)

    def test_ppm_write_read_identity(self, tmp_path):
        rng = np.random.default_rng(11)
        px = rng.integers(0, 256, (3, 5, 3)).astype(np.uint8)
        path = tmp_path / "img.ppm"
        pm.write_image(path, pm.RasterImage(px))
        data = path.read_bytes()
        img = pm.read_image(path)
        pm.write_image(path, img)
        assert path.read_bytes() == data


class TestReadPoints:
    def test_single_record(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("1,10,20\n")
        pts = pm.read_points(path, num_classes=20)
        assert pts.entries == ((1, 10, 20),)

    def test_background_label(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("21,0,0\n")
        pts = pm.read_points(path, num_classes=20)
        assert pts.entries[0][0] == pts.background_class == 21

    def test_class_zero_rejected(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("0,5,5\n")
        with pytest.raises(errors.OutOfRange):
            pm.read_points(path, num_classes=20)

    def test_comments_and_order(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("# header\n2,3,4\n\n1,0,0\n")
        pts = pm.read_points(path, num_classes=2)
        assert pts.entries == ((2, 3, 4), (1, 0, 0))

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("1,2,3\nbogus\n")
        with pytest.raises(errors.ParseError, match=":2"):
            pm.read_points(path, num_classes=2)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("1,2,3\n1,2,3\n")
        with pytest.raises(errors.ParseError):
            pm.read_points(path, num_classes=2)

    def test_bounds_checked_on_pairing(self):
        pts = pm.PointSet(((1, 50, 2),), num_classes=1)
        with pytest.raises(errors.OutOfRange):
            pts.validate_bounds(8, 8)


class TestScoreStackFormat:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        planes = rng.random((3, 4, 5)).astype(np.float32)
        path = tmp_path / "s.pmsm"
        pm.write_score_stack(path, pm.ScoreStack(planes))
        stack = pm.read_score_stack(path)
        assert np.array_equal(stack.planes, planes)
        data = path.read_bytes()
        pm.write_score_stack(path, stack)
        assert path.read_bytes() == data

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "s.pmsm"
        path.write_bytes(b"XXXX" + bytes(32))
        with pytest.raises(errors.BadMagic):
            pm.read_pmsm(path)

    def test_version_mismatch(self, tmp_path):
        import struct
        path = tmp_path / "s.pmsm"
        path.write_bytes(struct.pack("<4sHHIII", b"PMSM", 9, 0, 1, 1, 1) + bytes(4))
        with pytest.raises(errors.VersionMismatch):
            pm.read_pmsm(path)

    def test_truncated_payload(self, tmp_path):
        import struct
        path = tmp_path / "s.pmsm"
        # header says 2x4x4 planes but payload holds 31 floats (one short)
        path.write_bytes(struct.pack("<4sHHIII", b"PMSM", 1, 0, 2, 4, 4) + bytes(31 * 4))
        with pytest.raises(errors.TruncatedPayload):
            pm.read_pmsm(path)

    def test_zero_dimension_rejected(self, tmp_path):
        import struct
        path = tmp_path / "s.pmsm"
        path.write_bytes(struct.pack("<4sHHIII", b"PMSM", 1, 0, 0, 4, 4))
        with pytest.raises(errors.DimensionOverflow):
            pm.read_pmsm(path)

    def test_oversize_rejected(self, tmp_path):
        import struct
        path = tmp_path / "s.pmsm"
        path.write_bytes(struct.pack("<4sHHIII", b"PMSM", 1, 0, 4096, 1 << 20, 1 << 20))
        with pytest.raises(errors.DimensionOverflow):
            pm.read_pmsm(path)

    def test_out_of_range_scores_rejected(self, tmp_path):
        path = tmp_path / "s.pmsm"
        pm.write_pmsm(path, np.full((2, 2, 2), 3.5))
        with pytest.raises(errors.CorruptData):
            pm.read_score_stack(path)


class TestMaskFormat:
    def test_roundtrip(self, tmp_path):
        labels = np.array([[0, 1, 2], [3, 0, 1]], dtype=np.int32)
        mask = pm.LabelMask(labels, num_classes=2)
        path = tmp_path / "m.pgm"
        pm.write_mask(path, mask)
        back = pm.read_mask(path, num_classes=2)
        assert np.array_equal(back.labels, labels)
        data = path.read_bytes()
        pm.write_mask(path, back)
        assert path.read_bytes() == data

    def test_out_of_range_labels_rejected(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n2 1\n255\n" + bytes([9, 0]))
        with pytest.raises(errors.OutOfRange):
            pm.read_mask(path, num_classes=2)
