"""File formats: PNG/PPM images, point lists, PMSM score stacks, PGM masks.

Every writer produces a canonical byte stream and goes through an atomic
temp-file + rename, so partially written outputs are never observed. Loaders
reject out-of-range metadata instead of clamping or truncating.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import errors
from .raster import LabelMask, PointSet, RasterImage, ScoreStack

PMSM_MAGIC = b"PMSM"
PMSM_VERSION = 1
_PMSM_HEADER = struct.Struct("<4sHHIII")
# Caps on header metadata; anything beyond is rejected, never truncated.
_MAX_DIM = 1 << 24
_MAX_VALUES = 1 << 31

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise errors.MissingFile(str(path)) from exc
    except IsADirectoryError as exc:
        raise errors.MissingFile(f"{path} is a directory") from exc


def write_bytes_atomic(path, data: bytes) -> None:
    """Write data to path via a temp file in the same directory + rename."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pointmask-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# images: PNG and binary PPM (P6)
# ---------------------------------------------------------------------------

def _parse_pnm_header(data: bytes, magic: bytes):
    """Parse a PNM header (magic, width, height, maxval) with # comments.

    Returns (width, height, maxval, payload_offset).
    """
    if data[:2] != magic:
        raise errors.UnsupportedFormat(f"not a {magic.decode()} file")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise errors.CorruptData("truncated header")
        ch = data[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise errors.CorruptData("unterminated header comment")
            pos = nl + 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise errors.CorruptData(f"unexpected byte {ch!r} in header")
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise errors.CorruptData("missing whitespace after maxval")
    width, height, maxval = fields
    return width, height, maxval, pos + 1


def _read_ppm(data: bytes) -> RasterImage:
    width, height, maxval, offset = _parse_pnm_header(data, b"P6")
    if maxval != 255:
        raise errors.UnsupportedFormat(f"only 8-bit PPM supported, maxval={maxval}")
    if width < 1 or height < 1:
        raise errors.CorruptData("non-positive dimensions")
    expected = width * height * 3
    payload = data[offset:]
    if len(payload) < expected:
        raise errors.CorruptData(
            f"payload holds {len(payload)} bytes, need {expected}")
    if len(payload) > expected:
        raise errors.CorruptData("trailing bytes after pixel data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(pixels)


def _read_png(data: bytes) -> RasterImage:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise errors.CorruptData(f"PNG decode failed: {exc}") from exc
    if img.mode != "RGB":
        raise errors.UnsupportedFormat(
            f"only 8-bit 3-channel PNG supported, got mode {img.mode}")
    return RasterImage(np.asarray(img, dtype=np.uint8))


def read_image(path) -> RasterImage:
    """Read an 8-bit 3-channel PNG or binary PPM (P6) image."""
    data = _read_bytes(path)
    if data[:8] == _PNG_SIGNATURE:
        return _read_png(data)
    if data[:2] == b"P6":
        return _read_ppm(data)
    raise errors.UnsupportedFormat(f"{path}: neither PNG nor binary PPM")


def write_image(path, image: RasterImage) -> None:
    """Write an image as PNG or PPM depending on the file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".png":
        buf = io.BytesIO()
        Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
        write_bytes_atomic(path, buf.getvalue())
    elif ext in (".ppm", ".pnm"):
        header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
        write_bytes_atomic(path, header + image.pixels.tobytes())
    else:
        raise errors.UnsupportedFormat(f"cannot write image with extension {ext!r}")


def write_png_rgba(path, rgba: np.ndarray) -> None:
    """Write an (H, W, 4) uint8 array as RGBA PNG."""
    arr = np.asarray(rgba)
    if arr.ndim != 3 or arr.shape[2] != 4 or arr.dtype != np.uint8:
        raise ValueError("expected (H, W, 4) uint8 array")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGBA").save(buf, format="PNG")
    write_bytes_atomic(path, buf.getvalue())


def write_png_rgb(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as RGB PNG."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8 array")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    write_bytes_atomic(path, buf.getvalue())


# ---------------------------------------------------------------------------
# point files: one `class_id,x,y` record per line, `#` comments
# ---------------------------------------------------------------------------

def read_points(path, num_classes: int) -> PointSet:
    """Read a point-annotation file; order is preserved."""
    data = _read_bytes(path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise errors.ParseError(f"{path}: not UTF-8 text") from exc
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise errors.ParseError(
                f"{path}:{lineno}: expected 'class_id,x,y', got {raw!r}")
        try:
            cls, x, y = (int(p.strip()) for p in parts)
        except ValueError as exc:
            raise errors.ParseError(f"{path}:{lineno}: non-integer field") from exc
        if not 1 <= cls <= num_classes + 1:
            raise errors.OutOfRange(
                f"{path}:{lineno}: class_id {cls} outside 1..{num_classes + 1}")
        if x < 0 or y < 0:
            raise errors.OutOfRange(f"{path}:{lineno}: negative coordinate")
        if (cls, x, y) in seen:
            raise errors.ParseError(f"{path}:{lineno}: duplicate point ({cls},{x},{y})")
        seen.add((cls, x, y))
        entries.append((cls, x, y))
    return PointSet(tuple(entries), num_classes)


def write_points(path, points: PointSet) -> None:
    lines = [f"{cls},{x},{y}" for cls, x, y in points]
    write_bytes_atomic(path, ("\n".join(lines) + "\n").encode("utf-8"))


def infer_num_classes(path) -> int:
    """Infer C from a point file, treating the highest class id as background.

    A file that lists background points (labeled C+1) yields the correct C;
    without them this under-estimates by one, which is harmless for the
    class-symmetric walker. Pass an explicit class count whenever it is known.
    """
    data = _read_bytes(path).decode("utf-8", errors="replace")
    top = 0
    for raw in data.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) == 3:
            try:
                top = max(top, int(parts[0].strip()))
            except ValueError:
                continue
    return max(1, top - 1)


# ---------------------------------------------------------------------------
# PMSM score-stack container
# ---------------------------------------------------------------------------

def write_pmsm(path, planes: np.ndarray) -> None:
    """Write a (P, H, W) float array as a PMSM v1 file (float32 LE payload)."""
    arr = np.ascontiguousarray(np.asarray(planes, dtype="<f4"))
    if arr.ndim != 3:
        raise ValueError(f"expected (P, H, W) planes, got shape {arr.shape}")
    nplanes, height, width = arr.shape
    header = _PMSM_HEADER.pack(PMSM_MAGIC, PMSM_VERSION, 0, nplanes, height, width)
    write_bytes_atomic(path, header + arr.tobytes())


def read_pmsm(path) -> np.ndarray:
    """Read a PMSM file into a (P, H, W) float32 array."""
    data = _read_bytes(path)
    if data[:4] != PMSM_MAGIC:
        raise errors.BadMagic(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _PMSM_HEADER.size:
        raise errors.TruncatedPayload(f"{path}: incomplete header")
    _, version, reserved, nplanes, height, width = _PMSM_HEADER.unpack_from(data)
    if version != PMSM_VERSION:
        raise errors.VersionMismatch(f"{path}: version {version}, expected 1")
    if reserved != 0:
        raise errors.CorruptData(f"{path}: nonzero reserved field")
    if min(nplanes, height, width) < 1 or max(height, width) > _MAX_DIM:
        raise errors.DimensionOverflow(
            f"{path}: invalid dimensions {nplanes}x{height}x{width}")
    count = nplanes * height * width
    if count > _MAX_VALUES:
        raise errors.DimensionOverflow(f"{path}: {count} values exceed cap")
    payload = data[_PMSM_HEADER.size:]
    if len(payload) < 4 * count:
        raise errors.TruncatedPayload(
            f"{path}: payload holds {len(payload) // 4} floats, need {count}")
    if len(payload) > 4 * count:
        raise errors.CorruptData(f"{path}: trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(nplanes, height, width)
    return values.copy()


def read_score_stack(path) -> ScoreStack:
    planes = read_pmsm(path)
    try:
        return ScoreStack(planes)
    except ValueError as exc:
        raise errors.CorruptData(f"{path}: {exc}") from exc


def write_score_stack(path, stack: ScoreStack) -> None:
    write_pmsm(path, stack.planes)


# ---------------------------------------------------------------------------
# masks: binary PGM (P5)
# ---------------------------------------------------------------------------

def write_mask(path, mask: LabelMask) -> None:
    if mask.num_classes + 1 > 255:
        raise errors.OutOfRange("label values exceed 8-bit PGM range")
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    write_bytes_atomic(path, header + mask.labels.astype(np.uint8).tobytes())


def read_mask(path, num_classes: int | None = None) -> LabelMask:
    data = _read_bytes(path)
    width, height, maxval, offset = _parse_pnm_header(data, b"P5")
    if maxval != 255:
        raise errors.UnsupportedFormat(f"only 8-bit PGM supported, maxval={maxval}")
    if width < 1 or height < 1:
        raise errors.CorruptData("non-positive dimensions")
    payload = data[offset:]
    if len(payload) < width * height:
        raise errors.CorruptData("truncated pixel data")
    if len(payload) > width * height:
        raise errors.CorruptData("trailing bytes after pixel data")
    labels = np.frombuffer(payload[:width * height], dtype=np.uint8)
    labels = labels.reshape(height, width).astype(np.int32)
    if num_classes is None:
        num_classes = max(1, int(labels.max()) - 1)
    return LabelMask(labels, num_classes)
