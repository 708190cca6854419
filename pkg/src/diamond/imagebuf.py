"""Image container, file I/O, and patch extraction.

All pipeline stages exchange :class:`Image` objects: 2-D single-channel
float32 rasters with a nominal dynamic range of [0, 1]. Images are
immutable after construction and are validated to be finite, so every
operator downstream can assume a well-formed buffer.

Supported file formats:

* ``png8`` / ``png16``: 8- or 16-bit grayscale PNG; integer samples s at
  bit depth B map to s / (2^B - 1) on load, and saving clamps to [0, 1]
  before quantizing with round(v * (2^B - 1)).
* ``rawf32``: 16-byte header (magic ``DIMG``, u32 height, u32 width,
  u32 reserved, little-endian) followed by row-major float32 samples.
  Round-trips are bit-exact, which the test fixtures rely on.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

RAWF32_MAGIC = b"DIMG"
RAWF32_HEADER = struct.Struct("<4sIII")

DEFAULT_PATCH = 64


class ImageFormatError(ValueError):
    """Unreadable, inconsistent, or unsupported image file content."""


class Image:
    """Immutable 2-D float32 grayscale raster."""

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image data must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """Read-only float32 array of shape (height, width)."""
        return self._data

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def __repr__(self) -> str:
        return f"Image({self.height}x{self.width})"


@dataclass(frozen=True)
class PatchSet:
    """Patches cut from a source image plus their (row, col) offsets."""

    patches: list
    offsets: list
    source_shape: tuple


def _require_parent_writable(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ImageFormatError(f"parent directory does not exist: {parent}")


def rawf32_bytes(img: Image) -> bytes:
    """Serialize an image to the rawf32 wire format (bit-exact)."""
    header = RAWF32_HEADER.pack(RAWF32_MAGIC, img.height, img.width, 0)
    payload = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
    return header + payload


def image_from_rawf32(blob: bytes) -> Image:
    """Parse rawf32 bytes back into an Image; validates header and length."""
    if len(blob) < RAWF32_HEADER.size:
        raise ImageFormatError("rawf32 blob shorter than header")
    magic, j1, j2, _reserved = RAWF32_HEADER.unpack_from(blob)
    if magic != RAWF32_MAGIC:
        raise ImageFormatError(f"bad rawf32 magic {magic!r}")
    expected = RAWF32_HEADER.size + 4 * j1 * j2
    if len(blob) != expected:
        raise ImageFormatError(
            f"rawf32 payload length {len(blob) - RAWF32_HEADER.size} does not match "
            f"header {j1}x{j2} (expected {expected - RAWF32_HEADER.size} bytes)"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=RAWF32_HEADER.size).reshape(j1, j2)
    return Image(data)


def _format_from_path(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        return "png16"
    if ext in (".rawf32", ".raw", ".dimg"):
        return "rawf32"
    raise ImageFormatError(f"cannot infer image format from extension {ext!r}")


def save_image(img: Image, path: str, format: str | None = None) -> None:
    """Write an image to disk as png8, png16, or rawf32.

    ``format=None`` infers from the extension (.png saves 16-bit).
    The file is written to a temp name and renamed, so readers never
    observe a partial artifact.
    """
    fmt = format or _format_from_path(path)
    _require_parent_writable(path)
    if fmt == "rawf32":
        blob = rawf32_bytes(img)
    elif fmt in ("png8", "png16"):
        peak = 255 if fmt == "png8" else 65535
        q = np.round(np.clip(img.data.astype(np.float64), 0.0, 1.0) * peak)
        if fmt == "png8":
            pil = PILImage.fromarray(q.astype(np.uint8), mode="L")
        else:
            pil = PILImage.fromarray(q.astype(np.uint16))
        import io

        buf = io.BytesIO()
        pil.save(buf, format="PNG")
        blob = buf.getvalue()
    else:
        raise ImageFormatError(f"unsupported save format {fmt!r}")
    atomic_write_bytes(path, blob)


def load_image(path: str, format: str | None = None) -> Image:
    """Read an image from disk; format inferred from content when omitted."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read image file {path}: {exc}") from exc
    if format == "rawf32" or (format is None and blob[:4] == RAWF32_MAGIC):
        return image_from_rawf32(blob)
    if format in (None, "png8", "png16"):
        import io

        try:
            pil = PILImage.open(io.BytesIO(blob))
            pil.load()
        except Exception as exc:
            raise ImageFormatError(f"cannot parse image file {path}: {exc}") from exc
        if pil.mode == "L":
            arr = np.asarray(pil, dtype=np.float64) / 255.0
        elif pil.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(pil, dtype=np.float64) / 65535.0
        else:
            raise ImageFormatError(
                f"unsupported PNG mode {pil.mode!r} in {path}: grayscale only"
            )
        return Image(arr)
    raise ImageFormatError(f"unsupported load format {format!r}")


def atomic_write_bytes(path: str, blob: bytes) -> None:
    """Write bytes to path via a same-directory temp file and rename."""
    parent = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def extract_patches(img: Image, size: int = DEFAULT_PATCH, stride: int | None = None) -> PatchSet:
    """Cut size x size patches in row-major scan order.

    Offsets run over range(0, dim - size + 1, stride) per axis, so the
    count is (floor((J1-size)/stride)+1) * (floor((J2-size)/stride)+1)
    and no patch ever reads outside the image.
    """
    if stride is None:
        stride = size
    if size > min(img.height, img.width):
        raise ValueError(
            f"patch size {size} exceeds image {img.height}x{img.width}"
        )
    if stride < 1:
        raise ValueError("stride must be >= 1")
    patches = []
    offsets = []
    for r in range(0, img.height - size + 1, stride):
        for c in range(0, img.width - size + 1, stride):
            patches.append(Image(img.data[r : r + size, c : c + size]))
            offsets.append((r, c))
    return PatchSet(patches=tuple(patches), offsets=tuple(offsets), source_shape=img.shape)
