"""Canonical in-memory grid, the GHR fixture codec, and a strict TIFF-subset reader.

Grids are immutable after construction (the value buffer is made read-only) so
they can be shared freely across threads. All parsing is single-threaded per
file; callers may parse many tiles concurrently.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    GridInvariantError,
    MissingLayerError,
    OutOfBoundsError,
    RasterFormatError,
    TruncatedStripError,
    UnsupportedTagError,
)

KIND_CONTINUOUS = "continuous-meters"
KIND_CATEGORY = "category-id"

_KIND_CODES = {KIND_CONTINUOUS: 0, KIND_CATEGORY: 1}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

DEFAULT_NODATA = -9999.0

GHR_MAGIC = b"GHR1"
_GHR_HEADER = struct.Struct("<4sIIfBf")


@dataclass(frozen=True)
class RasterGrid:
    """Single-band 2-D grid with square cells.

    values is a (height, width) float32 array in row-major order. Category
    grids also use float32 storage (ids are small integers, exact in f32);
    ``kind`` tells consumers how to interpret the numbers.
    """

    width: int
    height: int
    cell_size: float
    nodata: float
    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise GridInvariantError(f"unknown grid kind {self.kind!r}")
        if self.width <= 0 or self.height <= 0:
            raise GridInvariantError(
                f"empty grids are invalid ({self.width}x{self.height})"
            )
        if not (self.cell_size > 0):
            raise GridInvariantError(f"cell_size must be > 0, got {self.cell_size}")
        if not np.isfinite(self.nodata):
            raise GridInvariantError("nodata sentinel must be finite")
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.size != self.width * self.height:
            raise GridInvariantError(
                f"values length {arr.size} != {self.width}x{self.height}"
            )
        arr = arr.reshape(self.height, self.width)
        if self.kind == KIND_CATEGORY:
            valid = arr[arr != np.float32(self.nodata)]
            if valid.size and (np.any(valid < 0) or np.any(valid != np.floor(valid))):
                raise GridInvariantError(
                    "category-id grid holds negative or non-integer values"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values != np.float32(self.nodata)

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def value_at(self, x: int, y: int) -> float:
        if not self.in_bounds(x, y):
            raise OutOfBoundsError(f"({x}, {y}) outside {self.width}x{self.height}")
        return float(self.values[y, x])

    def is_nodata(self, x: int, y: int) -> bool:
        return self.value_at(x, y) == float(np.float32(self.nodata))


def make_grid(values, cell_size=1.0, nodata=DEFAULT_NODATA, kind=KIND_CONTINUOUS) -> RasterGrid:
    """Build a grid from any 2-D array-like; convenience for code and tests."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise GridInvariantError(f"expected 2-D values, got ndim={arr.ndim}")
    h, w = arr.shape
    return RasterGrid(width=w, height=h, cell_size=float(cell_size),
                      nodata=float(nodata), kind=kind, values=arr)


@dataclass(frozen=True)
class TileBundle:
    """Co-registered rasters for one scene.

    height is the nDSM (above-ground object height), dem the bare-earth
    elevation, categories a land-cover id map. rgb, when present, is a tuple
    of three aligned continuous grids (r, g, b in 0..255).
    """

    tile_id: str
    height: RasterGrid
    dem: RasterGrid
    categories: RasterGrid
    category_legend: dict[int, str]
    rgb: tuple[RasterGrid, RasterGrid, RasterGrid] | None = None

    @property
    def width(self) -> int:
        return self.height.width

    @property
    def grid_height(self) -> int:
        return self.height.height

    @property
    def cell_size(self) -> float:
        return self.height.cell_size


def assemble_bundle(tile_id, *, height=None, dem=None, categories=None,
                    category_legend=None, rgb=None) -> TileBundle:
    """Verify co-registration and legend coverage, then build the bundle."""
    missing = [name for name, g in
               (("height", height), ("dem", dem), ("categories", categories))
               if g is None]
    if missing:
        raise MissingLayerError(f"missing mandatory layer(s): {', '.join(missing)}")
    if categories.kind != KIND_CATEGORY:
        raise GridInvariantError("categories layer must be a category-id grid")

    grids = [("height", height), ("dem", dem), ("categories", categories)]
    if rgb is not None:
        rgb = tuple(rgb)
        if len(rgb) != 3:
            raise GridInvariantError("rgb must hold exactly three bands")
        grids += [(f"rgb[{i}]", g) for i, g in enumerate(rgb)]

    dims = {name: (g.width, g.height, g.cell_size) for name, g in grids}
    if len(set(dims.values())) != 1:
        detail = "; ".join(f"{n}={w}x{h}@{c}" for n, (w, h, c) in dims.items())
        raise DimensionMismatchError(f"grids are not co-registered: {detail}")

    legend = {int(k): str(v) for k, v in (category_legend or {}).items()}
    present = np.unique(categories.values[categories.valid_mask]).astype(int)
    uncovered = [int(c) for c in present if int(c) not in legend]
    if uncovered:
        raise GridInvariantError(f"category ids missing from legend: {uncovered}")

    return TileBundle(tile_id=str(tile_id), height=height, dem=dem,
                      categories=categories, category_legend=legend, rgb=rgb)


def window(grid: RasterGrid, x0: int, y0: int, w: int, h: int) -> RasterGrid:
    """Copy a sub-rectangle; cell size, nodata and kind carry over."""
    if w <= 0 or h <= 0:
        raise OutOfBoundsError(f"window dims must be positive, got {w}x{h}")
    if x0 < 0 or y0 < 0 or x0 + w > grid.width or y0 + h > grid.height:
        raise OutOfBoundsError(
            f"window ({x0},{y0},{w},{h}) exceeds grid {grid.width}x{grid.height}"
        )
    sub = np.array(grid.values[y0:y0 + h, x0:x0 + w], dtype=np.float32)
    return RasterGrid(width=w, height=h, cell_size=grid.cell_size,
                      nodata=grid.nodata, kind=grid.kind, values=sub)


# ---------------------------------------------------------------------------
# GHR: the portable fixture format. Header then row-major little-endian f32.
# ---------------------------------------------------------------------------

def write_ghr(grid: RasterGrid) -> bytes:
    header = _GHR_HEADER.pack(GHR_MAGIC, grid.width, grid.height,
                              grid.cell_size, _KIND_CODES[grid.kind], grid.nodata)
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    return header + payload


def parse_ghr(data: bytes) -> RasterGrid:
    if len(data) < _GHR_HEADER.size:
        raise RasterFormatError(f"GHR header needs {_GHR_HEADER.size} bytes, got {len(data)}")
    magic, w, h, cell, kind_code, nodata = _GHR_HEADER.unpack_from(data, 0)
    if magic != GHR_MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}, expected {GHR_MAGIC!r}")
    if kind_code not in _CODE_KINDS:
        raise RasterFormatError(f"unknown kind code {kind_code}")
    if w == 0 or h == 0:
        raise RasterFormatError("empty grid disallowed (width or height is 0)")
    expected = w * h * 4
    payload = data[_GHR_HEADER.size:]
    if len(payload) != expected:
        raise RasterFormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return RasterGrid(width=w, height=h, cell_size=cell, nodata=nodata,
                      kind=_CODE_KINDS[kind_code], values=values)


# ---------------------------------------------------------------------------
# TIFF subset: classic little-endian, single strip-organized image, one band,
# 8-bit unsigned or 32-bit float samples, compression none or deflate.
# ---------------------------------------------------------------------------

_TAG_IMAGE_WIDTH = 256
_TAG_IMAGE_LENGTH = 257
_TAG_BITS_PER_SAMPLE = 258
_TAG_COMPRESSION = 259
_TAG_STRIP_OFFSETS = 273
_TAG_SAMPLES_PER_PIXEL = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_STRIP_BYTE_COUNTS = 279
_TAG_X_RESOLUTION = 282
_TAG_Y_RESOLUTION = 283
_TAG_SAMPLE_FORMAT = 339
_TAG_TILE_WIDTH = 322
_TAG_TILE_LENGTH = 323
_TAG_TILE_OFFSETS = 324
_TAG_TILE_BYTE_COUNTS = 325

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}


def _read_entry_values(data: bytes, typ: int, count: int, value_field: bytes):
    """Decode one IFD entry's integer or rational values."""
    size = _TYPE_SIZES.get(typ)
    if size is None:
        raise UnsupportedTagError(f"unknown IFD entry type {typ}")
    total = size * count
    if total <= 4:
        raw = value_field[:total]
    else:
        offset = struct.unpack("<I", value_field)[0]
        if offset + total > len(data):
            raise RasterFormatError(f"IFD value at offset {offset} runs past end of file")
        raw = data[offset:offset + total]
    if typ == 3:
        return list(struct.unpack(f"<{count}H", raw))
    if typ == 4:
        return list(struct.unpack(f"<{count}I", raw))
    if typ == 5:
        pairs = struct.unpack(f"<{2 * count}I", raw)
        return [(pairs[2 * i], pairs[2 * i + 1]) for i in range(count)]
    if typ == 1:
        return list(raw)
    # Other types never matter for the supported tags; return raw ints.
    return list(raw)


def parse_tiff_subset(data: bytes, nodata: float = DEFAULT_NODATA) -> RasterGrid:
    """Decode a strip-organized single-band classic TIFF.

    Anything outside the declared subset is rejected loudly with the tag
    (or header field) that triggered the rejection. uint8 samples map to
    category-id grids, float32 samples to continuous-meters.
    """
    if len(data) < 8:
        raise RasterFormatError("file shorter than TIFF header")
    byte_order = data[0:2]
    if byte_order == b"MM":
        raise UnsupportedTagError("big-endian byte order 'MM' is outside the subset")
    if byte_order != b"II":
        raise RasterFormatError(f"not a TIFF: byte order {byte_order!r}")
    magic, ifd_offset = struct.unpack_from("<HI", data, 2)
    if magic != 42:
        raise RasterFormatError(f"bad TIFF magic number {magic}")

    if ifd_offset + 2 > len(data):
        raise RasterFormatError(f"IFD offset {ifd_offset} past end of file")
    (n_entries,) = struct.unpack_from("<H", data, ifd_offset)
    entries_end = ifd_offset + 2 + 12 * n_entries
    if entries_end + 4 > len(data):
        raise RasterFormatError("IFD runs past end of file")

    tags: dict[int, list] = {}
    for i in range(n_entries):
        pos = ifd_offset + 2 + 12 * i
        tag, typ, count = struct.unpack_from("<HHI", data, pos)
        tags[tag] = _read_entry_values(data, typ, count, data[pos + 8:pos + 12])

    (next_ifd,) = struct.unpack_from("<I", data, entries_end)
    if next_ifd != 0:
        raise UnsupportedTagError("multi-image files are outside the subset (second IFD present)")

    for tile_tag in (_TAG_TILE_WIDTH, _TAG_TILE_LENGTH, _TAG_TILE_OFFSETS, _TAG_TILE_BYTE_COUNTS):
        if tile_tag in tags:
            raise UnsupportedTagError(f"tiled layout is outside the subset (tag {tile_tag})")

    def require(tag: int, name: str) -> list:
        if tag not in tags:
            raise RasterFormatError(f"mandatory tag {name} ({tag}) missing")
        return tags[tag]

    width = int(require(_TAG_IMAGE_WIDTH, "ImageWidth")[0])
    length = int(require(_TAG_IMAGE_LENGTH, "ImageLength")[0])
    if width == 0 or length == 0:
        raise RasterFormatError("empty grid disallowed (zero ImageWidth/ImageLength)")

    samples = int(tags.get(_TAG_SAMPLES_PER_PIXEL, [1])[0])
    if samples != 1:
        raise UnsupportedTagError(f"multi-band images are outside the subset (SamplesPerPixel={samples})")

    bits = int(require(_TAG_BITS_PER_SAMPLE, "BitsPerSample")[0])
    sample_format = int(tags.get(_TAG_SAMPLE_FORMAT, [1])[0])
    if (bits, sample_format) == (8, 1):
        dtype, kind = np.dtype("u1"), KIND_CATEGORY
    elif (bits, sample_format) == (32, 3):
        dtype, kind = np.dtype("<f4"), KIND_CONTINUOUS
    else:
        raise UnsupportedTagError(
            f"sample type outside the subset (BitsPerSample={bits}, SampleFormat={sample_format})"
        )

    compression = int(tags.get(_TAG_COMPRESSION, [1])[0])
    if compression not in (1, 8):
        raise UnsupportedTagError(f"compression {compression} is outside the subset (Compression)")

    offsets = require(_TAG_STRIP_OFFSETS, "StripOffsets")
    byte_counts = require(_TAG_STRIP_BYTE_COUNTS, "StripByteCounts")
    if len(offsets) != len(byte_counts):
        raise RasterFormatError("StripOffsets and StripByteCounts lengths differ")
    rows_per_strip = int(tags.get(_TAG_ROWS_PER_STRIP, [length])[0])
    expected_strips = (length + rows_per_strip - 1) // rows_per_strip
    if len(offsets) != expected_strips:
        raise RasterFormatError(
            f"expected {expected_strips} strips for RowsPerStrip={rows_per_strip}, got {len(offsets)}"
        )

    row_bytes = width * dtype.itemsize
    raw = bytearray()
    for strip_index, (off, cnt) in enumerate(zip(offsets, byte_counts)):
        if off + cnt > len(data):
            raise TruncatedStripError(
                f"strip {strip_index} at byte offset {off} needs {cnt} bytes, file ends at {len(data)}"
            )
        chunk = data[off:off + cnt]
        if compression == 8:
            try:
                chunk = zlib.decompress(chunk)
            except zlib.error as exc:
                raise TruncatedStripError(
                    f"strip {strip_index} at byte offset {off} fails to inflate: {exc}"
                ) from exc
        strip_rows = min(rows_per_strip, length - strip_index * rows_per_strip)
        if len(chunk) != strip_rows * row_bytes:
            raise TruncatedStripError(
                f"strip {strip_index} at byte offset {off} decodes to {len(chunk)} bytes, "
                f"expected {strip_rows * row_bytes}"
            )
        raw += chunk

    values = np.frombuffer(bytes(raw), dtype=dtype).reshape(length, width).astype(np.float32)

    cell_size = 1.0
    if _TAG_X_RESOLUTION in tags:
        num, den = tags[_TAG_X_RESOLUTION][0]
        if num == 0:
            raise RasterFormatError("XResolution with zero numerator")
        cell_size = den / num  # pixels-per-unit -> units-per-pixel
        if _TAG_Y_RESOLUTION in tags:
            ynum, yden = tags[_TAG_Y_RESOLUTION][0]
            if ynum == 0 or yden * num != den * ynum:
                raise UnsupportedTagError(
                    "non-square cells are outside the subset (YResolution differs from XResolution)"
                )

    return RasterGrid(width=width, height=length, cell_size=float(cell_size),
                      nodata=float(nodata), kind=kind, values=values)
