"""Independent minimal TIFF writer used as the decoding oracle.

Built straight from the TIFF 6.0 structure (header, IFD entries, strip
data); shares no code with the package's reader.
"""

import struct
import zlib

import numpy as np


def _entry(tag, typ, count, inline_or_offset):
    return struct.pack("<HHI4s", tag, typ, count, inline_or_offset)


def write_tiff(values, *, sample="f4", compression=1, rows_per_strip=None,
               resolution=None, byte_order=b"II", extra_tags=()):
    """values: 2-D numpy array. sample: "f4" or "u1". resolution: (num, den)
    rational for both XResolution and YResolution."""
    arr = np.asarray(values)
    height, width = arr.shape
    if sample == "f4":
        data = arr.astype("<f4").tobytes()
        bits, fmt, itemsize = 32, 3, 4
    elif sample == "u1":
        data = arr.astype("u1").tobytes()
        bits, fmt, itemsize = 8, 1, 1
    else:
        raise ValueError(sample)

    rows_per_strip = rows_per_strip or height
    row_bytes = width * itemsize
    strips = []
    for y0 in range(0, height, rows_per_strip):
        rows = min(rows_per_strip, height - y0)
        chunk = data[y0 * row_bytes:(y0 + rows) * row_bytes]
        if compression == 8:
            chunk = zlib.compress(chunk, 6)
        strips.append(chunk)

    # Layout: header | strip data | deferred values | IFD
    offset = 8
    strip_offsets = []
    for chunk in strips:
        strip_offsets.append(offset)
        offset += len(chunk)
    deferred = bytearray()
    deferred_base = offset

    def defer(payload: bytes) -> bytes:
        pos = deferred_base + len(deferred)
        deferred.extend(payload)
        return struct.pack("<I", pos)

    def longs(vals):
        payload = struct.pack(f"<{len(vals)}I", *vals)
        if len(payload) <= 4:
            return payload.ljust(4, b"\x00")
        return defer(payload)

    entries = [
        (256, 4, 1, struct.pack("<I", width)),
        (257, 4, 1, struct.pack("<I", height)),
        (258, 3, 1, struct.pack("<HH", bits, 0)),
        (259, 3, 1, struct.pack("<HH", compression, 0)),
        (262, 3, 1, struct.pack("<HH", 1, 0)),  # photometric, benign
        (273, 4, len(strips), longs(strip_offsets)),
        (277, 3, 1, struct.pack("<HH", 1, 0)),
        (278, 4, 1, struct.pack("<I", rows_per_strip)),
        (279, 4, len(strips), longs([len(c) for c in strips])),
        (339, 3, 1, struct.pack("<HH", fmt, 0)),
    ]
    if resolution is not None:
        num, den = resolution
        entries.append((282, 5, 1, defer(struct.pack("<II", num, den))))
        entries.append((283, 5, 1, defer(struct.pack("<II", num, den))))
        entries.append((296, 3, 1, struct.pack("<HH", 1, 0)))
    entries.extend(extra_tags)
    entries.sort(key=lambda e: e[0])

    ifd_offset = deferred_base + len(deferred)
    ifd = struct.pack("<H", len(entries))
    for tag, typ, count, value in entries:
        ifd += _entry(tag, typ, count, value)
    ifd += struct.pack("<I", 0)  # no next IFD

    header = byte_order + struct.pack("<HI", 42, ifd_offset)
    return header + b"".join(strips) + bytes(deferred) + ifd
