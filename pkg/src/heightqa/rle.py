"""Run-length codec for binary masks.

Scan order is column-major (top-to-bottom, then left-to-right); counts
alternate background/foreground and always start with the number of
background cells, so an all-foreground mask starts with 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RasterFormatError


@dataclass(frozen=True)
class MaskRLE:
    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...]

    def to_json(self) -> dict:
        return {"size": [self.size[0], self.size[1]], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "MaskRLE":
        return cls(size=(int(obj["size"][0]), int(obj["size"][1])),
                   counts=tuple(int(c) for c in obj["counts"]))


def encode_rle(mask: np.ndarray) -> MaskRLE:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise RasterFormatError(f"mask must be 2-D, got ndim={mask.ndim}")
    h, w = mask.shape
    flat = mask.ravel(order="F")
    counts: list[int] = []
    current = False  # runs start on background
    run = 0
    for bit in flat:
        if bit == current:
            run += 1
        else:
            counts.append(run)
            current = bool(bit)
            run = 1
    counts.append(run)
    return MaskRLE(size=(h, w), counts=tuple(counts))


def decode_rle(rle: MaskRLE) -> np.ndarray:
    h, w = rle.size
    total = sum(rle.counts)
    if total != h * w:
        raise RasterFormatError(
            f"counts sum {total} does not cover {h}x{w} = {h * w} cells"
        )
    if any(c < 0 for c in rle.counts):
        raise RasterFormatError("negative run length")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in rle.counts:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape((h, w), order="F")
