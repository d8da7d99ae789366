"""Shared free-text number parsing used by scoring and self-consistency."""

from __future__ import annotations

import re

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.\d+|\d+|\.\d+)")


def extract_numeric(text: str) -> float | None:
    """First decimal quantity in the text, sign and decimals preserved.

    Ranges like "between 10 and 20 m" yield the first bound; that bias is a
    recorded limitation of rule-based extraction.
    """
    m = _NUMBER_RE.search(text or "")
    return float(m.group(0)) if m else None


def extract_int_sequence(text: str) -> list[int]:
    """All standalone integers in order; used for ranking answers."""
    return [int(tok) for tok in re.findall(r"(?<![\d.])-?\d+(?![\d.])", text or "")]
