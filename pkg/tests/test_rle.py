import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heightqa.errors import RasterFormatError
from heightqa.rle import MaskRLE, decode_rle, encode_rle


def test_all_zero_2x2():
    rle = encode_rle(np.zeros((2, 2), dtype=bool))
    assert rle.counts == (4,)
    assert rle.size == (2, 2)


def test_all_one_2x2():
    rle = encode_rle(np.ones((2, 2), dtype=bool))
    assert rle.counts == (0, 4)


def test_column_major_scan_order():
    # Top-to-bottom then left-to-right: column 0 = [1, 0], column 1 = [0, 1].
    mask = np.array([[True, False], [False, True]])
    rle = encode_rle(mask)
    assert rle.counts == (0, 1, 2, 1)


def test_counts_always_start_with_background():
    mask = np.zeros((3, 3), dtype=bool)
    mask[0, 0] = True
    assert encode_rle(mask).counts[0] == 0
    mask2 = np.zeros((3, 3), dtype=bool)
    mask2[2, 2] = True
    assert encode_rle(mask2).counts[0] == 8


def test_roundtrip_random_16x16():
    rng = np.random.default_rng(13)
    for _ in range(20):
        mask = rng.random((16, 16)) < rng.uniform(0.05, 0.95)
        assert np.array_equal(decode_rle(encode_rle(mask)), mask)


def test_counts_sum_mismatch_rejected():
    with pytest.raises(RasterFormatError, match="sum"):
        decode_rle(MaskRLE(size=(2, 2), counts=(3,)))


def test_negative_count_rejected():
    with pytest.raises(RasterFormatError):
        decode_rle(MaskRLE(size=(2, 2), counts=(5, -1)))


def test_json_roundtrip():
    mask = np.eye(4, dtype=bool)
    rle = encode_rle(mask)
    back = MaskRLE.from_json(rle.to_json())
    assert back == rle
    assert np.array_equal(decode_rle(back), mask)


@settings(max_examples=60, deadline=None)
@given(w=st.integers(1, 12), h=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_roundtrip_property(w, h, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((h, w)) < 0.5
    rle = encode_rle(mask)
    assert sum(rle.counts) == w * h
    assert np.array_equal(decode_rle(rle), mask)
