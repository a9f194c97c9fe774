import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from leosplit import codec


def block(n, s, d, seed=0):
    return np.random.default_rng(seed).standard_normal((n, s, d))


def test_apply_mask_examples():
    x = np.array([1.0, -2.0, 3.0, -4.0]).reshape(1, 2, 2)
    np.testing.assert_array_equal(codec.apply_mask(x, [[1, 0], [0, 1]]).ravel(), [1, 0, 0, -4])
    np.testing.assert_array_equal(codec.apply_mask(x, np.ones((2, 2))), x)
    np.testing.assert_array_equal(codec.apply_mask(x, np.zeros((2, 2))), np.zeros_like(x))
    with pytest.raises(ValueError):
        codec.apply_mask(x, np.ones((2, 3)))


def test_quantize_worked_example():
    q = codec.quantize([0.5, -1.0, 2.0], 3)
    assert q.delta == 0.5 and q.x_min == 0.5 and q.x_max == 2.0
    assert q.codes.tolist() == [0, -1, 3]
    deq = codec.dequantize(q.codes, q.delta, q.x_min, q.negative)
    assert deq.tolist() == [0.5, -1.0, 2.0]
    assert codec.dequantize([0, -1, 3], 0.5, 0.5).tolist() == [0.5, -1.0, 2.0]


def test_constant_magnitudes():
    q = codec.quantize([1.5, -1.5, 1.5], 8)
    assert q.delta == 0.0 and q.codes.tolist() == [0, 0, 0]
    assert codec.dequantize(q.codes, q.delta, q.x_min, q.negative).tolist() == [1.5, -1.5, 1.5]


def test_zero_codes_dequantize_to_signed_x_min():
    assert codec.dequantize([0, 0], 0.25, 2.0, np.array([False, True])).tolist() == [2.0, -2.0]


def test_quantize_rejects_narrow_width_and_handles_empty():
    with pytest.raises(ValueError):
        codec.quantize([1.0], 1)
    assert codec.quantize([], 8).codes.size == 0


@given(
    hnp.arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e6, 1e6, allow_nan=False)),
    st.integers(2, 16),
)
def test_quantization_error_bound(x, b):
    q = codec.quantize(x, b)
    err = np.abs(codec.dequantize(q.codes, q.delta, q.x_min, q.negative) - x)
    # half a step plus float rounding of the affine map
    assert np.all(err <= q.delta / 2 + 4 * np.finfo(float).eps * np.maximum(np.abs(x), q.x_max))


def test_entropy_examples():
    assert codec.entropy_bits([1, 1, 2, 2], 8) == (1.0, 32, 4.0)
    assert codec.entropy_bits([7, 7, 7], 8)[0] == 0.0
    assert codec.entropy_bits(np.arange(16), 8)[0] == pytest.approx(4.0)
    with pytest.raises(ValueError):
        codec.entropy_bits([], 8)


def _fuzz_case(seed):
    rng = np.random.default_rng(seed)
    n, s, d = (int(v) for v in rng.integers(1, 6, 3))
    scale = 10.0 ** rng.integers(-3, 4)
    x = rng.standard_normal((n, s, d)) * scale
    if rng.random() < 0.2:
        x = np.round(x)  # many repeated magnitudes and exact zeros
    mask = rng.random((s, d)) < rng.random()
    b = int(rng.integers(2, 13))
    return x, mask, b


@given(st.integers(0, 2**32 - 1))
def test_roundtrip_is_bit_exact(seed):
    x, mask, b = _fuzz_case(seed)
    data = codec.compress(x, mask, b)
    out = codec.decode(data)
    ref = codec.reference_reconstruction(x, mask, b)
    assert out.tobytes() == ref.tobytes()


@given(st.integers(0, 2**32 - 1))
def test_reencode_is_identical(seed):
    x, mask, b = _fuzz_case(seed)
    data = codec.compress(x, mask, b)
    again = codec.compress(codec.decode(data), mask, b)
    blob_a, blob_b = codec.from_bytes(data), codec.from_bytes(again)
    assert blob_a.payload == blob_b.payload
    assert blob_a.code_lengths == blob_b.code_lengths


def test_negative_zero_survives():
    x = np.array([[[-0.0, 1.0], [2.0, -3.0]]])
    out = codec.decode(codec.compress(x, np.ones((2, 2), bool), 4))
    ref = codec.reference_reconstruction(x, np.ones((2, 2), bool), 4)
    assert out.tobytes() == ref.tobytes()


def test_empty_active_set_gives_zero_block():
    x = block(2, 3, 4)
    out = codec.decode(codec.compress(x, np.zeros((3, 4), bool), 8))
    assert out.shape == (2, 3, 4) and not out.any()


def test_gaussian_ratio_over_twenty():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 197, 768)).astype(np.float32)
    mask = codec.random_mask(197, 768, 0.2, rng)
    blob = codec.encode(x, mask, 8)
    assert blob.achieved_ratio(32) >= 20.0
    # the ratio charges header, bitmaps and table, not just the payload
    assert blob.total_bits == len(blob.to_bytes()) * 8
    assert blob.total_bits > blob.payload_bits


def test_stage_accounting_identities():
    x = block(4, 20, 100)
    mask = codec.random_mask(20, 100, 0.2525)
    r = codec.stage_ratios(x, mask, 8)
    assert r["sparsify"] == pytest.approx(1 / 0.2525, rel=1e-9)
    assert r["sparsify"] == pytest.approx(3.96, abs=0.01)
    assert r["quantize"] == pytest.approx(r["sparsify"] * 32 / 8)


def test_incompressible_limit_near_one():
    rng = np.random.default_rng(3)
    # uniform codes over the full 8-bit range, kept densely
    x = rng.integers(-127, 128, (8, 32, 32)).astype(np.float64) + 0.5
    blob = codec.encode(x, np.ones((32, 32), bool), 8)
    assert 0.9 <= blob.achieved_ratio(8) <= 1.05


def test_corruption_is_reported_with_offset():
    x = block(2, 8, 8, seed=5)
    data = codec.compress(x, np.ones((8, 8), bool), 6)
    with pytest.raises(codec.CodecError) as err:
        codec.decode(data[:-3])
    assert err.value.offset == len(data) - 3
    with pytest.raises(codec.CodecError):
        codec.decode(b"XXXX" + data[4:])
    with pytest.raises(codec.CodecError):
        codec.decode(data + b"\0")
    with pytest.raises(codec.CodecError):
        codec.decode(data[:10])
    bad_width = bytearray(data)
    bad_width[16] = 1
    with pytest.raises(codec.CodecError):
        codec.decode(bytes(bad_width))


@given(st.integers(0, 2**32 - 1), st.integers(0, 10**6), st.integers(1, 255))
def test_random_byte_flips_never_crash(seed, pos, flip):
    x, mask, b = _fuzz_case(seed)
    data = bytearray(codec.compress(x, mask, b))
    data[pos % len(data)] ^= flip
    try:
        out = codec.decode(bytes(data))
    except codec.CodecError:
        return
    assert out.shape == x.shape or out.ndim == 3


def test_header_layout():
    x = block(1, 2, 3)
    data = codec.compress(x, np.ones((2, 3), bool), 8)
    magic, n, s, d, b = struct.unpack_from("<4sIIIB", data)
    assert (magic, n, s, d, b) == (b"OPC1", 1, 2, 3, 8)


def test_blob_roundtrip_through_bytes():
    x = block(3, 5, 7, seed=9)
    mask = codec.random_mask(5, 7, 0.5)
    blob = codec.encode(x, mask, 5)
    again = codec.from_bytes(blob.to_bytes())
    assert again.to_bytes() == blob.to_bytes()
    assert again.entropy == pytest.approx(blob.entropy)
