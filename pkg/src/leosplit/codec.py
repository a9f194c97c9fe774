"""Activation compression: masking, magnitude quantization and Huffman coding.

Wire format of a compressed block (all integers little-endian)::

    offset  size  field
    0       4     magic b"OPC1"
    4       4     n (u32)    batch
    8       4     s (u32)    sequence length
    12      4     d (u32)    hidden size
    16      1     b (u8)     quantization bit width (sign + b-1 magnitude bits)
    17      3     zero padding
    20      8     x_min (f64)
    28      8     x_max (f64)
    36      8     delta (f64)
    44      8     active element count (u64)
    52      4     symbol count (u32)
    56      8     payload length in bits (u64)
    64      5*m   symbol table: m x (magnitude code u32, code length u8),
                  sorted by (length, code)
    ...     ceil(s*d/8)    mask bitmap, row-major over (s, d)
    ...     ceil(active/8) sign bitmap, 1 = negative, active elements in
                           row-major (n, s, d) order
    ...     ceil(bits/8)   canonical Huffman payload of magnitude codes

Bitmaps and the payload are packed MSB-first and zero padded to a byte.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import huffman

MAGIC = b"OPC1"
_HEADER = struct.Struct("<4sIIIB3xdddQIQ")
_SYMBOL = struct.Struct("<IB")


class CodecError(ValueError):
    """Malformed or corrupt blob; ``offset`` is the byte where decoding failed."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class Quantized(NamedTuple):
    codes: np.ndarray  # signed magnitude codes
    negative: np.ndarray  # sign of each input, kept apart so zero codes keep theirs
    delta: float
    x_min: float
    x_max: float


def _check_block(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"activation block must be (n, s, d), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("activation block contains non-finite values")
    return x


def _check_mask(x: np.ndarray, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match block (s, d) {x.shape[1:]}")
    return mask


def keep_fraction(mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    return float(mask.sum()) / mask.size if mask.size else 0.0


def apply_mask(x, mask) -> np.ndarray:
    """Zero every (s, d) position the mask drops, for all batch entries."""
    x = _check_block(x)
    mask = _check_mask(x, mask)
    return np.where(mask[None, :, :], x, 0.0)


def quantize(x_active, b: int) -> Quantized:
    """Signed magnitude quantization onto ``2**(b-1)`` levels over ``[x_min, x_max]``."""
    if b < 2:
        raise ValueError(f"bit width must be >= 2, got {b}")
    x = np.asarray(x_active, dtype=np.float64).ravel()
    negative = np.signbit(x)
    if x.size == 0:
        return Quantized(np.zeros(0, dtype=np.int64), negative, 0.0, 0.0, 0.0)
    mag = np.abs(x)
    x_min, x_max = float(mag.min()), float(mag.max())
    delta = (x_max - x_min) / (2 ** (b - 1) - 1)
    if delta == 0.0:
        levels = np.zeros(x.size, dtype=np.int64)
    else:
        levels = np.floor((mag - x_min) / delta + 0.5).astype(np.int64)
        np.clip(levels, 0, 2 ** (b - 1) - 1, out=levels)
    codes = np.where(negative, -levels, levels)
    return Quantized(codes, negative, delta, x_min, x_max)


def dequantize(codes, delta: float, x_min: float, negative=None) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if negative is None:
        negative = codes < 0
    mag = x_min + np.abs(codes).astype(np.float64) * delta
    return np.where(negative, -mag, mag)


def entropy_bits(codes, b: int) -> tuple[float, int, float]:
    """(entropy in bits/symbol of the magnitude codes, raw bits, entropy-coded estimate)."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        raise ValueError("entropy of an empty symbol set is undefined")
    _, counts = np.unique(np.abs(codes), return_counts=True)
    p = counts / codes.size
    h = float(-(p * np.log2(p)).sum()) if len(p) > 1 else 0.0
    return h, codes.size * b, codes.size * h


@dataclass(frozen=True, eq=False)
class CompressedBlob:
    shape: tuple[int, int, int]
    bits: int
    x_min: float
    x_max: float
    delta: float
    n_active: int
    code_lengths: dict
    mask: np.ndarray
    negative: np.ndarray
    payload: bytes
    payload_bits: int
    # entropy of the magnitude codes; recovered by decoding when not supplied
    symbol_entropy: Optional[float] = None

    @property
    def raw_bits_estimate(self) -> int:
        return self.n_active * self.bits

    @property
    def entropy(self) -> float:
        if self.n_active == 0 or len(self.code_lengths) < 2:
            return 0.0
        if self.symbol_entropy is None:
            mags = huffman.decode(self.payload, self.payload_bits, self.n_active, self.code_lengths)
            object.__setattr__(self, "symbol_entropy", entropy_bits(mags, self.bits)[0])
        return float(self.symbol_entropy)

    @property
    def entropy_bits_estimate(self) -> float:
        return self.n_active * self.entropy

    def to_bytes(self) -> bytes:
        n, s, d = self.shape
        table = sorted(self.code_lengths.items(), key=lambda kv: (kv[1], kv[0]))
        parts = [
            _HEADER.pack(
                MAGIC, n, s, d, self.bits, self.x_min, self.x_max, self.delta,
                self.n_active, len(table), self.payload_bits,
            )
        ]
        parts += [_SYMBOL.pack(sym, ln) for sym, ln in table]
        parts.append(np.packbits(self.mask.ravel()).tobytes())
        parts.append(np.packbits(self.negative.astype(np.uint8)).tobytes())
        parts.append(self.payload)
        return b"".join(parts)

    @property
    def total_bits(self) -> int:
        return 8 * len(self.to_bytes())

    def achieved_ratio(self, raw_bits: int = 32) -> float:
        """Uncompressed size over serialized size, header and bitmaps included."""
        n, s, d = self.shape
        return n * s * d * raw_bits / self.total_bits


def _blob(shape, b, quant: Quantized, mask, lengths, payload, nbits, mags) -> CompressedBlob:
    return CompressedBlob(
        shape=tuple(int(v) for v in shape),
        bits=b,
        x_min=quant.x_min,
        x_max=quant.x_max,
        delta=quant.delta,
        n_active=int(quant.codes.size),
        code_lengths=lengths,
        mask=mask,
        negative=np.asarray(quant.negative, dtype=bool),
        payload=payload,
        payload_bits=nbits,
        symbol_entropy=entropy_bits(mags, b)[0] if mags.size else 0.0,
    )


def encode(x, mask, b: int) -> CompressedBlob:
    x = _check_block(x)
    mask = _check_mask(x, mask)
    if b < 2 or b > 32:
        raise ValueError(f"bit width must lie in [2, 32], got {b}")
    active = x[:, mask]  # (n, kept) in row-major (n, s, d) order
    quant = quantize(active.ravel(), b)
    mags = np.abs(quant.codes)
    lengths = huffman.code_lengths(huffman.frequencies(mags))
    if lengths and max(lengths.values()) > 255:
        raise ValueError("Huffman code longer than 255 bits")
    payload, nbits = huffman.encode(mags, lengths)
    return _blob(x.shape, b, quant, mask, lengths, payload, nbits, mags)


def reference_reconstruction(x, mask, b: int) -> np.ndarray:
    """Mask, quantize and dequantize without any coding: what decode must reproduce."""
    masked = apply_mask(x, mask)
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(masked)
    q = quantize(masked[:, mask].ravel(), b)
    out[:, mask] = dequantize(q.codes, q.delta, q.x_min, q.negative).reshape(masked.shape[0], -1)
    return out


def from_bytes(data: bytes) -> CompressedBlob:
    if len(data) < _HEADER.size:
        raise CodecError(f"blob of {len(data)} bytes is shorter than the {_HEADER.size}-byte header", len(data))
    magic, n, s, d, b, x_min, x_max, delta, n_active, m, nbits = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CodecError(f"bad magic {magic!r}", 0)
    if not 2 <= b <= 32:
        raise CodecError(f"bit width {b} out of range", 16)
    if n_active > n * s * d:
        raise CodecError(f"{n_active} active elements exceed block size {n * s * d}", 44)
    off = _HEADER.size
    if len(data) < off + m * _SYMBOL.size:
        raise CodecError("truncated symbol table", len(data))
    lengths = {}
    for _ in range(m):
        sym, ln = _SYMBOL.unpack_from(data, off)
        if sym in lengths:
            raise CodecError(f"duplicate symbol {sym}", off)
        lengths[sym] = ln
        off += _SYMBOL.size
    try:
        if lengths:
            huffman.check_kraft(lengths)
    except huffman.HuffmanError as exc:
        raise CodecError(str(exc), _HEADER.size) from exc

    mask_bytes = math.ceil(s * d / 8)
    sign_bytes = math.ceil(n_active / 8)
    payload_bytes = math.ceil(nbits / 8)
    expected = off + mask_bytes + sign_bytes + payload_bytes
    if len(data) < expected:
        raise CodecError(f"blob truncated: need {expected} bytes, have {len(data)}", len(data))
    if len(data) > expected:
        raise CodecError(f"{len(data) - expected} trailing bytes after payload", expected)

    raw = np.frombuffer(data, dtype=np.uint8)
    mask = np.unpackbits(raw[off : off + mask_bytes])[: s * d].astype(bool).reshape(s, d)
    off += mask_bytes
    if n * int(mask.sum()) != n_active:
        raise CodecError(f"mask keeps {n * int(mask.sum())} elements, header declares {n_active}", 44)
    negative = np.unpackbits(raw[off : off + sign_bytes])[:n_active].astype(bool)
    off += sign_bytes
    if n_active and not lengths:
        raise CodecError("active elements present but the symbol table is empty", 52)
    return CompressedBlob(
        shape=(n, s, d), bits=b, x_min=x_min, x_max=x_max, delta=delta, n_active=n_active,
        code_lengths=lengths, mask=mask, negative=negative, payload=bytes(data[off:]), payload_bits=nbits,
    )


def decode(blob: CompressedBlob | bytes) -> np.ndarray:
    """Rebuild the masked, dequantized activation block."""
    if isinstance(blob, (bytes, bytearray, memoryview)):
        data = bytes(blob)
        blob = from_bytes(data)
        payload_offset = len(data) - len(blob.payload)
    else:
        payload_offset = None
    n, s, d = blob.shape
    out = np.zeros((n, s, d), dtype=np.float64)
    if blob.n_active == 0:
        return out
    try:
        mags = huffman.decode(blob.payload, blob.payload_bits, blob.n_active, blob.code_lengths)
    except huffman.HuffmanError as exc:
        raise CodecError(f"corrupt payload: {exc}", payload_offset or 0) from exc
    if np.any(mags > 2 ** (blob.bits - 1) - 1):
        raise CodecError("magnitude code exceeds the declared bit width", payload_offset or 0)
    values = dequantize(mags, blob.delta, blob.x_min, blob.negative)
    out[:, blob.mask] = values.reshape(n, -1)
    return out


def compress(x, mask, b: int) -> bytes:
    return encode(x, mask, b).to_bytes()


def stage_ratios(x, mask, b: int, raw_bits: int = 32) -> dict:
    """Cumulative compression after masking, quantization and entropy coding.

    The first two ratios count value payload only (kept elements at ``raw_bits``,
    then at ``b`` bits); the last one is the full serialized blob, header and
    bitmaps included.
    """
    x = _check_block(x)
    mask = _check_mask(x, mask)
    blob = encode(x, mask, b)
    total = x.size * raw_bits
    active = max(blob.n_active, 1)
    return {
        "keep_fraction": keep_fraction(mask),
        "sparsify": total / (active * raw_bits),
        "quantize": total / (active * b),
        "entropy": blob.achieved_ratio(raw_bits),
        "entropy_bits_per_symbol": blob.entropy,
        "payload_bits_per_symbol": blob.payload_bits / active,
        "blob_bits": blob.total_bits,
    }


def random_mask(s: int, d: int, keep: float, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Mask keeping exactly ``round(keep * s * d)`` positions chosen at random."""
    rng = rng or np.random.default_rng(0)
    kept = int(round(keep * s * d))
    flat = np.zeros(s * d, dtype=bool)
    flat[rng.permutation(s * d)[:kept]] = True
    return flat.reshape(s, d)
