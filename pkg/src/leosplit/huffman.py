"""Canonical Huffman coding over non-negative integer symbols.

Code lengths come from the classic merge of the two lightest subtrees, with
ties broken by the smallest symbol each subtree contains, so identical inputs
always give identical tables. Codes are assigned canonically from the sorted
``(length, symbol)`` pairs and written MSB-first.
"""

from __future__ import annotations

import heapq
import itertools
from collections import Counter

import numpy as np


class HuffmanError(ValueError):
    pass


def code_lengths(counts: dict[int, int]) -> dict[int, int]:
    """Optimal prefix-code length per symbol. A lone symbol gets length 0."""
    if not counts:
        return {}
    if len(counts) == 1:
        return {next(iter(counts)): 0}
    tie = itertools.count()
    heap = [(c, sym, next(tie), (sym,)) for sym, c in counts.items()]
    heapq.heapify(heap)
    depth = dict.fromkeys(counts, 0)
    while len(heap) > 1:
        c1, s1, _, syms1 = heapq.heappop(heap)
        c2, s2, _, syms2 = heapq.heappop(heap)
        for s in syms1 + syms2:
            depth[s] += 1
        heapq.heappush(heap, (c1 + c2, min(s1, s2), next(tie), syms1 + syms2))
    return depth


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """Map symbol -> (code, length) for canonical Huffman."""
    codes = {}
    code = 0
    prev_len = 0
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev_len
        codes[sym] = (code, ln)
        code += 1
        prev_len = ln
    return codes


def check_kraft(lengths: dict[int, int]) -> None:
    if len(lengths) == 1:
        if next(iter(lengths.values())) != 0:
            raise HuffmanError("a single-symbol table must use a zero-length code")
        return
    if any(ln <= 0 for ln in lengths.values()):
        raise HuffmanError("code lengths must be positive")
    if sum(2.0 ** -ln for ln in lengths.values()) > 1.0:
        raise HuffmanError("code lengths violate the Kraft inequality")


def encode(symbols: np.ndarray, lengths: dict[int, int]) -> tuple[bytes, int]:
    """Pack ``symbols`` into a byte string; returns (payload, number of bits)."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size == 0 or len(lengths) <= 1:
        return b"", 0
    table = canonical_codes(lengths)
    keys = np.array(sorted(table), dtype=np.int64)
    code_of = np.array([table[k][0] for k in keys], dtype=np.uint64)
    len_of = np.array([table[k][1] for k in keys], dtype=np.int64)
    pos = np.searchsorted(keys, symbols)
    if np.any(pos >= len(keys)) or np.any(keys[np.minimum(pos, len(keys) - 1)] != symbols):
        raise HuffmanError("symbol missing from the code table")
    codes, lens = code_of[pos], len_of[pos]
    total = int(lens.sum())
    owner = np.repeat(np.arange(len(symbols)), lens)
    offset = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    shift = (lens[owner] - 1 - offset).astype(np.uint64)
    bits = ((codes[owner] >> shift) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits).tobytes(), total


def decode(payload: bytes, nbits: int, count: int, lengths: dict[int, int]) -> np.ndarray:
    """Decode exactly ``count`` symbols from the first ``nbits`` bits of ``payload``."""
    if count == 0:
        if nbits:
            raise HuffmanError(f"{nbits} payload bits but no symbols")
        return np.zeros(0, dtype=np.int64)
    if len(lengths) == 1:
        if nbits:
            raise HuffmanError(f"single-symbol stream must be empty, found {nbits} bits")
        return np.full(count, next(iter(lengths)), dtype=np.int64)
    if len(payload) * 8 < nbits:
        raise HuffmanError(f"payload holds {len(payload) * 8} bits, header declares {nbits}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:nbits]
    table = canonical_codes(lengths)
    max_len = max(lengths.values())
    if max_len > 20:
        return _decode_bitwise(bits, count, table)
    # lookup on max_len-bit windows: window value -> (symbol, length)
    lut_sym = np.full(1 << max_len, -1, dtype=np.int64)
    lut_len = np.zeros(1 << max_len, dtype=np.int64)
    for sym, (code, ln) in table.items():
        lo = code << (max_len - ln)
        hi = (code + 1) << (max_len - ln)
        lut_sym[lo:hi] = sym
        lut_len[lo:hi] = ln
    padded = np.concatenate([bits, np.zeros(max_len, dtype=np.uint8)]).astype(np.int64)
    windows = np.zeros(nbits, dtype=np.int64)
    for i in range(max_len):
        windows = (windows << 1) | padded[i : i + nbits]
    win = windows.tolist()
    syms = lut_sym.tolist()
    lens = lut_len.tolist()
    out = [0] * count
    p = 0
    for i in range(count):
        if p >= nbits:
            raise HuffmanError(f"payload exhausted after {i} of {count} symbols (bit {p})")
        w = win[p]
        ln = lens[w]
        if ln == 0:
            raise HuffmanError(f"invalid code at payload bit {p}")
        out[i] = syms[w]
        p += ln
    if p != nbits:
        raise HuffmanError(f"decoded {count} symbols using {p} bits, header declares {nbits}")
    return np.array(out, dtype=np.int64)


def _decode_bitwise(bits: np.ndarray, count: int, table) -> np.ndarray:
    by_code = {(code, ln): sym for sym, (code, ln) in table.items()}
    max_len = max(ln for _, ln in table.values())
    bits = bits.tolist()
    out = []
    p = 0
    for i in range(count):
        code, ln = 0, 0
        while True:
            if p >= len(bits):
                raise HuffmanError(f"payload exhausted after {i} of {count} symbols (bit {p})")
            code = (code << 1) | bits[p]
            p += 1
            ln += 1
            sym = by_code.get((code, ln))
            if sym is not None:
                out.append(sym)
                break
            if ln > max_len:
                raise HuffmanError(f"invalid code at payload bit {p - ln}")
    if p != len(bits):
        raise HuffmanError(f"decoded {count} symbols using {p} bits, header declares {len(bits)}")
    return np.array(out, dtype=np.int64)


def frequencies(symbols) -> dict[int, int]:
    return dict(Counter(np.asarray(symbols, dtype=np.int64).tolist()))
