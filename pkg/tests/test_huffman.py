import heapq
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leosplit import huffman

symbol_lists = st.lists(st.integers(0, 40), min_size=1, max_size=400)


def optimal_cost(counts):
    """Textbook Huffman total cost: sum of all merge weights."""
    if len(counts) == 1:
        return 0
    heap = list(counts)
    heapq.heapify(heap)
    cost = 0
    while len(heap) > 1:
        a, b = heapq.heappop(heap), heapq.heappop(heap)
        cost += a + b
        heapq.heappush(heap, a + b)
    return cost


@given(symbol_lists)
def test_lengths_are_optimal_and_prefix_free(symbols):
    freq = huffman.frequencies(symbols)
    lengths = huffman.code_lengths(freq)
    assert sum(freq[s] * lengths[s] for s in freq) == optimal_cost(list(freq.values()))
    huffman.check_kraft(lengths)
    codes = huffman.canonical_codes(lengths)
    words = sorted(format(c, f"0{ln}b") if ln else "" for c, ln in codes.values())
    for a, b in zip(words, words[1:]):
        assert not b.startswith(a)


@given(symbol_lists)
def test_roundtrip(symbols):
    lengths = huffman.code_lengths(huffman.frequencies(symbols))
    payload, nbits = huffman.encode(np.array(symbols), lengths)
    out = huffman.decode(payload, nbits, len(symbols), lengths)
    assert out.tolist() == symbols


@given(symbol_lists)
def test_payload_within_entropy_band(symbols):
    freq = huffman.frequencies(symbols)
    n = len(symbols)
    h = -sum(c / n * math.log2(c / n) for c in freq.values()) if len(freq) > 1 else 0.0
    _, nbits = huffman.encode(np.array(symbols), huffman.code_lengths(freq))
    assert h - 1e-9 <= nbits / n < h + 1


def test_canonical_codes_example():
    codes = huffman.canonical_codes({0: 1, 1: 2, 2: 3, 3: 3})
    assert codes == {0: (0b0, 1), 1: (0b10, 2), 2: (0b110, 3), 3: (0b111, 3)}


def test_ties_broken_by_symbol():
    a = huffman.code_lengths({5: 1, 3: 1, 9: 1, 1: 1})
    b = huffman.code_lengths({1: 1, 9: 1, 3: 1, 5: 1})
    assert a == b


def test_single_symbol_is_free():
    lengths = huffman.code_lengths({7: 10})
    assert lengths == {7: 0}
    assert huffman.encode(np.full(10, 7), lengths) == (b"", 0)
    assert huffman.decode(b"", 0, 10, lengths).tolist() == [7] * 10


def test_long_codes_use_bitwise_path():
    # Fibonacci weights give a maximally skewed tree with codes past 20 bits
    fib = [1, 1]
    while len(fib) < 26:
        fib.append(fib[-1] + fib[-2])
    freq = {i: f for i, f in enumerate(fib)}
    lengths = huffman.code_lengths(freq)
    assert max(lengths.values()) > 20
    symbols = np.array(list(range(26)) * 2)
    payload, nbits = huffman.encode(symbols, lengths)
    assert huffman.decode(payload, nbits, len(symbols), lengths).tolist() == symbols.tolist()


def test_decode_errors():
    lengths = {0: 1, 1: 2, 2: 2}
    payload, nbits = huffman.encode(np.array([0, 1, 2, 0]), lengths)
    with pytest.raises(huffman.HuffmanError):
        huffman.decode(payload, nbits, 5, lengths)
    with pytest.raises(huffman.HuffmanError):
        huffman.decode(payload, nbits + 100, 4, lengths)
    with pytest.raises(huffman.HuffmanError):
        huffman.decode(payload, nbits, 3, lengths)
    with pytest.raises(huffman.HuffmanError):
        huffman.encode(np.array([3]), lengths)
    with pytest.raises(huffman.HuffmanError):
        huffman.check_kraft({0: 1, 1: 1, 2: 1})


def test_frequencies():
    assert huffman.frequencies([3, 3, 1]) == dict(Counter([3, 3, 1]))
