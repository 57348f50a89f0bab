"""Dyadic PMFs, Geometric Huffman Coding and prefix-free modulation codes.

A dyadic PMF assigns ``2**-l_i`` to each included symbol and zero to excluded
ones; a full prefix-free code with word lengths ``l_i`` turns fair coin flips
into symbols with exactly these probabilities.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import count
from typing import Optional, Sequence

import numpy as np

from capshape.errors import InvalidInputError, NotFullCodeError, SearchSpaceTooLargeError
from capshape.mi import as_pmf


@dataclass(frozen=True)
class DyadicPMF:
    """Codeword lengths; ``None`` marks an excluded symbol.

    A single included symbol has length 0 (probability one, empty codeword).
    """

    lengths: tuple[Optional[int], ...]

    def __post_init__(self):
        lengths = tuple(None if l is None else int(l) for l in self.lengths)
        if any(l is not None and l < 0 for l in lengths):
            raise InvalidInputError("codeword lengths must be nonnegative")
        object.__setattr__(self, "lengths", lengths)

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def probs(self) -> np.ndarray:
        return np.array([0.0 if l is None else math.ldexp(1.0, -l) for l in self.lengths])

    @property
    def included(self) -> list[int]:
        return [i for i, l in enumerate(self.lengths) if l is not None]

    def kraft_sum(self):
        """Kraft sum as an exact fraction ``(numerator, 2**L)``."""
        used = [l for l in self.lengths if l is not None]
        if not used:
            return 0, 1
        L = max(used)
        return sum(1 << (L - l) for l in used), 1 << L

    def is_full(self) -> bool:
        num, den = self.kraft_sum()
        return num == den

    def to_json(self) -> list:
        return list(self.lengths)


def kl_pmf(d, p) -> float:
    """``D(d || p)`` in nats; ``inf`` if ``d`` puts mass where ``p`` has none."""
    d = d.probs if isinstance(d, DyadicPMF) else np.asarray(d, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    pos = d > 0
    if np.any(p[pos] <= 0):
        return math.inf
    return float(np.sum(d[pos] * (np.log(d[pos]) - np.log(p[pos]))))


def ghc(p) -> DyadicPMF:
    """Dyadic PMF closest to ``p`` in ``D(d || p)`` (Geometric Huffman Coding).

    The two smallest nodes ``a <= b`` are repeatedly combined: if ``4a <= b``
    the node ``a`` (with its whole subtree) is discarded, otherwise both are
    replaced by a parent of weight ``2 sqrt(a b)``. Leaf depths in the final
    tree are the codeword lengths. Symbols with ``p_i = 0`` are always excluded.
    Equal weights are ordered by original symbol index, the higher index
    counting as smaller, so the result is deterministic.
    """
    p = as_pmf(p)
    support = np.flatnonzero(p > 0)
    lengths: list[Optional[int]] = [None] * p.size
    if support.size == 1:
        lengths[support[0]] = 0
        return DyadicPMF(tuple(lengths))

    children: dict[int, tuple[int, int]] = {}
    dropped: set[int] = set()
    ids = count(p.size)
    heap = [(float(p[i]), -int(i), int(i)) for i in support]
    heapq.heapify(heap)
    while len(heap) > 1:
        a_w, a_key, a = heapq.heappop(heap)
        b_w, b_key, b = heapq.heappop(heap)
        if 4.0 * a_w <= b_w:
            dropped.add(a)
            heapq.heappush(heap, (b_w, b_key, b))
        else:
            node = next(ids)
            children[node] = (b, a)
            heapq.heappush(heap, (2.0 * math.sqrt(a_w * b_w), max(a_key, b_key), node))

    stack = [(heap[0][2], 0)]
    while stack:
        node, depth = stack.pop()
        if node in children:
            for child in children[node]:
                stack.append((child, depth + 1))
        elif node not in dropped:
            lengths[node] = depth
    return DyadicPMF(tuple(lengths))


@lru_cache(maxsize=16)
def _kraft_vectors(m: int, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """All length vectors over {0..max_len, excluded} with Kraft sum exactly one.

    Returned in lexicographic order with exclusion sorting after every length,
    as (lengths with -1 for excluded, dyadic probabilities).
    """
    full = 1 << max_len
    out: list[tuple[int, ...]] = []
    options = list(range(max_len + 1)) + [-1]

    def rec(prefix, budget, left):
        if left == 0:
            if budget == 0:
                out.append(tuple(prefix))
            return
        # the remaining slots can absorb at most left * 2**max_len units
        if budget > left * full:
            return
        for l in options:
            used = 0 if l < 0 else 1 << (max_len - l)
            if used <= budget:
                prefix.append(l)
                rec(prefix, budget - used, left - 1)
                prefix.pop()

    rec([], full, m)
    lengths = np.array(out, dtype=int).reshape(-1, m)
    probs = np.where(lengths >= 0, np.ldexp(1.0, -np.maximum(lengths, 0)), 0.0)
    return lengths, probs


def ghc_bruteforce(p, max_len: int = 10) -> DyadicPMF:
    """Exhaustive minimizer of ``D(d || p)`` over full codes with lengths <= ``max_len``.

    Independent check for :func:`ghc`; ties go to the lexicographically
    smallest length vector. Limited to ``m <= 8`` and ``max_len <= 10``.
    """
    p = as_pmf(p)
    if p.size > 8 or max_len > 10 or max_len < 0:
        raise SearchSpaceTooLargeError(f"brute force limited to m <= 8, max_len <= 10 (got {p.size}, {max_len})")
    lengths, probs = _kraft_vectors(p.size, max_len)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * (np.log(probs) - np.log(p)), 0.0)
    kl = terms.sum(axis=1)
    best = kl.min()
    row = int(np.flatnonzero(kl <= best + 1e-14 * max(1.0, abs(best)))[0])
    return DyadicPMF(tuple(None if l < 0 else int(l) for l in lengths[row]))


def huffman_lengths(p) -> DyadicPMF:
    """Classical Huffman code lengths (minimum expected length) as a dyadic PMF.

    Zero-probability symbols get no codeword. Among equal weights the node
    holding the lowest original index is merged first.
    """
    p = as_pmf(p)
    support = np.flatnonzero(p > 0)
    if support.size == 0:
        raise InvalidInputError("PMF has no positive entry")
    lengths: list[Optional[int]] = [None] * p.size
    for i in support:
        lengths[i] = 0
    heap = [(float(p[i]), int(i), [int(i)]) for i in support]
    heapq.heapify(heap)
    while len(heap) > 1:
        a_w, a_rep, a_leaves = heapq.heappop(heap)
        b_w, b_rep, b_leaves = heapq.heappop(heap)
        for leaf in a_leaves + b_leaves:
            lengths[leaf] += 1
        heapq.heappush(heap, (a_w + b_w, min(a_rep, b_rep), a_leaves + b_leaves))
    return DyadicPMF(tuple(lengths))


@dataclass(frozen=True)
class PrefixCode:
    codewords: dict

    @property
    def lengths(self) -> dict:
        return {s: len(w) for s, w in self.codewords.items()}


def build_prefix_code(d: DyadicPMF) -> PrefixCode:
    """Canonical full prefix-free code for the lengths in ``d``.

    Symbols are ordered by (length, index) and receive consecutive values of a
    binary counter, left-shifted whenever the length grows.
    """
    if not d.is_full():
        num, den = d.kraft_sum()
        raise NotFullCodeError(f"Kraft sum {num}/{den} != 1")
    order = sorted(d.included, key=lambda i: (d.lengths[i], i))
    words = {}
    value = 0
    prev = d.lengths[order[0]]
    for i in order:
        l = d.lengths[i]
        value <<= l - prev
        prev = l
        words[i] = format(value, f"0{l}b") if l else ""
        value += 1
    return PrefixCode(words)


def _as_bitstring(bits) -> str:
    if isinstance(bits, str):
        s = "".join(bits.split())
    else:
        arr = np.asarray(bits, dtype=np.int64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise InvalidInputError("bits must be 0 or 1")
        s = arr.astype(np.uint8).tobytes().translate(bytes.maketrans(b"\x00\x01", b"01")).decode()
    if s.strip("01"):
        raise InvalidInputError("bits must be 0 or 1")
    return s


def encode(bits, code: PrefixCode) -> np.ndarray:
    """Parse a bit stream into codewords and return the symbol indices.

    A trailing partial word is ignored.
    """
    lookup = {w: s for s, w in code.codewords.items()}
    if "" in lookup:
        raise InvalidInputError("a single zero-length codeword consumes no bits; nothing to encode")
    s = _as_bitstring(bits)
    out = []
    word = ""
    for b in s:
        word += b
        sym = lookup.get(word)
        if sym is not None:
            out.append(sym)
            word = ""
    return np.array(out, dtype=np.int64)


def decode(symbols: Sequence[int], code: PrefixCode) -> np.ndarray:
    """Concatenate the codewords of ``symbols``."""
    words = code.codewords
    parts = []
    for sym in np.asarray(symbols, dtype=np.int64).reshape(-1):
        w = words.get(int(sym))
        if w is None:
            raise InvalidInputError(f"symbol {int(sym)} has no codeword")
        parts.append(w)
    s = "".join(parts)
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")
