#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Zipf-Huffman 索引编码模块
为截断 Zipf 分布 q(k) ∝ k^{-s}, s = 1 + 1/(C + e⁻¹·log2(e) + 1) 构造规范 Huffman 码，
解码端只需 (N, C) 即可重建码本，无需传输码表。
"""

import heapq
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DataFormatError, ShapeError


ZIPF_OFFSET = math.log2(math.e) / math.e  # e⁻¹·log2(e) ≈ 0.530738


def zipf_exponent(C: float) -> float:
    if C < 0:
        raise ShapeError(f"码率参数 C 必须 ≥ 0，实际 {C}")
    return 1.0 + 1.0 / (C + ZIPF_OFFSET + 1.0)


def zipf_probabilities(N: int, s: float) -> np.ndarray:
    k = np.arange(1, N + 1, dtype=np.float64)
    weights = k ** (-s)
    return weights / weights.sum()


def entropy_bits(probabilities: Sequence[float]) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass(frozen=True)
class ZipfCodebook:
    """
    规范 Huffman 码本；codewords[k-1] 为索引 k 的码字（'0'/'1' 字符串）

    N、C 决定码本；probabilities 仅在测试覆盖时与 Zipf 不同
    """

    N: int
    s: float
    probabilities: Tuple[float, ...]
    codewords: Tuple[str, ...]
    expected_length_bits: float

    @property
    def lengths(self) -> List[int]:
        return [len(c) for c in self.codewords]

    def kraft_sum(self) -> float:
        return float(sum(2.0 ** -len(c) for c in self.codewords))

    def _decode_table(self) -> Dict[str, int]:
        return {code: k for k, code in enumerate(self.codewords, start=1)}


def _huffman_lengths(probabilities: Sequence[float]) -> List[int]:
    """
    Huffman 码长；合并顺序确定：概率相同先合并最大符号更小的子树
    """
    n = len(probabilities)
    if n == 1:
        return [1]
    heap = [(float(p), sym, sym, (sym,)) for sym, p in enumerate(probabilities)]
    heapq.heapify(heap)
    lengths = [0] * n
    counter = n
    while len(heap) > 1:
        p1, max1, _, syms1 = heapq.heappop(heap)
        p2, max2, _, syms2 = heapq.heappop(heap)
        for sym in syms1 + syms2:
            lengths[sym] += 1
        heapq.heappush(heap, (p1 + p2, max(max1, max2), counter, syms1 + syms2))
        counter += 1
    return lengths


def _canonical_codewords(lengths: Sequence[int]) -> List[str]:
    order = sorted(range(len(lengths)), key=lambda sym: (lengths[sym], sym))
    codewords = [""] * len(lengths)
    code = 0
    prev_len = 0
    for sym in order:
        length = lengths[sym]
        code <<= (length - prev_len)
        codewords[sym] = format(code, f"0{length}b")
        code += 1
        prev_len = length
    return codewords


def build_from_probabilities(probabilities: Sequence[float], s: float = float("nan"),
                             N: Optional[int] = None) -> ZipfCodebook:
    """
    对任意概率向量构造规范 Huffman 码本

    Args:
        probabilities: 各索引的概率（索引从 1 开始）
        s: 记录用的 Zipf 指数
        N: 支撑大小（缺省为概率向量长度）

    Returns:
        ZipfCodebook: 码本
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
        raise ShapeError("概率向量必须非空、非负且和为正")
    p = p / p.sum()
    raw = _huffman_lengths(p)
    # 码长按概率降序重新分配（稳定），保证概率更大的索引码长不更长
    by_probability = sorted(range(p.size), key=lambda sym: (-p[sym], sym))
    lengths = [0] * p.size
    for sym, length in zip(by_probability, sorted(raw)):
        lengths[sym] = length
    codewords = _canonical_codewords(lengths)
    expected = float(np.sum(p * np.asarray(lengths, dtype=np.float64)))
    return ZipfCodebook(N=int(p.size if N is None else N), s=float(s),
                        probabilities=tuple(float(v) for v in p),
                        codewords=tuple(codewords), expected_length_bits=expected)


_CODEBOOK_CACHE: Dict[Tuple[int, float], ZipfCodebook] = {}


def build(N: int, C: float) -> ZipfCodebook:
    """
    为截断 Zipf 分布构造码本

    Args:
        N: 支撑大小（候选数）
        C: 码率参数（bits）

    Returns:
        ZipfCodebook: 码本
    """
    if N < 1:
        raise ShapeError(f"N 必须 ≥ 1，实际 {N}")
    key = (int(N), float(C))
    if key not in _CODEBOOK_CACHE:
        s = zipf_exponent(C)
        _CODEBOOK_CACHE[key] = build_from_probabilities(zipf_probabilities(int(N), s), s, int(N))
    return _CODEBOOK_CACHE[key]


def encode_index(codebook: ZipfCodebook, K: int) -> str:
    if not 1 <= K <= len(codebook.codewords):
        raise ShapeError(f"索引 K={K} 超出 [1, {len(codebook.codewords)}]")
    return codebook.codewords[K - 1]


def decode_prefix(codebook: ZipfCodebook, bits: str) -> Tuple[int, int]:
    """
    从比特串开头解出一个码字

    Returns:
        Tuple[int, int]: (索引 K, 消耗的比特数)
    """
    table = codebook._decode_table()
    max_len = max(len(c) for c in codebook.codewords)
    for length in range(1, min(len(bits), max_len) + 1):
        k = table.get(bits[:length])
        if k is not None:
            return k, length
    raise DataFormatError(f"比特串不以任何码字开头: {bits[:max_len]!r}")


def decode_index(codebook: ZipfCodebook, bits: str) -> int:
    """解码恰好一个码字；多余或不足的比特都视为错误"""
    k, consumed = decode_prefix(codebook, bits)
    if consumed != len(bits):
        raise DataFormatError(f"码字后还有 {len(bits) - consumed} 个多余比特")
    return k


class BitWriter:
    """MSB 优先的比特打包器"""

    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.bits = 0
        self.total_bits = 0

    def write_bits(self, bits: str):
        for ch in bits:
            self.acc = (self.acc << 1) | (1 if ch == "1" else 0)
            self.bits += 1
            self.total_bits += 1
            if self.bits == 8:
                self.buf.append(self.acc)
                self.acc = 0
                self.bits = 0

    def finish(self) -> bytes:
        if self.bits > 0:
            self.buf.append((self.acc << (8 - self.bits)) & 0xFF)
            self.acc = 0
            self.bits = 0
        return bytes(self.buf)


class BitReader:
    """按记录的比特长度读取 MSB 优先的比特串"""

    def __init__(self, data: bytes, bit_count: int):
        if bit_count > 8 * len(data):
            raise DataFormatError(f"比特数 {bit_count} 超过负载长度 {8 * len(data)}")
        self.data = data
        self.bit_count = bit_count

    def read_all(self) -> str:
        bits = "".join(format(byte, "08b") for byte in self.data)
        return bits[:self.bit_count]
