#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
反向信道编码（RCC）一次性有损压缩模块
PFR/ORC 累积权重、按 K = argmin_i d(x, Y_i) − β⁻¹ ln W_i 选索引、
Zipf-Huffman 编码索引，解码端用共享种子重新生成候选并取回 Y_K。
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

import zipf_huffman
from errors import DataFormatError, DigestMismatchError, ShapeError
from gaussian_oracle import GaussianSourceSpec, GaussianTestChannel
from rd_dual import SQUARED_ERROR, DistortionKernel
from tensor_autodiff import GeneratorModel, forward


MESSAGE_MAGIC = b"NRCC"
MESSAGE_VERSION = 1
MESSAGE_HEADER = struct.Struct("<4sBBIddQ32sI")
SCHEMES = ("pfr", "orc")
DEFAULT_NUM_CANDIDATES = 1 << 12
DEFAULT_CHUNK = 1024

# 共享随机性的子流编号
WEIGHT_STREAM = 1
CANDIDATE_STREAM = 2


def substream(seed: int, stream: int) -> np.random.Generator:
    """由 64 位种子派生相互独立的 Philox 子流"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


def derive_seed(seed: int, index: int) -> int:
    """为第 index 条消息派生 64 位种子"""
    state = np.random.SeedSequence(int(seed), spawn_key=(0, int(index))).generate_state(1, np.uint64)
    return int(state[0])


# ------------------------------------------------------------------
# 候选来源（边缘分布快照）
# ------------------------------------------------------------------

class GaussianMarginal:
    """闭式高斯输出边缘分布 Q*_Y"""

    def __init__(self, spec: GaussianSourceSpec, D: float, channel: str = "optimal"):
        self.spec = spec
        self.D = float(D)
        self.channel = GaussianTestChannel(spec, D, channel)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.channel.marginal_from_normals(rng.standard_normal((count, self.dim)))

    def digest(self) -> bytes:
        payload = json.dumps({"kind": "gaussian", "spec": self.spec.to_dict(), "D": self.D,
                              "channel": self.channel.channel}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).digest()


class GeneratorMarginal:
    """NERD 生成器的输出分布：Y = G(Z), Z ~ N(0, I)"""

    def __init__(self, model: GeneratorModel):
        self.model = model

    @property
    def dim(self) -> int:
        return self.model.output_dim

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return forward(self.model, rng.standard_normal((count, self.model.input_dim)))

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(json.dumps(self.model.descriptor(), sort_keys=True).encode("utf-8"))
        h.update(self.model.flat_parameters().astype("<f8").tobytes())
        return h.digest()


@dataclass
class RccConfig:
    """
    编码参数

    beta < 0 为 nats/失真单位的斜率；C ≥ 0 为 Zipf 码率参数（bits）
    """

    beta: float
    C: float
    scheme: str = "orc"
    num_candidates: int = DEFAULT_NUM_CANDIDATES
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ShapeError(f"未知的 RCC 方案: {self.scheme}（可选 {SCHEMES}）")
        if self.num_candidates < 1:
            raise ShapeError(f"候选数 N 必须 ≥ 1，实际 {self.num_candidates}")
        if not self.beta < 0:
            raise ShapeError(f"beta 必须 < 0，实际 {self.beta}")
        if self.C < 0:
            raise ShapeError(f"码率参数 C 必须 ≥ 0，实际 {self.C}")
        if self.chunk_size < 1:
            raise ShapeError("chunk_size 必须 ≥ 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ShapeError("seed 必须是 64 位无符号整数")


@dataclass
class CompressedMessage:
    """压缩消息：头部 + MSB 优先的 Huffman 比特串"""

    scheme: str
    num_candidates: int
    beta: float
    C: float
    seed: int
    digest: bytes
    bit_count: int
    payload: bytes
    version: int = MESSAGE_VERSION

    def to_bytes(self) -> bytes:
        header = MESSAGE_HEADER.pack(MESSAGE_MAGIC, self.version, SCHEMES.index(self.scheme),
                                     self.num_candidates, self.beta, self.C, self.seed,
                                     self.digest, self.bit_count)
        return header + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CompressedMessage":
        if len(raw) < MESSAGE_HEADER.size:
            raise DataFormatError(f"消息截断: 头部需要 {MESSAGE_HEADER.size} 字节，实际 {len(raw)}")
        magic, version, scheme, n, beta, C, seed, digest, bit_count = MESSAGE_HEADER.unpack_from(raw)
        if magic != MESSAGE_MAGIC:
            raise DataFormatError(f"消息魔数错误（偏移 0）: {magic!r}")
        if version != MESSAGE_VERSION:
            raise DataFormatError(f"不支持的消息版本: {version}")
        if scheme >= len(SCHEMES):
            raise DataFormatError(f"未知的方案编号（偏移 5）: {scheme}")
        payload = raw[MESSAGE_HEADER.size:]
        if len(payload) != (bit_count + 7) // 8:
            raise DataFormatError(f"负载 {len(payload)} 字节与比特数 {bit_count} 不符")
        return cls(SCHEMES[scheme], n, beta, C, seed, digest, bit_count, payload, version)

    def config(self) -> RccConfig:
        return RccConfig(beta=self.beta, C=self.C, scheme=self.scheme,
                         num_candidates=self.num_candidates, seed=self.seed)


# ------------------------------------------------------------------
# 权重与索引选择
# ------------------------------------------------------------------

def cumulative_weights(scheme: str, N: int, rng: Optional[np.random.Generator] = None,
                       exponentials: Optional[np.ndarray] = None) -> np.ndarray:
    """
    累积权重 W_1 < ... < W_N

    PFR: W_i = Σ_{j≤i} X_j；ORC: W_i = Σ_{j≤i} N/(N−j+1)·X_j，X_j ~ Exp(1)

    Args:
        scheme: pfr 或 orc
        N: 候选数
        rng: 权重子流（与 exponentials 二选一）
        exponentials: 直接给定的 X_1..X_N

    Returns:
        np.ndarray: 长度 N 的累积权重
    """
    if scheme not in SCHEMES:
        raise ShapeError(f"未知的 RCC 方案: {scheme}")
    if N < 1:
        raise ShapeError(f"N 必须 ≥ 1，实际 {N}")
    if exponentials is None:
        if rng is None:
            raise ShapeError("需要 rng 或 exponentials")
        exponentials = rng.standard_exponential(N)
    x = np.asarray(exponentials, dtype=np.float64)
    if x.shape != (N,):
        raise ShapeError(f"exponentials 长度应为 {N}")
    if scheme == "orc":
        j = np.arange(1, N + 1, dtype=np.float64)
        x = x * (N / (N - j + 1.0))
    return np.cumsum(x)


def index_scores(x: np.ndarray, candidates: np.ndarray, W: np.ndarray, beta: float,
                 kernel: DistortionKernel = SQUARED_ERROR) -> np.ndarray:
    """d(x, Y_i) − β⁻¹ ln W_i"""
    if not beta < 0:
        raise ShapeError(f"beta 必须 < 0，实际 {beta}")
    d = kernel.pairwise(np.atleast_2d(x), np.atleast_2d(candidates))[0]
    return d - np.log(W) / beta


def select_index(x: np.ndarray, candidates: np.ndarray, W: np.ndarray, beta: float,
                 kernel: DistortionKernel = SQUARED_ERROR) -> int:
    """返回最小 argmin 的 1 起始索引"""
    return int(np.argmin(index_scores(x, candidates, W, beta, kernel))) + 1


def one_shot_rate_bound(rate_bits: float) -> float:
    """R + log2(R + 1) + 5"""
    return rate_bits + math.log2(rate_bits + 1.0) + 5.0


def _iter_candidates(marginal, cfg: RccConfig, stop: Optional[int] = None):
    """按块产生 (起始索引, 候选块)；stop 为最多需要的候选数"""
    rng = substream(cfg.seed, CANDIDATE_STREAM)
    total = cfg.num_candidates if stop is None else min(stop, cfg.num_candidates)
    for start in range(0, total, cfg.chunk_size):
        count = min(cfg.chunk_size, total - start)
        yield start, marginal.sample(rng, count)


def _encode(x: np.ndarray, cfg: RccConfig, marginal,
            kernel: DistortionKernel = SQUARED_ERROR) -> Tuple[CompressedMessage, int, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != marginal.dim:
        raise ShapeError(f"x 维度 {x.size} 与边缘分布维度 {marginal.dim} 不一致")
    W = cumulative_weights(cfg.scheme, cfg.num_candidates, substream(cfg.seed, WEIGHT_STREAM))
    best_score, best_index, best_y = math.inf, 0, None
    for start, chunk in _iter_candidates(marginal, cfg):
        scores = index_scores(x, chunk, W[start:start + chunk.shape[0]], cfg.beta, kernel)
        i = int(np.argmin(scores))
        if scores[i] < best_score:
            best_score, best_index, best_y = float(scores[i]), start + i + 1, chunk[i].copy()

    codebook = zipf_huffman.build(cfg.num_candidates, cfg.C)
    writer = zipf_huffman.BitWriter()
    writer.write_bits(zipf_huffman.encode_index(codebook, best_index))
    bit_count = writer.total_bits
    msg = CompressedMessage(cfg.scheme, cfg.num_candidates, float(cfg.beta), float(cfg.C),
                            int(cfg.seed), marginal.digest(), bit_count, writer.finish())
    return msg, best_index, best_y


def encode(x: np.ndarray, cfg: RccConfig, marginal,
           kernel: DistortionKernel = SQUARED_ERROR) -> CompressedMessage:
    """
    对单个样本编码

    Args:
        x: m 维样本
        cfg: 编码参数
        marginal: 候选来源（GaussianMarginal / GeneratorMarginal）
        kernel: 失真度量

    Returns:
        CompressedMessage: 压缩消息
    """
    msg, _, _ = _encode(x, cfg, marginal, kernel)
    return msg


def decode_index(msg: CompressedMessage) -> int:
    codebook = zipf_huffman.build(msg.num_candidates, msg.C)
    bits = zipf_huffman.BitReader(msg.payload, msg.bit_count).read_all()
    return zipf_huffman.decode_index(codebook, bits)


def decode(msg: CompressedMessage, marginal, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """
    由消息头的种子重新生成候选直到 K，返回 Y_K

    Args:
        msg: 压缩消息
        marginal: 解码端的边缘分布快照（摘要必须与消息一致）
        chunk_size: 候选生成块大小（不影响结果）

    Returns:
        np.ndarray: 重建样本
    """
    if marginal.digest() != msg.digest:
        raise DigestMismatchError("解码端模型快照摘要与消息不一致（模型漂移？）")
    K = decode_index(msg)
    cfg = msg.config()
    cfg.chunk_size = chunk_size
    for start, chunk in _iter_candidates(marginal, cfg, stop=K):
        if start + chunk.shape[0] >= K:
            return chunk[K - 1 - start].copy()
    raise DataFormatError(f"索引 K={K} 超出候选数 {msg.num_candidates}")


@dataclass
class RccEvaluation:
    """测试集上的平均码率与失真"""

    mean_rate_bits: float
    mean_distortion: float
    rate_bound_bits: float
    p_first: float
    index_head: List[int] = field(default_factory=list)
    n: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_rate_bits": self.mean_rate_bits,
            "mean_distortion": self.mean_distortion,
            "rate_bound_bits": self.rate_bound_bits,
            "p_first": self.p_first,
            "index_head": list(self.index_head),
            "n": self.n,
        }


def rate_distortion_eval(test_x: np.ndarray, cfg: RccConfig, marginal,
                         kernel: DistortionKernel = SQUARED_ERROR, head: int = 8,
                         verbose: bool = False) -> RccEvaluation:
    """
    逐样本编码（各自派生种子），统计实际比特长度与 d(x, Y_K)

    Args:
        test_x: n×m 测试样本
        cfg: 编码参数（seed 为派生各消息种子的根）
        marginal: 候选来源
        kernel: 失真度量
        head: 统计 K=1..head 的计数
        verbose: 是否打印进度

    Returns:
        RccEvaluation: 平均码率、平均失真、一次性码率上界、P(K=1) 与索引计数
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=np.float64))
    if test_x.shape[0] == 0:
        raise ShapeError("测试集为空")
    rates, distortions = [], []
    counts = np.zeros(head, dtype=np.int64)
    for i, x in enumerate(test_x):
        sample_cfg = RccConfig(cfg.beta, cfg.C, cfg.scheme, cfg.num_candidates,
                               derive_seed(cfg.seed, i), cfg.chunk_size)
        msg, K, y = _encode(x, sample_cfg, marginal, kernel)
        rates.append(msg.bit_count)
        distortions.append(kernel(x, y))
        if K <= head:
            counts[K - 1] += 1
        if verbose and (i + 1) % 100 == 0:
            print(f"🔄 已编码 {i + 1}/{test_x.shape[0]} 个样本")
    n = test_x.shape[0]
    result = RccEvaluation(float(np.mean(rates)), float(np.mean(distortions)),
                           one_shot_rate_bound(cfg.C), float(counts[0] / n),
                           [int(c) for c in counts], n)
    if verbose:
        print(f"📊 {cfg.scheme.upper()} N={cfg.num_candidates}: "
              f"R={result.mean_rate_bits:.4f} bits, D={result.mean_distortion:.6g}, "
              f"上界 {result.rate_bound_bits:.4f} bits, P(K=1)={result.p_first:.3f}")
    return result
