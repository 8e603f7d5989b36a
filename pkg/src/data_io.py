#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
数据读写模块
样本矩阵（IDX 图像、NVEC 向量文件、合成高斯）、生成器检查点、曲线 CSV 与结果 JSON 的读写。
所有输出先写临时文件再原子替换，失败时不会留下半截文件。
"""

import hashlib
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from errors import DataFormatError, DigestMismatchError, ShapeError
from excel_formatter import export_curves_xlsx
from gaussian_oracle import GaussianSourceSpec
from rd_curve import CSV_COLUMNS, RdCurve
from tensor_autodiff import GeneratorModel


IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}

VECTOR_MAGIC = b"NVEC"
VECTOR_VERSION = 1
VECTOR_HEADER = struct.Struct("<4sBIIdd")

CHECKPOINT_MAGIC = b"NERD"
CHECKPOINT_VERSION = 1
CHECKPOINT_DIGEST_NAME = b"sha256"
DIGEST_SIZE = 32


@dataclass
class SampleMatrix:
    """
    n×m 样本矩阵

    存储值 values 与原始单位之间的关系为 original = offset + factor * values
    """

    values: np.ndarray
    offset: float = 0.0
    factor: float = 1.0
    source: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1) if values.size else values.reshape(0, 1)
        if values.ndim != 2:
            raise ShapeError(f"样本矩阵必须是二维，实际 {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("样本矩阵含非有限值")
        if self.factor == 0:
            raise ShapeError("scale factor 不能为 0")
        self.values = values

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def m(self) -> int:
        return int(self.values.shape[1])

    def unscale(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        v = self.values if values is None else np.asarray(values, dtype=np.float64)
        return self.offset + self.factor * v

    def scale(self, original: np.ndarray) -> np.ndarray:
        return (np.asarray(original, dtype=np.float64) - self.offset) / self.factor

    def distortion_to_original(self, distortion: float) -> float:
        """平方误差失真换算回原始单位"""
        return float(distortion) * self.factor ** 2

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<QQdd", self.n, self.m, self.offset, self.factor))
        h.update(self.values.astype("<f8").tobytes())
        return h.hexdigest()


# ------------------------------------------------------------------
# 原子写入
# ------------------------------------------------------------------

@contextmanager
def atomic_open(path: str, mode: str = "wb", encoding: Optional[str] = None):
    """在目标目录写临时文件，成功后 os.replace 到目标路径"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", dir=directory)
    try:
        with os.fdopen(fd, mode, encoding=encoding, newline="" if "b" not in mode else None) as f:
            yield f
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_bytes_atomic(path: str, payload: bytes):
    with atomic_open(path, "wb") as f:
        f.write(payload)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"无法序列化为 JSON: {type(value).__name__}")


def write_json(path: str, payload: Dict[str, Any]):
    """写结果 JSON（键排序，保证同输入字节一致）"""
    with atomic_open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    print(f"💾 结果已保存至: {path}")


# ------------------------------------------------------------------
# IDX
# ------------------------------------------------------------------

def load_idx(path: str) -> SampleMatrix:
    """
    读取大端 IDX 文件，每个条目展平为一行；u8 数据缩放到 [0, 1]（factor = 255）

    Args:
        path: IDX 文件路径

    Returns:
        SampleMatrix: 样本矩阵
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataFormatError(f"IDX 文件截断: 仅 {len(raw)} 字节，缺少魔数")
    if raw[0] != 0 or raw[1] != 0:
        bad = 0 if raw[0] != 0 else 1
        raise DataFormatError(f"IDX 魔数错误: 偏移 {bad} 处为 0x{raw[bad]:02x}，应为 0x00")
    dtype_code, ndims = raw[2], raw[3]
    if dtype_code not in IDX_DTYPES:
        raise DataFormatError(f"IDX 魔数错误: 偏移 2 处的数据类型 0x{dtype_code:02x} 不受支持")
    if ndims < 1:
        raise DataFormatError("IDX 魔数错误: 偏移 3 处的维数为 0")
    header_end = 4 + 4 * ndims
    if len(raw) < header_end:
        raise DataFormatError(f"IDX 文件截断: 维度表需要 {header_end} 字节，实际 {len(raw)}")
    dims = struct.unpack(f">{ndims}I", raw[4:header_end])
    dtype = IDX_DTYPES[dtype_code]
    count = int(np.prod(dims, dtype=np.int64))
    expected = header_end + count * dtype.itemsize
    if len(raw) < expected:
        raise DataFormatError(f"IDX 文件截断: 需要 {expected} 字节，实际 {len(raw)}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=header_end).astype(np.float64)
    n = int(dims[0])
    m = int(np.prod(dims[1:], dtype=np.int64)) if ndims > 1 else 1
    values = data.reshape(n, m)
    if dtype_code == 0x08:
        return SampleMatrix(values / 255.0, offset=0.0, factor=255.0, source=path)
    return SampleMatrix(values, source=path)


def write_idx_u8(path: str, images: np.ndarray):
    """写 u8 IDX 文件（测试夹具与导出用）"""
    images = np.asarray(images, dtype=np.uint8)
    header = bytes([0, 0, 0x08, images.ndim]) + struct.pack(f">{images.ndim}I", *images.shape)
    write_bytes_atomic(path, header + images.tobytes())


# ------------------------------------------------------------------
# NVEC 向量文件
# ------------------------------------------------------------------

def save_vectors(path: str, samples: SampleMatrix):
    """NVEC: 魔数、u8 版本、u32 n、u32 m、f64 offset、f64 factor、小端 f32 负载"""
    header = VECTOR_HEADER.pack(VECTOR_MAGIC, VECTOR_VERSION, samples.n, samples.m,
                                samples.offset, samples.factor)
    write_bytes_atomic(path, header + samples.values.astype("<f4").tobytes())


def load_vectors(path: str) -> SampleMatrix:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < VECTOR_HEADER.size:
        raise DataFormatError(f"向量文件截断: 头部需要 {VECTOR_HEADER.size} 字节")
    magic, version, n, m, offset, factor = VECTOR_HEADER.unpack_from(raw)
    if magic != VECTOR_MAGIC:
        raise DataFormatError(f"向量文件魔数错误（偏移 0）: {magic!r}")
    if version != VECTOR_VERSION:
        raise DataFormatError(f"不支持的向量文件版本: {version}")
    expected = VECTOR_HEADER.size + 4 * n * m
    if len(raw) != expected:
        raise DataFormatError(f"向量文件长度 {len(raw)} 与头部声明 {expected} 不符")
    values = np.frombuffer(raw, dtype="<f4", offset=VECTOR_HEADER.size).astype(np.float64)
    return SampleMatrix(values.reshape(n, m), offset=offset, factor=factor, source=path)


def load_samples(path: str) -> SampleMatrix:
    """按内容识别 NVEC 或 IDX"""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == VECTOR_MAGIC:
        return load_vectors(path)
    return load_idx(path)


def gen_gaussian(spec: GaussianSourceSpec, n: int, seed: int) -> SampleMatrix:
    """
    从 N(0, Σ) 生成 n 个样本，Σ = V diag(σ²) Vᵀ

    Args:
        spec: 高斯源
        n: 样本数
        seed: 随机种子

    Returns:
        SampleMatrix: n×m 样本
    """
    if n < 0:
        raise ShapeError(f"n 必须 ≥ 0，实际 {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, spec.dim)) * np.sqrt(spec.variances)
    return SampleMatrix(spec.from_eigenbasis(z), source=f"gaussian(seed={seed})")


# ------------------------------------------------------------------
# 检查点
# ------------------------------------------------------------------

def _checkpoint_body(model: GeneratorModel, metadata: Dict[str, Any]) -> bytes:
    descriptor = json.dumps(model.descriptor(), sort_keys=True).encode("utf-8")
    params = model.flat_parameters().astype("<f4").tobytes()
    meta = json.dumps(metadata, sort_keys=True, default=float).encode("utf-8")
    return b"".join([
        CHECKPOINT_MAGIC,
        struct.pack("<H", CHECKPOINT_VERSION),
        struct.pack("<B", len(CHECKPOINT_DIGEST_NAME)), CHECKPOINT_DIGEST_NAME,
        struct.pack("<I", len(descriptor)), descriptor,
        struct.pack("<Q", model.parameter_count), params,
        struct.pack("<I", len(meta)), meta,
    ])


def save_checkpoint(model: GeneratorModel, path: str, metadata: Optional[Dict[str, Any]] = None):
    """
    保存生成器检查点：参数以小端 f32 存储，末尾 32 字节为之前全部内容的 SHA-256

    Args:
        model: 生成器
        path: 输出路径
        metadata: {beta, D_target, rate_bits, train seed, data digest, ...}
    """
    body = _checkpoint_body(model, metadata or {})
    write_bytes_atomic(path, body + hashlib.sha256(body).digest())
    print(f"💾 检查点已保存至: {path}")


def load_checkpoint(path: str) -> Tuple[GeneratorModel, Dict[str, Any]]:
    """
    读取检查点并校验摘要

    Returns:
        Tuple[GeneratorModel, Dict]: 模型（参数为 f32 精度）与元数据
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 6 + DIGEST_SIZE:
        raise DataFormatError(f"检查点文件截断: {len(raw)} 字节")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"检查点魔数错误（偏移 0）: {raw[:4]!r}")
    body, digest = raw[:-DIGEST_SIZE], raw[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise DigestMismatchError(f"检查点摘要校验失败: {path}")
    # 摘要覆盖版本字段，校验通过后才信任版本号
    (version,) = struct.unpack_from("<H", body, 4)
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"不支持的检查点版本: {version}（支持 {CHECKPOINT_VERSION}）")

    pos = 6
    (name_len,) = struct.unpack_from("<B", body, pos)
    pos += 1
    digest_name = body[pos:pos + name_len]
    pos += name_len
    if digest_name != CHECKPOINT_DIGEST_NAME:
        raise DataFormatError(f"不支持的摘要算法: {digest_name!r}")
    (desc_len,) = struct.unpack_from("<I", body, pos)
    pos += 4
    descriptor = json.loads(body[pos:pos + desc_len].decode("utf-8"))
    pos += desc_len
    (count,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    flat = np.frombuffer(body, dtype="<f4", count=count, offset=pos).astype(np.float64)
    pos += 4 * count
    (meta_len,) = struct.unpack_from("<I", body, pos)
    pos += 4
    metadata = json.loads(body[pos:pos + meta_len].decode("utf-8"))

    dims = [descriptor["input_dim"]] + list(descriptor["hidden"]) + [descriptor["output_dim"]]
    weights, biases = [], []
    cursor = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[cursor:cursor + fan_in * fan_out].reshape(fan_in, fan_out))
        cursor += fan_in * fan_out
        biases.append(flat[cursor:cursor + fan_out].copy())
        cursor += fan_out
    if cursor != count:
        raise DataFormatError(f"参数个数 {count} 与结构描述需要的 {cursor} 不一致")
    model = GeneratorModel(descriptor["input_dim"], descriptor["output_dim"],
                           list(descriptor["hidden"]), weights, biases,
                           descriptor["activation"], descriptor["output_activation"])
    return model, metadata


# ------------------------------------------------------------------
# 曲线
# ------------------------------------------------------------------

def write_curve(curve: RdCurve, path: str):
    """CSV 表头 distortion,rate_bits,provenance,n,params_digest；按失真排序；17 位有效数字"""
    frame = curve.to_frame()
    with atomic_open(path, "w", encoding="utf-8") as f:
        frame.to_csv(f, index=False, float_format="%.17g")
    print(f"💾 曲线已保存至: {path}（{len(frame)} 个点）")


def read_curve(path: str) -> RdCurve:
    frame = pd.read_csv(path, dtype={"params_digest": str}, keep_default_na=True)
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFormatError(f"曲线 CSV 缺少列: {missing}")
    return RdCurve.from_frame(frame)
