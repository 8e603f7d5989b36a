#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
高斯源率失真真值模块
反向注水求 λ，给出高斯 R(D) 解析值，以及用于验证 RCC 编解码的闭式信道/输出边缘分布。

两种闭式信道（仅作用于 σ_k² > λ 的活跃坐标，非活跃坐标恒为 0）：
  optimal  : Y|X=x ~ N((1-λ/σ²)x, λ(1-λ/σ²))，Y ~ N(0, σ²-λ)   达到 R(D)
  additive : Y|X=x ~ N(x, λ)，Y ~ N(0, σ²+λ)                  加性噪声形式，互信息高于 R(D)
"""

import json
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from errors import ShapeError
from rd_curve import RdCurve


CHANNEL_FORMS = ("optimal", "additive")
MAX_BISECTION_STEPS = 200
RESIDUAL_TOL = 1e-12


@dataclass
class GaussianSourceSpec:
    """
    零均值高斯源 N(0, V diag(σ²) Vᵀ)

    variances 为特征谱；mixing 为可选正交矩阵 V（缺省即单位阵）
    """

    variances: np.ndarray
    mixing: Optional[np.ndarray] = None

    def __post_init__(self):
        self.variances = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        if self.variances.ndim != 1 or self.variances.size == 0:
            raise ShapeError("variances 必须是非空一维向量")
        if not np.all(self.variances > 0):
            raise ShapeError("所有方差必须为正")
        if self.mixing is not None:
            self.mixing = np.asarray(self.mixing, dtype=np.float64)
            m = self.dim
            if self.mixing.shape != (m, m):
                raise ShapeError(f"mixing 形状应为 ({m}, {m})，实际 {self.mixing.shape}")
            if not np.allclose(self.mixing.T @ self.mixing, np.eye(m), atol=1e-9, rtol=0):
                raise ShapeError("mixing 不是正交矩阵 (VᵀV ≠ I)")

    @property
    def dim(self) -> int:
        return int(self.variances.size)

    @property
    def total_variance(self) -> float:
        return float(self.variances.sum())

    def covariance(self) -> np.ndarray:
        if self.mixing is None:
            return np.diag(self.variances)
        return self.mixing @ np.diag(self.variances) @ self.mixing.T

    def to_eigenbasis(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x if self.mixing is None else x @ self.mixing

    def from_eigenbasis(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return y if self.mixing is None else y @ self.mixing.T

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variances": [float(v) for v in self.variances],
            "mixing": None if self.mixing is None else self.mixing.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianSourceSpec":
        if "variances" not in data:
            raise ShapeError("高斯源描述缺少 variances 字段")
        mixing = data.get("mixing")
        return cls(np.asarray(data["variances"], dtype=np.float64),
                   None if mixing is None else np.asarray(mixing, dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GaussianSourceSpec":
        return cls.from_dict(json.loads(text))


def nerd_spectrum(m: int) -> np.ndarray:
    """σ_k² = 4·exp(-k/16), k = 1..m"""
    k = np.arange(1, m + 1, dtype=np.float64)
    return 4.0 * np.exp(-k / 16.0)


def rcc_spectrum(m: int) -> np.ndarray:
    """σ_k² = 4·exp(-k²/16), k = 1..m"""
    k = np.arange(1, m + 1, dtype=np.float64)
    return 4.0 * np.exp(-(k ** 2) / 16.0)


PRESETS = {"nerd": nerd_spectrum, "rcc": rcc_spectrum}


def random_orthogonal(m: int, seed: int) -> np.ndarray:
    """高斯矩阵 QR 分解得到的随机正交矩阵（对 R 的对角符号做了归一）"""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def preset_spec(name: str, m: int, mixing_seed: Optional[int] = None) -> GaussianSourceSpec:
    if name not in PRESETS:
        raise ShapeError(f"未知的谱预设: {name}（可选 {sorted(PRESETS)}）")
    mixing = None if mixing_seed is None else random_orthogonal(m, mixing_seed)
    return GaussianSourceSpec(PRESETS[name](m), mixing)


@dataclass(frozen=True)
class WaterfillSolution:
    """反向注水结果；active_set 为 σ_i² > λ 的坐标"""

    lam: float
    active_set: Tuple[int, ...]
    rate_bits: float
    distortion: float


def _water_level(variances: np.ndarray, lam: float) -> float:
    return float(np.minimum(lam, variances).sum())


def waterfill(spec: GaussianSourceSpec, D: float) -> WaterfillSolution:
    """
    反向注水：求 λ 使 Σ min(λ, σ_i²) = D

    Args:
        spec: 高斯源
        D: 目标失真（> 0）

    Returns:
        WaterfillSolution: λ、活跃集合、码率（bits）与失真
    """
    if not D > 0:
        raise ShapeError(f"D 必须为正，实际 {D}")
    variances = spec.variances
    total = spec.total_variance
    if D >= total:
        return WaterfillSolution(float(variances.max()), (), 0.0, min(D, total))

    lo, hi = 0.0, float(variances.max())
    lam = 0.5 * (lo + hi)
    for _ in range(MAX_BISECTION_STEPS):
        lam = 0.5 * (lo + hi)
        level = _water_level(variances, lam)
        if abs(level - D) <= RESIDUAL_TOL * max(1.0, D) or hi - lo <= 1e-300:
            break
        if level > D:
            hi = lam
        else:
            lo = lam

    # 在当前线性段上精确求解
    active = variances > lam
    if active.any():
        lam = (D - float(variances[~active].sum())) / int(active.sum())
    active = variances > lam
    rate = float(np.sum(0.5 * np.log2(variances[active] / lam)))
    distortion = lam * int(active.sum()) + float(variances[~active].sum())
    return WaterfillSolution(float(lam), tuple(int(i) for i in np.flatnonzero(active)),
                             rate, float(distortion))


def gaussian_rate_bits(spec: GaussianSourceSpec, D: float) -> float:
    return waterfill(spec, D).rate_bits


def oracle_curve(spec: GaussianSourceSpec, D_list: Sequence[float]) -> RdCurve:
    """
    逐点注水得到真值曲线

    Args:
        spec: 高斯源
        D_list: 失真列表

    Returns:
        RdCurve: provenance 为 oracle 的曲线
    """
    curve = RdCurve("oracle")
    for D in D_list:
        solution = waterfill(spec, float(D))
        curve.add(float(D), solution.rate_bits, beta=optimal_slope(spec, float(D)))
    curve.metadata["spec"] = spec.to_dict()
    return curve.sorted()


def optimal_slope(spec: GaussianSourceSpec, D: float) -> float:
    """R(D) 在 D 处的斜率 β* = -1/(2λ)（nats/失真单位）；零码率区为 0"""
    solution = waterfill(spec, D)
    if not solution.active_set:
        return 0.0
    return -1.0 / (2.0 * solution.lam)


class GaussianTestChannel:
    """某一失真 D 下的闭式信道与输出边缘分布（在特征基中因子化）"""

    def __init__(self, spec: GaussianSourceSpec, D: float, channel: str = "optimal"):
        if channel not in CHANNEL_FORMS:
            raise ShapeError(f"未知的信道形式: {channel}（可选 {CHANNEL_FORMS}）")
        self.spec = spec
        self.D = float(D)
        self.channel = channel
        self.solution = waterfill(spec, self.D)
        self.lam = self.solution.lam
        self.active = np.zeros(spec.dim, dtype=bool)
        self.active[list(self.solution.active_set)] = True

        var = spec.variances
        lam = self.lam
        gain = np.zeros(spec.dim)
        noise_var = np.zeros(spec.dim)
        marginal_var = np.zeros(spec.dim)
        if channel == "optimal":
            gain[self.active] = 1.0 - lam / var[self.active]
            noise_var[self.active] = lam * gain[self.active]
            marginal_var[self.active] = var[self.active] - lam
        else:
            gain[self.active] = 1.0
            noise_var[self.active] = lam
            marginal_var[self.active] = var[self.active] + lam
        self.gain = gain
        self.noise_var = noise_var
        self.marginal_var = marginal_var

    @property
    def slope(self) -> float:
        return 0.0 if not self.active.any() else -1.0 / (2.0 * self.lam)

    def mutual_information_bits(self) -> float:
        var = self.spec.variances[self.active]
        if self.channel == "optimal":
            return float(np.sum(0.5 * np.log2(var / self.lam)))
        return float(np.sum(0.5 * np.log2((var + self.lam) / self.lam)))

    def sample_channel(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x_e = self.spec.to_eigenbasis(x)
        noise = rng.standard_normal(np.shape(x_e))
        y_e = np.where(self.active, self.gain * x_e + np.sqrt(self.noise_var) * noise, 0.0)
        return self.spec.from_eigenbasis(y_e)

    def marginal_from_normals(self, normals: np.ndarray) -> np.ndarray:
        """把标准正态样本（行）变换为输出边缘分布样本"""
        y_e = np.where(self.active, np.sqrt(self.marginal_var) * normals, 0.0)
        return self.spec.from_eigenbasis(y_e)

    def sample_marginal(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        shape = (self.spec.dim,) if size is None else (size, self.spec.dim)
        return self.marginal_from_normals(rng.standard_normal(shape))

    def log_density_ratio(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """log dQ_{Y|X=x}/dQ_Y (y)，单位 nats；只累加活跃坐标"""
        x_e = np.atleast_2d(self.spec.to_eigenbasis(x))[:, self.active]
        y_e = np.atleast_2d(self.spec.to_eigenbasis(y))[:, self.active]
        gain = self.gain[self.active]
        noise_var = self.noise_var[self.active]
        marginal_var = self.marginal_var[self.active]
        conditional = -0.5 * (np.log(2 * math.pi * noise_var) + (y_e - gain * x_e) ** 2 / noise_var)
        marginal = -0.5 * (np.log(2 * math.pi * marginal_var) + y_e ** 2 / marginal_var)
        return np.sum(conditional - marginal, axis=1)


def optimal_channel_sample(spec: GaussianSourceSpec, D: float, x: np.ndarray,
                           rng: np.random.Generator, channel: str = "optimal") -> np.ndarray:
    """对单个 x 从闭式信道采样 y"""
    return GaussianTestChannel(spec, D, channel).sample_channel(x, rng)


def optimal_marginal_sample(spec: GaussianSourceSpec, D: float, rng: np.random.Generator,
                            channel: str = "optimal", size: Optional[int] = None) -> np.ndarray:
    """从闭式输出边缘分布采样"""
    return GaussianTestChannel(spec, D, channel).sample_marginal(rng, size)


def log_density_ratio_gaussian(spec: GaussianSourceSpec, D: float, x: np.ndarray,
                               y: np.ndarray, channel: str = "optimal") -> float:
    """闭式密度比 log dQ*_{Y|X=x}/dQ*_Y (y)，单位 nats"""
    return float(GaussianTestChannel(spec, D, channel).log_density_ratio(x, y)[0])
