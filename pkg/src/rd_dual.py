#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
率失真对偶目标数值模块
稳定化的 log-mean-exp 内层目标、β 的驻点条件及其二分求解。
内部单位为 nats，只有对外报告的码率换算为 bits。
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from errors import ShapeError


LN2 = math.log(2.0)
DEFAULT_TOL = 1e-6
DEFAULT_EPS = 1e-10
BETA_MIN_SCALE = 50.0
MAX_BISECTION_STEPS = 200
BLOCK_ELEMENTS = 1 << 22

KERNELS = ("squared_error", "hamming")
ESTIMATORS = ("full_matrix", "paper_diagonal")


@dataclass(frozen=True)
class DistortionKernel:
    """失真度量；非负、对称、d(x, x) = 0"""

    kind: str = "squared_error"

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ShapeError(f"不支持的失真度量: {self.kind}")

    def pairwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = x[:, None, :] - y[None, :, :]
        if self.kind == "squared_error":
            return np.sum(diff * diff, axis=2)
        return np.count_nonzero(diff, axis=2).astype(np.float64)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(self.pairwise(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


SQUARED_ERROR = DistortionKernel("squared_error")
HAMMING = DistortionKernel("hamming")


@dataclass(frozen=True)
class DualSolution:
    """
    求得的 (β*, R, D)

    beta 单位为 nats/失真单位（≤ 0），rate_bits 单位为 bits
    """

    beta: float
    rate_bits: float
    distortion: float

    def __post_init__(self):
        if self.beta > 0:
            raise ShapeError(f"beta 必须 ≤ 0，实际 {self.beta}")
        if self.rate_bits < 0:
            raise ShapeError(f"rate_bits 必须 ≥ 0，实际 {self.rate_bits}")
        if self.beta == 0 and self.rate_bits != 0:
            raise ShapeError("beta == 0 时码率必须为 0")

    def to_dict(self):
        return {"beta": self.beta, "rate_bits": self.rate_bits, "distortion": self.distortion}


@dataclass(frozen=True)
class BetaSolution:
    """solve_beta 的结果；beta 即 DualSolution.beta"""

    beta: float
    distortion: float
    saturated: bool
    iterations: int


def distortion_matrix(x: np.ndarray, y: np.ndarray,
                      kernel: DistortionKernel = SQUARED_ERROR) -> np.ndarray:
    """
    计算 n×k 失真矩阵，entry (i, j) = d(X_i, Y_j)

    Args:
        x: n×m 源样本
        y: k×m 重建样本
        kernel: 失真度量

    Returns:
        np.ndarray: n×k 非负矩阵
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"维度不匹配: X 有 {x.shape[1]} 列，Y 有 {y.shape[1]} 列")
    n, k, m = x.shape[0], y.shape[0], x.shape[1]
    out = np.empty((n, k))
    rows_per_block = max(1, BLOCK_ELEMENTS // max(1, k * m))
    for start in range(0, n, rows_per_block):
        stop = min(n, start + rows_per_block)
        out[start:stop] = kernel.pairwise(x[start:stop], y)
    return out


def _check_beta(beta: float):
    if beta > 0:
        raise ShapeError(f"beta 必须 ≤ 0，实际 {beta}")


def _log_mean_exp_rows(beta: float, dist: np.ndarray, eps: float) -> np.ndarray:
    k = dist.shape[1]
    log_mean = logsumexp(beta * dist, axis=1) - math.log(k)
    if eps > 0:
        return np.logaddexp(log_mean, math.log(eps))
    return log_mean


def inner_objective(D: float, beta: float, dist: np.ndarray, eps: float = 0.0) -> float:
    """
    β̃D − (1/n)Σ_i log((1/k)Σ_j e^{β̃ d_ij} + ε)，单位 nats

    Args:
        D: 目标失真
        beta: 斜率 β̃ ≤ 0
        dist: n×k 失真矩阵
        eps: 稳定项 ε ≥ 0

    Returns:
        float: 目标值（nats）
    """
    _check_beta(beta)
    if eps < 0:
        raise ShapeError("eps 必须非负")
    dist = np.atleast_2d(dist)
    return float(beta * D - np.mean(_log_mean_exp_rows(beta, dist, eps)))


def stationary_distortion(beta: float, dist: np.ndarray,
                          estimator: str = "full_matrix") -> float:
    """
    驻点条件右侧的经验估计：(1/n)Σ_i Σ_j d_ij·softmax_j(β d_i·)

    Args:
        beta: 斜率 β̃ ≤ 0
        dist: n×k 失真矩阵
        estimator: full_matrix（默认）或 paper_diagonal（仅用对角项，需方阵）

    Returns:
        float: 该 β 下的失真
    """
    _check_beta(beta)
    dist = np.atleast_2d(dist)
    weights = softmax(beta * dist, axis=1)
    if estimator == "full_matrix":
        return float(np.mean(np.sum(weights * dist, axis=1)))
    if estimator == "paper_diagonal":
        if dist.shape[0] != dist.shape[1]:
            raise ShapeError(f"paper_diagonal 估计需要方阵，实际 {dist.shape}")
        b = dist.shape[0]
        return float(np.mean(np.diag(dist) * b * np.diag(weights)))
    raise ShapeError(f"未知的 β 估计方式: {estimator}")


def default_beta_min(dist: np.ndarray) -> float:
    scale = float(np.mean(dist))
    if scale <= 0:
        return -BETA_MIN_SCALE
    return -BETA_MIN_SCALE / scale


def solve_beta(D_target: float, dist: np.ndarray, tol: float = DEFAULT_TOL,
               beta_min: Optional[float] = None, estimator: str = "full_matrix",
               verbose: bool = False, warn: bool = True) -> BetaSolution:
    """
    在 [beta_min, 0] 上二分求解 stationary_distortion(β) = D_target

    Args:
        D_target: 目标失真（> 0）
        dist: 失真矩阵
        tol: 失真容差
        beta_min: 搜索下界，默认 −50/mean(dist)
        estimator: 驻点估计方式
        verbose: 是否打印二分过程信息
        warn: 饱和时是否打印警告（调用方自行汇总时可关闭）

    Returns:
        BetaSolution: β 以及是否饱和
    """
    if tol <= 0:
        raise ShapeError("tol 必须为正")
    if D_target <= 0:
        raise ShapeError(f"D_target 必须为正，实际 {D_target}")
    dist = np.atleast_2d(dist)

    d_zero = stationary_distortion(0.0, dist, estimator)
    if d_zero <= D_target:
        return BetaSolution(0.0, d_zero, False, 0)

    if beta_min is None:
        beta_min = default_beta_min(dist)
    d_low = stationary_distortion(beta_min, dist, estimator)
    if d_low > D_target:
        if warn:
            print(f"⚠️ β 搜索饱和: β={beta_min:.6g} 时失真 {d_low:.6g} 仍大于目标 {D_target:.6g}")
        return BetaSolution(float(beta_min), d_low, True, 0)

    lo, hi = float(beta_min), 0.0
    beta, d_mid = lo, d_low
    iterations = 0
    for iterations in range(1, MAX_BISECTION_STEPS + 1):
        beta = 0.5 * (lo + hi)
        d_mid = stationary_distortion(beta, dist, estimator)
        if abs(d_mid - D_target) <= tol or hi - lo <= 1e-15 * max(1.0, abs(lo)):
            break
        if d_mid > D_target:
            hi = beta
        else:
            lo = beta
    if verbose:
        print(f"🔄 β 二分: {iterations} 次迭代, β={beta:.6g}, D={d_mid:.6g}")
    return BetaSolution(beta, d_mid, False, iterations)


def dual_rate(beta: float, D_target: float, dist: np.ndarray, eps: float = 0.0) -> float:
    """
    对偶目标在 β 处的值换算为 bits，下方截断在 0

    Args:
        beta: 斜率（通常来自 solve_beta）
        D_target: 目标失真
        dist: 失真矩阵
        eps: 稳定项 ε

    Returns:
        float: 码率（bits）
    """
    if beta == 0:
        return 0.0
    return max(0.0, inner_objective(D_target, beta, dist, eps) / LN2)


def optimize_dual(D_target: float, dist: np.ndarray, eps: float = DEFAULT_EPS,
                  tol: float = DEFAULT_TOL, beta_min: Optional[float] = None,
                  estimator: str = "full_matrix") -> DualSolution:
    """求解 β* 并给出完整的 (β*, R, D)"""
    solved = solve_beta(D_target, dist, tol=tol, beta_min=beta_min, estimator=estimator)
    rate = dual_rate(solved.beta, D_target, dist, eps)
    return DualSolution(beta=solved.beta, rate_bits=rate, distortion=solved.distortion)
