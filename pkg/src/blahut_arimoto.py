#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Blahut-Arimoto 模块
离散字母表上的 BA 交替最小化（对数域），以及把数据支撑集当作重建字母表的
plug-in 基线（会在零失真处给出 log2 n 的码率上限）。

注意符号约定：这里的 β ≥ 0 乘在 -d 上（e^{-βd}）；对偶模块中的 β̃ ≤ 0，
两者关系为 β = -β̃。
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from errors import MemoryBudgetError, NumericalError, ShapeError
from rd_curve import RdCurve, params_digest
from rd_dual import SQUARED_ERROR, distortion_matrix


LN2 = math.log(2.0)
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10000
DEFAULT_MEMORY_BUDGET = 256 * 2 ** 20
OBJECTIVE_SLACK = 1e-10


@dataclass
class DiscreteRdProblem:
    """离散率失真问题：源分布 px、n×k 失真矩阵、斜率 β ≥ 0"""

    px: np.ndarray
    dist: np.ndarray
    beta: float

    def __post_init__(self):
        self.px = np.asarray(self.px, dtype=np.float64)
        self.dist = np.atleast_2d(np.asarray(self.dist, dtype=np.float64))
        if self.px.ndim != 1 or self.px.size != self.dist.shape[0]:
            raise ShapeError(f"px 长度 {self.px.size} 与失真矩阵行数 {self.dist.shape[0]} 不一致")
        if np.any(self.px < 0) or abs(self.px.sum() - 1.0) > 1e-12:
            raise ShapeError("px 必须非负且和为 1")
        if not np.all(np.isfinite(self.dist)) or np.any(self.dist < 0):
            raise ShapeError("失真矩阵必须有限且非负")
        if self.beta < 0:
            raise ShapeError(f"BA 的 β 必须 ≥ 0（对偶 β̃ = -β），实际 {self.beta}")

    @classmethod
    def from_dual_slope(cls, px, dist, beta_dual: float) -> "DiscreteRdProblem":
        """由对偶斜率 β̃ ≤ 0 构造（β = -β̃）"""
        return cls(px, dist, -float(beta_dual))


@dataclass
class BaResult:
    """BA 结果；rate_bits 为 bits"""

    r: np.ndarray
    rate_bits: float
    distortion: float
    iterations: int
    converged: bool
    objective_history: List[float] = field(default_factory=list)


def _objective(log_p_cond: np.ndarray, log_r: np.ndarray, p_cond: np.ndarray,
               px: np.ndarray, dist: np.ndarray, beta: float):
    with np.errstate(invalid="ignore"):
        log_ratio = np.where(p_cond > 0, log_p_cond - log_r[None, :], 0.0)
    rate_nats = float(px @ np.sum(p_cond * log_ratio, axis=1))
    distortion = float(px @ np.sum(p_cond * dist, axis=1))
    return rate_nats, distortion, rate_nats + beta * distortion


def ba_solve(problem: DiscreteRdProblem, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, r_init: Optional[np.ndarray] = None) -> BaResult:
    """
    BA 交替更新 p(y|x) ∝ r(y)e^{-βd(x,y)} 与 r(y) = Σ_x p(x)p(y|x)

    Args:
        problem: 离散问题
        tol: r 的 sup 范数收敛阈值
        max_iter: 最大迭代次数
        r_init: 初始输出分布（缺省均匀）

    Returns:
        BaResult: 输出边缘、码率、失真及收敛信息
    """
    if tol <= 0:
        raise ShapeError("tol 必须为正")
    px, dist, beta = problem.px, problem.dist, float(problem.beta)
    k = dist.shape[1]
    r = np.full(k, 1.0 / k) if r_init is None else np.asarray(r_init, dtype=np.float64)
    if r.shape != (k,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise ShapeError("r_init 必须是长度为 k 的概率向量")

    active_rows = px > 0
    scaled = -beta * dist
    history: List[float] = []
    converged = False
    iterations = 0
    with np.errstate(divide="ignore"):
        log_px = np.log(px)
        log_r = np.log(r)
    p_cond = np.tile(r, (dist.shape[0], 1))
    log_p_cond = np.tile(log_r, (dist.shape[0], 1))

    for iterations in range(1, max_iter + 1):
        log_p_cond = scaled + log_r[None, :]
        log_p_cond -= logsumexp(log_p_cond, axis=1, keepdims=True)
        p_cond = np.exp(log_p_cond)

        log_r_new = logsumexp(log_px[active_rows, None] + log_p_cond[active_rows], axis=0)
        r_new = np.exp(log_r_new)
        r_new /= r_new.sum()
        with np.errstate(divide="ignore"):
            log_r_new = np.log(r_new)

        _, _, objective = _objective(log_p_cond, log_r_new, p_cond, px, dist, beta)
        if history and objective > history[-1] + OBJECTIVE_SLACK * max(1.0, abs(history[-1])):
            raise NumericalError(f"BA 目标在第 {iterations} 次迭代上升: "
                                 f"{history[-1]:.12g} -> {objective:.12g}")
        history.append(objective)

        delta = float(np.max(np.abs(r_new - r)))
        r, log_r = r_new, log_r_new
        if delta < tol:
            converged = True
            break

    rate_nats, distortion, _ = _objective(log_p_cond, log_r, p_cond, px, dist, beta)
    if not converged:
        print(f"⚠️ BA 在 {max_iter} 次迭代内未收敛（β={beta:.6g}）")
    return BaResult(r=r, rate_bits=max(0.0, rate_nats / LN2), distortion=distortion,
                    iterations=iterations, converged=converged, objective_history=history)


def ba_solve_for_distortion(px: np.ndarray, dist: np.ndarray, D_target: float,
                            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                            d_tol: float = 1e-7, beta_max: float = 1e6) -> BaResult:
    """
    在 log β 上二分，使 BA 的失真命中 D_target

    Args:
        px: 源分布
        dist: 失真矩阵
        D_target: 目标失真
        tol: BA 收敛阈值
        max_iter: BA 最大迭代次数
        d_tol: 失真容差
        beta_max: β 上界

    Returns:
        BaResult: 命中目标失真的 BA 结果
    """
    zero = ba_solve(DiscreteRdProblem(px, dist, 0.0), tol, max_iter)
    if zero.distortion <= D_target:
        return zero
    lo, hi = -12.0, math.log(beta_max)
    result = zero
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        result = ba_solve(DiscreteRdProblem(px, dist, math.exp(mid)), tol, max_iter)
        if abs(result.distortion - D_target) <= d_tol or hi - lo < 1e-12:
            break
        if result.distortion > D_target:
            lo = mid
        else:
            hi = mid
    return result


def _plugin_problem(data: np.ndarray, memory_budget: int):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = data.shape[0]
    if n < 1:
        raise ShapeError("plug-in BA 至少需要 1 个样本")
    # 距离矩阵、指数核与条件分布同时驻留
    required = 3 * n * n * 8
    if required > memory_budget:
        raise MemoryBudgetError(
            required, memory_budget,
            "plug-in BA 的内存随 n² 增长，无法扩展到大数据集；请减少样本或调大 --memory-budget")
    return np.full(n, 1.0 / n), distortion_matrix(data, data, SQUARED_ERROR)


def ba_plugin_sweep(data: np.ndarray, beta_list: Sequence[float],
                    memory_budget: int = DEFAULT_MEMORY_BUDGET, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER, verbose: bool = False) -> RdCurve:
    """
    plug-in 基线：px 为经验分布，重建字母表即数据本身，平方误差失真

    Args:
        data: n×m 样本
        beta_list: BA 斜率列表（β ≥ 0）
        memory_budget: n×n 失真矩阵允许的最大字节数
        tol: BA 收敛阈值
        max_iter: BA 最大迭代次数
        verbose: 是否打印每个点

    Returns:
        RdCurve: provenance 为 ba-plugin 的曲线
    """
    px, dist = _plugin_problem(data, memory_budget)
    n = px.size
    digest = params_digest({"method": "ba-plugin", "n": n, "tol": tol})
    curve = RdCurve("ba-plugin")
    for beta in beta_list:
        result = ba_solve(DiscreteRdProblem(px, dist, float(beta)), tol, max_iter)
        curve.add(result.distortion, result.rate_bits, n=n, params_digest=digest, beta=-float(beta))
        if verbose:
            print(f"📊 β={beta:.6g}: D={result.distortion:.6g}, R={result.rate_bits:.4f} bits"
                  f"{'' if result.converged else '（未收敛）'}")
    return curve.sorted()


def ba_plugin_targets(data: np.ndarray, D_list: Sequence[float],
                      memory_budget: int = DEFAULT_MEMORY_BUDGET, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER, verbose: bool = False) -> RdCurve:
    """plug-in 基线在给定失真目标处的取值（对每个目标二分 β）"""
    px, dist = _plugin_problem(data, memory_budget)
    n = px.size
    digest = params_digest({"method": "ba-plugin", "n": n, "tol": tol})
    curve = RdCurve("ba-plugin")
    for D in D_list:
        result = ba_solve_for_distortion(px, dist, float(D), tol, max_iter)
        curve.add(result.distortion, result.rate_bits, n=n, params_digest=digest)
        if verbose:
            print(f"📊 D={D:.6g}: 达到 D={result.distortion:.6g}, R={result.rate_bits:.4f} bits")
    return curve.sorted()
