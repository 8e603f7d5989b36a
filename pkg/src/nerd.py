#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NERD 率失真估计模块
用生成器 G_θ(Z) 近似输出分布，按稳定化对偶目标训练：每一步先在当前批次上二分求 β̃*，
再把 β̃* 当作常数对生成器做一步优化；最终在新的生成器样本上重新求解得到报告值。
"""

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, DivergenceError, NumericalError, ShapeError, ToolkitError
from rd_curve import RdCurve, params_digest
from rd_dual import (DEFAULT_EPS, DEFAULT_TOL, ESTIMATORS, SQUARED_ERROR, DualSolution,
                     distortion_matrix, dual_rate, solve_beta)
from tensor_autodiff import (ACTIVATIONS, OUTPUT_ACTIVATIONS, GeneratorModel, Tape, backward,
                             forward, init_generator, log_mean_exp_eps, make_optimizer, mean_all,
                             pairwise_sq_dist, scale)


MONOTONE_SLACK_BITS = 0.1

# 随机子流编号
INIT_STREAM = 1
TRAIN_STREAM = 2
EVAL_STREAM = 3
SWEEP_STREAM = 4


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(stream)))


def _as_array(data) -> np.ndarray:
    values = getattr(data, "values", data)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"数据必须是 n×m 矩阵，实际 {values.shape}")
    return values


@dataclass
class NerdConfig:
    """NERD 训练与评估参数"""

    D_target: float = 1.0
    batch_size: int = 512
    steps: int = 5000
    learning_rate: float = 1e-4
    eps: float = DEFAULT_EPS
    m_z: int = 16
    hidden: List[int] = field(default_factory=lambda: [256, 256])
    seed: int = 0
    optimizer: str = "adam"
    beta_estimator: str = "full_matrix"
    eval_batches: int = 8
    tol: float = DEFAULT_TOL
    log_every: int = 500
    max_eval_rows: int = 2048
    warm_start: bool = True
    activation: str = "leaky_relu"
    output_activation: str = "identity"

    def __post_init__(self):
        self.hidden = [int(h) for h in self.hidden]
        if self.batch_size < 2:
            raise ConfigError(f"batch_size 必须 ≥ 2，实际 {self.batch_size}")
        if self.steps < 1:
            raise ConfigError(f"steps 必须 ≥ 1，实际 {self.steps}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate 必须为正，实际 {self.learning_rate}")
        if self.eps < 0:
            raise ConfigError(f"eps 必须 ≥ 0，实际 {self.eps}")
        if not self.D_target > 0:
            raise ConfigError(f"D_target 必须为正，实际 {self.D_target}")
        if self.m_z < 1 or self.eval_batches < 1 or self.max_eval_rows < 1:
            raise ConfigError("m_z、eval_batches、max_eval_rows 必须 ≥ 1")
        if self.beta_estimator not in ESTIMATORS:
            raise ConfigError(f"未知的 β 估计方式: {self.beta_estimator}")
        if self.activation not in ACTIVATIONS or self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"未知的激活函数: {self.activation}/{self.output_activation}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"未知优化器: {self.optimizer}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        return params_digest(self.to_dict())

    def with_target(self, D_target: float, seed: Optional[int] = None) -> "NerdConfig":
        return replace(self, D_target=float(D_target), seed=self.seed if seed is None else seed)


@dataclass
class NerdResult:
    """训练结果；solution 为评估阶段重新求解的报告值"""

    model: GeneratorModel
    solution: DualSolution
    loss_history: List[float]
    n_train: int
    beta_history: List[float] = field(default_factory=list)
    saturated_steps: int = 0
    eval_saturated: bool = False

    def to_dict(self, cfg: NerdConfig) -> Dict[str, Any]:
        return {
            "D_target": cfg.D_target,
            "beta": self.solution.beta,
            "rate_bits": self.solution.rate_bits,
            "distortion": self.solution.distortion,
            "n": self.n_train,
            "config_digest": cfg.digest(),
            "saturated_steps": self.saturated_steps,
            "eval_saturated": self.eval_saturated,
        }


def empirical_dmax(data) -> float:
    """零码率可达失真 E||X − mean||²"""
    x = _as_array(data)
    return float(np.mean(np.sum((x - x.mean(axis=0)) ** 2, axis=1)))


def _train_step(model: GeneratorModel, x_batch: np.ndarray, z: np.ndarray,
                cfg: NerdConfig) -> Tuple[float, List[np.ndarray], Any]:
    tape = Tape()
    y, _ = model.trace(tape, tape.constant(z))
    dist = pairwise_sq_dist(tape.constant(x_batch), y)
    solved = solve_beta(cfg.D_target, dist.data, tol=cfg.tol,
                        estimator=cfg.beta_estimator, warn=False)
    # β̃* 作为常数参与，不对其求导；D ≥ 批内 β=0 失真时 β̃* = 0，梯度为零
    inner = log_mean_exp_eps(scale(dist, solved.beta), cfg.eps)
    loss = scale(mean_all(inner), -1.0)
    return float(loss.data), backward(tape, loss), solved


def train(data, cfg: NerdConfig, init_model: Optional[GeneratorModel] = None,
          verbose: bool = False) -> NerdResult:
    """
    训练生成器并给出 R̂(D)

    Args:
        data: n×m 样本（ndarray 或 SampleMatrix）
        cfg: 训练参数
        init_model: 热启动模型（缺省按 cfg.seed 初始化）
        verbose: 是否每 log_every 步打印进度

    Returns:
        NerdResult: 模型、报告的 DualSolution 与训练损失
    """
    x = _as_array(data)
    n, m = x.shape
    if n < cfg.batch_size:
        raise ShapeError(f"样本数 n={n} 小于 batch_size={cfg.batch_size}")
    if init_model is None:
        model = init_generator(cfg.m_z, m, cfg.hidden, _rng(cfg.seed, INIT_STREAM),
                               cfg.activation, cfg.output_activation)
    else:
        if init_model.output_dim != m or init_model.input_dim != cfg.m_z:
            raise ShapeError(f"热启动模型维度 ({init_model.input_dim}→{init_model.output_dim}) "
                             f"与配置 ({cfg.m_z}→{m}) 不一致")
        model = init_model.copy()

    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    rng = _rng(cfg.seed, TRAIN_STREAM)
    loss_history: List[float] = []
    beta_history: List[float] = []
    saturated = 0
    if verbose:
        print(f"🔄 NERD 训练: D={cfg.D_target:.6g}, n={n}, m={m}, T={cfg.steps}, B={cfg.batch_size}")

    for step in range(1, cfg.steps + 1):
        x_batch = x[rng.integers(0, n, size=cfg.batch_size)]
        z = rng.standard_normal((cfg.batch_size, cfg.m_z))
        try:
            loss, grads, solved = _train_step(model, x_batch, z, cfg)
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            model = optimizer.step(model, grads)
        except DivergenceError:
            raise
        except NumericalError as e:
            raise DivergenceError(step, float("nan")) from e
        loss_history.append(loss)
        beta_history.append(solved.beta)
        saturated += int(solved.saturated)
        if verbose and cfg.log_every > 0 and step % cfg.log_every == 0:
            print(f"📊 step {step}/{cfg.steps}: β̃*={solved.beta:.6g}, loss={loss:.6f} nats")

    if saturated:
        print(f"⚠️ {saturated}/{cfg.steps} 步 β 搜索饱和（D={cfg.D_target:.6g} 可能过小）")
    solution, eval_saturated = _evaluate(model, x, cfg.D_target, cfg)
    if verbose:
        print(f"✅ NERD 完成: R̂={solution.rate_bits:.4f} bits, β̃*={solution.beta:.6g}, "
              f"D={solution.distortion:.6g}")
    return NerdResult(model, solution, loss_history, n, beta_history, saturated, eval_saturated)


def evaluate(model: GeneratorModel, data, D_target: float, cfg: NerdConfig) -> DualSolution:
    """
    在 eval_batches·B 个新生成样本上重新求解 β̃* 与码率；同一 seed 结果逐位一致

    Args:
        model: 训练好的生成器
        data: n×m 样本（超过 max_eval_rows 时取固定子样本）
        D_target: 目标失真
        cfg: 参数

    Returns:
        DualSolution: (β̃*, rate_bits, 达到的驻点失真)
    """
    return _evaluate(model, data, D_target, cfg)[0]


def _evaluate(model: GeneratorModel, data, D_target: float,
              cfg: NerdConfig) -> Tuple[DualSolution, bool]:
    x = _as_array(data)
    rng = _rng(cfg.seed, EVAL_STREAM)
    if x.shape[0] > cfg.max_eval_rows:
        x = x[np.sort(rng.choice(x.shape[0], size=cfg.max_eval_rows, replace=False))]
    k = cfg.eval_batches * cfg.batch_size
    y = forward(model, rng.standard_normal((k, model.input_dim)))
    dist = distortion_matrix(x, y, SQUARED_ERROR)
    solved = solve_beta(D_target, dist, tol=cfg.tol, estimator="full_matrix")
    rate = dual_rate(solved.beta, D_target, dist, cfg.eps)
    return DualSolution(beta=solved.beta, rate_bits=rate, distortion=solved.distortion), solved.saturated


def _sweep_seed(seed: int, D: float) -> int:
    """每个失真点的种子只取决于 (seed, D)，与同批其他目标无关"""
    key = int.from_bytes(hashlib.sha256(float(D).hex().encode("ascii")).digest()[:4], "little")
    state = np.random.SeedSequence(int(seed), spawn_key=(SWEEP_STREAM, key)).generate_state(1, np.uint64)
    return int(state[0])


def _sweep_point(args) -> Tuple[float, Optional[Dict[str, Any]], Optional[GeneratorModel], str]:
    x, cfg, init_model, verbose = args
    try:
        result = train(x, cfg, init_model=init_model, verbose=verbose)
    except ToolkitError as e:
        return cfg.D_target, None, None, str(e)
    return cfg.D_target, result.to_dict(cfg), result.model, ""


def sweep(data, D_list: Sequence[float], cfg: NerdConfig, jobs: int = 1,
          verbose: bool = False) -> RdCurve:
    """
    对多个失真目标训练并评估，得到 provenance 为 nerd 的曲线

    Args:
        data: n×m 样本
        D_list: 失真目标（重复值只计算一次）
        cfg: 基础参数；每个点的 seed 由 (cfg.seed, D) 派生
        jobs: 并行进程数（>1 时不做热启动）
        verbose: 是否打印训练进度

    Returns:
        RdCurve: 按失真排序的曲线，失败点 rate_bits 为 NaN
    """
    if len(D_list) == 0:
        raise ShapeError("D_list 不能为空")
    if any(not float(D) > 0 for D in D_list):
        raise ShapeError(f"D_list 必须全为正: {list(D_list)}")
    x = _as_array(data)
    targets = sorted({float(D) for D in D_list}, reverse=True)
    configs = [cfg.with_target(D, _sweep_seed(cfg.seed, D)) for D in targets]
    print(f"🔄 NERD 扫描 {len(targets)} 个失真点（从大到小）")

    outcomes = []
    if jobs > 1:
        if cfg.warm_start:
            print("⚠️ 并行扫描不使用热启动，各点独立初始化")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_point, [(x, c, None, False) for c in configs]))
    else:
        previous = None
        for c in configs:
            outcome = _sweep_point((x, c, previous if cfg.warm_start else None, verbose))
            outcomes.append(outcome)
            if outcome[2] is not None:
                previous = outcome[2]

    digest = cfg.digest()
    curve = RdCurve("nerd")
    curve.metadata["points"] = []
    for D, summary, _, error in outcomes:
        if summary is None:
            print(f"❌ D={D:.6g} 训练失败: {error}")
            curve.add(D, float("nan"), n=x.shape[0], params_digest=digest, failed=True)
            curve.metadata["points"].append({"D_target": D, "error": error})
            continue
        curve.add(D, summary["rate_bits"], n=x.shape[0], params_digest=digest, beta=summary["beta"])
        curve.metadata["points"].append(summary)
        if verbose:
            print(f"📊 D={D:.6g}: R̂={summary['rate_bits']:.4f} bits")

    curve = curve.sorted()
    violations = curve.monotone_violations(MONOTONE_SLACK_BITS)
    curve.metadata["monotone_violations"] = violations
    if violations:
        print(f"⚠️ 曲线在 {len(violations)} 处随失真上升超过 {MONOTONE_SLACK_BITS} bits")
    return curve
