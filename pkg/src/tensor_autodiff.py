#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
张量与反向自动微分模块
为全连接生成器 G_θ: Z -> Y 的训练提供最小的稠密张量运算、计算带（Tape）、
SGD/Adam 优化器。所有训练计算均为 float64。
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, NonFiniteGradientError, NumericalError, ShapeError


ACTIVATIONS = ("relu", "leaky_relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")
LEAKY_SLOPE = 0.2


class Tensor:
    """带计算带索引的稠密张量（行主序 float64）"""

    def __init__(self, data, tape: Optional["Tape"] = None, index: Optional[int] = None,
                 requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.tape = tape
        self.index = index
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    op: str
    parents: Tuple[int, ...]
    vjp: Optional[Callable[[np.ndarray], Tuple[np.ndarray, ...]]]
    requires_grad: bool


class Tape:
    """按拓扑顺序记录原语运算的计算带"""

    def __init__(self):
        self.nodes: List[_Node] = []
        self.parameter_indices: List[int] = []
        self.parameter_shapes: List[Tuple[int, ...]] = []

    def _record(self, op: str, data: np.ndarray, parents: Sequence[Tensor],
                vjp: Optional[Callable] = None) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"原语 {op} 产生了非有限值")
        requires_grad = any(p.requires_grad for p in parents)
        self.nodes.append(_Node(op, tuple(p.index for p in parents), vjp, requires_grad))
        return Tensor(data, self, len(self.nodes) - 1, requires_grad)

    def parameter(self, value: np.ndarray) -> Tensor:
        """登记一个需要梯度的叶子（模型参数）"""
        tensor = self._record("parameter", np.array(value, dtype=np.float64), ())
        tensor.requires_grad = True
        self.nodes[tensor.index].requires_grad = True
        self.parameter_indices.append(tensor.index)
        self.parameter_shapes.append(tensor.shape)
        return tensor

    def constant(self, value: np.ndarray) -> Tensor:
        """登记一个不需要梯度的叶子（数据、噪声）"""
        return self._record("constant", np.array(value, dtype=np.float64), ())


def _tape_of(*tensors: Tensor) -> Tape:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    raise ShapeError("运算的输入不在任何计算带上")


# ------------------------------------------------------------------
# 原语
# ------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul 维度不匹配: {a.shape} @ {b.shape}")
    a_data, b_data = a.data, b.data

    def vjp(g):
        return g @ b_data.T, a_data.T @ g

    return _tape_of(a, b)._record("matmul", a_data @ b_data, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add 维度不匹配: {a.shape} + {b.shape}")
    return _tape_of(a, b)._record("add", a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """逐行加偏置；唯一支持的广播形式"""
    if a.data.ndim != 2 or bias.shape != (a.shape[1],):
        raise ShapeError(f"add_bias 维度不匹配: {a.shape} + {bias.shape}")
    return _tape_of(a, bias)._record("add_bias", a.data + bias.data, (a, bias),
                                     lambda g: (g, g.sum(axis=0)))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _tape_of(a)._record("scale", a.data * factor, (a,), lambda g: (g * factor,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _tape_of(a)._record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericalError("log 的输入必须为正")
    a_data = a.data
    return _tape_of(a)._record("log", np.log(a_data), (a,), lambda g: (g / a_data,))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)
    return _tape_of(a)._record("relu", a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return _tape_of(a)._record("leaky_relu", a.data * factor, (a,), lambda g: (g * factor,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _tape_of(a)._record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _tape_of(a)._record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _tape_of(a)._record("sum", np.array(a.data.sum()), (a,),
                               lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape, size = a.shape, a.data.size
    return _tape_of(a)._record("mean", np.array(a.data.mean()), (a,),
                               lambda g: (np.full(shape, float(g) / size),))


def pairwise_sq_dist(x: Tensor, y: Tensor) -> Tensor:
    """D[i, j] = ||x_i - y_j||²"""
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"pairwise_sq_dist 维度不匹配: {x.shape} vs {y.shape}")
    x_data, y_data = x.data, y.data
    out = (np.sum(x_data ** 2, axis=1)[:, None] + np.sum(y_data ** 2, axis=1)[None, :]
           - 2.0 * (x_data @ y_data.T))
    np.maximum(out, 0.0, out=out)

    def vjp(g):
        gx = 2.0 * (x_data * g.sum(axis=1)[:, None] - g @ y_data)
        gy = 2.0 * (y_data * g.sum(axis=0)[:, None] - g.T @ x_data)
        return gx, gy

    return _tape_of(x, y)._record("pairwise_sq_dist", out, (x, y), vjp)


def log_mean_exp_eps(a: Tensor, eps: float = 0.0) -> Tensor:
    """逐行计算 log((1/k)·Σ_j exp(a_ij) + eps)，最大值平移避免下溢"""
    if a.data.ndim != 2:
        raise ShapeError(f"log_mean_exp_eps 需要二维输入: {a.shape}")
    if eps < 0:
        raise ShapeError("eps 必须非负")
    a_data = a.data
    k = a_data.shape[1]
    row_max = a_data.max(axis=1)
    log_mean = row_max + np.log(np.exp(a_data - row_max[:, None]).sum(axis=1)) - np.log(k)
    out = np.logaddexp(log_mean, np.log(eps)) if eps > 0 else log_mean

    def vjp(g):
        weights = np.exp(a_data - np.log(k) - out[:, None])
        return (g[:, None] * weights,)

    return _tape_of(a)._record("log_mean_exp_eps", out, (a,), vjp)


def backward(tape: Tape, loss: Tensor) -> List[np.ndarray]:
    """
    反向传播

    Args:
        tape: 记录了前向运算的计算带
        loss: 标量损失节点

    Returns:
        List[np.ndarray]: 按登记顺序排列的每个参数的梯度
    """
    if loss.tape is not tape or loss.index is None:
        raise ShapeError("loss 不属于该计算带")
    if loss.data.size != 1:
        raise ShapeError(f"loss 必须是标量，实际形状 {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss.data)}
    for index in range(loss.index, -1, -1):
        node = tape.nodes[index]
        g = grads.get(index)
        if g is None or node.vjp is None or not node.requires_grad:
            continue
        for parent, parent_grad in zip(node.parents, node.vjp(g)):
            if not tape.nodes[parent].requires_grad:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + parent_grad
            else:
                grads[parent] = np.array(parent_grad, dtype=np.float64)

    result = []
    for index, shape in zip(tape.parameter_indices, tape.parameter_shapes):
        g = grads.get(index)
        result.append(np.zeros(shape) if g is None else g)
    return result


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return out


# ------------------------------------------------------------------
# 生成器
# ------------------------------------------------------------------

@dataclass
class GeneratorModel:
    """
    全连接生成器 G_θ: R^{m_z} -> R^m

    weights[i] 形状为 (fan_in, fan_out)，biases[i] 形状为 (fan_out,)
    """

    input_dim: int
    output_dim: int
    hidden: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "leaky_relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"不支持的激活函数: {self.activation}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ShapeError(f"不支持的输出激活: {self.output_activation}")
        dims = self.layer_dims()
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("层数与 hidden 描述不一致")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ShapeError(f"第 {i} 层参数形状错误: W{w.shape}, b{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError(f"第 {i} 层参数含非有限值")

    def layer_dims(self) -> List[int]:
        return [self.input_dim] + list(self.hidden) + [self.output_dim]

    def parameters(self) -> List[np.ndarray]:
        """按 W0, b0, W1, b1, ... 的顺序返回参数"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_parameters(self, params: Sequence[np.ndarray]) -> "GeneratorModel":
        """用新参数构造同结构模型（原模型不变）"""
        params = list(params)
        if len(params) != 2 * len(self.weights):
            raise ShapeError("参数个数与模型结构不一致")
        return GeneratorModel(
            input_dim=self.input_dim,
            output_dim=self.output_dim,
            hidden=list(self.hidden),
            weights=[np.array(p, dtype=np.float64) for p in params[0::2]],
            biases=[np.array(p, dtype=np.float64) for p in params[1::2]],
            activation=self.activation,
            output_activation=self.output_activation,
        )

    def copy(self) -> "GeneratorModel":
        return self.with_parameters(self.parameters())

    def descriptor(self) -> Dict[str, object]:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "output_activation": self.output_activation,
        }

    def trace(self, tape: Tape, z: Tensor) -> Tuple[Tensor, List[Tensor]]:
        """在计算带上执行前向，返回输出与参数张量"""
        if z.data.ndim != 2 or z.shape[1] != self.input_dim:
            raise ShapeError(f"z 的列数应为 {self.input_dim}，实际 {z.shape}")
        params = [tape.parameter(p) for p in self.parameters()]
        h = z
        n_layers = len(self.weights)
        for i in range(n_layers):
            h = add_bias(matmul(h, params[2 * i]), params[2 * i + 1])
            if i < n_layers - 1:
                h = _HIDDEN_OPS[self.activation](h)
            elif self.output_activation == "sigmoid":
                h = sigmoid(h)
        return h, params


_HIDDEN_OPS = {"relu": relu, "leaky_relu": leaky_relu, "tanh": tanh}


def init_generator(input_dim: int, output_dim: int, hidden: Sequence[int],
                   rng: np.random.Generator, activation: str = "leaky_relu",
                   output_activation: str = "identity") -> GeneratorModel:
    """
    按 uniform(-a, a), a = sqrt(6/(fan_in+fan_out)) 初始化权重，偏置置零

    Args:
        input_dim: 噪声维度 m_z
        output_dim: 数据维度 m
        hidden: 隐藏层宽度列表
        rng: 随机数发生器
        activation: 隐藏层激活
        output_activation: 输出层激活

    Returns:
        GeneratorModel: 初始化后的模型
    """
    dims = [int(input_dim)] + [int(h) for h in hidden] + [int(output_dim)]
    if any(d <= 0 for d in dims):
        raise ShapeError(f"层宽必须为正: {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return GeneratorModel(dims[0], dims[-1], list(dims[1:-1]), weights, biases,
                          activation, output_activation)


def forward(model: GeneratorModel, z: np.ndarray) -> np.ndarray:
    """
    推理前向 G_θ(z)，逐行计算；只读访问模型

    Args:
        model: 生成器
        z: B×m_z 噪声矩阵

    Returns:
        np.ndarray: B×m 输出
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.input_dim:
        raise ShapeError(f"z 的列数应为 {model.input_dim}，实际 {z.shape}")
    h = z
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < n_layers - 1:
            if model.activation == "relu":
                h = np.maximum(h, 0.0)
            elif model.activation == "leaky_relu":
                h = np.where(h > 0, h, LEAKY_SLOPE * h)
            else:
                h = np.tanh(h)
        elif model.output_activation == "sigmoid":
            h = _sigmoid(h)
    return h


# ------------------------------------------------------------------
# 优化器
# ------------------------------------------------------------------

def _check_gradients(model: GeneratorModel, grads: Sequence[np.ndarray]):
    params = model.parameters()
    if len(grads) != len(params):
        raise ShapeError(f"梯度个数 {len(grads)} 与参数个数 {len(params)} 不一致")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(g) != p.shape:
            raise ShapeError(f"参数 #{i} 形状 {p.shape} 与梯度形状 {np.shape(g)} 不一致")
        bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
        if bad:
            raise NonFiniteGradientError(i, bad)


class SGD:
    """θ ← θ − η·∇θ"""

    def __init__(self, learning_rate: float):
        self.learning_rate = float(learning_rate)

    def step(self, model: GeneratorModel, grads: Sequence[np.ndarray]) -> GeneratorModel:
        _check_gradients(model, grads)
        return model.with_parameters(
            [p - self.learning_rate * g for p, g in zip(model.parameters(), grads)])


class Adam:
    """Adam 优化器；一阶/二阶矩保存在优化器状态中"""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def step(self, model: GeneratorModel, grads: Sequence[np.ndarray]) -> GeneratorModel:
        _check_gradients(model, grads)
        params = model.parameters()
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        updated = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            updated.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        return model.with_parameters(updated)


def make_optimizer(name: str, learning_rate: float):
    if name == "adam":
        return Adam(learning_rate)
    if name == "sgd":
        return SGD(learning_rate)
    raise ConfigError(f"未知优化器: {name}")
