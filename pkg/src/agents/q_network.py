"""
============================================================
五层 Q 网络（numpy 手写前向 / 反向传播）
============================================================

结构：
    输入 2M 维状态 → 重排为 2 通道 × M 个时间步（动作通道、反馈通道）
    → Conv1d(2→c1, k) → ReLU → Conv1d(c1→c2, k) → ReLU
    → 展平 → FC(h1) → ReLU → FC(h2) → ReLU → FC(N_r)

卷积都是 valid 卷积。参数按 [-1/√fan_in, 1/√fan_in] 均匀初始化。
训练只通过被选动作的输出 Q(s, a) 回传梯度，TD 目标视为常数。
梯度可以按全局范数裁剪，单步参数变化不超过 α·clip。
============================================================
"""

import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import ConfigurationError

logger = logging.getLogger(__name__)


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return np.where(x > 0, 1.0, 0.0)


def conv1d_forward(x, W, b):
    """x: (B, C, L)  W: (F, C, K)  →  (B, F, L−K+1)"""
    windows = sliding_window_view(x, W.shape[2], axis=2)        # (B, C, L', K)
    return np.einsum("bclk,fck->bfl", windows, W) + b[None, :, None], windows


def conv1d_backward(dout, windows, W, in_length):
    """返回 (dx, dW, db)"""
    dW = np.einsum("bfl,bclk->fck", dout, windows)
    db = dout.sum(axis=(0, 2))
    B, _, out_length = dout.shape
    dx = np.zeros((B, W.shape[1], in_length))
    for k in range(W.shape[2]):
        dx[:, :, k:k + out_length] += np.einsum("bfl,fc->bcl", dout, W[:, :, k])
    return dx, dW, db


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


class QApproximator:
    """
    Q(s, ·; θ) 的函数近似器

    参数:
        history_length: M，状态向量长度为 2M
        n_actions: 输出维度 N_r
        conv_channels: 两层卷积的通道数
        kernel: 卷积核大小
        hidden_units: 前两层全连接的宽度
        rng: 初始化用的随机数流
    """

    PARAM_NAMES = ("conv1_W", "conv1_b", "conv2_W", "conv2_b",
                   "fc1_W", "fc1_b", "fc2_W", "fc2_b", "fc3_W", "fc3_b")

    def __init__(self, history_length: int, n_actions: int,
                 conv_channels: Sequence[int] = (8, 16), kernel: int = 3,
                 hidden_units: Sequence[int] = (128, 64),
                 rng: np.random.Generator = None):
        if len(conv_channels) != 2 or len(hidden_units) != 2:
            raise ConfigurationError("网络固定为两层卷积 + 三层全连接")
        self.conv2_length = history_length - 2 * (kernel - 1)
        if self.conv2_length < 1:
            raise ConfigurationError(
                f"历史长度 {history_length} 太短，放不下两层大小为 {kernel} 的卷积核")
        self.history_length = int(history_length)
        self.n_actions = int(n_actions)
        self.conv_channels = tuple(int(c) for c in conv_channels)
        self.kernel = int(kernel)
        self.hidden_units = tuple(int(h) for h in hidden_units)

        rng = rng if rng is not None else np.random.default_rng()
        c1, c2 = self.conv_channels
        h1, h2 = self.hidden_units
        flat = c2 * self.conv2_length
        shapes = [
            ((c1, 2, kernel), 2 * kernel), ((c1,), 2 * kernel),
            ((c2, c1, kernel), c1 * kernel), ((c2,), c1 * kernel),
            ((h1, flat), flat), ((h1,), flat),
            ((h2, h1), h1), ((h2,), h1),
            ((n_actions, h2), h2), ((n_actions,), h2),
        ]
        self.params: List[np.ndarray] = []
        for shape, fan_in in shapes:
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=shape))

    # ------------------------------------------------------------
    # 前向 / 反向
    # ------------------------------------------------------------

    def _reshape_input(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != 2 * self.history_length:
            raise ValueError(f"状态维度应为 {2 * self.history_length}: {states.shape}")
        # 交错的 (action, observation) 对 → 2 通道
        return states.reshape(states.shape[0], self.history_length, 2).transpose(0, 2, 1)

    def forward(self, states: np.ndarray) -> Tuple[np.ndarray, Dict]:
        c1W, c1b, c2W, c2b, f1W, f1b, f2W, f2b, f3W, f3b = self.params
        x = self._reshape_input(states)
        z1, win1 = conv1d_forward(x, c1W, c1b)
        a1 = relu(z1)
        z2, win2 = conv1d_forward(a1, c2W, c2b)
        a2 = relu(z2)
        flat = a2.reshape(a2.shape[0], -1)
        z3 = flat @ f1W.T + f1b
        a3 = relu(z3)
        z4 = a3 @ f2W.T + f2b
        a4 = relu(z4)
        q = a4 @ f3W.T + f3b
        cache = {"x": x, "win1": win1, "z1": z1, "a1": a1, "win2": win2, "z2": z2,
                 "flat": flat, "z3": z3, "a3": a3, "z4": z4, "a4": a4}
        return q, cache

    def predict(self, states: np.ndarray) -> np.ndarray:
        """返回 (B, N_r) 的 Q 值"""
        q, _ = self.forward(states)
        return q

    def backward(self, dq: np.ndarray, cache: Dict) -> List[np.ndarray]:
        """给定 ∂L/∂Q（形状 (B, N_r)），返回与 params 对齐的梯度"""
        c1W, c1b, c2W, c2b, f1W, f1b, f2W, f2b, f3W, f3b = self.params
        d_f3W = dq.T @ cache["a4"]
        d_f3b = dq.sum(axis=0)
        dz4 = (dq @ f3W) * relu_grad(cache["z4"])
        d_f2W = dz4.T @ cache["a3"]
        d_f2b = dz4.sum(axis=0)
        dz3 = (dz4 @ f2W) * relu_grad(cache["z3"])
        d_f1W = dz3.T @ cache["flat"]
        d_f1b = dz3.sum(axis=0)
        d_flat = dz3 @ f1W
        dz2 = d_flat.reshape(cache["z2"].shape) * relu_grad(cache["z2"])
        da1, d_c2W, d_c2b = conv1d_backward(dz2, cache["win2"], c2W, cache["a1"].shape[2])
        dz1 = da1 * relu_grad(cache["z1"])
        _, d_c1W, d_c1b = conv1d_backward(dz1, cache["win1"], c1W, cache["x"].shape[2])
        return [d_c1W, d_c1b, d_c2W, d_c2b, d_f1W, d_f1b, d_f2W, d_f2b, d_f3W, d_f3b]

    def loss(self, states, actions, targets) -> float:
        """Σ_batch [v − Q(s, a)]²"""
        q = self.predict(states)
        idx = np.arange(q.shape[0])
        err = np.asarray(targets, dtype=float) - q[idx, np.asarray(actions)]
        return float(np.sum(err ** 2))

    def loss_and_grads(self, states, actions, targets) -> Tuple[float, List[np.ndarray]]:
        q, cache = self.forward(states)
        idx = np.arange(q.shape[0])
        actions = np.asarray(actions)
        err = np.asarray(targets, dtype=float) - q[idx, actions]
        dq = np.zeros_like(q)
        dq[idx, actions] = -2.0 * err
        return float(np.sum(err ** 2)), self.backward(dq, cache)

    def sgd_step(self, grads: List[np.ndarray], learning_rate: float,
                 clip_norm: Optional[float] = None) -> float:
        """
        一步 SGD，可选按全局 L2 范数裁剪梯度

        返回:
            裁剪前的梯度范数
        """
        norm = global_norm(grads)
        scale = 1.0
        if clip_norm and norm > clip_norm:
            scale = clip_norm / norm
        for p, g in zip(self.params, grads):
            p -= learning_rate * scale * g
        return norm

    # ------------------------------------------------------------
    # 保存 / 读取
    # ------------------------------------------------------------

    def architecture(self) -> Dict:
        return {
            "history_length": self.history_length,
            "n_actions": self.n_actions,
            "conv_channels": list(self.conv_channels),
            "kernel": self.kernel,
            "hidden_units": list(self.hidden_units),
            "param_shapes": {name: list(p.shape) for name, p in zip(self.PARAM_NAMES, self.params)},
        }

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def save(self, path: str, hyper: Dict = None):
        """参数按层顺序写成小端 float64 二进制，另写一个 .json 说明文件"""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.flat_parameters().astype("<f8").tofile(path)
        sidecar = {"architecture": self.architecture(), "hyper_params": hyper or {}}
        with open(path + ".json", "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2, ensure_ascii=False)
        logger.info(f"  保存模型: {path}")

    @classmethod
    def load(cls, path: str) -> "QApproximator":
        with open(path + ".json", "r", encoding="utf-8") as f:
            arch = json.load(f)["architecture"]
        model = cls(arch["history_length"], arch["n_actions"], arch["conv_channels"],
                    arch["kernel"], arch["hidden_units"], rng=np.random.default_rng(0))
        flat = np.fromfile(path, dtype="<f8")
        expected = sum(p.size for p in model.params)
        if flat.size != expected:
            raise ConfigurationError(f"模型文件大小不匹配: {flat.size} != {expected}")
        offset = 0
        for i, p in enumerate(model.params):
            model.params[i] = flat[offset:offset + p.size].reshape(p.shape).astype(float)
            offset += p.size
        return model
