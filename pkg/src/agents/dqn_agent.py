"""
============================================================
深度 Q 学习的编队队长 (PL) 智能体
============================================================

每个传输周期：
    1. 读上一周期 PL 的感知行，得到 idle 动作集合
    2. ε-greedy 选动作（贪心部分只在 idle 集合里取 Q 最大）
    3. 世界推进一个周期，PL 收到 ACK / NACK
    4. 奖励 r：ACK → 1.0，NACK → 0
    5. (a, o) 进入长度为 M 的历史，得到新状态
    6. (s, a, r, s') 存入经验池，采样训练一步
    7. 每 decay_interval_periods 个周期 ε ← max(ε_min, ε·decay)

没有目标网络，TD 目标和动作选择使用同一组参数。
============================================================
"""

import logging
import os
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Deque, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from config import settings
from src.agents.baseline import RandomSelectionAgent, idle_action_set, random_select
from src.agents.q_network import QApproximator
from src.errors import ConfigurationError, TrainingError
from src.sps_sim.world import ACK, NACK, feedback

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DrlHyperParams:
    """Q 网络与训练的超参数（默认值见 config/settings.py）"""

    learning_rate: float = settings.LEARNING_RATE
    gamma: float = settings.GAMMA
    epsilon_init: float = settings.EPSILON_INIT
    epsilon_min: float = settings.EPSILON_MIN
    epsilon_decay: float = settings.EPSILON_DECAY
    decay_interval_periods: int = settings.EPSILON_DECAY_INTERVAL
    batch_size: int = settings.BATCH_SIZE
    memory_size: int = settings.MEMORY_SIZE
    history_length: int = settings.HISTORY_LENGTH
    conv_channels: Tuple[int, int] = settings.CONV_CHANNELS
    conv_kernel: int = settings.CONV_KERNEL
    hidden_units: Tuple[int, int] = settings.HIDDEN_UNITS
    ack_reward: float = settings.ACK_REWARD
    grad_clip_norm: float = settings.GRAD_CLIP_NORM
    # TD 目标的 max 是否只在下一周期的 idle 集合里取
    masked_target: bool = False
    # 同一参数点的多次实验之间是否沿用网络参数
    persist_weights: bool = False

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "hidden_units", tuple(int(h) for h in self.hidden_units))
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ConfigurationError(f"学习率必须在 [0,1]: {self.learning_rate}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"γ 必须在 [0,1]: {self.gamma}")
        for name in ("epsilon_init", "epsilon_min", "epsilon_decay"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} 必须在 [0,1]: {value}")
        if self.epsilon_min > self.epsilon_init:
            raise ConfigurationError("epsilon_min 不能大于 epsilon_init")
        if self.decay_interval_periods < 1 or self.batch_size < 1 or self.memory_size < 1:
            raise ConfigurationError("decay_interval_periods / batch_size / memory_size 必须为正")
        if self.history_length < 1:
            raise ConfigurationError(f"历史长度必须为正: {self.history_length}")
        if not self.grad_clip_norm >= 0.0:
            raise ConfigurationError(f"梯度裁剪阈值不能为负: {self.grad_clip_norm}")

    @classmethod
    def from_dict(cls, data: Dict) -> "DrlHyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"未知的超参数: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["conv_channels"] = list(self.conv_channels)
        data["hidden_units"] = list(self.hidden_units)
        return data


class ActionObservationTuple(NamedTuple):
    action: int
    observation: str


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_idle: np.ndarray


class AgentState:
    """PL 最近 M 个 (动作, 反馈) 组成的状态"""

    def __init__(self, history_length: int = settings.HISTORY_LENGTH):
        self.history_length = history_length
        self.history: Deque[ActionObservationTuple] = deque(maxlen=history_length)

    def append(self, action: int, observation: str):
        self.history.append(ActionObservationTuple(int(action), observation))

    @property
    def is_full(self) -> bool:
        return len(self.history) == self.history_length

    def __len__(self):
        return len(self.history)


def encode_state(state: AgentState, n_r: int) -> np.ndarray:
    """
    状态编码：最旧的在前，每个元组展开为 (action/N_r, ACK→1.0 / NACK→0.0)

    历史不满 M 时，缺的最旧位置补 0。
    """
    vec = np.zeros(2 * state.history_length)
    offset = state.history_length - len(state.history)
    for i, item in enumerate(state.history):
        slot = 2 * (offset + i)
        vec[slot] = item.action / n_r
        vec[slot + 1] = 1.0 if item.observation == ACK else 0.0
    return vec


class ReplayMemory:
    """容量固定的经验池，满了先进先出，均匀有放回采样"""

    def __init__(self, capacity: int = settings.MEMORY_SIZE):
        self.capacity = capacity
        self.buffer: Deque[Transition] = deque(maxlen=capacity)

    def push(self, transition: Transition):
        self.buffer.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        if not self.buffer:
            raise TrainingError("经验池为空，无法采样")
        idx = rng.integers(0, len(self.buffer), size=batch_size)
        return [self.buffer[i] for i in idx]

    def __len__(self):
        return len(self.buffer)


# ============================================================
# 单步操作
# ============================================================

def reward(observation: str, ack_reward: float = settings.ACK_REWARD) -> float:
    return ack_reward if observation == ACK else 0.0


def select_action(q: QApproximator, state_vec: np.ndarray, idle_set: np.ndarray,
                  epsilon: float, rng: np.random.Generator) -> Optional[int]:
    """
    ε-greedy：概率 ε 在 idle 集合里均匀随机，否则取 idle 集合里 Q 最大的动作

    并列时取下标最小的。idle 集合为空返回 None。
    """
    if len(idle_set) == 0:
        return None
    if rng.random() < epsilon:
        return random_select(idle_set, rng)
    q_values = q.predict(state_vec)[0]
    return int(idle_set[int(np.argmax(q_values[idle_set]))])


def td_target(r_next: float, s_next: np.ndarray, q: QApproximator, gamma: float,
              next_idle: Optional[np.ndarray] = None) -> float:
    """v = r + γ·max_a Q(s', a)；给出 next_idle 且非空时只在其中取 max"""
    q_next = q.predict(s_next)[0]
    if next_idle is not None and len(next_idle) > 0:
        q_next = q_next[next_idle]
    return float(r_next + gamma * np.max(q_next))


def train_step(q: QApproximator, memory: ReplayMemory, hyper: DrlHyperParams,
               rng: np.random.Generator,
               period: Optional[int] = None) -> Tuple[QApproximator, float]:
    """
    采样 batch_size 条经验，对 Σ[v − Q(s,a)]² 做一步 SGD

    梯度全局范数超过 grad_clip_norm 时按比例缩小。α=0.01、batch=1、
    没有目标网络时，不裁剪的更新会让自举的 TD 目标发散。

    参数:
        period: 当前周期序号，只用于报错信息

    返回:
        (更新后的 q, 更新后在同一批数据上的损失)
    """
    batch = memory.sample(hyper.batch_size, rng)
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    targets = np.array([
        td_target(t.reward, t.next_state, q, hyper.gamma,
                  t.next_idle if hyper.masked_target else None)
        for t in batch
    ])
    loss, grads = q.loss_and_grads(states, actions, targets)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingError(
            f"训练损失非有限: period={period}, loss={loss}, "
            f"actions={actions.tolist()}, targets={targets.tolist()}")
    q.sgd_step(grads, hyper.learning_rate, clip_norm=hyper.grad_clip_norm)
    post = q.loss(states, actions, targets)
    if not np.isfinite(post):
        raise TrainingError(
            f"更新后损失非有限: period={period}, loss={post}, "
            f"actions={actions.tolist()}, targets={targets.tolist()}")
    return q, post


# ============================================================
# 智能体
# ============================================================

class DrlAgent:
    """
    DQN 策略，接口与 RandomSelectionAgent 相同：
        act(上一周期感知行) → VRB
        observe(反馈, 本周期感知行) → 训练损失
    """

    name = "drl"

    def __init__(self, n_r: int, hyper: DrlHyperParams, rng: np.random.Generator,
                 q: Optional[QApproximator] = None):
        self.n_r = n_r
        self.hyper = hyper
        self.rng = rng
        self.q = q if q is not None else QApproximator(
            hyper.history_length, n_r, hyper.conv_channels, hyper.conv_kernel,
            hyper.hidden_units, rng=rng)
        self.memory = ReplayMemory(hyper.memory_size)
        self.state = AgentState(hyper.history_length)
        self.epsilon = hyper.epsilon_init
        self.last_action: Optional[int] = None
        self.periods = 0
        self.saturation_events = 0

        self._state_vec: Optional[np.ndarray] = None
        self.losses: List[float] = []
        self.nacks: List[int] = []
        self.epsilons: List[float] = []

    def fallback_action(self) -> int:
        self.saturation_events += 1
        if self.last_action is None:
            return int(self.rng.integers(self.n_r))
        return self.last_action

    def act(self, sensing_row_prev: np.ndarray) -> int:
        self._state_vec = encode_state(self.state, self.n_r)
        idle = idle_action_set(sensing_row_prev)
        action = select_action(self.q, self._state_vec, idle, self.epsilon, self.rng)
        if action is None:
            action = self.fallback_action()
        self.last_action = action
        return action

    def observe(self, observation: str, sensing_row: np.ndarray) -> float:
        if self._state_vec is None or self.last_action is None:
            raise RuntimeError("observe 之前必须先调用 act")
        r = reward(observation, self.hyper.ack_reward)
        self.state.append(self.last_action, observation)
        next_vec = encode_state(self.state, self.n_r)
        self.memory.push(Transition(self._state_vec, self.last_action, r, next_vec,
                                    idle_action_set(sensing_row)))
        self.periods += 1
        _, loss = train_step(self.q, self.memory, self.hyper, self.rng, period=self.periods)

        self.losses.append(loss)
        self.nacks.append(1 if observation == NACK else 0)
        self.epsilons.append(self.epsilon)
        if self.periods % self.hyper.decay_interval_periods == 0:
            new_eps = max(self.hyper.epsilon_min, self.epsilon * self.hyper.epsilon_decay)
            logger.debug(f"第 {self.periods} 周期 ε: {self.epsilon:.4f} → {new_eps:.4f}")
            self.epsilon = new_eps
        return loss

    def training_curve(self, window: int = settings.CURVE_WINDOW) -> pd.DataFrame:
        """逐周期的 (period, loss, 滚动碰撞率, epsilon)"""
        df = pd.DataFrame({
            "period": np.arange(1, len(self.losses) + 1),
            "loss": self.losses,
            "rolling_collision": pd.Series(self.nacks, dtype=float).rolling(window, min_periods=1).mean(),
            "epsilon": self.epsilons,
        })
        return df


def append_training_curve(curve: pd.DataFrame, path: str, run_index: int):
    """训练曲线追加写入 CSV，首次写入时带表头"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    out = curve.assign(run=run_index)
    out.to_csv(path, mode="a", header=not os.path.exists(path), index=False)


def drl_episode_step(world, agent, prev_view):
    """
    在线推进一个周期：agent 依据上一周期感知选 VRB → 世界推进 → 反馈 → agent 学习

    随机基线也走同一流程（它的 observe 不做任何事）。

    返回:
        (PeriodOutcome, 本周期的 SensingView)
    """
    action = agent.act(prev_view.pl)
    world.set_pl_vrb(action)
    outcome, view = world.step_period()
    agent.observe(feedback(outcome), view.pl)
    return outcome, view


def make_agent(algorithm: str, n_r: int, hyper: DrlHyperParams, rng: np.random.Generator,
               q: Optional[QApproximator] = None):
    if algorithm == "random":
        return RandomSelectionAgent(n_r, rng)
    if algorithm == "drl":
        return DrlAgent(n_r, hyper, rng, q=q)
    raise ConfigurationError(f"未知算法: {algorithm}")
