# ============================================================
# 编队通信资源分配仿真 - 全局配置
# ============================================================
# 所有默认值都可以被 JSON 配置文件或命令行参数覆盖，
# 这里只放"出厂设置"。

import os

# ----- 道路与编队 -----
# 道路长度（km），编队队长放在道路中点
ROAD_LENGTH_KM = 4.0
# 通信/感知距离 R（km）
TRANSMISSION_RANGE_KM = 0.4
# 编队长度 d（km），最后一个队员在队长之后 d 处
PLATOON_LENGTH_KM = 0.1

# ----- 资源池 -----
# 传输周期 T_tr（ms），每个周期发一次 BSM
PERIOD_MS = 50.0
# 子信道数 n_r
SUBCHANNELS = 2
# 时隙长度 t_s（ms）
SLOT_MS = 0.5

# ----- SPS 半持续调度 -----
# 一个半持续周期包含的传输周期数 T_s
SPS_PERIODS = 10
# 资源保持概率 p
KEEP_PROB = 0.9

# ----- 仿真规模 -----
# 单次仿真长度（传输周期数）
PERIODS_PER_RUN = 10000
# 每个参数点的独立实验次数
RUNS_PER_POINT = 50
# 单点仿真的默认车辆密度 ρ（辆/km）
DEFAULT_DENSITY = 100.0
# 扫描网格
DENSITIES = [20, 40, 60, 80, 100, 120, 140, 160, 180, 200]
KEEP_PROBS = [0.9, 0.7, 0.5]
# 主随机种子
DEFAULT_SEED = 20210601

# ----- DRL 超参数 -----
# 状态里保留的历史周期数 M（状态维度 = 2M）
HISTORY_LENGTH = 16
LEARNING_RATE = 0.01
GAMMA = 0.9
EPSILON_INIT = 1.0
EPSILON_MIN = 0.0
EPSILON_DECAY = 0.5
# 每隔多少个周期衰减一次 epsilon
EPSILON_DECAY_INTERVAL = 500
BATCH_SIZE = 1
MEMORY_SIZE = 1000
# 梯度全局 L2 范数的裁剪阈值（0 表示不裁剪）
GRAD_CLIP_NORM = 1.0
# 网络结构：两层一维卷积 + 三层全连接
CONV_CHANNELS = (8, 16)
CONV_KERNEL = 3
HIDDEN_UNITS = (128, 64)
# ACK 奖励值（NACK 为 0）
ACK_REWARD = 1.0
# 训练曲线里滚动碰撞率的窗口
CURVE_WINDOW = 500

# ----- 数据存储路径 -----
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(PROJECT_ROOT, "data")
SENSING_DIR = os.path.join(DATA_DIR, "sensing")
RESULTS_DIR = os.path.join(DATA_DIR, "results")
MODEL_DIR = os.path.join(DATA_DIR, "models")
LOG_DIR = os.path.join(PROJECT_ROOT, "logs")
