# PL 资源选择策略模块
from .baseline import idle_action_set, random_select, RandomSelectionAgent
from .q_network import QApproximator
from .dqn_agent import (
    DrlHyperParams, ActionObservationTuple, AgentState, ReplayMemory, Transition, DrlAgent,
    encode_state, select_action, reward, td_target, train_step, drl_episode_step,
    append_training_curve, make_agent,
)
from .offline import replay_on_dataset
