# 静态场景模块
from .topology import (
    ScenarioConfig, Topology, n_virtual_blocks, place_vehicles, build_topology,
    interferer_set, interferer_windows, sensing_neighbors, last_pm_window, run_stream,
    STREAM_PLACEMENT, STREAM_SPS, STREAM_AGENT,
)
