# SPS 广播世界模块
from .world import (
    ACK, NACK, LAST_PM, SpsVehicleState, SensingMatrix, PeriodOutcome, SpsWorld, SensingView,
    init_world, sps_reselect, closest_idle_vrb, feedback,
)
from .sensing_io import record_sensing, export_sensing_csv, load_sensing_csv, export_run
