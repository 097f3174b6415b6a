"""Simulation of a planar single leg driven by series elastic actuators."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    HopStats,
    InsufficientEvents,
    MetricsReport,
    compute_metrics,
    detect_touchdowns,
    dominant_frequency,
    hop_periodicity,
    integrated_current,
    peak_current,
    settling_time,
)
from .config import ConfigError, dump_config, load_config, loads_config  # noqa: E402
from .control import ControllerConfig, FeedbackSource, PdGains, pd_command  # noqa: E402
from .dynamics import ContactParams, RobotModel, WorldState  # noqa: E402
from .experiments import (  # noqa: E402
    CalibrationRecord,
    ExperimentConfig,
    ExperimentError,
    Protocol,
    run_drop_test,
    run_natural_frequency,
    run_spring_calibration,
    run_sweep,
)
from .io import read_trace, write_trace  # noqa: E402
from .sea import SeaParams, SeaState, SimulationFault, SpringMode, spring_torque  # noqa: E402
from .sim import simulate  # noqa: E402
from .trace import COLUMNS, Trace  # noqa: E402
