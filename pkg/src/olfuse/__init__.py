"""Digit-serial fused-layer CNN accelerator: arithmetic, planning, cost model, simulator."""

from .cost import (CycleParams, CycleReport, Design, TrafficModel, cycles_ds1, cycles_ds2,
                   dram_traffic, num_ops, operational_intensity, performance)
from .digits import DigitStream, OnlineDelays, ParallelOperand, SignedDigit, decode, encode_fixed
from .errors import (ContractError, NetworkError, OlfuseError, PlanningError, RangeError,
                     SimulationError)
from .kernels import BACKEND
from .network import LayerKind, LayerSpec, NetworkSpec, bundled_network, load_network, parse_network
from .planner import FusionPlan, plan_network, stride_candidates, tile_sizes, validate_plan
from .simulator import FeatureMap, SimReport, end_stats, energy_proxy, oracle_forward, run_fused
from .sop import EndStatus, ppu_compute

__version__ = "0.1.0"
