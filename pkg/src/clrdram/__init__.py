"""Cycle-level DRAM simulator with per-row capacity/latency reconfiguration."""

from .addrmap import AddressError, AddressMap, DramCoord, default_map, parse_address_map
from .bank import BankState, CommandKind, DramCommand, RankState, can_issue, issue, min_cycle_for
from .clr import RowModeTable, iso_signals, reconfig_granularity
from .config import ConfigError, CpuConfig, SimConfig, WorkloadConfig, load_config, parse_config
from .controller import MemoryController, MemRequest, RequestKind, SchedulerConfig
from .cpu import LLC, Core, gmean, weighted_speedup
from .energy import EnergyLedger, EnergyModel, PowerParams
from .sim import (
    MemorySystem, Simulation, StatsReport, requests_from_trace, run, run_memory, sweep_fraction,
    sweep_refresh, write_outputs,
)
from .timing import DramTopology, RowMode, TimingParams, timing_for
from .workload import (
    TraceRecord, gen_mixed, gen_random, gen_stream, gen_zipf, parse_trace, plan_placement,
    read_trace, write_trace,
)

__version__ = "0.1.0"
