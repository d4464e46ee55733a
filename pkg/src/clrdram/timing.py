"""DRAM topology, timing parameter sets, and per-mode timing selection.

Timing values are kept in nanoseconds (refresh window in milliseconds,
refresh interval in microseconds) and converted to integer controller
cycles with :meth:`TimingParams.cycles`.  Conversion always rounds up so a
converted constraint is never shorter than the analog one.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

DEFAULT_BUS_MHZ = 1200.0
REFRESH_BINS = 8192

_TCK = 1000.0 / DEFAULT_BUS_MHZ


class RowMode(enum.IntEnum):
    MAX_CAPACITY = 0
    HIGH_PERFORMANCE = 1

    @property
    def short(self) -> str:
        return "MC" if self is RowMode.MAX_CAPACITY else "HP"

    @classmethod
    def from_short(cls, text: str) -> "RowMode":
        text = text.strip().upper()
        if text in ("MC", "MAX_CAPACITY"):
            return cls.MAX_CAPACITY
        if text in ("HP", "HIGH_PERFORMANCE"):
            return cls.HIGH_PERFORMANCE
        raise ValueError(f"unknown row mode {text!r}")


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class DramTopology:
    """Organization of one memory system.

    A column here is one data burst (``bytes_per_column`` bytes, a 64-byte
    cacheline by default), so ``columns_per_row * bytes_per_column`` is the
    row size seen by one bank across the rank.  Defaults describe one
    16 GiB DDR4 rank built from 16 Gb x8 chips.
    """

    channels: int = 1
    ranks_per_channel: int = 1
    bankgroups_per_rank: int = 4
    banks_per_bankgroup: int = 4
    subarrays_per_bank: int = 256
    rows_per_subarray: int = 512
    columns_per_row: int = 128
    bytes_per_column: int = 64
    bus_mhz: float = DEFAULT_BUS_MHZ

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name == "bus_mhz":
                continue
            value = getattr(self, f.name)
            if not isinstance(value, int) or not _is_pow2(value):
                raise ValueError(f"{f.name} must be a power of two >= 1, got {value!r}")
        if self.bus_mhz <= 0:
            raise ValueError("bus_mhz must be positive")

    @property
    def banks_per_rank(self) -> int:
        return self.bankgroups_per_rank * self.banks_per_bankgroup

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def row_bytes(self) -> int:
        return self.columns_per_row * self.bytes_per_column

    @property
    def total_banks(self) -> int:
        return self.channels * self.ranks_per_channel * self.banks_per_rank

    @property
    def total_rows(self) -> int:
        return self.total_banks * self.rows_per_bank

    @property
    def capacity_bytes(self) -> int:
        return self.total_rows * self.row_bytes

    @property
    def tck_ns(self) -> float:
        return 1000.0 / self.bus_mhz


def ns_to_cycles(ns: float, bus_mhz: float = DEFAULT_BUS_MHZ) -> int:
    """Round a duration up to whole bus cycles.

    The small tolerance keeps durations that are exact multiples of the
    clock period (such as ``16 * tCK``) from being bumped by float noise.
    """
    return max(0, math.ceil(ns * bus_mhz / 1000.0 - 1e-6))


class CycleTimings(NamedTuple):
    """Timing constraints in bus cycles, as consumed by the bank model."""

    tRCD: int
    tRAS: int
    tRP: int
    tWR: int
    tRFC: int
    tRRD_S: int
    tRRD_L: int
    tFAW: int
    tCCD_S: int
    tCCD_L: int
    tRTP: int
    tWTR_S: int
    tWTR_L: int
    tRTRS: int
    CL: int
    CWL: int
    tBL: int
    tREFW: int
    tREFI: int

    @property
    def tRC(self) -> int:
        return self.tRAS + self.tRP

    @property
    def rd_to_wr(self) -> int:
        return self.CL + self.tBL + 2 - self.CWL

    @property
    def wr_to_pre(self) -> int:
        return self.CWL + self.tBL + self.tWR


_NS_FIELDS = (
    "tRCD", "tRAS", "tRP", "tWR", "tRFC", "tRRD_S", "tRRD_L", "tFAW",
    "tCCD_S", "tCCD_L", "tRTP", "tWTR_S", "tWTR_L", "tRTRS", "CL", "CWL", "tBL",
)


@dataclass(frozen=True)
class TimingParams:
    """Named DRAM timing constraints.

    Defaults are the DDR4 baseline: the four cell-array parameters come
    from circuit simulation, the rest follow DDR4-2400 speed-bin values.
    """

    tRCD: float = 13.8
    tRAS: float = 39.4
    tRP: float = 15.5
    tWR: float = 12.5
    tRFC: float = 550.0  # 16 Gb DDR4 tRFC1
    tRRD_S: float = 3.3
    tRRD_L: float = 4.9
    tFAW: float = 21.0
    tCCD_S: float = 4 * _TCK
    tCCD_L: float = 5.0
    tRTP: float = 7.5
    tWTR_S: float = 2.5
    tWTR_L: float = 7.5
    tRTRS: float = 2 * _TCK
    CL: float = 16 * _TCK
    CWL: float = 12 * _TCK
    tBL: float = 4 * _TCK
    tREFW: float = 64.0  # ms
    tREFI: float = 64.0e3 / REFRESH_BINS  # us

    def __post_init__(self):
        for name in _NS_FIELDS + ("tREFW", "tREFI"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tRAS < self.tRCD:
            raise ValueError("tRAS must be >= tRCD")

    @property
    def tRC(self) -> float:
        return self.tRAS + self.tRP

    def replace(self, **changes) -> "TimingParams":
        return dataclasses.replace(self, **changes)

    def cycles(self, bus_mhz: float = DEFAULT_BUS_MHZ) -> CycleTimings:
        values = {name: ns_to_cycles(getattr(self, name), bus_mhz) for name in _NS_FIELDS}
        values["tREFW"] = ns_to_cycles(self.tREFW * 1e6, bus_mhz)
        values["tREFI"] = ns_to_cycles(self.tREFI * 1e3, bus_mhz)
        return CycleTimings(**values)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# Cell-array timings (ns) of the two row modes; tRP is shared by both
# modes because coupled precharge units serve every row.
MAX_CAPACITY_NS = {"tRCD": 13.2, "tRAS": 40.3, "tRP": 8.3, "tWR": 13.3}
HIGH_PERF_NS = {"tRCD": 5.4, "tRAS": 20.3, "tRP": 8.3, "tWR": 12.5}
HIGH_PERF_ET_NS = {"tRCD": 5.5, "tRAS": 14.1, "tRP": 8.3, "tWR": 8.1}

# Growth of high-performance tRCD/tRAS when the refresh window is
# stretched from 64 ms to 194 ms (early termination applied).
REFRESH_WINDOW_MIN_MS = 64.0
REFRESH_WINDOW_MAX_MS = 194.0
TRCD_GROWTH_NS = 3.24
TRAS_GROWTH_NS = 3.04


def hp_refresh_factor(base: TimingParams | None = None) -> float:
    """Fraction of the baseline tRFC left for a high-performance row.

    tRFC shrinks by the mean of the tRAS and tRP reductions of the
    early-terminated high-performance mode relative to the baseline.
    """
    base = base or TimingParams()
    ras_cut = 1.0 - HIGH_PERF_ET_NS["tRAS"] / base.tRAS
    rp_cut = 1.0 - HIGH_PERF_ET_NS["tRP"] / base.tRP
    return 1.0 - (ras_cut + rp_cut) / 2.0


def interpolated(trefw_ms: float) -> bool:
    """True when the timing at this refresh window is interpolated."""
    return REFRESH_WINDOW_MIN_MS < trefw_ms < REFRESH_WINDOW_MAX_MS


def timing_for(
    mode: RowMode,
    early_termination: bool = True,
    trefw_ms: float = 64.0,
    base: TimingParams | None = None,
    overrides: dict | None = None,
) -> TimingParams:
    """Timing parameter set for rows operating in ``mode``.

    ``overrides`` replaces the cell-array values of the selected mode
    (keys ``tRCD``, ``tRAS``, ``tRP``, ``tWR``).  Stretching the refresh
    window is only possible in high-performance mode; between the 64 ms
    and 194 ms anchors tRCD and tRAS grow linearly.
    """
    base = base or TimingParams()
    if not REFRESH_WINDOW_MIN_MS <= trefw_ms <= REFRESH_WINDOW_MAX_MS:
        raise ValueError(
            f"tREFW {trefw_ms} ms outside the characterized range "
            f"[{REFRESH_WINDOW_MIN_MS:g}, {REFRESH_WINDOW_MAX_MS:g}] ms"
        )
    if mode is RowMode.MAX_CAPACITY:
        if trefw_ms != REFRESH_WINDOW_MIN_MS:
            raise ValueError("max-capacity rows cannot extend tREFW beyond 64 ms")
        cell = dict(MAX_CAPACITY_NS)
        trfc = base.tRFC
    else:
        cell = dict(HIGH_PERF_ET_NS if early_termination else HIGH_PERF_NS)
        trfc = base.tRFC * hp_refresh_factor(base)
    if overrides:
        unknown = set(overrides) - set(cell)
        if unknown:
            raise ValueError(f"cannot override {sorted(unknown)} per mode")
        cell.update(overrides)
    if mode is RowMode.HIGH_PERFORMANCE and trefw_ms > REFRESH_WINDOW_MIN_MS:
        frac = (trefw_ms - REFRESH_WINDOW_MIN_MS) / (REFRESH_WINDOW_MAX_MS - REFRESH_WINDOW_MIN_MS)
        cell["tRCD"] += TRCD_GROWTH_NS * frac
        cell["tRAS"] += TRAS_GROWTH_NS * frac
    return base.replace(
        tRFC=trfc, tREFW=trefw_ms, tREFI=trefw_ms * 1e3 / REFRESH_BINS, **cell
    )
