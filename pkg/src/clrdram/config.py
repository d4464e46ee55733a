"""Simulation configuration and its INI file schema.

Every key has a default, so an empty file is a valid configuration.
Sections and keys::

    [dram]        channels ranks bankgroups banks_per_group subarrays
                  rows_per_subarray columns column_bytes bus_mhz
                  address_map page_size
    [timing]      any baseline timing in ns (tRCD, tRAS, ..., tRFC),
                  plus per-mode cell overrides mc.tRCD, hp.tRAS, ...
    [controller]  policy cap row_timeout_ns queue_depth write_high write_low
    [clr]         enabled hp_fraction (percent) early_termination trefw_ms
    [cpu]         cores core_mhz width window mshrs llc_kb llc_ways
                  llc_latency warmup quota
    [workload]    traces (comma separated) kind records footprint_mb
                  bubbles write_ratio
    [power]       VDD IDD0 IDD2N IDD3N IDD4R IDD4W IDD5B chips
    [sim]         seed out_dir commands max_cycles

``clr.enabled = false`` simulates the conventional DDR4 baseline.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .addrmap import DEFAULT_MAP, parse_address_map
from .controller import SchedulerConfig
from .energy import PowerParams
from .timing import (
    MAX_CAPACITY_NS, REFRESH_WINDOW_MAX_MS, REFRESH_WINDOW_MIN_MS, DramTopology, TimingParams,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CpuConfig:
    cores: int = 1
    core_mhz: float = 4000.0
    width: int = 4
    window: int = 128
    mshrs: int = 8
    llc_kb: int = 8192
    llc_ways: int = 8
    llc_latency: int = 20
    warmup: int = 100_000
    quota: int | None = None

    def __post_init__(self):
        for name in ("cores", "width", "window", "mshrs", "llc_kb", "llc_ways"):
            if getattr(self, name) < 1:
                raise ConfigError(f"cpu.{name} must be >= 1")
        if self.core_mhz <= 0:
            raise ConfigError("cpu.core_mhz must be positive")
        if self.llc_latency < 0 or self.warmup < 0:
            raise ConfigError("cpu.llc_latency and cpu.warmup must be >= 0")
        if self.quota is not None and self.quota < 1:
            raise ConfigError("cpu.quota must be >= 1")


@dataclass(frozen=True)
class WorkloadConfig:
    traces: tuple[str, ...] = ()
    kind: str = "random"
    records: int = 20_000
    footprint_mb: float = 256.0
    bubbles: str = "poisson:4"
    write_ratio: float = 0.0

    def __post_init__(self):
        if self.kind not in ("random", "stream", "zipf", "mixed"):
            raise ConfigError(f"unknown workload kind {self.kind!r}")
        if self.records < 1:
            raise ConfigError("workload.records must be >= 1")
        if self.footprint_mb <= 0:
            raise ConfigError("workload.footprint_mb must be positive")
        if not 0.0 <= self.write_ratio <= 1.0:
            raise ConfigError("workload.write_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    topology: DramTopology = field(default_factory=DramTopology)
    address_map: str = DEFAULT_MAP
    page_size: int = 4096
    timing: TimingParams = field(default_factory=TimingParams)
    mc_overrides: dict = field(default_factory=dict)
    hp_overrides: dict = field(default_factory=dict)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    clr: bool = True
    hp_fraction: float = 0.0      # percent of rows in high-performance mode
    early_termination: bool = True
    trefw_ms: float = 64.0        # refresh window of high-performance rows
    cpu: CpuConfig = field(default_factory=CpuConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    power: PowerParams = field(default_factory=PowerParams)
    seed: int = 0
    out_dir: str | None = None
    commands: bool = False
    max_cycles: int | None = None  # memory cycles, abort guard

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.hp_fraction <= 100.0:
            raise ConfigError("hp_fraction is a percentage in [0, 100]")
        if not REFRESH_WINDOW_MIN_MS <= self.trefw_ms <= REFRESH_WINDOW_MAX_MS:
            raise ConfigError(f"trefw_ms must lie in [{REFRESH_WINDOW_MIN_MS:g}, "
                              f"{REFRESH_WINDOW_MAX_MS:g}]")
        if not self.clr and (self.hp_fraction or self.trefw_ms != REFRESH_WINDOW_MIN_MS):
            raise ConfigError("the baseline has no high-performance rows and a 64 ms window")
        if self.page_size < 64 or self.page_size & (self.page_size - 1):
            raise ConfigError("page_size must be a power of two >= 64")
        for name, ov in (("mc", self.mc_overrides), ("hp", self.hp_overrides)):
            bad = set(ov) - set(MAX_CAPACITY_NS)
            if bad:
                raise ConfigError(f"{name} overrides only accept {sorted(MAX_CAPACITY_NS)}")
        try:
            parse_address_map(self.address_map, self.topology, self.page_size)
        except ValueError as exc:
            raise ConfigError(f"address_map: {exc}") from None
        if self.max_cycles is not None and self.max_cycles < 1:
            raise ConfigError("max_cycles must be >= 1")

    @property
    def fraction(self) -> float:
        return self.hp_fraction / 100.0

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def amap(self):
        return parse_address_map(self.address_map, self.topology, self.page_size)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["workload"]["traces"] = list(self.workload.traces)
        return d


# -- INI parsing --------------------------------------------------------------

_DRAM_KEYS = {
    "channels": "channels", "ranks": "ranks_per_channel", "bankgroups": "bankgroups_per_rank",
    "banks_per_group": "banks_per_bankgroup", "subarrays": "subarrays_per_bank",
    "rows_per_subarray": "rows_per_subarray", "columns": "columns_per_row",
    "column_bytes": "bytes_per_column", "bus_mhz": "bus_mhz",
}


def _num(text: str, kind):
    try:
        if kind is bool:
            return _bool(text)
        if kind is int:
            return int(text, 0)
        return float(text)
    except ValueError:
        raise ConfigError(f"bad {kind.__name__} value {text!r}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _typed(cls, section: configparser.SectionProxy | dict, names: dict | None = None,
           prefix: str = "") -> dict:
    """Convert the keys of ``section`` into constructor kwargs of ``cls``."""
    fields_ = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in section.items():
        name = (names or {}).get(key, key)
        if name not in fields_:
            raise ConfigError(f"unknown key {prefix}{key}")
        default = fields_[name].default
        if isinstance(default, bool):
            out[name] = _num(raw, bool)
        elif isinstance(default, int) or name == "quota":
            out[name] = None if raw.strip().lower() == "none" else _num(raw, int)
        else:
            out[name] = _num(raw, float)
    return out


def parse_config(text: str) -> SimConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"dram", "timing", "controller", "clr", "cpu", "workload", "power", "sim"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    kw: dict = {}
    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}  # noqa: E731
    try:
        dram = sec("dram")
        extra = {k: dram.pop(k) for k in ("address_map", "page_size") if k in dram}
        kw["topology"] = DramTopology(**_typed(DramTopology, dram, _DRAM_KEYS, "dram."))
        if "address_map" in extra:
            kw["address_map"] = extra["address_map"]
        if "page_size" in extra:
            kw["page_size"] = _num(extra["page_size"], int)

        timing = sec("timing")
        per_mode = {"mc": {}, "hp": {}}
        for key in list(timing):
            if "." in key:
                mode, _, name = key.partition(".")
                if mode not in per_mode:
                    raise ConfigError(f"unknown key timing.{key}")
                per_mode[mode][name] = _num(timing.pop(key), float)
        kw["timing"] = TimingParams(**_typed(TimingParams, timing, prefix="timing."))
        kw["mc_overrides"] = per_mode["mc"]
        kw["hp_overrides"] = per_mode["hp"]

        ctrl = sec("controller")
        policy = ctrl.pop("policy", None)
        ctrl_kw = _typed(SchedulerConfig, ctrl, prefix="controller.")
        if policy is not None:
            ctrl_kw["policy"] = policy.strip()
        kw["scheduler"] = SchedulerConfig(**ctrl_kw)

        clr = sec("clr")
        names = {"enabled": "clr", "hp_fraction": "hp_fraction",
                 "early_termination": "early_termination", "trefw_ms": "trefw_ms"}
        for key, raw in clr.items():
            if key not in names:
                raise ConfigError(f"unknown key clr.{key}")
            kind = bool if key in ("enabled", "early_termination") else float
            kw[names[key]] = _num(raw, kind)

        kw["cpu"] = CpuConfig(**_typed(CpuConfig, sec("cpu"), prefix="cpu."))

        wl = sec("workload")
        wl_kw = {}
        if "traces" in wl:
            wl_kw["traces"] = tuple(t.strip() for t in wl.pop("traces").split(",") if t.strip())
        for key in ("kind", "bubbles"):
            if key in wl:
                wl_kw[key] = wl.pop(key).strip()
        wl_kw.update(_typed(WorkloadConfig, wl, prefix="workload."))
        kw["workload"] = WorkloadConfig(**wl_kw)

        kw["power"] = PowerParams(**_typed(PowerParams, sec("power"), prefix="power."))

        simsec = sec("sim")
        if "out_dir" in simsec:
            kw["out_dir"] = simsec.pop("out_dir").strip() or None
        for key, raw in simsec.items():
            if key == "seed":
                kw["seed"] = _num(raw, int)
            elif key == "commands":
                kw["commands"] = _num(raw, bool)
            elif key == "max_cycles":
                kw["max_cycles"] = None if raw.strip().lower() == "none" else _num(raw, int)
            else:
                raise ConfigError(f"unknown key sim.{key}")
        return SimConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read())
