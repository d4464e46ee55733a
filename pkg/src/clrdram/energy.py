"""Current-based DRAM energy accounting over a command log.

Energies are in joules.  Currents are per chip in mA, times in ns, so
``mA * V * ns`` is a picojoule; :data:`PJ` converts.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields

from .addrmap import DramCoord
from .bank import CommandKind, DramCommand
from .timing import RowMode, TimingParams

PJ = 1e-12
CATEGORIES = ("act_pre_energy", "read_energy", "write_energy", "refresh_energy",
              "background_energy")


@dataclass(frozen=True)
class PowerParams:
    VDD: float = 1.2
    IDD0: float = 60.0
    IDD2N: float = 34.0
    IDD3N: float = 46.0
    IDD4R: float = 160.0
    IDD4W: float = 150.0
    IDD5B: float = 250.0
    chips: int = 8

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if not self.IDD0 > self.IDD3N > self.IDD2N:
            raise ValueError("expected IDD0 > IDD3N > IDD2N")


class LogOrderError(ValueError):
    pass


@dataclass
class EnergyLedger:
    act_pre_energy: float = 0.0
    read_energy: float = 0.0
    write_energy: float = 0.0
    refresh_energy: float = 0.0
    background_energy: float = 0.0
    elapsed: float = 0.0
    # replay state
    cycle: int = 0
    open_banks: dict = field(default_factory=dict)  # rank key -> set of banks

    @property
    def total(self) -> float:
        return sum(getattr(self, c) for c in CATEGORIES)

    def categories(self) -> dict[str, float]:
        return {c: getattr(self, c) for c in CATEGORIES}


class EnergyModel:
    """Charges each command with the timing of its row mode.

    ``timing`` maps :class:`RowMode` to the nanosecond parameters used for
    rows of that mode; ``refresh_ns`` maps a refresh pool's mode to the
    latency of one REF of that pool, keyed by mode or by
    ``(channel, rank, mode)``.  ``ranks`` lists every
    ``(channel, rank)`` so idle ranks still draw background current.
    """

    def __init__(self, timing: dict, refresh_ns: dict, power: PowerParams | None = None,
                 tck_ns: float = 1000.0 / 1200, burst_cycles: int = 4,
                 ranks=((0, 0),)):
        self.timing = timing
        self.refresh_ns = refresh_ns
        self.power = power or PowerParams()
        self.tck_ns = tck_ns
        self.burst_ns = burst_cycles * tck_ns
        self.ranks = tuple(ranks)

    def new_ledger(self) -> EnergyLedger:
        return EnergyLedger(open_banks={r: set() for r in self.ranks})

    def _background(self, ledger: EnergyLedger, until: int):
        span = until - ledger.cycle
        if span <= 0:
            return
        p = self.power
        ns = span * self.tck_ns
        for banks in ledger.open_banks.values():
            idd = p.IDD3N if banks else p.IDD2N
            ledger.background_energy += idd * p.VDD * ns * p.chips * PJ
        ledger.elapsed += ns * 1e-9
        ledger.cycle = until

    def account(self, ledger: EnergyLedger, cmd: DramCommand) -> EnergyLedger:
        if cmd.cycle < ledger.cycle:
            raise LogOrderError(f"command at cycle {cmd.cycle} after cycle {ledger.cycle}")
        self._background(ledger, cmd.cycle)
        p = self.power
        scale = p.VDD * p.chips * PJ
        c = cmd.coord
        key = (c.channel, c.rank)
        open_set = ledger.open_banks.setdefault(key, set())
        kind = cmd.kind
        if kind is CommandKind.ACT:
            open_set.add((c.bankgroup, c.bank))
        elif kind is CommandKind.PRE:
            open_set.discard((c.bankgroup, c.bank))
            ledger.act_pre_energy += act_pre_energy(self.timing[cmd.mode], p) * PJ
        elif kind is CommandKind.RD:
            ledger.read_energy += (p.IDD4R - p.IDD3N) * self.burst_ns * scale
        elif kind is CommandKind.WR:
            ledger.write_energy += (p.IDD4W - p.IDD3N) * self.burst_ns * scale
        elif kind is CommandKind.REF:
            trfc = self.refresh_ns.get((c.channel, c.rank, cmd.mode))
            if trfc is None:
                trfc = self.refresh_ns[cmd.mode]
            ledger.refresh_energy += (p.IDD5B - p.IDD3N) * trfc * scale
        return ledger

    def finish(self, ledger: EnergyLedger, end_cycle: int) -> EnergyLedger:
        """Accrue background power up to ``end_cycle`` (exclusive)."""
        if end_cycle < ledger.cycle:
            raise LogOrderError("end of run precedes the last command")
        self._background(ledger, end_cycle)
        return ledger

    def replay(self, commands, end_cycle: int) -> EnergyLedger:
        ledger = self.new_ledger()
        for cmd in commands:
            self.account(ledger, cmd)
        return self.finish(ledger, end_cycle)


def act_pre_energy(t: TimingParams, p: PowerParams) -> float:
    """Energy of one ACT+PRE pair in pJ."""
    return (p.IDD0 * t.tRC - p.IDD3N * t.tRAS - p.IDD2N * t.tRP) * p.VDD * p.chips


def account(ledger: EnergyLedger, cmd: DramCommand, model: EnergyModel) -> EnergyLedger:
    return model.account(ledger, cmd)


def report(ledger: EnergyLedger) -> dict:
    if ledger.elapsed <= 0:
        raise ValueError("no simulated time elapsed")
    total = ledger.total
    out = {"total_energy": total, "avg_power": total / ledger.elapsed,
           "refresh_energy": ledger.refresh_energy, "elapsed": ledger.elapsed}
    out.update(ledger.categories())
    return out


# -- command log CSV ---------------------------------------------------------

LOG_HEADER = ["cycle", "kind", "channel", "rank", "bankgroup", "bank", "row", "column",
              "mode", "bin"]


def command_rows(commands):
    for cmd in commands:
        c = cmd.coord
        yield [cmd.cycle, cmd.kind.name, c.channel, c.rank, c.bankgroup, c.bank,
               c.row, c.column, cmd.mode.short, cmd.bin]


def write_command_log(commands, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        w.writerows(command_rows(commands))


def read_command_log(path) -> list[DramCommand]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            coord = DramCoord(int(row["channel"]), int(row["rank"]), int(row["bankgroup"]),
                              int(row["bank"]), int(row["row"]), int(row["column"]), 0)
            mode = RowMode.from_short(row.get("mode") or "MC")
            out.append(DramCommand(CommandKind[row["kind"]], coord, int(row["cycle"]), mode,
                                   int(row.get("bin") or -1)))
    return out


ENERGY_HEADER = ["run", *CATEGORIES, "total_energy", "elapsed", "avg_power"]


def write_energy_csv(rows: list[tuple[str, EnergyLedger]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENERGY_HEADER)
        for name, ledger in rows:
            r = report(ledger)
            w.writerow([name, *(repr(r[c]) for c in CATEGORIES), repr(r["total_energy"]),
                        repr(r["elapsed"]), repr(r["avg_power"])])


def ledger_dict(ledger: EnergyLedger) -> dict:
    d = asdict(ledger)
    d.pop("open_banks")
    d.pop("cycle")
    return d
