"""Trace I/O, synthetic trace generation, page profiling and placement.

A trace line is ``<bubbles> <hex address> [W]``: the number of
non-memory instructions preceding the access, the (virtual) byte
address, and an optional ``W`` marking a store.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

import numpy as np

from .addrmap import AddressMap
from .clr import RowModeTable, hp_groups_per_bank, reconfig_granularity
from .timing import RowMode

LINE = 64


class TraceRecord(NamedTuple):
    bubbles: int
    addr: int
    write: bool = False

    @property
    def kind(self) -> str:
        return "Write" if self.write else "Read"


class TraceParseError(ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.rstrip()!r}")
        self.lineno = lineno


def parse_trace(stream: IO[str] | Iterable[str]) -> list[TraceRecord]:
    records = []
    for lineno, line in enumerate(stream, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) not in (2, 3):
            raise TraceParseError(lineno, line, "expected 2 or 3 fields")
        try:
            bubbles = int(parts[0])
            addr = int(parts[1], 16)
        except ValueError:
            raise TraceParseError(lineno, line, "bad bubble count or address") from None
        if bubbles < 0 or addr < 0:
            raise TraceParseError(lineno, line, "negative value")
        write = False
        if len(parts) == 3:
            if parts[2] not in ("W", "w"):
                raise TraceParseError(lineno, line, "third field must be W")
            write = True
        records.append(TraceRecord(bubbles, addr, write))
    return records


def read_trace(path) -> list[TraceRecord]:
    with open(path) as fh:
        return parse_trace(fh)


def format_trace(records: Iterable[TraceRecord]) -> str:
    out = io.StringIO()
    for r in records:
        out.write(f"{r.bubbles} {r.addr:#x}{' W' if r.write else ''}\n")
    return out.getvalue()


def write_trace(records: Iterable[TraceRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(format_trace(records))


# -- synthetic traces -------------------------------------------------------

def _bubbles(rng: np.random.Generator, n: int, dist: str | int) -> np.ndarray:
    """Draw bubble counts. ``dist`` is an int (fixed) or ``"name:mean"``.

    Supported names: ``fixed``, ``poisson``, ``geometric`` (support 0..).
    """
    if isinstance(dist, (int, np.integer)):
        return np.full(n, int(dist), dtype=np.int64)
    name, _, arg = str(dist).partition(":")
    mean = float(arg) if arg else 0.0
    if mean < 0:
        raise ValueError("bubble mean must be >= 0")
    if name == "fixed":
        return np.full(n, int(round(mean)), dtype=np.int64)
    if name == "poisson":
        return rng.poisson(mean, n).astype(np.int64)
    if name == "geometric":
        if mean == 0:
            return np.zeros(n, dtype=np.int64)
        return rng.geometric(1.0 / (mean + 1.0), n).astype(np.int64) - 1
    raise ValueError(f"unknown bubble distribution {dist!r}")


def _records(bubbles: np.ndarray, addrs: np.ndarray, writes: np.ndarray) -> list[TraceRecord]:
    return [TraceRecord(int(b), int(a), bool(w)) for b, a, w in zip(bubbles, addrs, writes)]


def _check_footprint(footprint_bytes: int, page_size: int):
    if footprint_bytes < page_size:
        raise ValueError(f"footprint must cover at least one page ({page_size} bytes)")


def gen_random(seed: int, n_records: int, footprint_bytes: int, bubble_dist="poisson:4",
               write_ratio: float = 0.0, base: int = 0, page_size: int = 4096) -> list[TraceRecord]:
    """Cacheline accesses drawn uniformly over the footprint."""
    _check_footprint(footprint_bytes, page_size)
    rng = np.random.default_rng(seed)
    lines = footprint_bytes // LINE
    addrs = base + rng.integers(0, lines, n_records) * LINE
    writes = rng.random(n_records) < write_ratio
    return _records(_bubbles(rng, n_records, bubble_dist), addrs, writes)


def gen_stream(seed: int, n_records: int, footprint_bytes: int, bubble_dist="poisson:4",
               write_ratio: float = 0.0, base: int = 0, page_size: int = 4096) -> list[TraceRecord]:
    """Consecutive cachelines, wrapping around the footprint."""
    _check_footprint(footprint_bytes, page_size)
    rng = np.random.default_rng(seed)
    lines = footprint_bytes // LINE
    addrs = base + (np.arange(n_records) % lines) * LINE
    writes = rng.random(n_records) < write_ratio
    return _records(_bubbles(rng, n_records, bubble_dist), addrs, writes)


def gen_zipf(seed: int, n_records: int, footprint_bytes: int, bubble_dist="poisson:4",
             write_ratio: float = 0.0, base: int = 0, page_size: int = 4096,
             exponent: float = 1.1) -> list[TraceRecord]:
    """Skewed page popularity (Zipf over a shuffled page order).

    Not one of the random/stream patterns; it exists to exercise
    workloads whose accesses concentrate on few pages.
    """
    _check_footprint(footprint_bytes, page_size)
    rng = np.random.default_rng(seed)
    pages = footprint_bytes // page_size
    ranks = np.arange(1, pages + 1, dtype=np.float64)
    weights = ranks ** -exponent
    weights /= weights.sum()
    order = rng.permutation(pages)
    page = order[rng.choice(pages, n_records, p=weights)]
    line = rng.integers(0, page_size // LINE, n_records)
    addrs = base + page * page_size + line * LINE
    writes = rng.random(n_records) < write_ratio
    return _records(_bubbles(rng, n_records, bubble_dist), addrs, writes)


GENERATORS = {"random": gen_random, "stream": gen_stream, "zipf": gen_zipf}


def gen_mixed(seed: int, n_records: int, footprint_bytes: int, bubble_dist="poisson:4",
              write_ratio: float = 0.3, segment: int = 512) -> list[TraceRecord]:
    """Alternating random and stream segments (legality stress traffic)."""
    out: list[TraceRecord] = []
    k = 0
    while len(out) < n_records:
        gen = gen_random if k % 2 == 0 else gen_stream
        n = min(segment, n_records - len(out))
        start = (seed * 7919 + k * 104729) % max(1, footprint_bytes // 4096) * 4096
        part = gen(seed * 1000 + k, n, footprint_bytes, bubble_dist, write_ratio)
        if gen is gen_stream:
            part = [r._replace(addr=(r.addr + start) % footprint_bytes) for r in part]
        out.extend(part)
        k += 1
    return out


# -- profiling and placement ------------------------------------------------

@dataclass
class PageProfile:
    counts: dict[int, int] = field(default_factory=dict)
    total_accesses: int = 0

    @property
    def touched(self) -> int:
        return len(self.counts)

    def ranked(self) -> list[int]:
        """Pages by access count, descending; ties by ascending page."""
        return sorted(self.counts, key=lambda p: (-self.counts[p], p))

    def coverage(self, pages: Iterable[int]) -> float:
        if not self.total_accesses:
            return 0.0
        return sum(self.counts[p] for p in pages) / self.total_accesses


def page_key(core: int, vpage: int) -> int:
    """Global page id for a core's virtual page."""
    return (core << 40) | vpage


def profile_pages(trace: Iterable[TraceRecord], page_size: int = 4096, core: int = 0,
                  profile: PageProfile | None = None) -> PageProfile:
    """Exact per-page access counts (optionally accumulating into ``profile``)."""
    profile = profile if profile is not None else PageProfile()
    shift = page_size.bit_length() - 1
    counter = Counter((core << 40) | (r.addr >> shift) for r in trace)
    for p, n in counter.items():
        profile.counts[p] = profile.counts.get(p, 0) + n
        profile.total_accesses += n
    return profile


class CapacityOverflow(RuntimeError):
    def __init__(self, what: str, required: int, available: int):
        super().__init__(f"{what}: need {required} bytes, only {available} available")
        self.required = required
        self.available = available


@dataclass
class PlacementPlan:
    fraction: float
    hp_pages: set[int]
    frames: dict[int, int]          # page -> physical frame number
    groups: dict[int, int]          # page -> global row group
    hp_groups_per_bank: int
    group_rows: int
    page_size: int = 4096

    def translate(self, page: int, offset: int) -> int:
        return (self.frames[page] * self.page_size) | offset

    def mode_table(self, amap: AddressMap) -> RowModeTable:
        table = RowModeTable(amap.topology, self.group_rows)
        table.set_fraction(self.fraction)
        return table

    def rows(self) -> list[tuple[int, str, int, int]]:
        out = []
        for page in sorted(self.frames):
            mode = "HP" if page in self.hp_pages else "MC"
            out.append((page, mode, self.groups[page], self.frames[page]))
        return out

    def write_csv(self, path_or_stream) -> None:
        own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
        fh = open(path_or_stream, "w", newline="") if own else path_or_stream
        try:
            w = csv.writer(fh)
            w.writerow(["page", "mode", "row_group", "frame"])
            w.writerows(self.rows())
        finally:
            if own:
                fh.close()


def read_plan_csv(path) -> list[tuple[int, RowMode, int, int | None]]:
    """Rows ``(page, mode, row_group, frame)`` from a placement CSV."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            frame = row.get("frame")
            out.append((int(row["page"]), RowMode.from_short(row["mode"]),
                        int(row["row_group"]), int(frame) if frame not in (None, "") else None))
    return out


def table_from_plan(path, amap: AddressMap) -> RowModeTable:
    """Mode table with every group named by an HP plan entry switched to HP."""
    table = RowModeTable.for_map(amap)
    for _, mode, group, _ in read_plan_csv(path):
        if mode is RowMode.HIGH_PERFORMANCE:
            table.set_group_mode(group, mode)
    return table


def _frame_group(amap: AddressMap, frame: int, page_size: int, group_shift: int):
    c = amap.decode(frame * page_size)
    t = amap.topology
    bank = ((c.channel * t.ranks_per_channel + c.rank) * t.bankgroups_per_rank
            + c.bankgroup) * t.banks_per_bankgroup + c.bank
    groups_per_bank = t.rows_per_bank >> group_shift
    return c, bank * groups_per_bank + (c.row >> group_shift)


def _row_is_top(amap: AddressMap) -> bool:
    from .addrmap import Field
    return bool(amap.slices) and amap.slices[-1][0] is Field.ROW


def plan_placement(profile: PageProfile, fraction: float, amap: AddressMap,
                   page_size: int = 4096) -> PlacementPlan:
    """Map the hottest ``fraction`` of touched pages into high-performance rows.

    ``fraction`` of the row groups of every bank (the lowest-numbered
    ones) run in high-performance mode.  Hot pages fill the lower column
    half of those rows in ascending frame order; the remaining pages,
    in ascending page order, fill max-capacity rows.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    amap = amap.with_page_size(page_size)
    topo = amap.topology
    group_rows = 1 << amap.offset_row_bits
    group_shift = amap.offset_row_bits
    groups_per_bank = topo.rows_per_bank // group_rows
    n_hp_groups = hp_groups_per_bank(groups_per_bank, fraction)
    hp_row_limit = n_hp_groups * group_rows
    ranked = profile.ranked()
    n_hot = math.ceil(fraction * len(ranked) - 1e-9)
    hot = ranked[:n_hot]
    cold = sorted(ranked[n_hot:])
    n_frames = amap.size // page_size
    col_top = topo.columns_per_row >> 1

    hp_frames_total = n_hp_groups * topo.total_banks * group_rows * topo.row_bytes // 2 // page_size
    if hot:
        reconfig_granularity(amap)  # rejects maps with no page-granular HP placement
    if len(hot) > hp_frames_total:
        raise CapacityOverflow("high-performance rows", len(hot) * page_size,
                               hp_frames_total * page_size)
    mc_frames_total = (groups_per_bank - n_hp_groups) * topo.total_banks * group_rows \
        * topo.row_bytes // page_size
    if len(cold) > mc_frames_total:
        raise CapacityOverflow("max-capacity rows", len(cold) * page_size,
                               mc_frames_total * page_size)

    frames: dict[int, int] = {}
    groups: dict[int, int] = {}

    def fill(pages, start, ok):
        frame = start
        for page in pages:
            while True:
                if frame >= n_frames:
                    raise CapacityOverflow("address space", len(pages) * page_size,
                                           (frame - start) * page_size)
                c, g = _frame_group(amap, frame, page_size, group_shift)
                frame += 1
                if ok(c):
                    break
            frames[page] = frame - 1
            groups[page] = g

    fill(hot, 0, lambda c: c.row < hp_row_limit and c.column < col_top)
    start = 0
    if cold and hp_row_limit and _row_is_top(amap):
        start = amap.encode((0, 0, 0, 0, hp_row_limit, 0, 0)) // page_size
    fill(cold, start, lambda c: c.row >= hp_row_limit)
    return PlacementPlan(fraction, set(hot), frames, groups, n_hp_groups, group_rows, page_size)


def mpki(misses: int, instructions: int) -> float:
    return 1000.0 * misses / instructions if instructions else 0.0


def is_memory_intensive(misses: int, instructions: int, threshold: float = 2.0) -> bool:
    return mpki(misses, instructions) > threshold

