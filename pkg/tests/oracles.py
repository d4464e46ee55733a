"""Independent checkers for emitted command logs.

Nothing here calls the controller or bank model.  Timings are rebuilt
from literal nanosecond tables, row modes come from the mode table
(never from the logged command), and every constraint is checked
against the nearest earlier command it applies to.  Within one scope
the nearest predecessor binds: an older one is further away and carries
the same minimum gap, or (same bank) is separated by a full ACT/PRE
cycle that the state replay already forces.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

BUS_MHZ = 1200.0
TCK = 1000.0 / BUS_MHZ

DDR4_NS = {
    "tRRD_S": 3.3, "tRRD_L": 4.9, "tFAW": 21.0, "tCCD_S": 4 * TCK, "tCCD_L": 5.0,
    "tRTP": 7.5, "tWTR_S": 2.5, "tWTR_L": 7.5, "tRTRS": 2 * TCK, "CL": 16 * TCK,
    "CWL": 12 * TCK, "tBL": 4 * TCK,
}
BASE_CELL = {"tRCD": 13.8, "tRAS": 39.4, "tRP": 15.5, "tWR": 12.5}
MC_CELL = {"tRCD": 13.2, "tRAS": 40.3, "tRP": 8.3, "tWR": 13.3}
HP_ET_CELL = {"tRCD": 5.5, "tRAS": 14.1, "tRP": 8.3, "tWR": 8.1}
BASE_TRFC = 550.0
HP_TRFC = BASE_TRFC * (1 - ((1 - 14.1 / 39.4) + (1 - 8.3 / 15.5)) / 2)

KINDS = {"ACT": 0, "PRE": 1, "RD": 2, "WR": 3, "REF": 4}
ACT, PRE, RD, WR, REF = range(5)


def cyc(ns: float) -> int:
    return math.ceil(ns * BUS_MHZ / 1000.0 - 1e-9)


def mode_cells(clr: bool, trefw_ms: float = 64.0) -> dict:
    """Cell-array ns per mode index (0 = MC, 1 = HP)."""
    if not clr:
        return {0: dict(BASE_CELL)}
    hp = dict(HP_ET_CELL)
    frac = (trefw_ms - 64.0) / 130.0
    hp["tRCD"] += 3.24 * frac
    hp["tRAS"] += 3.04 * frac
    return {0: dict(MC_CELL), 1: hp}


def as_arrays(log) -> dict:
    n = len(log)
    a = {k: np.empty(n, dtype=np.int64) for k in
         ("cycle", "kind", "ch", "rank", "bg", "bank", "row", "lmode", "bin")}
    for i, c in enumerate(log):
        co = c.coord
        a["cycle"][i] = c.cycle
        a["kind"][i] = KINDS[c.kind.name]
        a["ch"][i] = co.channel
        a["rank"][i] = co.rank
        a["bg"][i] = co.bankgroup
        a["bank"][i] = co.bank
        a["row"][i] = co.row
        a["lmode"][i] = 1 if c.mode.short == "HP" else 0
        a["bin"][i] = c.bin
    return a


def _prev(sorted_keys: np.ndarray, is_a: np.ndarray) -> np.ndarray:
    """Index of the nearest earlier event with ``is_a`` and equal key, or -1."""
    n = len(is_a)
    idx = np.where(is_a, np.arange(n), -1)
    last = np.maximum.accumulate(idx) if n else idx
    prev = np.empty(n, dtype=np.int64)
    if n:
        prev[0] = -1
        prev[1:] = last[:-1]
    ok = prev >= 0
    same = np.zeros(n, dtype=bool)
    same[ok] = sorted_keys[prev[ok]] == sorted_keys[ok]
    return np.where(same, prev, -1)


class Violations(list):
    def add(self, rule: str, cycles):
        for c in np.asarray(cycles).ravel()[:5]:
            self.append(f"{rule} at cycle {int(c)}")
        extra = np.asarray(cycles).size - 5
        if extra > 0:
            self.append(f"{rule}: {extra} more")


def check_log(log, row_modes: np.ndarray, topo, clr: bool = True, trefw_ms: float = 64.0,
              trfc_cycles: dict | None = None) -> list[str]:
    """All constraint violations in ``log``.

    ``row_modes`` holds the mode of every row, shape (banks, rows) with
    banks indexed channel, rank, bank group, bank.  ``trfc_cycles`` maps
    ``(channel, rank, mode)`` to the REF latency of that refresh pool;
    by default it is derived from the share of the rank's rows in each
    mode.
    """
    a = as_arrays(log)
    v = Violations()
    n = len(a["cycle"])
    if n == 0:
        return v
    cells = mode_cells(clr, trefw_ms)
    d = {k: cyc(x) for k, x in DDR4_NS.items()}
    cell = {m: {k: cyc(x) for k, x in c.items()} for m, c in cells.items()}
    bpr = topo.bankgroups_per_rank * topo.banks_per_bankgroup
    gbank = ((a["ch"] * topo.ranks_per_channel + a["rank"]) * bpr
             + a["bg"] * topo.banks_per_bankgroup + a["bank"])
    kind = a["kind"]
    is_ref = kind == REF
    mode = np.where(is_ref, a["lmode"], row_modes[gbank, np.where(is_ref, 0, a["row"])])
    if not clr:
        mode[:] = 0

    if trfc_cycles is None:
        trfc_cycles = pool_trfc(row_modes, topo, clr)
    per = lambda name, m: np.array([cell[int(x)][name] for x in range(2) if x in cell])[m]  # noqa: E731

    def scoped(key_cols, rules):
        key = np.zeros(n, dtype=np.int64)
        for col, width in key_cols:
            key = key * width + col
        order = np.lexsort((np.arange(n), a["cycle"], key))
        k = key[order]
        cy = a["cycle"][order]
        kd = kind[order]
        md = mode[order]
        for name, first, then, gap in rules:
            p = _prev(k, np.isin(kd, first))
            sel = np.isin(kd, then) & (p >= 0)
            need = gap(kd[p[sel]], md[p[sel]], md[sel]) if callable(gap) else gap
            bad = cy[sel] - cy[p[sel]] < need
            if bad.any():
                v.add(name, cy[sel][bad])

    nb = topo.total_banks
    nbg = topo.bankgroups_per_rank
    rank_id = a["ch"] * topo.ranks_per_channel + a["rank"]
    nr = topo.channels * topo.ranks_per_channel
    col_tail = d["CWL"] + d["tBL"]

    scoped([(gbank, nb)], [
        ("tRCD", [ACT], [RD, WR], lambda k, mp, m: per("tRCD", mp)),
        ("tRAS", [ACT], [PRE], lambda k, mp, m: per("tRAS", mp)),
        ("tRP", [PRE], [ACT], lambda k, mp, m: per("tRP", mp)),
        ("tRC", [ACT], [ACT], lambda k, mp, m: per("tRAS", mp) + per("tRP", mp)),
        ("tRTP", [RD], [PRE], d["tRTP"]),
        ("tWR", [WR], [PRE], lambda k, mp, m: col_tail + per("tWR", mp)),
    ])
    scoped([(rank_id, nr)], [
        ("tRRD_S", [ACT], [ACT], d["tRRD_S"]),
        ("tCCD_S rd", [RD], [RD], d["tCCD_S"]),
        ("tCCD_S wr", [WR], [WR], d["tCCD_S"]),
        ("rd-to-wr", [RD], [WR], d["CL"] + d["tBL"] + 2 - d["CWL"]),
        ("tWTR_S", [WR], [RD], col_tail + d["tWTR_S"]),
        ("PRE-to-REF", [PRE], [REF], lambda k, mp, m: per("tRP", mp)),
    ])
    scoped([(rank_id, nr), (a["bg"], nbg)], [
        ("tRRD_L", [ACT], [ACT], d["tRRD_L"]),
        ("tCCD_L rd", [RD], [RD], d["tCCD_L"]),
        ("tCCD_L wr", [WR], [WR], d["tCCD_L"]),
        ("tWTR_L", [WR], [RD], col_tail + d["tWTR_L"]),
    ])

    # REF blocks its rank for the pool's tRFC
    order = np.lexsort((np.arange(n), a["cycle"], rank_id))
    k = rank_id[order]
    p = _prev(k, is_ref[order])
    sel = p >= 0
    if sel.any():
        src = order[p[sel]]
        need = np.array([trfc_cycles[(int(a["ch"][i]), int(a["rank"][i]), int(a["lmode"][i]))]
                         for i in src])
        bad = a["cycle"][order[sel]] - a["cycle"][src] < need
        if bad.any():
            v.add("tRFC", a["cycle"][order[sel]][bad])

    # tFAW over each rank's ACT stream
    for r in range(nr):
        acts = np.sort(a["cycle"][(kind == ACT) & (rank_id == r)])
        if acts.size > 4:
            bad = acts[4:] - acts[:-4] < d["tFAW"]
            if bad.any():
                v.add("tFAW", acts[4:][bad])

    # channel: one command per cycle, data bursts apart (tRTRS across ranks)
    for ch in range(topo.channels):
        m = a["ch"] == ch
        cy = np.sort(a["cycle"][m])
        dup = cy[1:] == cy[:-1]
        if dup.any():
            v.add("command bus", cy[1:][dup])
        col = m & ((kind == RD) | (kind == WR))
        start = a["cycle"][col] + np.where(kind[col] == RD, d["CL"], d["CWL"])
        rk = a["rank"][col]
        o = np.argsort(start, kind="stable")
        start, rk = start[o], rk[o]
        end = start + d["tBL"]
        gap = np.where(rk[1:] != rk[:-1], d["tRTRS"], 0)
        bad = start[1:] < end[:-1] + gap
        if bad.any():
            v.add("data bus", start[1:][bad])

    # state replay
    open_row: dict = {}
    rank_open = defaultdict(set)
    order = np.lexsort((np.arange(n), a["cycle"]))
    for i in order:
        kd, b, r, row = int(kind[i]), int(gbank[i]), int(rank_id[i]), int(a["row"][i])
        c = int(a["cycle"][i])
        if kd == ACT:
            if b in open_row:
                v.append(f"ACT to open bank {b} at cycle {c}")
            open_row[b] = row
            rank_open[r].add(b)
        elif kd == PRE:
            if open_row.get(b) != row:
                v.append(f"PRE of row {row} not open in bank {b} at cycle {c}")
            open_row.pop(b, None)
            rank_open[r].discard(b)
        elif kd in (RD, WR):
            if open_row.get(b) != row:
                v.append(f"column access to closed row {row} of bank {b} at cycle {c}")
        else:
            if rank_open[r]:
                v.append(f"REF with open banks in rank {r} at cycle {c}")
    return v


def pool_trfc(row_modes: np.ndarray, topo, clr: bool = True) -> dict:
    """REF latency (cycles) of each (channel, rank, mode) refresh pool."""
    bpr = topo.bankgroups_per_rank * topo.banks_per_bankgroup
    out = {}
    for ch in range(topo.channels):
        for r in range(topo.ranks_per_channel):
            first = (ch * topo.ranks_per_channel + r) * bpr
            rows = row_modes[first:first + bpr]
            share_hp = float(np.mean(rows == 1)) if clr else 0.0
            out[(ch, r, 0)] = cyc(BASE_TRFC * (1 - share_hp))
            out[(ch, r, 1)] = cyc(HP_TRFC * share_hp)
    return out


# -- refresh coverage ---------------------------------------------------------

def refresh_coverage(log, row_modes: np.ndarray, topo, trefw_ms: dict, end_cycle: int,
                     bins: int = 8192) -> dict:
    """Worst refresh spacing per (channel, rank, mode) pool, in cycles.

    Each pool's rows (rank order: bank, then row) are split into ``bins``
    contiguous chunks; a REF of bin ``b`` refreshes chunk ``b``.  The
    spacing of a row includes the gap from cycle 0 to its first refresh
    and from its last refresh to ``end_cycle``.  Returns
    ``{pool: (worst gap, window, rows checked)}``.
    """
    a = as_arrays(log)
    bpr = topo.bankgroups_per_rank * topo.banks_per_bankgroup
    out = {}
    for ch in range(topo.channels):
        for r in range(topo.ranks_per_channel):
            first = (ch * topo.ranks_per_channel + r) * bpr
            flat = row_modes[first:first + bpr].ravel()
            for m in (0, 1):
                rows = np.flatnonzero(flat == m)
                if rows.size == 0:
                    continue
                window = cyc(trefw_ms[m] * 1e6)
                sel = ((a["kind"] == REF) & (a["ch"] == ch) & (a["rank"] == r)
                       & (a["lmode"] == m))
                cycles = a["cycle"][sel]
                bin_ids = a["bin"][sel]
                worst_bin = np.full(bins, end_cycle, dtype=np.int64)
                for b in range(bins):
                    t = np.sort(cycles[bin_ids == b])
                    pts = np.concatenate(([0], t, [end_cycle]))
                    worst_bin[b] = np.diff(pts).max()
                row_bin = np.arange(rows.size) * bins // rows.size
                out[(ch, r, m)] = (int(worst_bin[row_bin].max()), window, int(rows.size))
    return out


# -- energy -------------------------------------------------------------------

IDD = {"VDD": 1.2, "IDD0": 60.0, "IDD2N": 34.0, "IDD3N": 46.0, "IDD4R": 160.0,
       "IDD4W": 150.0, "IDD5B": 250.0, "chips": 8}


def energy_of(log, row_modes: np.ndarray, topo, end_cycle: int, clr: bool = True,
              trefw_ms: float = 64.0, trfc_ns: dict | None = None) -> dict:
    """Energy per category (J) recomputed from the command log."""
    p = IDD
    k = p["VDD"] * p["chips"] * 1e-12
    cells = mode_cells(clr, trefw_ms)
    a = as_arrays(log)
    bpr = topo.bankgroups_per_rank * topo.banks_per_bankgroup
    gbank = ((a["ch"] * topo.ranks_per_channel + a["rank"]) * bpr
             + a["bg"] * topo.banks_per_bankgroup + a["bank"])
    if trfc_ns is None:
        trfc_ns = {}
        for key, _ in pool_trfc(row_modes, topo, clr).items():
            ch, r, m = key
            first = (ch * topo.ranks_per_channel + r) * bpr
            share_hp = float(np.mean(row_modes[first:first + bpr] == 1)) if clr else 0.0
            trfc_ns[key] = HP_TRFC * share_hp if m else BASE_TRFC * (1 - share_hp)
    out = dict.fromkeys(("act_pre_energy", "read_energy", "write_energy", "refresh_energy",
                         "background_energy"), 0.0)
    tbl = 4 * TCK
    for i in range(len(a["cycle"])):
        kd = a["kind"][i]
        if kd == PRE:
            m = int(row_modes[gbank[i], a["row"][i]]) if clr else 0
            c = cells[m]
            out["act_pre_energy"] += (p["IDD0"] * (c["tRAS"] + c["tRP"]) - p["IDD3N"] * c["tRAS"]
                                      - p["IDD2N"] * c["tRP"]) * k
        elif kd == RD:
            out["read_energy"] += (p["IDD4R"] - p["IDD3N"]) * tbl * k
        elif kd == WR:
            out["write_energy"] += (p["IDD4W"] - p["IDD3N"]) * tbl * k
        elif kd == REF:
            key = (int(a["ch"][i]), int(a["rank"][i]), int(a["lmode"][i]))
            out["refresh_energy"] += (p["IDD5B"] - p["IDD3N"]) * trfc_ns[key] * k
    # background: a rank draws active-standby current while any bank is open
    rank_id = a["ch"] * topo.ranks_per_channel + a["rank"]
    for r in range(topo.channels * topo.ranks_per_channel):
        sel = (rank_id == r) & ((a["kind"] == ACT) | (a["kind"] == PRE))
        cy = a["cycle"][sel]
        delta = np.where(a["kind"][sel] == ACT, 1, -1)
        n_open = np.cumsum(delta)
        edges = np.concatenate(([0], cy, [end_cycle]))
        state = np.concatenate(([0], n_open)) > 0
        spans = np.diff(edges)
        active = spans[state].sum()
        idle = spans[~state].sum()
        out["background_energy"] += (p["IDD3N"] * active + p["IDD2N"] * idle) * TCK * k
    out["elapsed"] = end_cycle * TCK * 1e-9
    return out


# -- per-command verdicts -------------------------------------------------------

class PairwiseChecker:
    """Brute-force legality of appending one command to a single-rank history.

    Every constraint is evaluated against every remembered command (the
    history is trimmed to a horizon longer than any constraint).
    ``mode_of(bank, row)`` gives a row's mode index.
    """

    def __init__(self, mode_of, clr: bool = True, trfc_ns: float = BASE_TRFC,
                 horizon: int = 4000):
        self.mode_of = mode_of
        self.d = {k: cyc(x) for k, x in DDR4_NS.items()}
        self.cell = {m: {k: cyc(x) for k, x in c.items()}
                     for m, c in mode_cells(clr).items()}
        self.trfc = cyc(trfc_ns)
        self.horizon = horizon
        self.hist: list[tuple] = []      # (cycle, kind, bg, bank, row, mode)
        self.open: dict = {}

    def legal(self, cycle: int, kind: int, bg: int, bank: int, row: int) -> bool:
        b = (bg, bank)
        if kind == ACT and b in self.open:
            return False
        if kind == PRE and b not in self.open:
            return False
        if kind in (RD, WR) and self.open.get(b) != row:
            return False
        if kind == REF and self.open:
            return False
        d = self.d
        acts = []
        for c, k, g, bk, r, m in self.hist:
            gap = cycle - c
            need = 0
            same_bank = (g, bk) == b and kind != REF
            same_bg = g == bg
            cell = self.cell[m]
            if k == REF:
                need = self.trfc
            elif same_bank:
                if k == ACT and kind in (RD, WR):
                    need = cell["tRCD"]
                elif k == ACT and kind == PRE:
                    need = cell["tRAS"]
                elif k == ACT and kind == ACT:
                    need = cell["tRAS"] + cell["tRP"]
                elif k == PRE and kind == ACT:
                    need = cell["tRP"]
                elif k == RD and kind == PRE:
                    need = d["tRTP"]
                elif k == WR and kind == PRE:
                    need = d["CWL"] + d["tBL"] + cell["tWR"]
            if k == ACT and kind == ACT:
                acts.append(c)
                need = max(need, d["tRRD_L"] if same_bg else d["tRRD_S"])
            elif k == RD and kind == RD or k == WR and kind == WR:
                need = max(need, d["tCCD_L"] if same_bg else d["tCCD_S"])
            elif k == RD and kind == WR:
                need = max(need, d["CL"] + d["tBL"] + 2 - d["CWL"])
            elif k == WR and kind == RD:
                need = max(need, d["CWL"] + d["tBL"] + (d["tWTR_L"] if same_bg else d["tWTR_S"]))
            elif k == PRE and kind == REF:
                need = max(need, cell["tRP"])
            if gap < need:
                return False
        if kind == ACT and len(acts) >= 4 and cycle - sorted(acts)[-4] < d["tFAW"]:
            return False
        return True

    def push(self, cycle: int, kind: int, bg: int, bank: int, row: int):
        b = (bg, bank)
        if kind == ACT:
            self.open[b] = row
            mode = self.mode_of(b, row)
        elif kind == PRE:
            mode = self.mode_of(b, self.open.pop(b))
        elif kind in (RD, WR):
            mode = self.mode_of(b, row)
        else:
            mode = 0
        self.hist.append((cycle, kind, bg, bank, row, mode))
        while self.hist and cycle - self.hist[0][0] > self.horizon:
            self.hist.pop(0)
