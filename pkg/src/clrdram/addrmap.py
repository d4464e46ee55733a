"""Bit-sliced physical address <-> DRAM coordinate mapping."""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

from .timing import DramTopology


class Field(enum.Enum):
    BYTE = "byte"
    COLUMN = "column"
    BANKGROUP = "bankgroup"
    BANK = "bank"
    RANK = "rank"
    CHANNEL = "channel"
    ROW = "row"


class DramCoord(NamedTuple):
    channel: int = 0
    rank: int = 0
    bankgroup: int = 0
    bank: int = 0
    row: int = 0
    column: int = 0
    byte: int = 0


# index of each field inside DramCoord
_COORD_INDEX = {
    Field.CHANNEL: 0, Field.RANK: 1, Field.BANKGROUP: 2, Field.BANK: 3,
    Field.ROW: 4, Field.COLUMN: 5, Field.BYTE: 6,
}

DEFAULT_MAP = "byte:6, column:7, bankgroup:2, bank:2, rank:0, channel:0, row:*"


class AddressError(ValueError):
    pass


def _dimensions(topo: DramTopology) -> dict[Field, int]:
    return {
        Field.CHANNEL: topo.channels,
        Field.RANK: topo.ranks_per_channel,
        Field.BANKGROUP: topo.bankgroups_per_rank,
        Field.BANK: topo.banks_per_bankgroup,
        Field.ROW: topo.rows_per_bank,
        Field.COLUMN: topo.columns_per_row,
        Field.BYTE: topo.bytes_per_column,
    }


class AddressMap:
    """Ordered list of ``(field, bits)`` slices, least significant first.

    A field may appear more than once; each further slice supplies the
    next more significant bits of that field.  The slices must cover the
    address exactly, which makes decode and encode mutual inverses.
    """

    def __init__(self, slices: Sequence[tuple[Field, int]], topology: DramTopology,
                 page_offset_bits: int = 12):
        self.topology = topology
        self.page_offset_bits = page_offset_bits
        self.slices = [(Field(f), int(n)) for f, n in slices if int(n) > 0]
        dims = _dimensions(topology)
        bits = {f: 0 for f in Field}
        # (address shift, mask, coord index, field shift)
        plan = []
        pos = 0
        for f, n in self.slices:
            plan.append((pos, (1 << n) - 1, _COORD_INDEX[f], bits[f]))
            bits[f] += n
            pos += n
        for f, dim in dims.items():
            need = dim.bit_length() - 1
            if bits[f] != need:
                raise AddressError(
                    f"field {f.value} has {bits[f]} bits, topology needs {need}"
                )
        self.width = pos
        self.field_bits = bits
        self._plan = plan
        self._dims = tuple(dims[f] for f in sorted(dims, key=_COORD_INDEX.__getitem__))

    @classmethod
    def parse(cls, text: str, topology: DramTopology, page_offset_bits: int = 12) -> "AddressMap":
        """Parse ``"byte:6, column:7, ..., row:*"``; ``*`` takes the remaining bits."""
        dims = _dimensions(topology)
        items = []
        star = None
        for i, part in enumerate(p.strip() for p in text.split(",")):
            if not part:
                continue
            try:
                name, count = (s.strip() for s in part.split(":"))
                f = Field(name.lower())
            except ValueError:
                raise AddressError(f"bad address map entry {part!r}") from None
            if count == "*":
                if star is not None:
                    raise AddressError("only one '*' entry allowed")
                star = len(items)
                items.append([f, 0])
            else:
                items.append([f, int(count)])
        if star is not None:
            f = items[star][0]
            used = sum(n for g, n in items if g is f)
            items[star][1] = dims[f].bit_length() - 1 - used
            if items[star][1] < 0:
                raise AddressError(f"field {f.value} over-allocated")
        return cls([tuple(it) for it in items], topology, page_offset_bits)

    def __repr__(self):
        body = ", ".join(f"{f.value}:{n}" for f, n in self.slices)
        return f"AddressMap({body})"

    @property
    def size(self) -> int:
        return 1 << self.width

    def decode(self, addr: int) -> DramCoord:
        if not 0 <= addr < (1 << self.width):
            raise AddressError(f"address {addr:#x} outside {self.width}-bit space")
        out = [0] * 7
        for shift, mask, idx, fshift in self._plan:
            out[idx] |= ((addr >> shift) & mask) << fshift
        return DramCoord(*out)

    def encode(self, coord: Sequence[int]) -> int:
        for value, dim in zip(coord, self._dims):
            if not 0 <= value < dim:
                raise AddressError(f"coordinate {tuple(coord)} outside topology")
        addr = 0
        for shift, mask, idx, fshift in self._plan:
            addr |= ((coord[idx] >> fshift) & mask) << shift
        return addr

    def is_bijective(self) -> bool:
        # the constructor enforces exact coverage; re-check the invariant
        return sum(n for _, n in self.slices) == self.width and all(
            self.field_bits[f] == dim.bit_length() - 1
            for f, dim in _dimensions(self.topology).items()
        )

    # -- page granularity -------------------------------------------------

    def _field_bits_split(self, f: Field) -> tuple[int, int]:
        """(bits of ``f`` inside the page offset, bits above it)."""
        low = high = 0
        pos = 0
        for g, n in self.slices:
            if g is f:
                inside = max(0, min(pos + n, self.page_offset_bits) - pos)
                low += inside
                high += n - inside
            pos += n
        return low, high

    @property
    def page_column_bits(self) -> int:
        """Page-number bits that select the column (within-row position)."""
        return self._field_bits_split(Field.COLUMN)[1]

    @property
    def offset_row_bits(self) -> int:
        """Page-offset bits consumed by the row address."""
        return self._field_bits_split(Field.ROW)[0]

    def with_page_size(self, page_size: int) -> "AddressMap":
        if page_size < 1 or page_size & (page_size - 1):
            raise AddressError("page size must be a power of two")
        return AddressMap(self.slices, self.topology, page_size.bit_length() - 1)


def parse_address_map(text: str, topology: DramTopology, page_size: int = 4096) -> AddressMap:
    return AddressMap.parse(text, topology, page_size.bit_length() - 1)


def default_map(topology: DramTopology | None = None, page_size: int = 4096) -> AddressMap:
    topology = topology or DramTopology()
    col = topology.columns_per_row.bit_length() - 1
    byte = topology.bytes_per_column.bit_length() - 1
    bg = topology.bankgroups_per_rank.bit_length() - 1
    bk = topology.banks_per_bankgroup.bit_length() - 1
    rk = topology.ranks_per_channel.bit_length() - 1
    ch = topology.channels.bit_length() - 1
    text = f"byte:{byte}, column:{col}, bankgroup:{bg}, bank:{bk}, rank:{rk}, channel:{ch}, row:*"
    return parse_address_map(text, topology, page_size)


def pages_per_row(amap: AddressMap, page_size: int | None = None) -> int:
    if page_size is not None:
        amap = amap.with_page_size(page_size)
    return 1 << amap.page_column_bits


def rows_per_page(amap: AddressMap, page_size: int | None = None) -> int:
    if page_size is not None:
        amap = amap.with_page_size(page_size)
    return 1 << amap.offset_row_bits
