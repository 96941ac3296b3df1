"""Grid layouts and the four directional scan plans over them."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class LayoutError(ValueError):
    pass


class Direction(enum.Enum):
    """Scan start corner. Values are (row step, column step)."""

    TOP_LEFT = (1, 1)
    TOP_RIGHT = (1, -1)
    BOTTOM_LEFT = (-1, 1)
    BOTTOM_RIGHT = (-1, -1)

    @property
    def short(self) -> str:
        return {"TOP_LEFT": "tl", "TOP_RIGHT": "tr",
                "BOTTOM_LEFT": "bl", "BOTTOM_RIGHT": "br"}[self.name]

    def predecessor_offsets(self) -> tuple[tuple[int, int], ...]:
        di, dj = self.value
        # left, upper-left, up, as seen from the scan's starting corner
        return ((0, -dj), (-di, -dj), (-di, 0))


DIRECTIONS: tuple[Direction, ...] = tuple(Direction)


@dataclass(frozen=True)
class GridLayout:
    height: int
    width: int
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (self.height, self.width):
            raise LayoutError(f"occupancy shape {occ.shape} does not match "
                              f"{self.height}x{self.width}")
        if not occ.any():
            raise LayoutError("layout has no occupied cells")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def full(cls, height: int, width: int) -> "GridLayout":
        return cls(height, width, np.ones((height, width), dtype=bool))

    @property
    def cell_count(self) -> int:
        return int(self.occupancy.sum())

    def cells(self) -> list[tuple[int, int]]:
        """Occupied cells in raster order; this is the canonical cell index."""
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.occupancy))]

    def __eq__(self, other):
        if not isinstance(other, GridLayout):
            return NotImplemented
        return (self.height, self.width) == (other.height, other.width) and \
            bool(np.array_equal(self.occupancy, other.occupancy))

    def __hash__(self):
        return hash((self.height, self.width, self.occupancy.tobytes()))


@dataclass(frozen=True)
class TraversalPlan:
    """Visit order and predecessor sets for one direction.

    ``order[k]`` is the cell visited at step k. ``predecessors[k]`` holds the
    steps (indices into ``order``) whose states feed step k; each is < k.
    ``cell_index[k]`` is the raster index of ``order[k]`` in ``layout.cells()``.
    """

    direction: Direction
    order: tuple[tuple[int, int], ...]
    predecessors: tuple[tuple[int, ...], ...]
    cell_index: tuple[int, ...]

    def predecessor_cells(self, cell: tuple[int, int]) -> set[tuple[int, int]]:
        k = self.order.index(cell)
        return {self.order[p] for p in self.predecessors[k]}


def build_plan(layout: GridLayout, d: Direction) -> TraversalPlan:
    di, dj = d.value
    rows = range(layout.height) if di > 0 else range(layout.height - 1, -1, -1)
    cols = range(layout.width) if dj > 0 else range(layout.width - 1, -1, -1)
    occ = layout.occupancy
    raster = {c: n for n, c in enumerate(layout.cells())}

    order: list[tuple[int, int]] = []
    step_of: dict[tuple[int, int], int] = {}
    preds: list[tuple[int, ...]] = []
    for i in rows:
        for j in cols:
            if not occ[i, j]:
                continue
            p = []
            for oi, oj in d.predecessor_offsets():
                ni, nj = i + oi, j + oj
                if 0 <= ni < layout.height and 0 <= nj < layout.width and occ[ni, nj]:
                    p.append(step_of[(ni, nj)])
            step_of[(i, j)] = len(order)
            order.append((i, j))
            preds.append(tuple(p))
    return TraversalPlan(d, tuple(order), tuple(preds),
                         tuple(raster[c] for c in order))


def build_plans(layout: GridLayout) -> tuple[TraversalPlan, ...]:
    return tuple(build_plan(layout, d) for d in DIRECTIONS)


@dataclass(frozen=True)
class Electrode:
    ordinal: int
    name: str
    row: int
    col: int


def seed62_electrodes() -> list[Electrode]:
    """The 62-channel cap arranged on a 9x9 grid, in channel order."""
    text = resources.files("strnn").joinpath("data/seed62_layout.csv").read_text()
    return [Electrode(int(r["ordinal"]), r["name"], int(r["row"]), int(r["col"]))
            for r in csv.DictReader(text.splitlines())]


def seed_layout_62() -> GridLayout:
    occ = np.zeros((9, 9), dtype=bool)
    for e in seed62_electrodes():
        occ[e.row, e.col] = True
    return GridLayout(9, 9, occ)


def parse_layout(text: str) -> GridLayout:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise LayoutError("empty layout file")
    try:
        h, w = (int(x) for x in lines[0].split())
    except ValueError:
        raise LayoutError(f"bad layout header {lines[0]!r}; expected 'h w'") from None
    body = lines[1:]
    if len(body) != h:
        raise LayoutError(f"layout declares {h} rows but has {len(body)}")
    occ = np.zeros((h, w), dtype=bool)
    for i, row in enumerate(body):
        row = row.strip()
        if len(row) != w or set(row) - {"#", "."}:
            raise LayoutError(f"layout row {i + 1} must be {w} characters of '#' or '.'")
        occ[i] = [c == "#" for c in row]
    return GridLayout(h, w, occ)


def format_layout(layout: GridLayout) -> str:
    rows = ["".join("#" if c else "." for c in r) for r in layout.occupancy]
    return f"{layout.height} {layout.width}\n" + "\n".join(rows) + "\n"


def load_layout(spec: str) -> GridLayout:
    """Resolve ``seed62``, ``HxW`` (full grid) or a layout file path."""
    if spec == "seed62":
        return seed_layout_62()
    if "x" in spec and all(p.isdigit() for p in spec.split("x", 1)):
        h, w = spec.split("x", 1)
        return GridLayout.full(int(h), int(w))
    return parse_layout(Path(spec).read_text())
