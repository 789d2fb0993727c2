"""Rectangular cell-centered meshes and per-cell scalar fields.

The domain is an open rectangle partitioned into ``n_x * n_y`` control
volumes of uniform size per axis.  Cells are addressed either by 1-based
grid indices ``(i, j)`` (``i`` along x, ``j`` along y) or by the single
index ``s = (j - 1) * n_x + i`` running left to right, bottom to top.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "Mesh",
    "GridField",
    "build_mesh",
    "linear_index",
    "inverse_index",
    "write_field_csv",
    "read_field_csv",
    "field_json_header",
]


@dataclass(frozen=True)
class Domain:
    """Open rectangle ]x_lo, x_hi[ x ]y_lo, y_hi[."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self) -> None:
        bounds = (self.x_lo, self.x_hi, self.y_lo, self.y_hi)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError(f"domain bounds must be finite, got {bounds}")
        if self.x_lo >= self.x_hi or self.y_lo >= self.y_hi:
            raise ValueError(
                f"degenerate rectangle: require x_lo < x_hi and y_lo < y_hi, "
                f"got [{self.x_lo}, {self.x_hi}] x [{self.y_lo}, {self.y_hi}]"
            )

    def area(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)


def linear_index(i: int, j: int, n_x: int, n_y: int | None = None) -> int:
    """Single index s = (j - 1) * n_x + i of cell (i, j), both 1-based."""
    if i < 1 or i > n_x:
        raise ValueError(f"i out of range: i={i}, n_x={n_x}")
    if j < 1 or (n_y is not None and j > n_y):
        raise ValueError(f"j out of range: j={j}, n_y={n_y}")
    return (j - 1) * n_x + i


def inverse_index(s: int, n_x: int, n_y: int | None = None) -> tuple[int, int]:
    """Grid indices (i, j) of single index s; inverse of linear_index."""
    if s < 1 or (n_y is not None and s > n_x * n_y):
        raise ValueError(f"s out of range: s={s}, n_cells={n_x * (n_y or 0)}")
    return (s - 1) % n_x + 1, (s - 1) // n_x + 1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform-per-axis partition of a Domain into n_x * n_y control volumes.

    Cell centers sit at ``x_lo + (i - 1/2) h_x`` so the control volume
    ``]x_{i-1/2}, x_{i+1/2}[`` lies inside the domain and the cells tile it
    exactly.  Construct through :func:`build_mesh`.
    """

    domain: Domain
    n_x: int
    n_y: int
    h_x: float
    h_y: float
    x_centers: np.ndarray
    y_centers: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y

    def is_uniform(self) -> bool:
        return abs(self.h_x - self.h_y) <= 1e-12 * max(self.h_x, self.h_y)

    def linear_index(self, i: int, j: int) -> int:
        return linear_index(i, j, self.n_x, self.n_y)

    def inverse_index(self, s: int) -> tuple[int, int]:
        return inverse_index(s, self.n_x, self.n_y)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        if not (1 <= i <= self.n_x and 1 <= j <= self.n_y):
            raise ValueError(f"cell ({i}, {j}) outside {self.n_x} x {self.n_y} grid")
        return float(self.x_centers[i - 1]), float(self.y_centers[j - 1])


def build_mesh(domain: Domain, n_x: int, n_y: int) -> Mesh:
    """Partition ``domain`` into ``n_x * n_y`` control volumes."""
    if int(n_x) != n_x or int(n_y) != n_y:
        raise ValueError(f"cell counts must be integers, got {n_x!r}, {n_y!r}")
    n_x, n_y = int(n_x), int(n_y)
    if n_x < 1 or n_y < 1:
        raise ValueError(f"cell counts must be >= 1, got n_x={n_x}, n_y={n_y}")
    h_x = (domain.x_hi - domain.x_lo) / n_x
    h_y = (domain.y_hi - domain.y_lo) / n_y
    x_centers = domain.x_lo + (np.arange(1, n_x + 1) - 0.5) * h_x
    y_centers = domain.y_lo + (np.arange(1, n_y + 1) - 0.5) * h_y
    x_centers.setflags(write=False)
    y_centers.setflags(write=False)
    return Mesh(domain, n_x, n_y, h_x, h_y, x_centers, y_centers)


@dataclass(frozen=True, eq=False)
class GridField:
    """One scalar per control volume, stored in single-index order.

    Immutable after construction; the value at grid cell (i, j) is
    ``values[linear_index(i, j) - 1]``.
    """

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size != self.mesh.n_cells:
            raise ValueError(
                f"field length {arr.size} does not match mesh with "
                f"{self.mesh.n_cells} cells"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "GridField":
        return cls(mesh, np.full(mesh.n_cells, float(value)))

    def value_at(self, i: int, j: int) -> float:
        return float(self.values[self.mesh.linear_index(i, j) - 1])

    def as_grid(self) -> np.ndarray:
        """Read-only (n_y, n_x) view; row index is j - 1, column index i - 1."""
        return self.values.reshape(self.mesh.n_y, self.mesh.n_x)


def field_json_header(mesh: Mesh) -> dict:
    """JSON-serializable mesh header accompanying a grid CSV."""
    return {
        "n_x": mesh.n_x,
        "n_y": mesh.n_y,
        "x_lo": mesh.domain.x_lo,
        "x_hi": mesh.domain.x_hi,
        "y_lo": mesh.domain.y_lo,
        "y_hi": mesh.domain.y_hi,
        "h_x": mesh.h_x,
        "h_y": mesh.h_y,
    }


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_field_csv(field: GridField, path) -> None:
    """Write a grid CSV: header line, then n_y rows of n_x values, j=1 first.

    Values carry 17 significant digits so a read/write round trip is
    byte-identical.
    """
    mesh = field.mesh
    dom = mesh.domain
    grid = field.as_grid()
    lines = [
        f"# {mesh.n_x},{mesh.n_y},{_fmt(dom.x_lo)},{_fmt(dom.x_hi)},"
        f"{_fmt(dom.y_lo)},{_fmt(dom.y_hi)}"
    ]
    for j in range(mesh.n_y):
        lines.append(",".join(_fmt(v) for v in grid[j]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path) -> GridField:
    """Read a grid CSV written by :func:`write_field_csv`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# nx,ny,x_lo,x_hi,y_lo,y_hi' header")
    head = lines[0].lstrip("#").strip().split(",")
    if len(head) != 6:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    n_x, n_y = int(head[0]), int(head[1])
    domain = Domain(float(head[2]), float(head[3]), float(head[4]), float(head[5]))
    rows = lines[1:]
    if len(rows) != n_y:
        raise ValueError(f"{path}: expected {n_y} data rows, found {len(rows)}")
    grid = np.empty((n_y, n_x))
    for j, row in enumerate(rows):
        vals = row.split(",")
        if len(vals) != n_x:
            raise ValueError(f"{path}: row {j + 1} has {len(vals)} values, expected {n_x}")
        grid[j] = [float(v) for v in vals]
    mesh = build_mesh(domain, n_x, n_y)
    return GridField(mesh, grid.reshape(-1))


def write_field_json_header(field: GridField, path) -> None:
    with open(path, "w") as fh:
        json.dump(field_json_header(field.mesh), fh, indent=2)
        fh.write("\n")
