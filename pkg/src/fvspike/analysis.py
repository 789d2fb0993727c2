"""Post-processing of solved fields.

Covers the closed-form diffusion threshold d0, discrete peak detection with
plateau collapsing and a prominence filter, summary statistics, iso-level
contour extraction by marching squares, and a report of how far a field sits
from each dihedral symmetry of a square grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import GridField

__all__ = [
    "Peak",
    "ContourSet",
    "SolutionStats",
    "compute_d0",
    "detect_peaks",
    "solution_stats",
    "marching_squares",
    "symmetry_report",
    "apply_symmetry",
    "SQUARE_SYMMETRIES",
    "contours_to_json_dict",
    "write_contours_json",
    "write_contours_csv",
    "write_peaks_csv",
]


def compute_d0(q: float, area: float) -> float:
    """Diffusion threshold d0(q, |Omega|) below which nonconstant positive
    solutions are expected on comparable domains.

    d0 = |Omega| * ((2 pi / ((q+2)(q+3)))^2 * (6 / (7 pi))^(q+1))^(1/(q-1)).
    Linear in the area; undefined at q = 1.
    """
    if not (math.isfinite(q) and q > 0):
        raise ValueError(f"q must be positive and finite, got {q}")
    if q == 1:
        raise ValueError("d0 undefined at q = 1 (exponent 1/(q-1) singular)")
    if not (math.isfinite(area) and area > 0):
        raise ValueError(f"area must be positive and finite, got {area}")
    inner = (2.0 * math.pi / ((q + 2.0) * (q + 3.0))) ** 2 \
        * (6.0 / (7.0 * math.pi)) ** (q + 1.0)
    return area * inner ** (1.0 / (q - 1.0))


# ---------------------------------------------------------------------------
# Peaks

@dataclass(frozen=True)
class Peak:
    i: int
    j: int
    x: float
    y: float
    value: float
    kind: str             # "maximum" | "minimum"
    location_class: str   # "interior" | "boundary" | "corner"


def _location_class(i: int, j: int, n_x: int, n_y: int) -> str:
    on_x = i == 1 or i == n_x
    on_y = j == 1 or j == n_y
    if on_x and on_y:
        return "corner"
    if on_x or on_y:
        return "boundary"
    return "interior"


_NEIGHBOR_SHIFTS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)
                    if (di, dj) != (0, 0)]


def detect_peaks(field: GridField, min_prominence: float = 0.0) -> list[Peak]:
    """Discrete extrema of a field under the 8-neighborhood rule.

    A cell qualifies as a maximum (minimum) candidate when it is >= (<=)
    every existing neighbor.  Plateaus of equal-valued candidates collapse
    to the member nearest their centroid, and a plateau only counts if it
    beats at least one neighbor strictly.  Peaks with
    |value - median| < min_prominence are dropped; the result is sorted by
    |value| descending.
    """
    mesh = field.mesh
    V = field.as_grid()
    ny, nx = V.shape
    median = float(np.median(V))

    peaks: list[Peak] = []
    for kind, better_eq, strictly_better in (
        ("maximum", np.greater_equal, np.greater),
        ("minimum", np.less_equal, np.less),
    ):
        cand = np.ones_like(V, dtype=bool)
        for di, dj in _NEIGHBOR_SHIFTS:
            shifted = _shift(V, di, dj, fill=None)
            exists = ~np.isnan(shifted)
            cand &= ~exists | better_eq(V, np.where(exists, shifted, V))
        peaks.extend(
            _collapse_plateaus(V, cand, kind, strictly_better, mesh)
        )

    peaks = [p for p in peaks if abs(p.value - median) >= min_prominence]
    peaks.sort(key=lambda p: (-abs(p.value), p.j, p.i))
    return peaks


def _shift(V: np.ndarray, di: int, dj: int, fill) -> np.ndarray:
    """Grid shifted so that entry (j, i) holds the (i+di, j+dj) neighbor."""
    ny, nx = V.shape
    out = np.full((ny, nx), np.nan)
    src_i = slice(max(0, di), nx + min(0, di))
    dst_i = slice(max(0, -di), nx + min(0, -di))
    src_j = slice(max(0, dj), ny + min(0, dj))
    dst_j = slice(max(0, -dj), ny + min(0, -dj))
    out[dst_j, dst_i] = V[src_j, src_i]
    return out


def _collapse_plateaus(V, cand, kind, strictly_better, mesh) -> list[Peak]:
    ny, nx = V.shape
    seen = np.zeros_like(cand, dtype=bool)
    out = []
    for j0 in range(ny):
        for i0 in range(nx):
            if not cand[j0, i0] or seen[j0, i0]:
                continue
            value = V[j0, i0]
            group = [(j0, i0)]
            seen[j0, i0] = True
            stack = [(j0, i0)]
            has_strict = False
            while stack:
                j, i = stack.pop()
                for di, dj in _NEIGHBOR_SHIFTS:
                    i2, j2 = i + di, j + dj
                    if not (0 <= i2 < nx and 0 <= j2 < ny):
                        continue
                    if strictly_better(value, V[j2, i2]):
                        has_strict = True
                    elif V[j2, i2] == value and cand[j2, i2] and not seen[j2, i2]:
                        seen[j2, i2] = True
                        group.append((j2, i2))
                        stack.append((j2, i2))
            if not has_strict:
                continue
            cj = sum(g[0] for g in group) / len(group)
            ci = sum(g[1] for g in group) / len(group)
            j, i = min(group, key=lambda g: ((g[0] - cj) ** 2 + (g[1] - ci) ** 2,
                                             g[0] * nx + g[1]))
            out.append(Peak(
                i=i + 1, j=j + 1,
                x=float(mesh.x_centers[i]), y=float(mesh.y_centers[j]),
                value=float(value), kind=kind,
                location_class=_location_class(i + 1, j + 1, nx, ny),
            ))
    return out


# ---------------------------------------------------------------------------
# Statistics

@dataclass(frozen=True)
class SolutionStats:
    max: float
    argmax: tuple[float, float]
    min: float
    argmin: tuple[float, float]
    mean: float
    is_constant: bool

    def to_dict(self) -> dict:
        return {
            "max": self.max, "argmax": list(self.argmax),
            "min": self.min, "argmin": list(self.argmin),
            "mean": self.mean, "is_constant": self.is_constant,
        }


def solution_stats(field: GridField) -> SolutionStats:
    """Extrema (with owning cell-center coordinates), mean, constancy flag."""
    mesh = field.mesh
    vals = field.values
    s_max = int(np.argmax(vals)) + 1
    s_min = int(np.argmin(vals)) + 1
    mean = float(vals.mean())
    spread = float(vals.max() - vals.min())
    return SolutionStats(
        max=float(vals[s_max - 1]),
        argmax=mesh.cell_center(*mesh.inverse_index(s_max)),
        min=float(vals[s_min - 1]),
        argmin=mesh.cell_center(*mesh.inverse_index(s_min)),
        mean=mean,
        is_constant=spread < 1e-8 * max(1.0, abs(mean)),
    )


# ---------------------------------------------------------------------------
# Marching squares on the cell-center lattice

@dataclass
class ContourSet:
    levels: list[float]
    polylines: list[list[list[tuple[float, float]]]]  # per level


# per case: list of segments, each a pair of edge ids
# edges: 0 bottom, 1 right, 2 top, 3 left of a lattice square
_CASE_SEGMENTS = {
    0: [], 15: [],
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}


def marching_squares(field: GridField, levels) -> ContourSet:
    """Iso-level polylines of the field on its cell-center lattice.

    Standard 16-case marching squares with linear edge interpolation; the
    two saddle cases are disambiguated by the cell average.  Segments are
    chained into polylines and closed loops repeat their first vertex.
    """
    levels = [float(lv) for lv in levels]
    if any(not math.isfinite(lv) for lv in levels):
        raise ValueError(f"contour levels must be finite, got {levels}")
    mesh = field.mesh
    V = field.as_grid()
    xs = mesh.x_centers
    ys = mesh.y_centers
    out = ContourSet(levels=levels, polylines=[])
    for lv in levels:
        segments = _level_segments(V, xs, ys, lv)
        out.polylines.append(_chain_segments(segments))
    return out


def _level_segments(V, xs, ys, level):
    ny, nx = V.shape
    above = V > level
    cuts: dict[tuple, tuple[float, float]] = {}

    def edge_point(kind, a, b):
        # kind "h": lattice edge (a,b)-(a+1,b); kind "v": (a,b)-(a,b+1)
        key = (kind, a, b)
        pt = cuts.get(key)
        if pt is None:
            if kind == "h":
                v0, v1 = V[b, a], V[b, a + 1]
                t = (level - v0) / (v1 - v0)
                pt = (float(xs[a] + t * (xs[a + 1] - xs[a])), float(ys[b]))
            else:
                v0, v1 = V[b, a], V[b + 1, a]
                t = (level - v0) / (v1 - v0)
                pt = (float(xs[a]), float(ys[b] + t * (ys[b + 1] - ys[b])))
            cuts[key] = pt
        return pt

    segments = []
    for b in range(ny - 1):
        for a in range(nx - 1):
            case = (int(above[b, a]) | (int(above[b, a + 1]) << 1)
                    | (int(above[b + 1, a + 1]) << 2) | (int(above[b + 1, a]) << 3))
            if case in (0, 15):
                continue
            if case in (5, 10):
                avg = 0.25 * (V[b, a] + V[b, a + 1] + V[b + 1, a + 1] + V[b + 1, a])
                center_above = avg > level
                if case == 5:
                    pairs = [(0, 1), (2, 3)] if center_above else [(3, 0), (1, 2)]
                else:
                    pairs = [(3, 0), (1, 2)] if center_above else [(0, 1), (2, 3)]
            else:
                pairs = _CASE_SEGMENTS[case]
            edge_args = {
                0: ("h", a, b), 1: ("v", a + 1, b),
                2: ("h", a, b + 1), 3: ("v", a, b),
            }
            for e0, e1 in pairs:
                p0 = edge_point(*edge_args[e0])
                p1 = edge_point(*edge_args[e1])
                segments.append((p0, p1))
    return segments


def _chain_segments(segments):
    adj: dict[tuple, list[int]] = {}
    for idx, (p0, p1) in enumerate(segments):
        adj.setdefault(p0, []).append(idx)
        adj.setdefault(p1, []).append(idx)
    used = [False] * len(segments)

    def walk(start_pt, seg_idx):
        line = [start_pt]
        pt = start_pt
        idx = seg_idx
        while True:
            used[idx] = True
            p0, p1 = segments[idx]
            pt = p1 if pt == p0 else p0
            line.append(pt)
            nxt = [k for k in adj[pt] if not used[k]]
            if not nxt:
                return line
            idx = nxt[0]

    polylines = []
    # open chains first, anchored at degree-1 vertices
    for pt, iset in adj.items():
        if len(iset) != 1:
            continue
        idx = iset[0]
        if not used[idx]:
            polylines.append(walk(pt, idx))
    # remaining segments belong to closed loops
    for idx in range(len(segments)):
        if not used[idx]:
            loop = walk(segments[idx][0], idx)
            if loop[0] != loop[-1]:
                loop.append(loop[0])
            polylines.append(loop)
    return polylines


# ---------------------------------------------------------------------------
# Square-grid symmetries

SQUARE_SYMMETRIES = (
    "identity", "rot90", "rot180", "rot270",
    "flip_x", "flip_y", "diag", "antidiag",
)


def apply_symmetry(field: GridField, name: str) -> GridField:
    """Field transformed by one of the eight square-grid symmetries.

    flip_x mirrors the i index, flip_y the j index; diag transposes (i, j);
    the rotations act counterclockwise on the grid.
    """
    mesh = field.mesh
    if mesh.n_x != mesh.n_y:
        raise ValueError(
            f"square symmetries need n_x == n_y, got {mesh.n_x} x {mesh.n_y}"
        )
    V = field.as_grid()
    if name == "identity":
        W = V
    elif name == "rot90":
        W = np.rot90(V, 1)
    elif name == "rot180":
        W = np.rot90(V, 2)
    elif name == "rot270":
        W = np.rot90(V, 3)
    elif name == "flip_x":
        W = V[:, ::-1]
    elif name == "flip_y":
        W = V[::-1, :]
    elif name == "diag":
        W = V.T
    elif name == "antidiag":
        W = V[::-1, ::-1].T
    else:
        raise ValueError(f"unknown symmetry {name!r} (known: {SQUARE_SYMMETRIES})")
    return GridField(mesh, np.ascontiguousarray(W).reshape(-1))


def symmetry_report(field: GridField) -> dict[str, float]:
    """Max-norm deviation ||sigma X - X||_inf for each square symmetry."""
    base = field.values
    return {
        name: float(np.max(np.abs(apply_symmetry(field, name).values - base)))
        for name in SQUARE_SYMMETRIES
    }


# ---------------------------------------------------------------------------
# Exports

def contours_to_json_dict(contours: ContourSet) -> list[dict]:
    return [
        {"level": lv, "polylines": [[[p[0], p[1]] for p in line] for line in lines]}
        for lv, lines in zip(contours.levels, contours.polylines)
    ]


def write_contours_json(contours: ContourSet, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(contours_to_json_dict(contours), fh)
        fh.write("\n")


def write_contours_csv(contours: ContourSet, path) -> None:
    lines = ["level,polyline_id,x,y"]
    for lv, polys in zip(contours.levels, contours.polylines):
        for pid, poly in enumerate(polys):
            for x, y in poly:
                lines.append(f"{lv:.17g},{pid},{x:.17g},{y:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_peaks_csv(peaks: list[Peak], path) -> None:
    lines = ["i,j,x,y,value,kind,location_class"]
    for p in peaks:
        lines.append(
            f"{p.i},{p.j},{p.x:.17g},{p.y:.17g},{p.value:.17g},{p.kind},"
            f"{p.location_class}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
