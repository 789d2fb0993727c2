"""Finite-volume residual and analytic Jacobian of -d*Lap(u) + u = u^q.

Each control volume contributes one equation: minus the diffusive flux sum
over its interior edges plus ``h_x h_y (u - u^q)``.  Edges on the outer wall
carry zero flux (homogeneous Neumann), implemented by simply omitting the
missing-neighbor term, which is algebraically the same as mirroring the
boundary cell into a ghost cell.

Term ordering note: per cell, neighbor contributions accumulate in ascending
single-index order (south, west, diagonal, east, north) with the nonlinear
term subtracted last.  Keeping this order fixed makes runs bit-reproducible
and lets small-grid transcription tests compare exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import GridField, Mesh

__all__ = [
    "SolverParams",
    "StencilCoefficients",
    "StencilMatrix",
    "pow_q",
    "dpow_q",
    "residual",
    "residual_uniform",
    "jacobian",
]


@dataclass(frozen=True)
class SolverParams:
    """Diffusion coefficient d and nonlinearity exponent q, both > 0."""

    d: float
    q: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.d) and self.d > 0):
            raise ValueError(f"diffusion d must be positive, got {self.d}")
        if not (np.isfinite(self.q) and self.q > 0):
            raise ValueError(f"exponent q must be positive, got {self.q}")


def pow_q(u, q):
    """Sign-preserving real power sign(u) * |u|^q.

    Extends u^q to negative arguments so that transient Newton overshoots
    below zero stay in real arithmetic.  Accepts scalars or arrays.
    """
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    with np.errstate(over="ignore"):
        return np.sign(u) * np.abs(u) ** q


def dpow_q(u, q):
    """Derivative q * |u|^(q-1) of pow_q, valid for u != 0.

    At u = 0 the derivative is 0 for q > 1 and 1 for q = 1; for q < 1 it is
    singular and a zero argument raises.
    """
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    au = np.abs(u)
    if q < 1 and np.any(au == 0):
        raise ValueError(f"dpow_q singular: q={q} < 1 with a zero component")
    with np.errstate(over="ignore"):
        return q * au ** (q - 1.0)


def _weights(mesh: Mesh) -> tuple[float, float]:
    # wx scales vertical-neighbor fluxes, wy horizontal ones
    return mesh.h_x / mesh.h_y, mesh.h_y / mesh.h_x


def _neighbor_counts(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-row vertical and per-column horizontal neighbor counts (0, 1 or 2)."""
    ny, nx = mesh.n_y, mesh.n_x
    jj = np.arange(1, ny + 1)
    ii = np.arange(1, nx + 1)
    kx = (jj > 1).astype(float) + (jj < ny)
    ky = (ii > 1).astype(float) + (ii < nx)
    return kx, ky


def _diag_base(mesh: Mesh, d: float) -> np.ndarray:
    """Linear diagonal coefficient h_x h_y + d * (flux weights of interior edges)."""
    wx, wy = _weights(mesh)
    hxhy = mesh.h_x * mesh.h_y
    kx, ky = _neighbor_counts(mesh)
    return hxhy + d * (kx[:, None] * wx + ky[None, :] * wy)


def _check_field(mesh: Mesh, X: GridField) -> np.ndarray:
    if X.mesh is not mesh and (X.mesh.n_x != mesh.n_x or X.mesh.n_y != mesh.n_y):
        raise ValueError(
            f"field on {X.mesh.n_x} x {X.mesh.n_y} grid does not match "
            f"{mesh.n_x} x {mesh.n_y} mesh"
        )
    return X.values


def residual(mesh: Mesh, params: SolverParams, X: GridField) -> GridField:
    """Assembled nonlinear residual F(X), one component per control volume.

    F_s = -d * sum of two-point fluxes over existing neighbors
          + h_x h_y (X_s - pow_q(X_s)), with zero flux through the wall.
    """
    vals = _check_field(mesh, X)
    ny, nx = mesh.n_y, mesh.n_x
    V = vals.reshape(ny, nx)
    d = params.d
    wx, wy = _weights(mesh)
    hxhy = mesh.h_x * mesh.h_y
    cs = -d * wx  # south/north neighbors
    ce = -d * wy  # west/east neighbors

    acc = np.zeros((ny, nx))
    acc[1:, :] += cs * V[:-1, :]
    acc[:, 1:] += ce * V[:, :-1]
    acc += _diag_base(mesh, d) * V
    acc[:, :-1] += ce * V[:, 1:]
    acc[:-1, :] += cs * V[1:, :]
    F = acc - hxhy * pow_q(V, params.q)
    return GridField(mesh, F.reshape(-1))


@dataclass(frozen=True)
class StencilCoefficients:
    """Diagonal bases of the uniform square-grid stencil.

    With uniform step h: a = h^2 + 2d (corner cells), b = h^2 + 3d (edge
    cells), c = h^2 + 4d (interior cells); off-diagonal magnitude d.
    """

    a: float
    b: float
    c: float
    d_off: float

    @classmethod
    def from_mesh(cls, mesh: Mesh, params: SolverParams) -> "StencilCoefficients":
        if not mesh.is_uniform():
            raise ValueError(
                f"uniform stencil requires h_x == h_y, got {mesh.h_x} vs {mesh.h_y}"
            )
        h = mesh.h_x
        d = params.d
        h2 = h * h
        return cls(h2 + 2 * d, h2 + 3 * d, h2 + 4 * d, d)


def residual_uniform(mesh: Mesh, params: SolverParams, X: GridField) -> GridField:
    """Fast-path residual on a uniform square grid (n_x = n_y, h_x = h_y).

    Uses the single-index form with diagonal bases a/b/c; agrees with
    :func:`residual` on the same inputs.
    """
    if not mesh.is_uniform():
        raise ValueError(
            f"residual_uniform requires a uniform mesh, got h_x={mesh.h_x}, "
            f"h_y={mesh.h_y}"
        )
    if mesh.n_x != mesh.n_y:
        raise ValueError(
            f"residual_uniform requires a square grid, got {mesh.n_x} x {mesh.n_y}"
        )
    vals = _check_field(mesh, X)
    n = mesh.n_x
    V = vals.reshape(n, n)
    coef = StencilCoefficients.from_mesh(mesh, params)
    d = coef.d_off
    h2 = mesh.h_x * mesh.h_x

    kx, ky = _neighbor_counts(mesh)
    count = kx[:, None] + ky[None, :]
    base = np.where(count == 4, coef.c, np.where(count == 3, coef.b, coef.a))

    acc = np.zeros((n, n))
    acc[1:, :] += -d * V[:-1, :]
    acc[:, 1:] += -d * V[:, :-1]
    acc += base * V
    acc[:, :-1] += -d * V[:, 1:]
    acc[:-1, :] += -d * V[1:, :]
    F = acc - h2 * pow_q(V, params.q)
    return GridField(mesh, F.reshape(-1))


@dataclass(frozen=True, eq=False)
class StencilMatrix:
    """Pentadiagonal matrix stored by bands.

    ``east[k]`` is entry (k, k+1) and ``west[k]`` entry (k+1, k) in 0-based
    terms; ``north[k]``/(``south[k]``) sit at offsets +/- n_x.  Band slots
    crossing a grid-row boundary hold exact zeros (structurally absent).
    """

    n: int
    n_x: int
    diag: np.ndarray
    east: np.ndarray
    west: np.ndarray
    north: np.ndarray
    south: np.ndarray

    def __post_init__(self) -> None:
        off = max(self.n - self.n_x, 0)
        if len(self.diag) != self.n or len(self.east) != max(self.n - 1, 0):
            raise ValueError("band lengths inconsistent with matrix dimension")
        if len(self.north) != off or len(self.south) != off:
            raise ValueError("north/south band length must be n - n_x")

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if self.n > 1:
            out[:-1] += self.east * v[1:]
            out[1:] += self.west * v[:-1]
        k = self.n_x
        if self.n > k:
            out[:-k] += self.north * v[k:]
            out[k:] += self.south * v[:-k]
        return out

    def to_dense(self) -> np.ndarray:
        A = np.diag(self.diag)
        if self.n > 1:
            A += np.diag(self.east, 1) + np.diag(self.west, -1)
        if self.n > self.n_x:
            A += np.diag(self.north, self.n_x) + np.diag(self.south, -self.n_x)
        return A

    def norm_inf(self) -> float:
        rowsums = (np.abs(self.diag)
                   + self._row_abs(self.east, 0) + self._row_abs(self.west, 1)
                   + self._row_abs(self.north, 0, self.n_x)
                   + self._row_abs(self.south, 1, self.n_x))
        return float(rowsums.max())

    def _row_abs(self, band: np.ndarray, side: int, off: int = 1) -> np.ndarray:
        # side 0: band entry belongs to row k; side 1: to row k + off
        out = np.zeros(self.n)
        if band.size == 0:
            return out
        if side == 0:
            out[: self.n - off] = np.abs(band)
        else:
            out[off:] = np.abs(band)
        return out


def jacobian(mesh: Mesh, params: SolverParams, X: GridField) -> StencilMatrix:
    """Analytic Jacobian of :func:`residual` at X.

    Row s carries ``diag_base_s - h_x h_y dpow_q(X_s)`` on the diagonal and
    ``-d`` times the edge weight on each existing neighbor.
    """
    vals = _check_field(mesh, X)
    ny, nx = mesh.n_y, mesh.n_x
    n = mesh.n_cells
    d = params.d
    wx, wy = _weights(mesh)
    hxhy = mesh.h_x * mesh.h_y

    diag = _diag_base(mesh, d).reshape(-1) - hxhy * dpow_q(vals, params.q)

    east = np.full(max(n - 1, 0), -d * wy)
    if nx >= 1 and n > 1:
        # absent where cell k is the last in its grid row
        wrap = (np.arange(1, n) % nx) == 0
        east[wrap] = 0.0
    west = east.copy()

    off = max(n - nx, 0)
    north = np.full(off, -d * wx)
    south = north.copy()

    return StencilMatrix(n, nx, diag, east, west, north, south)
