"""Damped Newton iteration with a banded direct linear solve.

The Jacobian is pentadiagonal with bandwidth n_x, so each correction comes
from a banded LU factorization with partial pivoting.  Steps are optionally
damped by Armijo backtracking on the residual max-norm; when backtracking
bottoms out at the step floor the step is taken anyway and flagged, since
occasional non-monotone steps get Newton off plateaus in the narrow
multi-peak basins of this problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .mesh import GridField, Mesh
from .system import SolverParams, StencilMatrix, jacobian, residual

__all__ = [
    "ArmijoDamping",
    "NewtonConfig",
    "SolveReport",
    "SingularMatrixError",
    "linear_solve",
    "newton_solve",
]

_CONSTANT_REL_SPREAD = 1e-8


class SingularMatrixError(ArithmeticError):
    """Raised when the banded solve cannot produce a reliable correction."""


@dataclass(frozen=True)
class ArmijoDamping:
    """Backtracking line-search parameters (sufficient decrease in max-norm)."""

    c: float = 1e-4
    shrink: float = 0.5
    min_step: float = 2.0 ** -30

    def __post_init__(self) -> None:
        if not 0 < self.c < 1:
            raise ValueError(f"armijo c must lie in (0,1), got {self.c}")
        if not 0 < self.shrink < 1:
            raise ValueError(f"armijo shrink must lie in (0,1), got {self.shrink}")
        if not 0 < self.min_step <= 1:
            raise ValueError(f"armijo min_step must lie in (0,1], got {self.min_step}")


@dataclass(frozen=True)
class NewtonConfig:
    tol_residual: float = 1e-10
    tol_step: float = 1e-12
    max_iterations: int = 200
    damping: ArmijoDamping | None = field(default_factory=ArmijoDamping)

    def __post_init__(self) -> None:
        if self.tol_residual <= 0 or self.tol_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class SolveReport:
    """Outcome of one Newton run; ``solution`` is the last iterate either way."""

    converged: bool
    iterations: int
    residual_history: list[float]
    final_residual: float
    positive: bool
    constant_solution: bool
    solution: GridField
    floor_iterations: list[int] = field(default_factory=list)
    failure: str | None = None

    def summary_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "positive": self.positive,
            "constant_solution": self.constant_solution,
            "residual_history": list(self.residual_history),
            "floor_iterations": list(self.floor_iterations),
            "failure": self.failure,
        }


def linear_solve(matrix: StencilMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve matrix * dx = rhs by banded LU with partial pivoting.

    The result is verified against the backward-error bound
    ||A dx - rhs||_inf <= 1e-8 (||A||_inf ||dx||_inf + ||rhs||_inf); a solve
    that misses it (or a structurally singular factorization) raises
    :class:`SingularMatrixError`.
    """
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    n = matrix.n
    if len(rhs) != n:
        raise ValueError(f"rhs length {len(rhs)} does not match matrix dimension {n}")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs contains non-finite entries")
    if n == 1:
        if matrix.diag[0] == 0 or not np.isfinite(matrix.diag[0]):
            raise SingularMatrixError("1x1 matrix has zero or non-finite pivot")
        return rhs / matrix.diag[0]

    bw = min(matrix.n_x, n - 1)
    ab = np.zeros((2 * bw + 1, n))
    ab[bw, :] = matrix.diag
    # += so coinciding offsets (n_x == 1) accumulate instead of clobbering
    ab[bw - 1, 1:] += matrix.east
    ab[bw + 1, :-1] += matrix.west
    k = matrix.n_x
    if n > k:
        ab[bw - k, k:] += matrix.north
        ab[bw + k, :-k] += matrix.south
    try:
        dx = solve_banded((bw, bw), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"banded factorization failed: {exc}") from None

    if not np.all(np.isfinite(dx)):
        raise SingularMatrixError("banded solve produced non-finite entries")
    defect = float(np.max(np.abs(matrix.matvec(dx) - rhs)))
    bound = 1e-8 * (matrix.norm_inf() * float(np.max(np.abs(dx)))
                    + float(np.max(np.abs(rhs))))
    if defect > bound and defect > 0:
        raise SingularMatrixError(
            f"numerically singular matrix: solve defect {defect:.3e} "
            f"exceeds bound {bound:.3e}"
        )
    return dx


def _norm_inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v)))


def _first_bad_cell(v: np.ndarray) -> int:
    return int(np.argmax(~np.isfinite(v))) + 1


def newton_solve(mesh: Mesh, params: SolverParams, x0: GridField,
                 config: NewtonConfig | None = None) -> SolveReport:
    """Run damped Newton on the assembled system from the seed ``x0``.

    Iterates X <- X + alpha * dX with J(X) dX = -F(X) until the residual
    max-norm or the step max-norm drops below tolerance, the iteration cap
    is hit, or the linear solve fails.  Solver-level failures are recorded
    in the report rather than raised, so partial results stay exportable.
    """
    if config is None:
        config = NewtonConfig()
    X = np.array(x0.values, dtype=float)
    history: list[float] = []
    floor_iters: list[int] = []
    converged = False
    failure: str | None = None

    def assemble(values: np.ndarray) -> np.ndarray:
        return residual(mesh, params, GridField(mesh, values)).values

    k = 0
    for k in range(1, config.max_iterations + 1):
        F = assemble(X)
        if not np.all(np.isfinite(F)):
            history.append(float("inf"))
            failure = f"non-finite residual at cell s={_first_bad_cell(F)}"
            break
        rnorm = _norm_inf(F)
        history.append(rnorm)
        if rnorm <= config.tol_residual:
            converged = True
            break

        try:
            dx = linear_solve(jacobian(mesh, params, GridField(mesh, X)), -F)
        except SingularMatrixError as exc:
            failure = str(exc)
            break

        alpha = 1.0
        if config.damping is not None:
            dmp = config.damping
            while True:
                trial = X + alpha * dx
                Ft = assemble(trial)
                ok = np.all(np.isfinite(Ft)) and \
                    _norm_inf(Ft) <= (1.0 - dmp.c * alpha) * rnorm
                if ok:
                    break
                if alpha * dmp.shrink < dmp.min_step:
                    alpha = dmp.min_step
                    trial = X + alpha * dx
                    if not np.all(np.isfinite(assemble(trial))):
                        failure = (
                            f"non-finite iterate at cell s={_first_bad_cell(trial)} "
                            f"after step-floor event"
                        )
                    floor_iters.append(k)
                    break
                alpha *= dmp.shrink
        if failure is not None:
            break

        X = X + alpha * dx
        if not np.all(np.isfinite(X)):
            failure = f"non-finite iterate at cell s={_first_bad_cell(X)}"
            break
        if _norm_inf(alpha * dx) <= config.tol_step:
            F = assemble(X)
            history.append(_norm_inf(F))
            converged = True
            break

    solution = GridField(mesh, X)
    vals = solution.values
    mean = float(vals.mean())
    spread = float(vals.max() - vals.min())
    return SolveReport(
        converged=converged,
        iterations=k,
        residual_history=history,
        final_residual=history[-1] if history else float("nan"),
        positive=bool(np.all(vals > 0)),
        constant_solution=spread < _CONSTANT_REL_SPREAD * max(1.0, abs(mean)),
        solution=solution,
        floor_iterations=floor_iters,
        failure=failure,
    )
