"""Spatial fields on [0, pi] with Neumann boundary.

Uniform grid, trapezoid quadrature, the Neumann cosine eigenbasis, and
nodal (sign-change) analysis.  Everything here is pure: functions never
mutate their inputs.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpatialGrid",
    "StateField",
    "EigenMode",
    "ZeroKind",
    "zero_number",
    "classify_zero",
    "inner",
    "norm",
    "project_mode",
    "eigenmode",
    "mode_matrix",
    "field_from_modes",
    "derivative",
    "second_derivative",
    "write_field_csv",
    "read_field_csv",
]


class GridMismatchError(ValueError):
    """Two fields do not live on the same grid."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [0, pi] with an odd number of nodes (pi/2 is a node)."""

    n_points: int = 257

    def __post_init__(self):
        if self.n_points < 33:
            raise ValueError(f"n_points must be >= 33, got {self.n_points}")
        if self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd, got {self.n_points}")

    @property
    def h(self) -> float:
        return np.pi / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        """Composite trapezoid quadrature weights."""
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass
class StateField:
    """A spatial profile u(.) sampled on a grid."""

    grid: SpatialGrid
    values: np.ndarray
    time_stamp: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n_points} points)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "StateField":
        return StateField(self.grid, self.values.copy(), self.time_stamp)

    def __add__(self, other: "StateField") -> "StateField":
        _check_same_grid(self, other)
        return StateField(self.grid, self.values + other.values)

    def __sub__(self, other: "StateField") -> "StateField":
        _check_same_grid(self, other)
        return StateField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "StateField":
        return StateField(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "StateField":
        return StateField(self.grid, -self.values)


def _check_same_grid(u: StateField, v: StateField) -> None:
    if u.grid != v.grid:
        raise GridMismatchError("fields live on different grids")


@dataclass(frozen=True)
class EigenMode:
    """Normalized Neumann eigenmode phi_j of d^2/dx^2 on [0, pi].

    phi_0 = 1/sqrt(pi), phi_j = sqrt(2/pi) cos(jx) for j >= 1, with
    eigenvalue lam_j = -j^2.
    """

    index: int
    grid: SpatialGrid

    @property
    def eigenvalue(self) -> float:
        return -float(self.index ** 2)

    @property
    def values(self) -> np.ndarray:
        x = self.grid.nodes
        if self.index == 0:
            return np.full_like(x, 1.0 / np.sqrt(np.pi))
        return np.sqrt(2.0 / np.pi) * np.cos(self.index * x)

    def as_field(self) -> StateField:
        return StateField(self.grid, self.values)


def eigenmode(j: int, grid: SpatialGrid) -> StateField:
    """Return phi_j sampled on the grid, L2-normalized."""
    if j < 0:
        raise ValueError("mode index must be nonnegative")
    return EigenMode(j, grid).as_field()


def mode_matrix(grid: SpatialGrid, n_modes: int) -> np.ndarray:
    """Rows phi_0 .. phi_{n_modes-1} sampled on the grid."""
    return np.vstack([EigenMode(j, grid).values for j in range(n_modes)])


def field_from_modes(grid: SpatialGrid, coeffs) -> StateField:
    """Sum_j c_j phi_j as a StateField."""
    coeffs = np.asarray(coeffs, dtype=float)
    return StateField(grid, coeffs @ mode_matrix(grid, len(coeffs)))


def inner(u: StateField, v: StateField) -> float:
    """L2 pairing by composite trapezoid quadrature."""
    _check_same_grid(u, v)
    return float(np.dot(u.grid.weights, u.values * v.values))


def norm(u: StateField) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))


def project_mode(u: StateField, j: int) -> float:
    """<u, phi_j> with the normalized basis."""
    if j < 0:
        raise ValueError("mode index must be nonnegative")
    return inner(u, eigenmode(j, u.grid))


def zero_number(u: StateField, tol: float | None = None) -> int:
    """Count strict sign changes of u along the grid.

    Entries with |u_i| <= tol are suppressed before counting.  Returns -1
    if every entry lies within the tolerance band (u identically zero).
    The default tolerance is 1e-9 * max|u|, which kills floating-point
    dust without masking genuine sign changes.
    """
    vals = u.values
    if tol is None:
        tol = 1e-9 * float(np.max(np.abs(vals))) if vals.size else 0.0
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    active = vals[np.abs(vals) > tol]
    if active.size == 0:
        return -1
    signs = np.sign(active)
    return int(np.count_nonzero(signs[1:] * signs[:-1] < 0))


class ZeroKind(enum.Enum):
    NOT_A_ZERO = "not_a_zero"
    SIMPLE = "simple"
    MULTIPLE = "multiple"


def derivative(u: StateField) -> np.ndarray:
    """Second-order first derivative; one-sided stencils at the boundary."""
    vals, h = u.values, u.grid.h
    d = np.empty_like(vals)
    d[1:-1] = (vals[2:] - vals[:-2]) / (2 * h)
    d[0] = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
    d[-1] = (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * h)
    return d


def second_derivative(u: StateField, neumann: bool = True) -> np.ndarray:
    """Second-order second derivative with ghost-node Neumann closure."""
    vals, h = u.values, u.grid.h
    d2 = np.empty_like(vals)
    d2[1:-1] = (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / h ** 2
    if neumann:
        d2[0] = 2 * (vals[1] - vals[0]) / h ** 2
        d2[-1] = 2 * (vals[-2] - vals[-1]) / h ** 2
    else:
        d2[0] = (2 * vals[0] - 5 * vals[1] + 4 * vals[2] - vals[3]) / h ** 2
        d2[-1] = (2 * vals[-1] - 5 * vals[-2] + 4 * vals[-3] - vals[-4]) / h ** 2
    return d2


def classify_zero(
    u: StateField, i: int, tol_val: float = 1e-9, tol_deriv: float = 1e-6
) -> ZeroKind:
    """Classify node i as a simple zero, multiple zero, or not a zero."""
    if not 0 <= i < u.grid.n_points:
        raise IndexError(f"node index {i} out of range")
    if abs(u.values[i]) > tol_val:
        return ZeroKind.NOT_A_ZERO
    d = derivative(u)[i]
    return ZeroKind.SIMPLE if abs(d) > tol_deriv else ZeroKind.MULTIPLE


def write_field_csv(u: StateField, fh) -> None:
    """Serialize as '# n=...,h=...' header plus 'x,u' rows (17 sig digits)."""
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write(f"# n={u.grid.n_points},h={u.grid.h:.17g}\n")
        fh.write("x,u\n")
        for x, v in zip(u.grid.nodes, u.values):
            fh.write(f"{x:.17g},{v:.17g}\n")
    finally:
        if close:
            fh.close()


def read_field_csv(fh) -> StateField:
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise ValueError("missing grid metadata header")
        n = int(header.split("n=")[1].split(",")[0])
        fh.readline()  # column header
        vals = np.loadtxt(fh, delimiter=",")
    finally:
        if close:
            fh.close()
    return StateField(SpatialGrid(n), vals[:, 1])


def field_to_csv_text(u: StateField) -> str:
    buf = io.StringIO()
    write_field_csv(u, buf)
    return buf.getvalue()
