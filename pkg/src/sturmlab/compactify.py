"""Poincare compactification and the flow on the sphere at infinity.

The hemisphere coordinates are (chi, z) = (u, 1)/sqrt(1 + |u|^2); the
equator z = 0 carries the limiting flow of grow-up dynamics.  For a
constant limiting diffusion the equator flow reduces to a mode ODE on a
Galerkin truncation, integrated here with per-step renormalization and a
monotone Dirichlet energy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .field import (
    SpatialGrid,
    StateField,
    EigenMode,
    eigenmode,
    mode_matrix,
    inner,
    norm,
    derivative,
)
from .dynamics import TrajectoryRecord

__all__ = [
    "ProjectedState",
    "PlaneState",
    "InfinityEquilibrium",
    "AtInfinityError",
    "ChartDomainError",
    "DirectionUndetermined",
    "project",
    "unproject",
    "infinity_equilibria",
    "sphere_flow_step",
    "sphere_flow_run",
    "SphereFlowResult",
    "energy_infinity",
    "mode_energy",
    "plane_project",
    "plane_from_projected",
    "plane_flow_rates",
    "growup_direction",
    "tail_bound",
]

GALERKIN_MODES = 32


class AtInfinityError(ValueError):
    """The state lies on the equator; no finite representative exists."""


class ChartDomainError(ValueError):
    """The state is outside the domain of the requested hyperplane chart."""


class DirectionUndetermined(RuntimeError):
    """No single mode dominates within the recorded horizon."""


@dataclass
class ProjectedState:
    chi: StateField
    z: float

    def __post_init__(self):
        total = inner(self.chi, self.chi) + self.z ** 2
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"(chi, z) is off the unit sphere: |.|^2 = {total}")


@dataclass
class PlaneState:
    xi: StateField
    zeta: float
    j_star: int


@dataclass(frozen=True)
class InfinityEquilibrium:
    j: int
    sign: int  # +1 or -1
    grid: SpatialGrid

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.j < 0:
            raise ValueError("mode index must be nonnegative")

    @property
    def direction(self) -> StateField:
        return eigenmode(self.j, self.grid)

    def zero_number(self) -> int:
        return self.j

    def node_id(self) -> str:
        return f"{'+' if self.sign > 0 else '-'}Phi{self.j}"


def project(u: StateField) -> ProjectedState:
    """(chi, z) = (u, 1)/sqrt(1 + |u|^2) with the L2 norm."""
    n2 = inner(u, u)
    s = 1.0 / math.sqrt(1.0 + n2)
    return ProjectedState(StateField(u.grid, s * u.values), s)


def unproject(p: ProjectedState) -> StateField:
    """Inverse projection u = chi / z; fails on the equator."""
    if p.z <= 0.0:
        raise AtInfinityError("z = 0: state at infinity has no finite preimage")
    return StateField(p.chi.grid, p.chi.values / p.z)


def infinity_equilibria(a_inf: float, b: float,
                        grid: Optional[SpatialGrid] = None) -> list:
    """+-Phi_j for j = 0 .. floor(sqrt(b/a_inf))."""
    if a_inf <= 0 or b <= 0:
        raise ValueError("need a_inf > 0 and b > 0")
    if grid is None:
        grid = SpatialGrid()
    n_inf = int(math.floor(math.sqrt(b / a_inf)))
    out = []
    for j in range(n_inf + 1):
        out.append(InfinityEquilibrium(j, +1, grid))
        out.append(InfinityEquilibrium(j, -1, grid))
    return out


def _chi_coeffs(chi: StateField, n_modes: int) -> np.ndarray:
    pm = mode_matrix(chi.grid, n_modes) * chi.grid.weights
    return pm @ chi.values


def _mode_rhs_constant(c: np.ndarray, lam: np.ndarray, a_inf: float) -> np.ndarray:
    drift = float(c @ (lam * c))
    return a_inf * (lam * c - drift * c)


def _mode_rhs_callable(c: np.ndarray, lam: np.ndarray, a_fn: Callable,
                       grid: SpatialGrid, modes: np.ndarray) -> np.ndarray:
    chi_vals = c @ modes
    chi_xx = (lam * c) @ modes
    chi_x = derivative(StateField(grid, chi_vals))
    a_vals = np.broadcast_to(
        np.asarray(a_fn(grid.nodes, chi_vals, chi_x), dtype=float),
        chi_vals.shape)
    w = a_vals * chi_xx
    drift = float(np.dot(grid.weights, w * chi_vals))
    rhs_vals = w - drift * chi_vals
    return (modes * grid.weights) @ rhs_vals


def _rk4(c, dt, rhs):
    k1 = rhs(c)
    k2 = rhs(c + 0.5 * dt * k1)
    k3 = rhs(c + 0.5 * dt * k2)
    k4 = rhs(c + dt * k3)
    return c + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class StepRejected(RuntimeError):
    """Norm drifted beyond tolerance before renormalization; halve dt."""


def sphere_flow_step(
    chi: StateField,
    dt: float,
    a_inf_fn: Union[float, Callable],
    n_modes: int = GALERKIN_MODES,
    drift_tol: float = 1e-3,
) -> StateField:
    """One explicit step of the equator flow, renormalized to |chi| = 1.

    Works in a Galerkin truncation of n_modes normalized cosine modes;
    for a constant limiting diffusion the pure mode form of the flow is
    used.  Raises StepRejected if the pre-renormalization norm drifts by
    more than drift_tol (caller halves dt).
    """
    if abs(norm(chi) - 1.0) > 1e-6:
        raise ValueError("sphere flow requires |chi| = 1 (within 1e-6)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = chi.grid
    lam = -np.arange(n_modes, dtype=float) ** 2
    c = _chi_coeffs(chi, n_modes)
    nc = np.linalg.norm(c)
    if nc == 0:
        raise ValueError("chi has no content in the Galerkin band")
    c = c / nc
    if isinstance(a_inf_fn, (int, float)):
        rhs = lambda cc: _mode_rhs_constant(cc, lam, float(a_inf_fn))
        modes = None
    else:
        modes = mode_matrix(grid, n_modes)
        rhs = lambda cc: _mode_rhs_callable(cc, lam, a_inf_fn, grid, modes)
    c_new = _rk4(c, dt, rhs)
    drift = abs(np.linalg.norm(c_new) - 1.0)
    if drift > drift_tol:
        raise StepRejected(f"norm drift {drift:.3g} exceeds {drift_tol}")
    c_new = c_new / np.linalg.norm(c_new)
    if modes is None:
        modes = mode_matrix(grid, n_modes)
    return StateField(grid, c_new @ modes)


def mode_energy(c: np.ndarray) -> float:
    """Dirichlet energy sum_j j^2 c_j^2 / 2 in the normalized mode basis."""
    j = np.arange(len(c), dtype=float)
    return 0.5 * float(np.sum(j ** 2 * c ** 2))


def energy_infinity(chi: StateField) -> float:
    """Trapezoid quadrature of |chi_x|^2 / 2."""
    if abs(norm(chi) - 1.0) > 1e-6:
        raise ValueError("energy at infinity is defined on the unit sphere")
    d = derivative(chi)
    return 0.5 * float(np.dot(chi.grid.weights, d * d))


@dataclass
class SphereFlowResult:
    grid: SpatialGrid
    times: np.ndarray
    coeff_history: np.ndarray  # shape (n_times, n_modes)
    energies: np.ndarray
    converged: bool
    limit_index: Optional[int]
    limit_sign: Optional[int]

    def final_chi(self) -> StateField:
        c = self.coeff_history[-1]
        return StateField(self.grid,
                          c @ mode_matrix(self.grid, len(c)))


def sphere_flow_run(
    chi0: StateField,
    a_inf_fn: Union[float, Callable],
    t_max: float = 50.0,
    dt_init: Optional[float] = None,
    n_modes: int = GALERKIN_MODES,
    fixed_point_tol: float = 1e-8,
    record_every: int = 10,
) -> SphereFlowResult:
    """Integrate the equator flow until it settles at some +-phi_j.

    Energy must not increase by more than 1e-12 on an accepted step;
    offending steps are rejected and dt halved.
    """
    grid = chi0.grid
    lam = -np.arange(n_modes, dtype=float) ** 2
    c = _chi_coeffs(chi0, n_modes)
    c = c / np.linalg.norm(c)
    a_const = isinstance(a_inf_fn, (int, float))
    if a_const:
        rhs = lambda cc: _mode_rhs_constant(cc, lam, float(a_inf_fn))
        a_scale = float(a_inf_fn)
    else:
        modes_full = mode_matrix(grid, n_modes)
        rhs = lambda cc: _mode_rhs_callable(cc, lam, a_inf_fn, grid, modes_full)
        probe = np.asarray(a_inf_fn(grid.nodes, chi0.values,
                                    derivative(chi0)), dtype=float)
        a_scale = float(np.max(np.abs(probe)))
    dt_cap = 2.0 / (a_scale * max((n_modes - 1) ** 2, 1))
    dt = dt_init if dt_init is not None else dt_cap / 2

    t = 0.0
    times, hist, energies = [0.0], [c.copy()], [mode_energy(c)]
    e_prev = energies[0]
    converged = False
    i = 0
    while t < t_max:
        dtn = min(dt, t_max - t)
        c_try = _rk4(c, dtn, rhs)
        drift = abs(np.linalg.norm(c_try) - 1.0)
        c_try = c_try / np.linalg.norm(c_try)
        e_try = mode_energy(c_try)
        if drift > 1e-3 or e_try - e_prev > 1e-12:
            dt = dtn / 2
            if dt < 1e-12:
                raise RuntimeError("sphere flow dt underflow")
            continue
        c, t, e_prev = c_try, t + dtn, e_try
        i += 1
        dt = min(dt * 1.05, dt_cap)
        if i % record_every == 0:
            times.append(t)
            hist.append(c.copy())
            energies.append(e_try)
        res = np.linalg.norm(rhs(c))
        if res <= fixed_point_tol:
            converged = True
            break
    if times[-1] != t:
        times.append(t)
        hist.append(c.copy())
        energies.append(e_prev)

    limit_index = limit_sign = None
    jdom = int(np.argmax(np.abs(c)))
    rest = math.sqrt(max(1.0 - c[jdom] ** 2, 0.0))
    if rest < 1e-6:
        limit_index = jdom
        limit_sign = 1 if c[jdom] > 0 else -1
        converged = True
    return SphereFlowResult(
        grid=grid,
        times=np.array(times),
        coeff_history=np.array(hist),
        energies=np.array(energies),
        converged=converged,
        limit_index=limit_index,
        limit_sign=limit_sign,
    )


def plane_project(u: StateField, j_star: int, tol: float = 1e-12) -> PlaneState:
    """(xi, zeta) = (u, 1)/<u, phi_{j*}> on the positive-sign sheet."""
    from .field import project_mode

    denom = project_mode(u, j_star)
    if denom <= tol:
        raise ChartDomainError(
            f"<u, phi_{j_star}> = {denom:.3g} <= {tol}: outside the chart"
        )
    return PlaneState(StateField(u.grid, u.values / denom), 1.0 / denom, j_star)


def plane_from_projected(p: ProjectedState, j_star: int,
                         tol: float = 1e-12) -> PlaneState:
    """Chart change (xi, zeta) = (chi, z)/<chi, phi_{j*}>."""
    from .field import project_mode

    denom = project_mode(p.chi, j_star)
    if denom <= tol:
        raise ChartDomainError(
            f"<chi, phi_{j_star}> = {denom:.3g} <= {tol}: outside the chart"
        )
    return PlaneState(StateField(p.chi.grid, p.chi.values / denom),
                      p.z / denom, j_star)


def plane_flow_rates(j_star: int, a_inf: float, j_list: Sequence[int]):
    """Linear rates a_inf (lam_j - lam_{j*}) of the hyperplane flow."""
    lam_star = -float(j_star ** 2)
    return [(j, a_inf * (-float(j ** 2) - lam_star)) for j in j_list]


def growup_band(a_inf: float, b: float) -> list:
    """Indices with a_inf*(-j^2) + b strictly positive (marginal excluded)."""
    out = []
    j = 0
    while a_inf * (-(j ** 2)) + b > 0:
        out.append(j)
        j += 1
    return out


def growup_direction(
    tr: TrajectoryRecord,
    c=None,
    window_frac: float = 0.2,
    proj_tol: float = 1e-3,
):
    """Dominant grow-up mode (j*, sign) from the trailing mode history.

    Requires the normalized projection |u_j|/|u| of a single mode to
    exceed 1 - proj_tol over the trailing window.  When a coefficient
    spec is supplied, the result is cross-checked against the smallest
    grow-up band index with nonzero initial projection.
    """
    if tr.outcome != "grow-up":
        raise ValueError("trajectory is not flagged as grow-up")
    n = len(tr.times)
    lo = max(0, int(n * (1 - window_frac)))
    if n - lo < 3:
        lo = max(0, n - 3)
    proj = tr.mode_history[lo:] / tr.norms[lo:, None]
    final = proj[-1]
    j_star = int(np.argmax(np.abs(final)))
    if np.min(np.abs(proj[:, j_star])) < 1.0 - proj_tol:
        raise DirectionUndetermined(
            f"trailing projection onto mode {j_star} dips to "
            f"{np.min(np.abs(proj[:, j_star])):.6f}; run longer"
        )
    sign = 1 if final[j_star] > 0 else -1

    if c is not None:
        band = growup_band(c.a_inf, c.b)
        initial = tr.mode_history[0]
        active = [j for j in band
                  if j < len(initial) and abs(initial[j]) > 1e-12]
        if active and active[0] != j_star:
            warnings.warn(
                f"dominant mode {j_star} differs from the predicted smallest "
                f"active band index {active[0]}",
                stacklevel=2,
            )
    return j_star, sign


def tail_bound(tr: TrajectoryRecord, m_cut: int) -> float:
    """Sup over time of the L2 norm of the mode tail above m_cut."""
    if m_cut + 1 > tr.mode_history.shape[1]:
        raise ValueError("mode history does not reach m_cut")
    head = np.sum(tr.mode_history[:, :m_cut + 1] ** 2, axis=1)
    tail2 = np.maximum(tr.norms ** 2 - head, 0.0)
    return float(np.sqrt(np.max(tail2)))
