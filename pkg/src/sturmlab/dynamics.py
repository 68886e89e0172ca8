"""Method-of-lines time integration of u_t = a(x,u,u_x) u_xx + b u + f(x,u,u_x).

One IMEX step treats diffusion (coefficient frozen at the step's start)
and the b*u term implicitly via a tridiagonal solve; the bounded reaction
f is explicit.  The driver adapts dt by step doubling, detects grow-up
and convergence, and can monitor the zero number of u(t) minus a
reference profile (the dropping-lemma contract).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .field import (
    SpatialGrid,
    StateField,
    mode_matrix,
    zero_number,
    classify_zero,
    ZeroKind,
)

__all__ = [
    "CoefficientSpec",
    "StepController",
    "TrajectoryRecord",
    "DiscretizationFidelityError",
    "step",
    "integrate",
    "detect_growup",
    "GrowUpStatus",
    "mode_growth_rates",
    "difference_zero_monitor",
    "DifferenceZeroSeries",
    "build_cutoff",
    "smoothstep",
    "preset_spec",
]


class DiscretizationFidelityError(RuntimeError):
    """Numerical result contradicts a structural guarantee (grid/dt too coarse)."""


@dataclass
class CoefficientSpec:
    """Coefficients of the equation u_t = a u_xx + b u + f.

    ``a`` and ``f`` are vectorized callables (x, u, p) -> array, with p the
    spatial derivative u_x.  If ``a_takes_norm`` is set, ``a`` receives the
    current L2 norm as a fourth argument (for diffusions depending on |u|).
    ``eps`` is the declared parabolicity floor a >= eps > 0; ``a_inf`` the
    limiting diffusion; ``f_bound`` a certified sup|f| (None if uncertified).
    """

    a: Callable
    f: Callable
    b: float
    a_inf: float = 1.0
    f_bound: Optional[float] = 0.0
    eps: float = 1e-6
    a_u: Optional[Callable] = None
    a_p: Optional[Callable] = None
    f_u: Optional[Callable] = None
    f_p: Optional[Callable] = None
    a_takes_norm: bool = False
    cutoff_radius: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("instability rate b must be positive")
        if self.eps <= 0:
            raise ValueError("parabolicity floor eps must be positive")
        self._validate_by_sampling()

    def _validate_by_sampling(self):
        x = np.linspace(0.0, np.pi, 13)
        rng = np.random.default_rng(0)
        for _ in range(8):
            u = rng.uniform(-10, 10, size=x.shape)
            p = rng.uniform(-10, 10, size=x.shape)
            avals = np.asarray(self.eval_a(x, u, p, float(np.hypot(u, p).max())))
            if np.any(avals < self.eps - 1e-12):
                raise ValueError(
                    f"diffusion drops below declared floor eps={self.eps}"
                )
            if self.f_bound is not None and self.cutoff_radius is None:
                fvals = np.asarray(self.f(x, u, p))
                if np.any(np.abs(fvals) > self.f_bound + 1e-9):
                    raise ValueError(
                        f"reaction exceeds certified bound f_bound={self.f_bound}"
                    )

    def eval_a(self, x, u, p, nrm: float):
        if self.a_takes_norm:
            return self.a(x, u, p, nrm)
        return self.a(x, u, p)


@dataclass
class StepController:
    dt_init: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-1
    rtol: float = 1e-6
    atol: float = 1e-9
    growup_norm_threshold: float = 1e6
    convergence_tol: float = 1e-9
    t_max: float = 10.0
    convergence_window: int = 10
    growup_window: int = 20

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.rtol <= 0 or self.atol <= 0 or self.convergence_tol <= 0:
            raise ValueError("tolerances must be positive")

    @property
    def fixed_step(self) -> bool:
        return self.dt_min == self.dt_max


@dataclass
class TrajectoryRecord:
    grid: SpatialGrid
    times: np.ndarray
    norms: np.ndarray
    mode_history: np.ndarray  # shape (n_times, j_track+1)
    snapshot_times: np.ndarray
    snapshots: list  # list of value arrays, aligned with snapshot_times
    zero_history: Optional[np.ndarray] = None  # z(u(t) - reference)
    boundary_history: Optional[np.ndarray] = None  # (u - reference) at x=0
    outcome: str = "max-time"  # "grow-up" | "converged" | "max-time"
    t_growup: Optional[float] = None
    reference: Optional[StateField] = None

    def final_field(self) -> StateField:
        return StateField(self.grid, self.snapshots[-1].copy(),
                          float(self.snapshot_times[-1]))

    def snapshot_at(self, t: float) -> np.ndarray:
        """Nearest earlier (or first) recorded snapshot."""
        i = int(np.searchsorted(self.snapshot_times, t, side="right")) - 1
        return self.snapshots[max(i, 0)]


def _derivative_interior(vals: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(vals)
    d[1:-1] = (vals[2:] - vals[:-2]) / (2 * h)
    d[0] = 0.0  # Neumann
    d[-1] = 0.0
    return d


def _step_values(vals: np.ndarray, dt: float, c: CoefficientSpec,
                 x: np.ndarray, h: float, w: np.ndarray) -> np.ndarray:
    """One IMEX step on raw node values."""
    p = _derivative_interior(vals, h)
    nrm = math.sqrt(max(float(np.dot(w, vals * vals)), 0.0))
    avals = np.broadcast_to(
        np.asarray(c.eval_a(x, vals, p, nrm), dtype=float), vals.shape
    )
    fvals = np.broadcast_to(np.asarray(c.f(x, vals, p), dtype=float), vals.shape)

    r = dt * avals / h ** 2
    n = vals.shape[0]
    # banded (1,1) matrix of I - dt*(a*Lap + b*I), ghost-node Neumann fold
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * r - dt * c.b
    ab[0, 1:] = -r[:-1]   # superdiagonal
    ab[2, :-1] = -r[1:]   # subdiagonal
    ab[0, 1] = -2.0 * r[0]
    ab[2, -2] = -2.0 * r[-1]
    rhs = vals + dt * fvals
    try:
        out = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ValueError(
            "singular implicit system: coefficient spec violates a >= eps > 0"
        ) from exc
    return out


def step(u: StateField, dt: float, c: CoefficientSpec) -> StateField:
    """One IMEX step of size dt from the field u."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = u.grid
    out = _step_values(u.values, dt, c, g.nodes, g.h, g.weights)
    t0 = u.time_stamp or 0.0
    return StateField(g, out, t0 + dt)


def integrate(
    u0: StateField,
    ctrl: StepController,
    c: CoefficientSpec,
    reference: Optional[StateField] = None,
    j_track: int = 8,
    snapshot_every: int = 1,
) -> TrajectoryRecord:
    """Step until t_max, grow-up, or convergence to a stationary field.

    Adaptive dt by step doubling unless ctrl.fixed_step.  Records norms,
    the first j_track+1 mode projections, and (when a reference field is
    attached) the zero number and boundary value of u(t) - reference.
    """
    g = u0.grid
    x, h, w = g.nodes, g.h, g.weights
    pmat = mode_matrix(g, j_track + 1) * w  # projection rows

    ref_vals = None
    if reference is not None:
        if reference.grid != g:
            raise ValueError("reference field lives on a different grid")
        ref_vals = reference.values

    vals = u0.values.copy()
    t = 0.0
    dt = ctrl.dt_init

    times, norms, modes, zvals, bvals = [], [], [], [], []
    snap_t, snaps = [], []

    def record(i_accept: int):
        nrm = math.sqrt(max(float(np.dot(w, vals * vals)), 0.0))
        times.append(t)
        norms.append(nrm)
        modes.append(pmat @ vals)
        if ref_vals is not None:
            diff = StateField(g, vals - ref_vals)
            zvals.append(zero_number(diff))
            bvals.append(vals[0] - ref_vals[0])
        if i_accept % snapshot_every == 0:
            snap_t.append(t)
            snaps.append(vals.copy())

    record(0)
    outcome, t_growup = "max-time", None
    quiet = 0
    i_accept = 0

    while t < ctrl.t_max - 1e-15:
        dt = min(dt, ctrl.t_max - t)
        if ctrl.fixed_step:
            new_vals = _step_values(vals, dt, c, x, h, w)
        else:
            while True:
                full = _step_values(vals, dt, c, x, h, w)
                half = _step_values(vals, dt / 2, c, x, h, w)
                half = _step_values(half, dt / 2, c, x, h, w)
                err = math.sqrt(max(float(np.dot(w, (full - half) ** 2)), 0.0))
                unrm = math.sqrt(max(float(np.dot(w, vals * vals)), 0.0))
                tol = ctrl.atol + ctrl.rtol * unrm
                if err <= tol or dt <= ctrl.dt_min * (1 + 1e-12):
                    if err > tol:
                        raise DiscretizationFidelityError(
                            f"dt underflow at t={t:.6g}: error {err:.3g} "
                            f"above tolerance {tol:.3g} at dt_min"
                        )
                    new_vals = half
                    grow = 0.9 * tol / max(err, 1e-300)
                    dt_next = dt * min(2.0, max(0.2, grow))
                    break
                dt = max(ctrl.dt_min, dt / 2)
            dt_after = min(max(dt_next, ctrl.dt_min), ctrl.dt_max)

        move = math.sqrt(max(float(np.dot(w, (new_vals - vals) ** 2)), 0.0))
        t += dt
        vals = new_vals
        i_accept += 1
        record(i_accept)
        if not ctrl.fixed_step:
            dt = dt_after

        # convergence: sustained small displacement rate
        if move / dt < ctrl.convergence_tol:
            quiet += 1
            if quiet >= ctrl.convergence_window:
                outcome = "converged"
                break
        else:
            quiet = 0

        # grow-up: threshold crossing with positive trailing log-slope
        if norms[-1] > ctrl.growup_norm_threshold:
            wlen = ctrl.growup_window
            if len(norms) > wlen:
                tail_t = np.array(times[-wlen:])
                tail_n = np.array(norms[-wlen:])
                slope = np.polyfit(tail_t, np.log(tail_n), 1)[0]
                if slope > 0:
                    outcome = "grow-up"
                    t_growup = t
                    break

    if snap_t[-1] != t:
        snap_t.append(t)
        snaps.append(vals.copy())

    return TrajectoryRecord(
        grid=g,
        times=np.array(times),
        norms=np.array(norms),
        mode_history=np.array(modes),
        snapshot_times=np.array(snap_t),
        snapshots=snaps,
        zero_history=np.array(zvals) if zvals else None,
        boundary_history=np.array(bvals) if bvals else None,
        outcome=outcome,
        t_growup=t_growup,
        reference=reference,
    )


@dataclass(frozen=True)
class GrowUpStatus:
    grew_up: bool
    t_cross: Optional[float] = None


def detect_growup(tr: TrajectoryRecord, ctrl: StepController) -> GrowUpStatus:
    """First threshold crossing with positive trailing log-slope, if any."""
    if len(tr.times) == 0:
        raise ValueError("empty trajectory record")
    if not np.isfinite(ctrl.growup_norm_threshold):
        return GrowUpStatus(False)
    above = np.nonzero(tr.norms > ctrl.growup_norm_threshold)[0]
    wlen = ctrl.growup_window
    for i in above:
        lo = max(0, i - wlen + 1)
        if i - lo + 1 < 3:
            continue
        slope = np.polyfit(tr.times[lo:i + 1], np.log(tr.norms[lo:i + 1]), 1)[0]
        if slope > 0:
            return GrowUpStatus(True, float(tr.times[i]))
    return GrowUpStatus(False)


def mode_growth_rates(
    tr: TrajectoryRecord,
    j_list: Sequence[int],
    window_frac: float = 0.3,
    noise_floor: float = 1e-10,
):
    """Least-squares exponential rate of each |u_j| over the trailing window.

    Modes below the noise floor are reported as (j, None), never as zero.
    """
    n = len(tr.times)
    lo = max(0, int(n * (1 - window_frac)))
    out = []
    for j in j_list:
        if j >= tr.mode_history.shape[1]:
            raise ValueError(f"mode {j} was not tracked")
        amp = np.abs(tr.mode_history[lo:, j])
        ts = tr.times[lo:]
        mask = amp > noise_floor
        if np.count_nonzero(mask) < 5:
            out.append((j, None))
            continue
        slope = np.polyfit(ts[mask], np.log(amp[mask]), 1)[0]
        out.append((j, float(slope)))
    return out


@dataclass
class DifferenceZeroSeries:
    times: np.ndarray
    zero_numbers: np.ndarray
    drop_times: list  # times where z dropped
    multiple_zero_at_drop: list  # bool per drop


def difference_zero_monitor(
    tr1: TrajectoryRecord, tr2: TrajectoryRecord
) -> DifferenceZeroSeries:
    """Zero number of u1(t) - u2(t) at tr1's snapshot times.

    tr2 is resampled by nearest earlier snapshot.  A monotonicity
    violation raises DiscretizationFidelityError: the grid or dt is too
    coarse to honor the dropping lemma, not a modeling error.
    """
    if tr1.grid != tr2.grid:
        raise ValueError("trajectories live on different grids")
    g = tr1.grid
    ts, zs = [], []
    drops, multiple = [], []
    prev = None
    for t, vals in zip(tr1.snapshot_times, tr1.snapshots):
        other = tr2.snapshot_at(t)
        diff = StateField(g, vals - other)
        z = zero_number(diff)
        if prev is not None and z > prev >= 0:
            raise DiscretizationFidelityError(
                f"zero number of difference increased {prev} -> {z} at "
                f"t={t:.6g}; refine grid or time step"
            )
        if prev is not None and 0 <= z < prev:
            drops.append(float(t))
            scale = float(np.max(np.abs(diff.values))) or 1.0
            has_mult = any(
                classify_zero(diff, i, tol_val=1e-7 * scale, tol_deriv=1e-4 * scale)
                is ZeroKind.MULTIPLE
                for i in range(g.n_points)
            )
            multiple.append(has_mult)
        prev = z
        ts.append(float(t))
        zs.append(z)
    return DifferenceZeroSeries(np.array(ts), np.array(zs), drops, multiple)


def smoothstep(r: np.ndarray) -> np.ndarray:
    """C^2 quintic transition 6r^5 - 15r^4 + 10r^3 clamped to [0, 1]."""
    r = np.clip(r, 0.0, 1.0)
    return r * r * r * (r * (6.0 * r - 15.0) + 10.0)


def build_cutoff(c: CoefficientSpec, R: float) -> CoefficientSpec:
    """Dissipative modification: reaction blends to -u outside radius R+1.

    Where max(|u|,|u_x|) <= R the equation is untouched; beyond R+1 the
    full reaction b*u + F equals -u.  The blend uses the quintic
    smoothstep so F keeps C^2 regularity, matching a, f in C^2.
    """
    if R <= 0:
        raise ValueError("cutoff radius R must be positive")
    if c.a_takes_norm:
        raise ValueError("cutoff construction requires a pointwise diffusion")
    inner_f, b = c.f, c.b

    def f_mod(x, u, p):
        r = np.maximum(np.abs(u), np.abs(p)) - R
        s = smoothstep(r)
        return (1.0 - s) * np.asarray(inner_f(x, u, p)) - s * (1.0 + b) * u

    bound = max(c.f_bound if c.f_bound is not None else 0.0,
                (1.0 + b) * (R + 1.0))
    return CoefficientSpec(
        a=c.a, f=f_mod, b=b, a_inf=c.a_inf, f_bound=bound, eps=c.eps,
        a_u=c.a_u, a_p=c.a_p, f_u=None, f_p=None,
        cutoff_radius=R, name=(c.name + "+cutoff") if c.name else "cutoff",
    )


def preset_spec(name: str, b: float, a_inf: float = 1.0,
                strength: float = 1.0) -> CoefficientSpec:
    """Named coefficient presets used by the CLI and the test scenarios."""
    if name == "linear":
        return CoefficientSpec(
            a=lambda x, u, p: np.full_like(np.asarray(u, dtype=float), a_inf),
            f=lambda x, u, p: np.zeros_like(np.asarray(u, dtype=float)),
            b=b, a_inf=a_inf, f_bound=0.0, eps=a_inf, name="linear",
        )
    if name == "tanh-reaction":
        cmag = strength
        return CoefficientSpec(
            a=lambda x, u, p: np.full_like(np.asarray(u, dtype=float), a_inf),
            f=lambda x, u, p: -cmag * np.tanh(u),
            f_u=lambda x, u, p: -cmag / np.cosh(u) ** 2,
            b=b, a_inf=a_inf, f_bound=cmag, eps=a_inf, name="tanh-reaction",
        )
    if name == "arctan-diffusion":
        # rescaled by 2/pi so the large-norm limit is a_inf itself
        return CoefficientSpec(
            a=lambda x, u, p, nrm: np.full_like(
                np.asarray(u, dtype=float),
                a_inf * (2.0 / np.pi) * np.arctan(nrm + 1.0),
            ),
            f=lambda x, u, p: np.zeros_like(np.asarray(u, dtype=float)),
            b=b, a_inf=a_inf, f_bound=0.0,
            eps=a_inf * (2.0 / np.pi) * np.arctan(1.0),
            a_takes_norm=True, name="arctan-diffusion",
        )
    if name == "oscillating-diffusion":
        cmag = max(strength, 1.0 + 1e-6)
        return CoefficientSpec(
            a=lambda x, u, p, nrm: np.full_like(
                np.asarray(u, dtype=float),
                a_inf + (np.sin(nrm) + cmag) / (nrm + 1.0),
            ),
            f=lambda x, u, p: np.zeros_like(np.asarray(u, dtype=float)),
            b=b, a_inf=a_inf, f_bound=0.0, eps=a_inf,
            a_takes_norm=True, name="oscillating-diffusion",
        )
    raise ValueError(f"unknown coefficient preset: {name!r}")
