"""Bounded equilibria of a u_xx + b u + f = 0 with Neumann boundary.

Neumann problems on an interval reduce to a one-parameter root find:
shoot from x=0 with u(0)=eta, u'(0)=0 and drive the miss distance
u'(pi) to zero.  Spectra of the linearization come from a dense
symmetrized fourth-order finite-difference operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp, cumulative_trapezoid
from scipy.linalg import eigh, eig

from .field import SpatialGrid, StateField, zero_number, inner, norm
from .dynamics import CoefficientSpec

__all__ = [
    "EquilibriumRecord",
    "SturmPermutation",
    "NonGenericConfigurationError",
    "shoot",
    "find_equilibria",
    "linearize",
    "sturm_permutation",
    "adjacent",
    "stationary_residual",
]

ESCAPE_LIMIT = 1e8


class NonGenericConfigurationError(RuntimeError):
    """Tied boundary values: the equilibrium configuration is non-generic."""


@dataclass
class EquilibriumRecord:
    profile: StateField
    eta: float
    right_value: float
    eigenvalues: np.ndarray
    morse_index: int
    hyperbolic: bool
    id: int
    eigenfunctions: Optional[np.ndarray] = None  # columns, L2-normalized
    profile_x: Optional[np.ndarray] = None  # u' at the nodes, from the ODE solve

    def node_id(self) -> str:
        return f"e{self.id}"


@dataclass(frozen=True)
class SturmPermutation:
    sigma: tuple  # sigma[k] = rank in the u(pi)-ordering, 0-based

    def one_based(self) -> list:
        return [s + 1 for s in self.sigma]


def _require_pointwise(c: CoefficientSpec) -> None:
    if c.a_takes_norm:
        raise ValueError(
            "norm-dependent diffusion has no pointwise stationary ODE; "
            "shooting supports pointwise coefficients only"
        )


def _shoot_solution(eta: float, c: CoefficientSpec, x_eval=None):
    """Integrate the stationary ODE from x=0; returns the solve_ivp result."""
    _require_pointwise(c)

    def rhs(x, y):
        u, p = y
        return [p, -(c.b * u + float(np.asarray(c.f(x, u, p))))
                / float(np.asarray(c.a(x, u, p)))]

    def escape(x, y):
        return abs(y[0]) - ESCAPE_LIMIT

    escape.terminal = True
    return solve_ivp(
        rhs, (0.0, np.pi), [eta, 0.0], method="RK45",
        rtol=1e-11, atol=1e-12, events=escape, t_eval=x_eval, dense_output=False,
    )


def shoot(eta: float, c: CoefficientSpec) -> float:
    """Miss distance u'(pi) of the Neumann shot u(0)=eta, u'(0)=0.

    If |u| escapes beyond 1e8 before x=pi the miss is reported as a
    signed infinity, which still brackets roots.
    """
    sol = _shoot_solution(eta, c)
    if sol.t[-1] < np.pi - 1e-12:
        p_end, u_end = sol.y[1, -1], sol.y[0, -1]
        return math.copysign(math.inf, p_end if p_end != 0 else u_end)
    return float(sol.y[1, -1])


def _sign(v: float) -> int:
    return int(v > 0) - int(v < 0)


def _refine_root(lo, hi, m_lo, m_hi, c: CoefficientSpec) -> float:
    """Bisection (tolerant of infinite misses) with a secant polish."""
    s_lo = _sign(m_lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        m_mid = shoot(mid, c)
        if m_mid == 0.0:
            return mid
        if _sign(m_mid) == s_lo:
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
        if hi - lo < 1e-13 * max(1.0, abs(lo), abs(hi)):
            break
    # secant polish when both endpoint misses are finite
    if math.isfinite(m_lo) and math.isfinite(m_hi) and m_hi != m_lo:
        eta = hi - m_hi * (hi - lo) / (m_hi - m_lo)
        if lo <= eta <= hi:
            return eta
    return 0.5 * (lo + hi)


def find_equilibria(
    eta_min: float,
    eta_max: float,
    scan_n: int,
    c: CoefficientSpec,
    grid: Optional[SpatialGrid] = None,
    m_eigs: int = 16,
    require_coverage: bool = True,
) -> list:
    """Scan the miss distance on an eta-grid and refine bracketed roots.

    With f bounded and b > 0 every equilibrium satisfies a sup-norm bound
    of order f_bound/b, so the scan must cover [-f_bound/b - 1,
    f_bound/b + 1] to enumerate all of them (disable via
    require_coverage for deliberately partial scans).
    """
    if eta_min >= eta_max:
        raise ValueError("need eta_min < eta_max")
    if scan_n < 100:
        raise ValueError("scan_n must be >= 100")
    if grid is None:
        grid = SpatialGrid()
    if require_coverage:
        if c.f_bound is None:
            raise ValueError("coverage check requires a certified f_bound")
        reach = c.f_bound / c.b + 1.0
        if eta_min > -reach or eta_max < reach:
            raise ValueError(
                f"scan range [{eta_min}, {eta_max}] does not cover "
                f"[-{reach}, {reach}]; widen it or pass require_coverage=False"
            )

    etas = np.linspace(eta_min, eta_max, scan_n)
    misses = np.array([shoot(e, c) for e in etas])

    roots = []
    for i in range(scan_n - 1):
        m0, m1 = misses[i], misses[i + 1]
        if m0 == 0.0:
            roots.append(etas[i])
            continue
        if _sign(m0) * _sign(m1) < 0:
            roots.append(_refine_root(etas[i], etas[i + 1], m0, m1, c))
    if misses[-1] == 0.0:
        roots.append(etas[-1])

    # deduplicate nearby roots
    roots = sorted(roots)
    kept = []
    for r in roots:
        if not kept or r - kept[-1] > 1e-8:
            kept.append(r)

    records = []
    for idx, eta in enumerate(kept):
        sol = _shoot_solution(eta, c, x_eval=grid.nodes)
        profile = StateField(grid, sol.y[0])
        rec = EquilibriumRecord(
            profile=profile,
            eta=float(eta),
            right_value=float(sol.y[0, -1]),
            eigenvalues=np.array([]),
            morse_index=0,
            hyperbolic=True,
            id=idx,
            profile_x=sol.y[1].copy(),
        )
        vals, vecs = linearize(rec, c, m_eigs)
        tol = hyperbolicity_tol(c)
        rec.eigenvalues = vals
        rec.eigenfunctions = vecs
        rec.morse_index = int(np.count_nonzero(vals > tol))
        rec.hyperbolic = bool(np.min(np.abs(vals)) > tol)
        records.append(rec)
    return records


def hyperbolicity_tol(c: CoefficientSpec) -> float:
    return 1e-6 * max(1.0, c.b)


def _even_extension_matrix(n: int) -> np.ndarray:
    """Map node values to the ghost-extended vector [v2, v1, v0..v_{n-1}, v_{n-2}, v_{n-3}]."""
    E = np.zeros((n + 4, n))
    E[0, 2] = 1.0
    E[1, 1] = 1.0
    E[2:n + 2, :] = np.eye(n)
    E[n + 2, n - 2] = 1.0
    E[n + 3, n - 3] = 1.0
    return E


def _fd4_matrices(grid: SpatialGrid):
    """Fourth-order d/dx and d2/dx2 on the grid with even (Neumann) ghosts."""
    n, h = grid.n_points, grid.h
    E = _even_extension_matrix(n)
    C2 = np.zeros((n, n + 4))
    C1 = np.zeros((n, n + 4))
    s2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h ** 2)
    s1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    for i in range(n):
        C2[i, i:i + 5] = s2
        C1[i, i:i + 5] = s1
    return C1 @ E, C2 @ E


def fd4_derivatives(grid: SpatialGrid, vals: np.ndarray):
    D1, D2 = _fd4_matrices(grid)
    return D1 @ vals, D2 @ vals


def _partial(fn, given, x, u, p, arg: str, step: float = 1e-6):
    """Supplied partial or central finite difference in u or p."""
    if given is not None:
        return np.broadcast_to(np.asarray(given(x, u, p), dtype=float), u.shape)
    if fn is None:
        return np.zeros_like(u)
    if arg == "u":
        hi = np.asarray(fn(x, u + step, p), dtype=float)
        lo = np.asarray(fn(x, u - step, p), dtype=float)
    else:
        hi = np.asarray(fn(x, u, p + step), dtype=float)
        lo = np.asarray(fn(x, u, p - step), dtype=float)
    return np.broadcast_to((hi - lo) / (2 * step), u.shape)


def linearize(e: EquilibriumRecord, c: CoefficientSpec, m_eigs: int = 16):
    """Spectrum of v -> a v_xx + (a_p e_xx + f_p) v_x + (a_u e_xx + b + f_u) v.

    Dense fourth-order operator with Neumann ghosts, symmetrized through
    the Liouville weight exp(int beta/alpha) combined with the trapezoid
    quadrature weights, then solved with a symmetric eigensolver.  Returns
    the m_eigs largest eigenvalues (descending) and eigenfunctions
    (columns, L2-normalized, positive at x=0).
    """
    _require_pointwise(c)
    grid = e.grid if hasattr(e, "grid") else e.profile.grid
    x = grid.nodes
    evals_field = e.profile.values
    D1, D2 = _fd4_matrices(grid)
    e_x = e.profile_x if e.profile_x is not None else D1 @ evals_field
    e_xx = D2 @ evals_field

    alpha = np.broadcast_to(
        np.asarray(c.a(x, evals_field, e_x), dtype=float), x.shape).astype(float)
    a_u = _partial(c.a, c.a_u, x, evals_field, e_x, "u")
    a_p = _partial(c.a, c.a_p, x, evals_field, e_x, "p")
    f_u = _partial(c.f, c.f_u, x, evals_field, e_x, "u")
    f_p = _partial(c.f, c.f_p, x, evals_field, e_x, "p")
    beta = a_p * e_xx + f_p
    gamma = a_u * e_xx + c.b + f_u

    A = alpha[:, None] * D2 + beta[:, None] * D1 + np.diag(gamma)

    # Liouville-weight similarity: rho = w * exp(int beta/alpha) / alpha
    m = np.exp(cumulative_trapezoid(beta / alpha, x, initial=0.0))
    rho = grid.weights * m / alpha
    d = np.sqrt(rho)
    B = (d[:, None] / d[None, :]) * A
    asym = np.linalg.norm(B - B.T) / max(np.linalg.norm(B), 1e-300)
    if asym < 1e-8:
        vals, vecs_w = eigh(0.5 * (B + B.T))
        vecs = vecs_w / d[:, None]
    else:
        vals_c, vecs_c = eig(A)
        if np.max(np.abs(vals_c.imag)) > 1e-6 * max(1.0, np.max(np.abs(vals_c))):
            raise RuntimeError(
                f"linearized spectrum has large imaginary parts "
                f"(max {np.max(np.abs(vals_c.imag)):.3g}); operator not "
                "numerically symmetrizable at this resolution"
            )
        order = np.argsort(vals_c.real)
        vals = vals_c.real[order]
        vecs = vecs_c.real[:, order]

    # descending, top m_eigs
    vals = vals[::-1][:m_eigs].copy()
    vecs = vecs[:, ::-1][:, :m_eigs].copy()
    for k in range(vecs.shape[1]):
        v = StateField(grid, vecs[:, k])
        nv = norm(v)
        if nv > 0:
            vecs[:, k] /= nv
        lead = vecs[np.argmax(np.abs(vecs[:, k]) > 1e-8), k] if np.any(
            np.abs(vecs[:, k]) > 1e-8) else 1.0
        if vecs[0, k] < 0 or (vecs[0, k] == 0 and lead < 0):
            vecs[:, k] *= -1.0
    return vals, vecs


def sturm_permutation(eqs: Sequence[EquilibriumRecord]) -> SturmPermutation:
    """sigma[k] = rank in the u(pi)-ordering of the k-th equilibrium by u(0)."""
    if not eqs:
        return SturmPermutation(())
    etas = np.array([e.eta for e in eqs])
    rights = np.array([e.right_value for e in eqs])
    for vals, name in ((etas, "u(0)"), (rights, "u(pi)")):
        svals = np.sort(vals)
        if np.any(np.diff(svals) < 1e-8):
            raise NonGenericConfigurationError(
                f"tied {name} values within 1e-8; configuration non-generic"
            )
    by_eta = np.argsort(etas)
    rank_right = np.argsort(np.argsort(rights))
    sigma = tuple(int(rank_right[i]) for i in by_eta)
    return SturmPermutation(sigma)


def _boundary_value(e) -> float:
    """u(0) of a bounded or at-infinity equilibrium (+-inf for the latter)."""
    if hasattr(e, "eta"):
        return e.eta
    return math.inf if e.sign > 0 else -math.inf


def adjacent(e_minus: EquilibriumRecord, e_plus, all_bounded: Sequence) -> bool:
    """No bounded equilibrium between the u(0) values blocks the pair.

    e_plus may be bounded or at infinity; a difference against an
    at-infinity equilibrium of index k has the sign pattern of its
    compact direction, hence zero number k.
    """
    at_infinity = not hasattr(e_plus, "eta")
    if not at_infinity and e_plus.id == e_minus.id:
        raise ValueError("adjacency requires two distinct equilibria")

    b_minus = e_minus.eta
    b_plus = _boundary_value(e_plus)
    if at_infinity:
        z_pair = e_plus.j
    else:
        z_pair = zero_number(e_minus.profile - e_plus.profile)

    lo, hi = min(b_minus, b_plus), max(b_minus, b_plus)
    for cand in all_bounded:
        if not (lo < cand.eta < hi):
            continue
        if cand.id == e_minus.id or (not at_infinity and cand.id == e_plus.id):
            continue
        z_ms = zero_number(e_minus.profile - cand.profile)
        if at_infinity:
            z_ps = e_plus.j  # dominating direction fixes the sign pattern
        else:
            z_ps = zero_number(e_plus.profile - cand.profile)
        if z_ms == z_pair == z_ps:
            return False
    return True


def stationary_residual(e: EquilibriumRecord, c: CoefficientSpec) -> float:
    """Sup-norm of a u_xx + b u + f along the profile (fourth-order stencils)."""
    _require_pointwise(c)
    grid = e.profile.grid
    x = grid.nodes
    u = e.profile.values
    D1, D2 = _fd4_matrices(grid)
    u_x = e.profile_x if e.profile_x is not None else D1 @ u
    u_xx = D2 @ u
    a = np.broadcast_to(np.asarray(c.a(x, u, u_x), dtype=float), x.shape)
    f = np.broadcast_to(np.asarray(c.f(x, u, u_x), dtype=float), x.shape)
    return float(np.max(np.abs(a * u_xx + c.b * u + f)))
