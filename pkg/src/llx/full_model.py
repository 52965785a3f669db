"""Full exchange model on the slab: quasilinear diffusion plus precession.

The equation marched here, for magnetization u(t, x) on (-1, 1) with
homogeneous Neumann walls, is

    du/dt = eps^2 uxx + eps^2 u x uxx + F(u, eps ux, H(u)),
    F(u, V, H) = |V|^2 u + u x H - u x (u x H),      H(u) = (-u1, 0, 0).

Time stepping is a theta-weighted predictor/corrector: the stiff
quasilinear part eps^2 (I + [v]x) uxx is taken implicitly with the
matrix frozen at the old state (predictor) and then at the midpoint
state (corrector); F stays explicit, evaluated at the same states. With
theta = 1/2 both time and space errors are second order, and at eps = 0
the scheme degenerates to the explicit midpoint rule of the limit flow.

Contains:
- Grid1D / make_epsilon_grid: single-valued meshes, layer-refined
- d2_coefficients / d1_coefficients / apply_tridiagonal_stencil
- F_rhs: the zero-order reaction term
- FullModelConfig, step_full, simulate_full, FullTrajectory
- residual_report / ResidualReport: a-posteriori defect of any
  space-time field against the equation above
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .banded import block_tridiag_solve, cross_matrix, tridiag_solve_components
from .errors import SolverAbort
from .limit_model import renormalize as project_sphere
from .strayfield import stray_field_slab

CROSS_TERM_MODES = ("lagged-implicit", "explicit")


# === meshes ===

@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes spanning [-1, 1], interface node once."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 5:
            raise ValueError(f"need at least 5 nodes, got shape {x.shape}")
        if not (np.all(np.diff(x) > 0) and x[0] == -1.0 and x[-1] == 1.0):
            raise ValueError("nodes must increase strictly from -1 to 1")

    @property
    def n(self) -> int:
        return self.x.size

    def widths(self) -> np.ndarray:
        return np.diff(self.x)


def _half_widths(h_fine: float, band: float, growth: float,
                 h_max: float, half_len: float) -> np.ndarray:
    """Cell widths covering [0, half_len]: fine band, geometric coarsening,
    uniform tail; globally rescaled to land exactly on half_len."""
    widths = []
    cum = 0.0
    h = h_fine
    while cum < band and cum < half_len:
        widths.append(h_fine)
        cum += h_fine
    while cum < half_len:
        h = min(h * growth, h_max)
        widths.append(h)
        cum += h
    w = np.array(widths)
    return w * (half_len / cum)


def make_epsilon_grid(epsilon: float, cells_per_eps: int = 32,
                      layer_extent: float = 15.0, growth: float = 1.15,
                      h_outer: float = 1.0 / 48.0) -> Grid1D:
    """Layer-refined mesh: spacing eps/cells_per_eps within layer_extent*eps
    of the interface and both walls, geometric coarsening to h_outer
    in between. Each side of the interface is symmetric about its
    midpoint, so the whole mesh is symmetric about x = 0.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if cells_per_eps < 4:
        raise ValueError(f"cells_per_eps must be at least 4, got {cells_per_eps}")
    h_fine = epsilon / cells_per_eps
    band = layer_extent * epsilon
    half = _half_widths(h_fine, band, growth, max(h_outer, h_fine), 0.5)
    # one side = fine at interface -> coarse at 0.5 -> fine at wall
    side = np.concatenate([half, half[::-1]])
    x_plus = np.concatenate([[0.0], np.cumsum(side)])
    x_plus[-1] = 1.0
    x = np.concatenate([-x_plus[::-1][:-1], x_plus])
    x[np.argmin(np.abs(x))] = 0.0
    return Grid1D(x=x)


def make_uniform_grid(cells: int) -> Grid1D:
    """Uniform mesh with `cells` cells on [-1, 1] (even, so 0 is a node)."""
    if cells % 2 != 0 or cells < 4:
        raise ValueError(f"cells must be even and >= 4, got {cells}")
    return Grid1D(x=np.linspace(-1.0, 1.0, cells + 1))


# === stencils ===

def d2_coefficients(x: np.ndarray):
    """Nonuniform 3-point second-derivative weights (a, b, c).

    Row i applies a[i] u[i-1] + b[i] u[i] + c[i] u[i+1]. The wall rows
    fold in the mirrored Neumann ghost (u[-1] = u[1] at equal spacing),
    so a[0] = c[-1] = 0 and the zero-flux condition is built in.
    """
    x = np.asarray(x, dtype=float)
    h = np.diff(x)
    a = np.zeros_like(x)
    b = np.zeros_like(x)
    c = np.zeros_like(x)
    hm, hp = h[:-1], h[1:]
    a[1:-1] = 2.0 / (hm * (hm + hp))
    c[1:-1] = 2.0 / (hp * (hm + hp))
    b[1:-1] = -(a[1:-1] + c[1:-1])
    c[0] = 2.0 / h[0] ** 2
    b[0] = -c[0]
    a[-1] = 2.0 / h[-1] ** 2
    b[-1] = -a[-1]
    return a, b, c


def d1_coefficients(x: np.ndarray):
    """Nonuniform centered first-derivative weights (a, b, c).

    Wall rows are zero: under the mirrored ghost the centered derivative
    at the walls vanishes identically, which is the boundary condition.
    """
    x = np.asarray(x, dtype=float)
    h = np.diff(x)
    a = np.zeros_like(x)
    b = np.zeros_like(x)
    c = np.zeros_like(x)
    hm, hp = h[:-1], h[1:]
    a[1:-1] = -hp / (hm * (hm + hp))
    c[1:-1] = hm / (hp * (hm + hp))
    b[1:-1] = -(a[1:-1] + c[1:-1])
    return a, b, c


def apply_tridiagonal_stencil(coeffs, u: np.ndarray) -> np.ndarray:
    """Apply 3-point weights (a, b, c) along axis 0 of u, shape (n, ...)."""
    a, b, c = coeffs
    out = b.reshape(-1, *([1] * (u.ndim - 1))) * u
    out[1:] += a[1:].reshape(-1, *([1] * (u.ndim - 1))) * u[:-1]
    out[:-1] += c[:-1].reshape(-1, *([1] * (u.ndim - 1))) * u[1:]
    return out


def one_sided_d1(x: np.ndarray, u: np.ndarray, end: str) -> np.ndarray:
    """Second-order one-sided first derivative at an endpoint of axis 0.

    Evaluated on telescoped differences, so constant data returns an
    exact zero rather than rounding noise.
    """
    x = np.asarray(x, dtype=float)
    if end == "left":
        h1 = x[1] - x[0]
        h2 = x[2] - x[1]
        return ((2 * h1 + h2) / (h1 * (h1 + h2)) * (u[1] - u[0])
                - h1 / (h2 * (h1 + h2)) * (u[2] - u[1]))
    h1 = x[-1] - x[-2]
    h2 = x[-2] - x[-3]
    return ((2 * h1 + h2) / (h1 * (h1 + h2)) * (u[-1] - u[-2])
            - h1 / (h2 * (h1 + h2)) * (u[-2] - u[-3]))


# === right-hand side ===

def F_rhs(u: np.ndarray, V: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Reaction term |V|^2 u + u x H - u x (u x H)."""
    uxH = np.cross(u, H)
    return (np.sum(V * V, axis=-1, keepdims=True) * u
            + uxH - np.cross(u, uxH))


@dataclass
class FullModelConfig:
    """Parameters of a full-model run.

    cross_term selects how eps^2 u x uxx is handled: "lagged-implicit"
    keeps it inside the implicit solve with the cross matrix frozen,
    "explicit" moves it to the forcing and solves three decoupled
    scalar systems instead.
    """

    epsilon: float
    dt: float
    T: float
    theta_scheme: float = 0.5
    cross_term: str = "lagged-implicit"
    renormalize: bool = True
    drift_tol: float = 1e-3
    max_halvings: int = 10

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.dt <= 0.0 or self.T <= 0.0:
            raise ValueError(
                f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        if not 0.0 <= self.theta_scheme <= 1.0:
            raise ValueError(
                f"theta_scheme must lie in [0, 1], got {self.theta_scheme}")
        if self.cross_term not in CROSS_TERM_MODES:
            raise ValueError(
                f"cross_term must be one of {CROSS_TERM_MODES}, "
                f"got {self.cross_term!r}")


class _Workspace:
    """Precomputed stencils for one grid."""

    def __init__(self, grid: Grid1D):
        self.grid = grid
        self.d2 = d2_coefficients(grid.x)
        self.d1 = d1_coefficients(grid.x)


def _forcing(u: np.ndarray, epsilon: float, ws: _Workspace) -> np.ndarray:
    V = epsilon * apply_tridiagonal_stencil(ws.d1, u)
    return F_rhs(u, V, stray_field_slab(u))


def _implicit_solve(v: np.ndarray, dt: float, ws: _Workspace,
                    cfg: FullModelConfig, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - theta dt eps^2 M D2) w = rhs with M = I + [v]x frozen."""
    coef = cfg.theta_scheme * dt * cfg.epsilon**2
    a, b, c = ws.d2
    n = ws.grid.n
    if cfg.cross_term == "explicit":
        return tridiag_solve_components(-coef * a, 1.0 - coef * b,
                                        -coef * c, rhs)
    M = np.broadcast_to(np.eye(3), (n, 3, 3)) + cross_matrix(v)
    A = -coef * a[:, None, None] * M
    B = np.broadcast_to(np.eye(3), (n, 3, 3)) - coef * b[:, None, None] * M
    C = -coef * c[:, None, None] * M
    return block_tridiag_solve(A, B, C, rhs)


def _explicit_diffusion(u: np.ndarray, v: np.ndarray, dt: float,
                        ws: _Workspace, cfg: FullModelConfig) -> np.ndarray:
    """(1 - theta) dt eps^2 M D2 u with the frozen matrix at v."""
    coef = (1.0 - cfg.theta_scheme) * dt * cfg.epsilon**2
    if coef == 0.0:
        return np.zeros_like(u)
    d2u = apply_tridiagonal_stencil(ws.d2, u)
    if cfg.cross_term == "explicit":
        return coef * d2u
    return coef * (d2u + np.cross(v, d2u))


def step_full(u: np.ndarray, t: float, dt: float, ws: _Workspace,
              cfg: FullModelConfig,
              source: Optional[Callable] = None):
    """One predictor/corrector step from time t; returns (u_new, drift).

    drift is the largest deviation of |u_new| from 1 before any
    projection, the quantity the step-size guard watches.
    """
    eps2 = cfg.epsilon**2

    def explicit_rhs(state, v_frozen, t_src):
        g = _forcing(state, cfg.epsilon, ws)
        if cfg.cross_term == "explicit" and eps2 > 0.0:
            d2s = apply_tridiagonal_stencil(ws.d2, state)
            g = g + eps2 * np.cross(v_frozen, d2s)
        if source is not None:
            g = g + source(t_src, ws.grid.x)
        return u + _explicit_diffusion(u, v_frozen, dt, ws, cfg) + dt * g

    # predictor: everything frozen at the old state
    u_star = _implicit_solve(u, dt, ws, cfg, explicit_rhs(u, u, t))
    # corrector: re-solve with matrix and forcing at the midpoint
    u_mid = 0.5 * (u + u_star)
    u_new = _implicit_solve(u_mid, dt, ws, cfg,
                            explicit_rhs(u_mid, u_mid, t + 0.5 * dt))
    drift = float(np.max(np.abs(np.linalg.norm(u_new, axis=-1) - 1.0)))
    return u_new, drift


@dataclass(frozen=True)
class FullTrajectory:
    """Full-model values at requested output times.

    drift_max is the largest pre-projection norm deviation seen in any
    accepted step; halvings_used counts step halvings forced by the
    drift guard.
    """

    times: np.ndarray
    values: np.ndarray
    grid: Grid1D
    drift_max: float
    steps_taken: int
    halvings_used: int


def simulate_full(u0: np.ndarray, grid: Grid1D, cfg: FullModelConfig,
                  t_eval: Optional[Sequence[float]] = None,
                  source: Optional[Callable] = None) -> FullTrajectory:
    """March the full model to cfg.T, recording requested output times.

    Output times are {0, T} joined with t_eval, each hit exactly by
    uniform substeps of at most cfg.dt. When renormalization is on, a
    step whose pre-projection norm drift exceeds cfg.drift_tol causes
    the whole interval to be redone at half the step, up to
    cfg.max_halvings times, after which the run aborts.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (grid.n, 3):
        raise ValueError(
            f"initial data shape {u0.shape} does not match grid ({grid.n}, 3)")
    ws = _Workspace(grid)

    marks = {0.0, float(cfg.T)}
    if t_eval is not None:
        for t in t_eval:
            t = float(t)
            if not 0.0 <= t <= cfg.T + 1e-12 * max(1.0, cfg.T):
                raise ValueError(f"output time {t} outside [0, {cfg.T}]")
            marks.add(min(t, float(cfg.T)))
    times = np.array(sorted(marks))

    values = np.empty((times.size, grid.n, 3))
    values[0] = u0
    u = u0
    drift_max = 0.0
    steps_taken = 0
    halvings_total = 0

    for k in range(times.size - 1):
        t0, t1 = times[k], times[k + 1]
        span = t1 - t0
        nsub = max(1, int(np.ceil(span / cfg.dt - 1e-12)))
        tau_nominal = span / nsub
        # adaptive sub-stepping within the interval: a rejected step is
        # halved in place (rough data needs tiny opening steps while the
        # layer is still under-resolved); accepted steps double back
        # toward the nominal size, so smooth runs march uniformly
        t = t0
        tau = tau_nominal
        consecutive = 0
        while t < t1 - 1e-12 * max(span, 1.0):
            tau_step = min(tau, t1 - t)
            u_next, drift = step_full(u, t, tau_step, ws, cfg,
                                      source=source)
            if cfg.renormalize and drift > cfg.drift_tol:
                consecutive += 1
                halvings_total += 1
                if consecutive > cfg.max_halvings:
                    raise SolverAbort(
                        f"step at t={t:.6g} halved {cfg.max_halvings} "
                        f"times without meeting the drift tolerance "
                        f"(last drift {drift:.3e})")
                tau = tau_step / 2.0
                continue
            consecutive = 0
            drift_max = max(drift_max, drift)
            if cfg.renormalize:
                u_next = project_sphere(u_next)
            u = u_next
            t += tau_step
            steps_taken += 1
            tau = min(2.0 * tau_step, tau_nominal)
        values[k + 1] = u
    return FullTrajectory(times=times, values=values, grid=grid,
                          drift_max=drift_max, steps_taken=steps_taken,
                          halvings_used=halvings_total)


# === a-posteriori residual ===

@dataclass(frozen=True)
class ResidualReport:
    """Defect of a space-time field against the full model.

    l2_residual and max_residual measure the interior equation defect
    (walls and the first/last time slice excluded, time derivative by
    centered differences). neumann_defect is the largest one-sided
    wall derivative over the sampled times; norm_defect the largest
    deviation of |u|^2 from 1.
    """

    l2_residual: float
    max_residual: float
    neumann_defect: float
    norm_defect: float


def residual_report(times: np.ndarray, values: np.ndarray, grid: Grid1D,
                    epsilon: float,
                    source: Optional[Callable] = None) -> ResidualReport:
    """Measure how well values[k] = u(times[k], grid.x) solves the model.

    values has shape (nt, n, 3) with nt >= 3. The interior residual uses
    the same second-order stencils as the solver, so smooth fields score
    O(dt^2 + h^2).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (times.size, grid.n, 3):
        raise ValueError(
            f"values shape {values.shape} does not match "
            f"({times.size}, {grid.n}, 3)")
    if times.size < 3:
        raise ValueError("need at least 3 time slices for a residual")
    ws = _Workspace(grid)
    du_dt = np.gradient(values, times, axis=0)

    residuals = np.empty((times.size - 2, grid.n - 2, 3))
    for k in range(1, times.size - 1):
        u = values[k]
        d2u = apply_tridiagonal_stencil(ws.d2, u)
        g = _forcing(u, epsilon, ws)
        if source is not None:
            g = g + source(times[k], grid.x)
        rhs = epsilon**2 * (d2u + np.cross(u, d2u)) + g
        residuals[k - 1] = (du_dt[k] - rhs)[1:-1]

    r2 = np.sum(residuals**2, axis=-1)
    inner = np.trapezoid(r2, grid.x[1:-1], axis=1)
    l2 = float(np.sqrt(np.trapezoid(inner, times[1:-1])))
    max_r = float(np.max(np.abs(residuals)))

    nd = 0.0
    for k in range(times.size):
        left = one_sided_d1(grid.x, values[k], "left")
        right = one_sided_d1(grid.x, values[k], "right")
        nd = max(nd, float(np.max(np.abs(left))), float(np.max(np.abs(right))))
    norm_defect = float(np.max(np.abs(np.sum(values**2, axis=-1) - 1.0)))
    return ResidualReport(l2_residual=l2, max_residual=max_r,
                          neumann_defect=nd, norm_defect=norm_defect)
