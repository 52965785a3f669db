"""Two-scale approximate solution and the epsilon-convergence study.

The approximation at scale eps combines the slow limit state with the
stretched interface and wall profiles:

    a(t, x) = U_int(t, x, x/eps) + eps * (U_wall(t, x, (1-|x|)/eps)
                                          + rho(t, x)),

where U_int equals the one-sided limit state u0 plus the transmission
increment W + S inside the interface neighborhood (and u0 alone
outside or beyond |y| = Y), U_wall is the wall profile on its cutoff
support, and rho the slow Neumann corrector. Sampling on a solver grid
interpolates the slow direction with cubic splines (each side from its
own half, so the blend region never contaminates the base state) and
evaluates the fast direction with a natural spline at each column's own
stretched coordinate; the exponential lift S is evaluated in closed
form. Layer splines carry one exactly-zero anchor column beyond their
support, so the increments roll off smoothly and vanish identically
farther out.

The convergence study builds the profiles once (they do not depend on
eps), then for each eps: samples the ansatz on an eps-refined grid,
starts the full model from the renormalized ansatz at t = 0, and
records the distance to the limit state, the ansatz residual, and the
conormal (E-class) norms of the corrected difference (u - a) / eps.

Contains:
- ExpansionAnsatz / assemble_ansatz: the sampler
- l2_space_time / l2_space_time_error / jump_error_l2: space-time norms
- EClassNorms / eclass_norms: conormal norm records
- StudyConfig / ConvergenceReport / convergence_study: the experiment
- fit_slope: log-log least-squares rate
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .boundary_layer import (BoundaryProfile, make_wall_grid,
                             solve_boundary_profile, wall_slopes)
from .errors import ConfigError, NonContraction
from .fields import MagnetizationField
from .full_model import (FullModelConfig, make_epsilon_grid, residual_report,
                         simulate_full)
from .geometry import LevelSets, build_domain, conormal_weight
from .internal_layer import (ExtendedLimit, ProfilePair, extend_limit,
                             make_profile_grid, make_time_grid,
                             picard_profiles, profile_d1)
from .interp import natural_spline_coeffs, spline_eval_each, x_resample
from .limit_model import renormalize, simulate_limit


# === the assembled ansatz ===

@dataclass(frozen=True)
class ExpansionAnsatz:
    """Sampler for the two-scale approximation at one eps.

    ext carries the one-sided limit states on the full parameter mesh;
    profiles and boundary share its time knots and mesh. g_minus and
    g_plus are the wall trace slopes feeding the corrector
    rho = phi * theta * g_side.
    """

    ext: ExtendedLimit
    profiles: ProfilePair
    boundary: BoundaryProfile
    epsilon: float
    levelsets: LevelSets
    g_minus: np.ndarray
    g_plus: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.profiles.times

    def knot_index(self, t: float) -> int:
        """Index of t among the stored knots; off-knot times are errors."""
        times = self.times
        scale = max(1.0, float(times[-1]))
        k = int(np.searchsorted(times, t))
        for cand in (k - 1, k, k + 1):
            if 0 <= cand < times.size and abs(times[cand] - t) <= 1e-9 * scale:
                return cand
        raise ValueError(
            f"time {t!r} is not a stored knot (spacing "
            f"{np.max(np.diff(times)):g}, end {times[-1]:g})")

    def _base(self, k: int, x: np.ndarray) -> np.ndarray:
        # each side samples its own half only, where the extended state
        # equals the bare limit solution (no blend contamination)
        xp = self.ext.x_param
        out = np.empty((x.size, 3))
        left = x < 0.0
        lp = xp <= 0.0
        rp = xp >= 0.0
        if left.any():
            out[left] = x_resample(xp[lp], self.ext.u_minus[k][lp],
                                   x[left], bc="not-a-knot")
        if (~left).any():
            out[~left] = x_resample(xp[rp], self.ext.u_plus[k][rp],
                                    x[~left], bc="not-a-knot")
        return out

    def _interface_increment(self, k: int, x: np.ndarray) -> np.ndarray:
        pair = self.profiles
        xp = pair.x_param
        y = pair.y
        j0 = pair.j0
        ys = x / self.epsilon
        active = self.levelsets.in_v_sigma(x) & (np.abs(ys) <= pair.Y)
        out = np.zeros((x.size, 3))
        if not active.any():
            return out
        idx = np.nonzero(pair.support_mask)[0]
        i0, i1 = int(idx[0]), int(idx[-1])
        if i0 == 0 or i1 == xp.size - 1:
            raise ValueError("interface support touches the domain ends")
        # one exactly-zero anchor column on each side of the support
        # (the jump field vanishes identically outside the neighborhood)
        xs_ext = xp[i0 - 1:i1 + 2]
        W_ext = np.zeros((xs_ext.size,) + pair.W.shape[2:])
        W_ext[1:-1] = pair.W[k]
        d_ext = np.zeros((xs_ext.size, 3))
        d_ext[1:-1] = pair.delta[k]
        xa = x[active]
        W_x = x_resample(xs_ext, W_ext, xa, axis=0)
        d_x = x_resample(xs_ext, d_ext, xa, axis=0)
        ya = ys[active]
        vals = np.zeros((xa.size, 3))
        gm = ya < 0.0
        if gm.any():
            knots = y[:j0 + 1]
            v = np.moveaxis(W_x[gm, :j0 + 1], 1, 0).reshape(knots.size, -1)
            m = natural_spline_coeffs(knots, v)
            got = spline_eval_each(knots, v, m, np.repeat(ya[gm], 3))
            vals[gm] = got.reshape(-1, 3) \
                + 0.5 * d_x[gm] * np.exp(ya[gm])[:, None]
        gp = ~gm
        if gp.any():
            knots = y[j0:]
            v = np.moveaxis(W_x[gp, j0:], 1, 0).reshape(knots.size, -1)
            m = natural_spline_coeffs(knots, v)
            got = spline_eval_each(knots, v, m, np.repeat(ya[gp], 3))
            vals[gp] = got.reshape(-1, 3) \
                - 0.5 * d_x[gp] * np.exp(-ya[gp])[:, None]
        out[active] = vals
        return out

    def _wall_increment(self, k: int, x: np.ndarray,
                        theta_x: np.ndarray) -> np.ndarray:
        prof = self.boundary
        z = prof.z
        zs = (1.0 - np.abs(x)) / self.epsilon
        out = np.zeros((x.size, 3))
        xp = prof.x_param
        xs = prof.x_support
        for side in ("minus", "plus"):
            if side == "plus":
                sel = (x > 0.0) & (theta_x > 0.0) & (zs <= prof.Z)
                cols = xs > 0.0
            else:
                sel = (x < 0.0) & (theta_x > 0.0) & (zs <= prof.Z)
                cols = xs < 0.0
            if not (sel.any() and cols.sum() >= 2):
                continue
            block = prof.U[k][cols]
            if side == "plus":
                j = int(np.searchsorted(xp, xs[cols][0])) - 1
                xs_ext = np.concatenate([[xp[j]], xs[cols]])
                U_ext = np.concatenate([np.zeros((1,) + block.shape[1:]),
                                        block])
            else:
                j = int(np.searchsorted(xp, xs[cols][-1])) + 1
                xs_ext = np.concatenate([xs[cols], [xp[j]]])
                U_ext = np.concatenate([block,
                                        np.zeros((1,) + block.shape[1:])])
            U_x = x_resample(xs_ext, U_ext, x[sel], axis=0)
            v = np.moveaxis(U_x, 1, 0).reshape(z.size, -1)
            m = natural_spline_coeffs(z, v)
            got = spline_eval_each(z, v, m, np.repeat(zs[sel], 3))
            out[sel] = got.reshape(-1, 3)
        return out

    def sample_parts(self, t: float, x: np.ndarray) -> dict:
        """The four summands at the knot t on nodes x, before scaling.

        Returns {"base", "interface", "wall", "rho"}; the sampled field
        is base + interface + epsilon * (wall + rho).
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or np.any(np.abs(x) > 1.0 + 1e-12):
            raise ValueError("sample nodes must lie in [-1, 1]")
        k = self.knot_index(t)
        theta_x = self.levelsets.theta(x)
        rho = np.zeros((x.size, 3))
        phi_theta = (1.0 - np.abs(x)) * theta_x
        right = x > 0.0
        left = x < 0.0
        rho[right] = phi_theta[right, None] * self.g_plus[k]
        rho[left] = phi_theta[left, None] * self.g_minus[k]
        return {
            "base": self._base(k, x),
            "interface": self._interface_increment(k, x),
            "wall": self._wall_increment(k, x, theta_x),
            "rho": rho,
        }

    def sample(self, t: float, x: np.ndarray) -> np.ndarray:
        """The approximate solution at knot t on nodes x: (nx, 3)."""
        p = self.sample_parts(t, x)
        return (p["base"] + p["interface"]
                + self.epsilon * (p["wall"] + p["rho"]))

    def sample_times(self, times: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Stacked samples at several knots: (nt, nx, 3)."""
        return np.stack([self.sample(t, x) for t in np.asarray(times)])


def assemble_ansatz(ext: ExtendedLimit, profiles: ProfilePair,
                    boundary: BoundaryProfile, epsilon: float,
                    levelsets: Optional[LevelSets] = None) -> ExpansionAnsatz:
    """Combine the limit states and layer profiles into one sampler."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    same_times = (np.array_equal(ext.times, profiles.times)
                  and np.array_equal(ext.times, boundary.times))
    same_mesh = (np.array_equal(ext.x_param, profiles.x_param)
                 and np.array_equal(ext.x_param, boundary.x_param))
    if not (same_times and same_mesh):
        raise ValueError(
            "grid mismatch: limit states, interface profiles and wall "
            "profiles were built on different time knots or meshes")
    g_minus, g_plus = wall_slopes(boundary)
    return ExpansionAnsatz(ext=ext, profiles=profiles, boundary=boundary,
                           epsilon=float(epsilon),
                           levelsets=levelsets or LevelSets(),
                           g_minus=g_minus, g_plus=g_plus)


# === space-time norms ===

def l2_space_time(times: np.ndarray, x: np.ndarray,
                  values: np.ndarray) -> float:
    """Composite-trapezoid L2([0,T] x Omega) norm of a vector field."""
    values = np.asarray(values, dtype=float)
    if values.shape[:2] != (np.size(times), np.size(x)):
        raise ValueError(
            f"values shape {values.shape} does not match "
            f"({np.size(times)}, {np.size(x)}, ...)")
    sq = np.sum(values * values, axis=-1)
    inner = np.trapezoid(sq, x, axis=1)
    return float(np.sqrt(np.trapezoid(inner, times)))


def l2_space_time_error(times: np.ndarray, x: np.ndarray, a: np.ndarray,
                        b: np.ndarray) -> float:
    """L2 space-time distance of two fields on a common sampling."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return l2_space_time(times, x, a - b)


def jump_error_l2(times: np.ndarray, x: np.ndarray, u: np.ndarray,
                  ref_minus: np.ndarray, ref_plus: np.ndarray) -> float:
    """Distance of u to a two-valued reference with interface cells split.

    The minus reference is integrated over [x_0, 0], the plus reference
    over [0, x_N]; the interface node contributes half a cell to each
    side, so the jump never incurs O(1) quadrature error.
    """
    x = np.asarray(x, dtype=float)
    i0 = int(np.argmin(np.abs(x)))
    if x[i0] != 0.0:
        raise ValueError("the sampling must contain the interface node 0")
    dm = np.sum((u - ref_minus) ** 2, axis=-1)
    dp = np.sum((u - ref_plus) ** 2, axis=-1)
    inner = (np.trapezoid(dm[:, :i0 + 1], x[:i0 + 1], axis=1)
             + np.trapezoid(dp[:, i0:], x[i0:], axis=1))
    return float(np.sqrt(np.trapezoid(inner, times)))


def fit_slope(epsilons: np.ndarray, errors: np.ndarray) -> float:
    """Least-squares slope of log(error) against log(eps)."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size < 2 or eps.size != err.size:
        raise ValueError(f"need >= 2 paired values, got {eps.size}")
    if np.any(err <= 0.0) or np.any(eps <= 0.0):
        raise ValueError("slope fit needs positive errors and eps")
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0])


# === conormal (E-class) norms ===

@dataclass(frozen=True)
class EClassNorms:
    """The five summands of the weighted conormal norm at order m.

    conormal = |w|_m over the fields {d_t, omega(x) d_x}, omega the
    conormal weight vanishing at interface and walls; normal_conormal =
    |eps d_x w|_m; the sup entries carry their eps prefactors already.
    """

    m: int
    conormal: float
    normal_conormal: float
    sup: float
    sup_conormal: float
    sup_normal: float

    @property
    def total(self) -> float:
        return (self.conormal + self.normal_conormal + self.sup
                + self.sup_conormal + self.sup_normal)

    def summands(self) -> np.ndarray:
        return np.array([self.conormal, self.normal_conormal, self.sup,
                         self.sup_conormal, self.sup_normal])


def eclass_norms(times: np.ndarray, x: np.ndarray, w: np.ndarray,
                 epsilon: float, m: int = 1) -> EClassNorms:
    """Discrete conormal norms of a space-time field w (nt, nx, 3).

    The generators are Z0 = d_t and Z1 = omega(x) d_x with the weight
    omega(x) = x(1 - x^2) tangent to interface and walls; the normal
    derivative enters through eps d_x. All differences are second
    order on the sampling grid.
    """
    w = np.asarray(w, dtype=float)
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    if m not in (0, 1, 2):
        raise ValueError(f"m must be 0, 1 or 2, got {m}")
    if w.shape != (times.size, x.size, 3):
        raise ValueError(
            f"w shape {w.shape} does not match ({times.size}, {x.size}, 3)")
    omega = conormal_weight(x)[None, :, None]

    def dz0(v):
        return np.gradient(v, times, axis=0)

    def dz1(v):
        return omega * profile_d1(x, v)

    def dn(v):
        return profile_d1(x, v)

    def sobolev(v):
        derivs = {(0, 0): v}
        for total in range(1, m + 1):
            for b in range(total + 1):
                a = total - b
                if b > 0:
                    derivs[(a, b)] = dz1(derivs[(a, b - 1)])
                else:
                    derivs[(a, 0)] = dz0(derivs[(a - 1, 0)])
        return float(np.sqrt(sum(
            l2_space_time(times, x, term) ** 2 for term in derivs.values())))

    def sup(v):
        return float(np.sqrt(np.max(np.sum(v * v, axis=-1))))

    wn = epsilon * dn(w)
    return EClassNorms(
        m=m,
        conormal=sobolev(w),
        normal_conormal=sobolev(wn),
        sup=epsilon * sup(w),
        sup_conormal=epsilon * max(sup(dz0(w)), sup(dz1(w))),
        sup_normal=epsilon * sup(wn),
    )


# === the convergence experiment ===

@dataclass(frozen=True)
class StudyConfig:
    """Knobs of the eps-convergence experiment."""

    T: float = 0.5
    dt_full: float = 1e-3
    dt_knot: float = 2.5e-3
    cells_per_eps: int = 16
    param_cells: int = 16
    profile_cells: int = 128
    wall_cells: int = 96
    box_y: float = 15.0
    box_z: float = 15.0
    picard_tol: float = 1e-8
    picard_max_iter: int = 40
    drift_tol: float = 1e-3
    eclass_m: int = 1

    def __post_init__(self):
        if self.T <= 0.0 or self.dt_full <= 0.0 or self.dt_knot <= 0.0:
            raise ConfigError(
                f"T, dt_full, dt_knot must be positive, got "
                f"{self.T}, {self.dt_full}, {self.dt_knot}")
        if self.dt_full > self.dt_knot + 1e-15:
            raise ConfigError(
                f"dt_full={self.dt_full} must not exceed "
                f"dt_knot={self.dt_knot}")
        ratio = self.T / self.dt_knot
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"T={self.T} must be an integer multiple of "
                f"dt_knot={self.dt_knot}")
        if self.eclass_m not in (0, 1, 2):
            raise ConfigError(f"eclass_m must be 0, 1 or 2, "
                              f"got {self.eclass_m}")


@dataclass(frozen=True)
class ExpansionPieces:
    """The eps-independent half of the experiment."""

    ext: ExtendedLimit
    profiles: ProfilePair
    boundary: BoundaryProfile
    levelsets: LevelSets
    T_used: float


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-eps measurements plus the fitted rate.

    slope_running[i] is the pairwise rate between rows i-1 and i
    (nan in row 0); eclass_m0/m1 are the summed five-part norms; the
    records tuples keep the individual summands for each eps.
    """

    epsilons: np.ndarray
    errors_l2: np.ndarray
    residuals: np.ndarray
    slope: float
    slope_running: np.ndarray
    eclass_m0: np.ndarray
    eclass_m1: np.ndarray
    records_m0: tuple
    records_m1: tuple
    T_used: float
    grid_sizes: np.ndarray
    drift_max: np.ndarray


def build_expansion_pieces(data: MagnetizationField,
                           cfg: StudyConfig = StudyConfig(),
                           levelsets: Optional[LevelSets] = None
                           ) -> ExpansionPieces:
    """Run the eps-independent pipeline: limit, extension, both layers.

    If the profile iteration stops contracting at some interior time,
    the experiment is retried on the converged part [0, t] (at least 4
    knot cells), and the report carries the shortened horizon.
    """
    levelsets = levelsets or LevelSets()
    domain = build_domain(cells_per_side=cfg.param_cells)
    T_used = float(cfg.T)
    pgrid = make_profile_grid(Y=cfg.box_y, cells=cfg.profile_cells)
    for attempt in (0, 1):
        knots = make_time_grid(T_used, dt=cfg.dt_knot)
        ext = extend_limit(data, domain, levelsets, knots)
        try:
            pair = picard_profiles(ext, levelsets, pgrid,
                                   tol=cfg.picard_tol,
                                   max_iter=cfg.picard_max_iter)
            break
        except NonContraction as exc:
            t_ok = np.floor(exc.t_converged / cfg.dt_knot) * cfg.dt_knot
            if attempt == 1 or t_ok < 4.0 * cfg.dt_knot:
                raise
            T_used = float(t_ok)
    z = make_wall_grid(Z=cfg.box_z, cells=cfg.wall_cells)
    boundary = solve_boundary_profile(ext, levelsets, z)
    return ExpansionPieces(ext=ext, profiles=pair, boundary=boundary,
                           levelsets=levelsets, T_used=T_used)


def _epsilon_row(task) -> dict:
    """One eps of the study: sample, march, measure. Top level so the
    process pool can ship it."""
    pieces, data, eps, cfg = task
    grid = make_epsilon_grid(eps, cells_per_eps=cfg.cells_per_eps)
    ansatz = assemble_ansatz(pieces.ext, pieces.profiles, pieces.boundary,
                             eps, pieces.levelsets)
    n_knots = int(round(pieces.T_used / cfg.dt_knot))
    times_eval = np.arange(n_knots + 1) * cfg.dt_knot
    a_vals = ansatz.sample_times(times_eval, grid.x)

    u_init = renormalize(a_vals[0])
    fcfg = FullModelConfig(epsilon=eps, dt=cfg.dt_full, T=pieces.T_used,
                           drift_tol=cfg.drift_tol)
    traj = simulate_full(u_init, grid, fcfg, t_eval=times_eval)
    if not np.allclose(traj.times, times_eval):
        raise RuntimeError("solver output times drifted off the knots")

    limit_init = np.stack([data(grid.x, "minus"), data(grid.x, "plus")])
    limit = simulate_limit(limit_init, pieces.T_used, cfg.dt_full,
                           t_eval=times_eval)
    err = jump_error_l2(times_eval, grid.x, traj.values,
                        limit.values[:, 0], limit.values[:, 1])

    res = residual_report(times_eval, a_vals, grid, eps)
    w = (traj.values - a_vals) / eps
    ec0 = eclass_norms(times_eval, grid.x, w, eps, m=0)
    ecm = eclass_norms(times_eval, grid.x, w, eps, m=cfg.eclass_m)
    return {
        "epsilon": eps,
        "err_l2": err,
        "residual_l2": res.l2_residual,
        "ec0": ec0,
        "ecm": ecm,
        "nx": grid.n,
        "drift_max": traj.drift_max,
    }


def convergence_study(epsilons, data: MagnetizationField,
                      cfg: StudyConfig = StudyConfig(),
                      levelsets: Optional[LevelSets] = None,
                      jobs: int = 1,
                      pieces: Optional[ExpansionPieces] = None
                      ) -> ConvergenceReport:
    """Measure |u_eps - u0| and diagnostics over a decreasing eps list.

    The profiles are built once and shared; per-eps runs are
    independent and run in a process pool when jobs > 1. Refuses eps
    lists that are not strictly decreasing and grids that leave the
    layer under-resolved (fewer than 8 cells per eps width).
    """
    eps = np.asarray(list(epsilons), dtype=float)
    if eps.size < 3:
        raise ConfigError(f"need at least 3 eps values, got {eps.size}")
    if np.any(eps <= 0.0) or np.any(np.diff(eps) >= 0.0):
        raise ConfigError(
            f"eps values must be positive and strictly decreasing, "
            f"got {eps.tolist()}")
    if cfg.cells_per_eps < 8:
        raise ConfigError(
            f"unresolved layer: {cfg.cells_per_eps} cells per eps width "
            f"(need >= 8)")
    if pieces is None:
        pieces = build_expansion_pieces(data, cfg, levelsets)

    tasks = [(pieces, data, float(e), cfg) for e in eps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_epsilon_row, tasks))
    else:
        rows = [_epsilon_row(t) for t in tasks]

    errors = np.array([r["err_l2"] for r in rows])
    residuals = np.array([r["residual_l2"] for r in rows])
    running = np.full(eps.size, np.nan)
    running[1:] = (np.diff(np.log(errors)) / np.diff(np.log(eps)))
    return ConvergenceReport(
        epsilons=eps,
        errors_l2=errors,
        residuals=residuals,
        slope=fit_slope(eps, errors),
        slope_running=running,
        eclass_m0=np.array([r["ec0"].total for r in rows]),
        eclass_m1=np.array([r["ecm"].total for r in rows]),
        records_m0=tuple(r["ec0"] for r in rows),
        records_m1=tuple(r["ecm"] for r in rows),
        T_used=pieces.T_used,
        grid_sizes=np.array([r["nx"] for r in rows]),
        drift_max=np.array([r["drift_max"] for r in rows]),
    )
