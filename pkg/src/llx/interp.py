"""Spline sampling of layer profiles onto solver grids.

The layer profiles live on their own stretched meshes (y for the
transmission layer, z for the wall layer) and on the coarse parameter
mesh in x. Evaluating the composite field on a solver grid needs two
steps: resample along x onto the solver nodes, then evaluate each
column at its own stretched coordinate (y = x/eps or z = (1 - |x|)/eps,
a different point for every column). The second step is a natural cubic
spline with one shared knot set and many right-hand sides, so the
coefficient solve is a single banded system and the evaluation a
vectorized gather.

Contains:
- natural_spline_coeffs: second derivatives of the natural cubic spline
- spline_eval_each: evaluate column i at its own query point q[i]
- x_resample: cubic resampling along one axis onto new nodes
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded


def natural_spline_coeffs(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Second derivatives m of the natural cubic spline through v.

    x (nk,) strictly increasing knots, v (nk, ...) values with any
    batch shape trailing; the tridiagonal system is solved once for all
    batch columns. m has the shape of v with m[0] = m[-1] = 0.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError(f"need at least 3 knots, got shape {x.shape}")
    h = np.diff(x)
    if np.any(h <= 0):
        raise ValueError("knots must be strictly increasing")
    if v.shape[0] != x.size:
        raise ValueError(
            f"values have {v.shape[0]} rows for {x.size} knots")
    nk = x.size
    flat = v.reshape(nk, -1)
    slope = np.diff(flat, axis=0) / h[:, None]
    rhs = np.zeros_like(flat)
    rhs[1:-1] = slope[1:] - slope[:-1]
    ab = np.zeros((3, nk))
    ab[0, 2:] = h[1:] / 6.0
    ab[1, 0] = 1.0
    ab[1, -1] = 1.0
    ab[1, 1:-1] = (h[:-1] + h[1:]) / 3.0
    ab[2, :-2] = h[:-1] / 6.0
    m = solve_banded((1, 1), ab, rhs)
    return m.reshape(v.shape)


def spline_eval_each(x: np.ndarray, v: np.ndarray, m: np.ndarray,
                     q: np.ndarray) -> np.ndarray:
    """Evaluate batch column i of the spline at its own point q[i].

    v, m (nk, nb) as from natural_spline_coeffs with flattened batch,
    q (nb,) query points inside [x[0], x[-1]]. Returns (nb,).
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if v.ndim != 2 or v.shape != m.shape or q.shape != (v.shape[1],):
        raise ValueError(
            f"shape mismatch: v {v.shape}, m {m.shape}, q {q.shape}")
    lo, hi = x[0], x[-1]
    span = hi - lo
    if np.any(q < lo - 1e-12 * span) or np.any(q > hi + 1e-12 * span):
        raise ValueError(
            f"query points leave [{lo:g}, {hi:g}]: "
            f"[{q.min():g}, {q.max():g}]")
    qc = np.clip(q, lo, hi)
    j = np.clip(np.searchsorted(x, qc, side="right") - 1, 0, x.size - 2)
    cols = np.arange(v.shape[1])
    h = x[j + 1] - x[j]
    tl = x[j + 1] - qc
    tr = qc - x[j]
    vj, vj1 = v[j, cols], v[j + 1, cols]
    mj, mj1 = m[j, cols], m[j + 1, cols]
    return (vj * tl / h + vj1 * tr / h
            + mj * (tl ** 3 / h - h * tl) / 6.0
            + mj1 * (tr ** 3 / h - h * tr) / 6.0)


def x_resample(x_src: np.ndarray, values: np.ndarray, x_tgt: np.ndarray,
               axis: int = 0, bc: str = "natural") -> np.ndarray:
    """Cubic resampling of values along one axis onto x_tgt.

    bc "natural" suits fields that flatten toward the ends (layer
    profiles at their support edges); "not-a-knot" suits smooth fields
    sampled through the whole range.
    """
    x_src = np.asarray(x_src, dtype=float)
    if x_src.size != values.shape[axis]:
        raise ValueError(
            f"axis {axis} has {values.shape[axis]} entries for "
            f"{x_src.size} source nodes")
    spl = CubicSpline(x_src, values, axis=axis, bc_type=bc)
    return spl(np.asarray(x_tgt, dtype=float))
