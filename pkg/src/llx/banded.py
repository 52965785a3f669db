"""Banded linear algebra for 3-vector fields on a line of nodes.

Unknowns are ordered node-major, component-minor: the 3-vector at node i
occupies rows 3i..3i+2. A block-tridiagonal system with 3x3 blocks then
has scalar bandwidth 5 on each side, which scipy's solve_banded handles
directly.

Contains:
- cross_matrix: the matrix [a]x with [a]x v = a x v, batched
- inv_id_plus_cross: closed-form inverse of I + [a]x, batched
- blocks_to_banded / block_tridiag_solve: assembly and solve
- tridiag_solve_components: scalar tridiagonal solve applied to each
  component of a vector unknown (the decoupled case)
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def cross_matrix(a: np.ndarray) -> np.ndarray:
    """Matrix of v -> a x v; a has shape (..., 3), result (..., 3, 3)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape + (3,))
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    out[..., 0, 1] = -a3
    out[..., 0, 2] = a2
    out[..., 1, 0] = a3
    out[..., 1, 2] = -a1
    out[..., 2, 0] = -a2
    out[..., 2, 1] = a1
    return out


def inv_id_plus_cross(a: np.ndarray) -> np.ndarray:
    """Inverse of I + [a]x in closed form: (I - [a]x + a a^T)/(1 + |a|^2).

    I + [a]x is always invertible (eigenvalues 1, 1 +- i|a|), so no
    conditioning guard is needed.
    """
    a = np.asarray(a, dtype=float)
    eye = np.broadcast_to(np.eye(3), a.shape + (3,))
    outer = a[..., :, None] * a[..., None, :]
    denom = 1.0 + np.sum(a * a, axis=-1)[..., None, None]
    return (eye - cross_matrix(a) + outer) / denom


def blocks_to_banded(A: np.ndarray, B: np.ndarray,
                     C: np.ndarray) -> np.ndarray:
    """Pack block-tridiagonal 3x3 blocks into solve_banded storage.

    A[i] couples node i to node i-1 (A[0] ignored), B[i] is the diagonal
    block, C[i] couples node i to node i+1 (C[-1] ignored). Returns the
    (11, 3N) array for solve_banded with (l, u) = (5, 5).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    n = B.shape[0]
    if A.shape != (n, 3, 3) or C.shape != (n, 3, 3) or B.shape != (n, 3, 3):
        raise ValueError(
            f"block arrays must share shape (n, 3, 3); got {A.shape}, "
            f"{B.shape}, {C.shape}")
    ab = np.zeros((11, 3 * n))
    r = np.arange(3)
    rr, cc = np.meshgrid(r, r, indexing="ij")
    nodes = np.arange(n)
    # diagonal blocks: global row 3i+r, col 3i+c, band row 5 + r - c
    cols = (3 * nodes[:, None, None] + cc).reshape(-1)
    band_d = np.broadcast_to((5 + rr - cc), (n, 3, 3)).reshape(-1)
    ab[band_d, cols] = B.reshape(-1)
    # subdiagonal blocks: row 3i+r, col 3(i-1)+c, band row 5 + 3 + r - c
    cols_a = (3 * (nodes[1:, None, None] - 1) + cc).reshape(-1)
    band_a = np.broadcast_to((8 + rr - cc), (n - 1, 3, 3)).reshape(-1)
    ab[band_a, cols_a] = A[1:].reshape(-1)
    # superdiagonal blocks: row 3i+r, col 3(i+1)+c, band row 5 - 3 + r - c
    cols_c = (3 * (nodes[:-1, None, None] + 1) + cc).reshape(-1)
    band_c = np.broadcast_to((2 + rr - cc), (n - 1, 3, 3)).reshape(-1)
    ab[band_c, cols_c] = C[:-1].reshape(-1)
    return ab


def block_tridiag_solve(A: np.ndarray, B: np.ndarray, C: np.ndarray,
                        rhs: np.ndarray) -> np.ndarray:
    """Solve the block-tridiagonal system for a (n, 3) right-hand side."""
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    ab = blocks_to_banded(A, B, C)
    sol = solve_banded((5, 5), ab, rhs.reshape(3 * n))
    return sol.reshape(n, 3)


def tridiag_solve_components(lower: np.ndarray, diag: np.ndarray,
                             upper: np.ndarray,
                             rhs: np.ndarray) -> np.ndarray:
    """Solve a scalar tridiagonal system for each component of (n, 3) rhs.

    lower[i] multiplies node i-1 in row i (lower[0] ignored), upper[i]
    multiplies node i+1 (upper[-1] ignored). All three components share
    the same matrix, so one factorization serves all right-hand sides.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)
