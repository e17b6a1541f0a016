"""Mode-3 tensor algebra for hyperspectral cubes.

A cube is a plain ndarray of shape (M, N, B): M rows, N columns, B bands.
All routines promote to float64 and keep a single fixed unfolding
convention so that matrix factors computed anywhere in the package can be
folded back without bookkeeping.
"""

import numpy as np

__all__ = ["unfold3", "fold3", "mode3_product", "frob_norm_sq", "as_cube"]


def as_cube(arr, name="cube"):
    """Validate and return ``arr`` as a float64 cube of shape (M, N, B)."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"{name} must be 3-d (rows, cols, bands), got shape {a.shape}")
    if min(a.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {a.shape}")
    return a


def unfold3(cube):
    """Unfold a cube along the band mode into a (B, M*N) matrix.

    Row b holds band b scanned column-major over the spatial grid, i.e.
    entry (b, q) is cube[q % M, q // M, b].  The result is a copy.
    """
    cube = as_cube(cube)
    m, n, b = cube.shape
    # reshape with order='F' walks rows fastest, matching the column-major scan
    return cube.reshape(m * n, b, order="F").T.copy()


def fold3(mat, shape):
    """Inverse of :func:`unfold3`: fold a (B, M*N) matrix into an (M, N, B) cube.

    ``shape`` gives the spatial grid (M, N); the band count is taken from the
    matrix.  fold3(unfold3(x), x.shape[:2]) reproduces x exactly.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a 2-d unfolded matrix, got shape {mat.shape}")
    m, n = int(shape[0]), int(shape[1])
    b, q = mat.shape
    if q != m * n:
        raise ValueError(f"matrix has {q} columns, cannot fold to {m}x{n} spatial grid")
    return mat.T.reshape(m, n, b, order="F")


def mode3_product(cube, p):
    """Apply a matrix to the band mode: fold3(p @ unfold3(cube)).

    p has shape (B2, B); the result has shape (M, N, B2).  With p orthonormal
    of shape (B, K) this projects onto a K-dimensional spectral subspace via
    p.T, and lifts back via p.
    """
    cube = as_cube(cube)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != cube.shape[2]:
        raise ValueError(
            f"matrix shape {p.shape} does not match band count {cube.shape[2]}"
        )
    return fold3(p @ unfold3(cube), cube.shape[:2])


def frob_norm_sq(arr):
    """Squared Frobenius norm (sum of squared entries) as a float."""
    a = np.asarray(arr, dtype=np.float64)
    return float(np.sum(a * a))
