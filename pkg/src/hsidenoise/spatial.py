"""Non-local spatial step on the reduced image: reference-grid selection,
k-NN full-band patch grouping, weighted singular-value shrinkage per group,
and overlap-averaged reconstruction.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import as_cube

__all__ = [
    "PatchGeometry",
    "PatchGroup",
    "reference_grid",
    "match_group",
    "wnnm_shrink",
    "aggregate",
    "denoise_reduced",
    "DEFAULT_WNNM_C",
    "DEFAULT_WNNM_EPS",
]

DEFAULT_WNNM_C = 2.0 * math.sqrt(2.0)
DEFAULT_WNNM_EPS = 1e-16


@dataclass(frozen=True)
class PatchGeometry:
    """Patch matching parameters.

    patch: square patch side; stride: spacing of reference patches;
    window: search window side, centered on the reference; group: number
    of similar patches kept per reference.
    """

    patch: int = 6
    stride: int = 4
    window: int = 30
    group: int = 70

    def __post_init__(self):
        if self.patch < 1:
            raise ValueError(f"patch size must be >= 1, got {self.patch}")
        if not 1 <= self.stride <= self.patch:
            raise ValueError(
                f"stride must be in [1, patch={self.patch}], got {self.stride}"
            )
        if self.window < self.patch:
            raise ValueError(
                f"search window ({self.window}) smaller than patch ({self.patch})"
            )
        if self.group < 1:
            raise ValueError(f"group size must be >= 1, got {self.group}")


@dataclass
class PatchGroup:
    """One reference patch's nearest neighbors from the reduced image.

    members lists (row, col) top-left positions, reference first; matrix
    has one vectorized full-band patch per column, in member order.
    """

    ref_pos: tuple
    members: np.ndarray  # (p, 2) int positions
    matrix: np.ndarray  # (patch*patch*K, p)


def _axis_grid(dim, patch, stride):
    last = dim - patch
    idx = list(range(0, last + 1, stride))
    if idx[-1] != last:
        idx.append(last)
    return idx


def reference_grid(m, n, geom):
    """Top-left corners of the reference patches, row-major.

    Stride-spaced grid with the last row/column clamped to the image edge
    so every pixel falls inside at least one reference patch.
    """
    if geom.patch > m or geom.patch > n:
        raise ValueError(
            f"patch size {geom.patch} exceeds image dims ({m}, {n})"
        )
    rows = _axis_grid(m, geom.patch, geom.stride)
    cols = _axis_grid(n, geom.patch, geom.stride)
    return [(r, c) for r in rows for c in cols]


def match_group(reduced, ref, geom):
    """Group the patches most similar to the reference patch.

    Candidates are all patch positions whose top-left corner lies within
    half a search window of the reference corner (clipped to the image).
    Similarity is squared Euclidean distance over all patch entries and
    bands; ties break in row-major position order.  The reference itself
    is always member 0.  If the window holds fewer than geom.group
    candidates, all of them are taken.
    """
    reduced = as_cube(reduced, "reduced")
    m, n, k = reduced.shape
    ps = geom.patch
    r0, c0 = int(ref[0]), int(ref[1])
    if not (0 <= r0 <= m - ps and 0 <= c0 <= n - ps):
        raise ValueError(f"reference {ref} out of bounds for {m}x{n} image")

    half = geom.window // 2
    rlo, rhi = max(0, r0 - half), min(m - ps, r0 + half)
    clo, chi = max(0, c0 - half), min(n - ps, c0 + half)
    nrows = rhi - rlo + 1
    ncols = chi - clo + 1

    region = reduced[rlo : rhi + ps, clo : chi + ps, :]
    # (nrows, ncols, k, ps, ps) view of every candidate patch
    wins = sliding_window_view(region, (ps, ps), axis=(0, 1))
    ref_patch = np.moveaxis(reduced[r0 : r0 + ps, c0 : c0 + ps, :], 2, 0)
    diff = wins - ref_patch
    dist = np.einsum("rckij,rckij->rc", diff, diff).ravel()

    order = np.argsort(dist, kind="stable")
    ref_flat = (r0 - rlo) * ncols + (c0 - clo)
    take = [ref_flat]
    for idx in order:
        if len(take) == geom.group:
            break
        if idx != ref_flat:
            take.append(int(idx))

    members = np.empty((len(take), 2), dtype=np.int64)
    matrix = np.empty((ps * ps * k, len(take)))
    for j, idx in enumerate(take):
        r = rlo + idx // ncols
        c = clo + idx % ncols
        members[j] = (r, c)
        matrix[:, j] = reduced[r : r + ps, c : c + ps, :].ravel()
    return PatchGroup(ref_pos=(r0, c0), members=members, matrix=matrix)


def wnnm_shrink(g, sigma, c=DEFAULT_WNNM_C, eps=DEFAULT_WNNM_EPS, value_scale=1.0):
    """Weighted singular-value shrinkage of one group matrix.

    SVD the group, estimate the clean singular values by subtracting the
    expected noise energy, weight each inversely to that estimate, and
    soft-threshold: strong components are barely touched while weak
    (noise-dominated) ones collapse.

    The weight constant c is calibrated for data on a unit value scale;
    value_scale divides the matrix and sigma going in (and multiplies the
    result) so intensities on e.g. [0,255] shrink identically to their
    [0,1] counterparts.  sigma below 1e-9 of the value scale bypasses the
    SVD and returns g unchanged.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-d group matrix, got shape {g.shape}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if value_scale <= 0:
        raise ValueError(f"value_scale must be > 0, got {value_scale}")
    if sigma < 1e-9 * value_scale:
        return g

    try:
        u, s, vt = np.linalg.svd(g / value_scale, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD failed on a {g.shape[0]}x{g.shape[1]} group matrix: {exc}"
        ) from exc
    p = g.shape[1]
    sig = sigma / value_scale
    s_clean = np.sqrt(np.maximum(s * s - p * sig * sig, 0.0))
    weights = c * math.sqrt(p) / (s_clean + eps)
    s_new = np.maximum(s - weights, 0.0)
    return (u * (s_new * value_scale)) @ vt


def aggregate(groups_out, dims):
    """Average the denoised groups back into a cube.

    Each group matrix is un-vectorized to its member patches, which are
    scatter-added into sum and count buffers; the output is sum/count.
    Groups are processed in canonical order (reference position,
    row-major) so the result does not depend on the order the caller
    produced them in.  A pixel covered by no patch raises an error.
    """
    m, n, k = (int(d) for d in dims)
    acc = np.zeros((m, n, k))
    cnt = np.zeros((m, n))

    ordered = sorted(groups_out, key=lambda item: item[0].ref_pos)
    for grp, mat in ordered:
        mat = np.asarray(mat, dtype=np.float64)
        npix = mat.shape[0] // k
        ps = math.isqrt(npix)
        if ps * ps * k != mat.shape[0] or mat.shape[1] != len(grp.members):
            raise ValueError(
                f"group matrix shape {mat.shape} inconsistent with "
                f"{len(grp.members)} members and {k} bands"
            )
        for j, (r, c) in enumerate(grp.members):
            acc[r : r + ps, c : c + ps, :] += mat[:, j].reshape(ps, ps, k)
            cnt[r : r + ps, c : c + ps] += 1.0

    if np.any(cnt == 0):
        gaps = np.argwhere(cnt == 0)
        raise ValueError(
            f"coverage gap: {len(gaps)} pixels covered by no patch, "
            f"first at {tuple(gaps[0])}"
        )
    return acc / cnt[:, :, None]


def denoise_reduced(
    reduced, sigma, geom, c=DEFAULT_WNNM_C, eps=DEFAULT_WNNM_EPS, value_scale=255.0
):
    """Full spatial pass over the reduced image.

    Builds the reference grid, matches a group per reference, shrinks each
    group matrix, and aggregates.  With sigma = 0 this is the identity up
    to overlap-averaging roundoff.
    """
    reduced = as_cube(reduced, "reduced")
    m, n, _ = reduced.shape
    out = []
    for ref in reference_grid(m, n, geom):
        grp = match_group(reduced, ref, geom)
        out.append((grp, wnnm_shrink(grp.matrix, sigma, c, eps, value_scale)))
    return aggregate(out, reduced.shape)
