"""Planar homographies and the 4-point corner-offset parameterization.

Conventions used throughout the package:

* A point is an ``(u, v)`` pair: ``u`` is the column (x) coordinate and
  ``v`` the row (y) coordinate, in pixels.  Integer coordinates land on
  pixel centers.
* A homography is a 3x3 float64 array ``h`` acting on homogeneous
  coordinates: with ``(x, y, w) = h @ (u, v, 1)`` the point ``(u, v)``
  maps to ``(x/w, y/w)``.  The matrix is meaningful only up to a global
  nonzero scale.
* A four-point delta is a length-8 float64 array
  ``(du1, dv1, du2, dv2, du3, dv3, du4, dv4)`` of corner offsets in the
  fixed corner order top-left, top-right, bottom-right, bottom-left of
  the reference square.

All geometry runs in float64; callers that need float32 convert at their
own boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Homogeneous coordinates with |w| below this are treated as points at
# infinity.
W_EPSILON = 1e-12

# A 4-point DLT solution must reproject its own inputs to within this
# tolerance, otherwise the configuration is considered degenerate.
DLT_REPROJECTION_TOL = 1e-3


class GeometryError(ValueError):
    """Base class for geometric failure modes."""


class ProjectionError(GeometryError):
    """A point projected to (or numerically at) infinity."""


class DegenerateError(GeometryError):
    """Singular matrix or degenerate point configuration."""


@dataclass(frozen=True)
class PatchFrame:
    """A square region inside a parent image.

    ``origin`` is the (u, v) position of the top-left corner pixel and
    ``side`` the edge length in pixels.  The frame's reference corners
    are its corner *pixels*, i.e. they span ``side - 1`` pixels.
    """

    origin: tuple[float, float]
    side: int

    def __post_init__(self):
        if self.side < 2:
            raise ValueError(f"frame side must be >= 2, got {self.side}")
        if not np.all(np.isfinite(self.origin)):
            raise ValueError(f"frame origin must be finite, got {self.origin}")


def frame_corners(frame: PatchFrame) -> np.ndarray:
    """Corner pixels of a frame as a (4, 2) array in TL, TR, BR, BL order."""
    u0, v0 = frame.origin
    s = frame.side - 1
    return np.array(
        [[u0, v0], [u0 + s, v0], [u0 + s, v0 + s], [u0, v0 + s]], dtype=np.float64
    )


def apply(h: np.ndarray, p) -> np.ndarray:
    """Map a single point through a homography.

    Returns ``(x/w, y/w)`` where ``(x, y, w) = h @ (u, v, 1)``.  Raises
    :class:`ProjectionError` if the point maps to infinity.
    """
    h = np.asarray(h, dtype=np.float64)
    u, v = np.asarray(p, dtype=np.float64)
    x = h[0, 0] * u + h[0, 1] * v + h[0, 2]
    y = h[1, 0] * u + h[1, 1] * v + h[1, 2]
    w = h[2, 0] * u + h[2, 1] * v + h[2, 2]
    if abs(w) < W_EPSILON:
        raise ProjectionError(f"point {(u, v)} projects to infinity (w={w:.3e})")
    return np.array([x / w, y / w])


def project(h: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized point mapping that flags instead of raising.

    ``pts`` is (N, 2).  Returns ``(out, valid)`` where ``out`` is (N, 2)
    and ``valid`` marks points whose homogeneous divisor stayed away from
    zero; invalid rows contain garbage and must be masked by the caller.
    """
    h = np.asarray(h, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    x = h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]
    y = h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]
    w = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
    valid = np.abs(w) >= W_EPSILON
    w_safe = np.where(valid, w, 1.0)
    return np.stack([x / w_safe, y / w_safe], axis=1), valid


def invert(h: np.ndarray) -> np.ndarray:
    """Inverse homography; raises :class:`DegenerateError` if singular."""
    h = np.asarray(h, dtype=np.float64)
    det = np.linalg.det(h)
    if not np.isfinite(det) or abs(det) < W_EPSILON:
        raise DegenerateError(f"homography is not invertible (det={det:.3e})")
    return np.linalg.inv(h)


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity: centroid to origin, mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if dist < W_EPSILON:
        raise DegenerateError("all correspondence points coincide")
    s = np.sqrt(2.0) / dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized Direct Linear Transform from >= 4 correspondences.

    Both point sets are independently normalized (centroid at the origin,
    mean distance sqrt(2)), the stacked 2Nx9 system is solved for its
    null direction via SVD, and the result is denormalized.  For an exact
    minimal (N=4) set the solution must reproject the inputs to within
    ``DLT_REPROJECTION_TOL`` pixels; a larger residual means the points
    were (near-)degenerate and :class:`DegenerateError` is raised.  For
    N > 4 the fit is least-squares and residuals are legitimate, so only
    invertibility of the result is checked.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"expected matching (N, 2) arrays, got {src.shape} and {dst.shape}")
    n = src.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 correspondences, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("correspondences must be finite")

    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    sn = src @ t_src[:2, :2].T + t_src[:2, 2]
    dn = dst @ t_dst[:2, :2].T + t_dst[:2, 2]

    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    xp, yp = dn[:, 0], dn[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = xp * x
    a[0::2, 7] = xp * y
    a[0::2, 8] = xp
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = yp * x
    a[1::2, 7] = yp * y
    a[1::2, 8] = yp

    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src

    det = np.linalg.det(h)
    if not np.all(np.isfinite(h)) or abs(det) < W_EPSILON:
        raise DegenerateError("correspondences are degenerate (singular solution)")
    if n == 4:
        mapped, valid = project(h, src)
        if not np.all(valid):
            raise DegenerateError("degenerate 4-point configuration (corner at infinity)")
        err = np.sqrt(((mapped - dst) ** 2).sum(axis=1)).max()
        if err > DLT_REPROJECTION_TOL:
            raise DegenerateError(
                f"degenerate 4-point configuration (reprojection error {err:.3e} px)"
            )
    return h


def four_point_to_matrix(delta: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Homography sending each frame corner to corner + its offset."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (8,):
        raise ValueError(f"expected 8 offsets, got shape {delta.shape}")
    corners = frame_corners(frame)
    return dlt(corners, corners + delta.reshape(4, 2))


def matrix_to_four_point(h: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Corner offsets produced by a homography at the frame corners."""
    corners = frame_corners(frame)
    mapped, valid = project(h, corners)
    if not np.all(valid):
        raise ProjectionError("a frame corner maps to infinity")
    return (mapped - corners).reshape(8)


def clip_four_point(delta: np.ndarray, limit: float) -> np.ndarray:
    """Clamp every offset component to [-limit, limit]."""
    if limit <= 0:
        raise ValueError(f"clip limit must be positive, got {limit}")
    return np.clip(np.asarray(delta, dtype=np.float64), -limit, limit)


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Divide by the element of largest magnitude (which becomes +1)."""
    h = np.asarray(h, dtype=np.float64)
    pivot = h.flat[np.abs(h).argmax()]
    if abs(pivot) < W_EPSILON:
        raise DegenerateError("cannot normalize an all-zero homography")
    return h / pivot


def homographies_close(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    """Equality up to global scale, via largest-magnitude normalization."""
    return bool(
        np.max(np.abs(normalize_homography(a) - normalize_homography(b))) <= tol
    )
