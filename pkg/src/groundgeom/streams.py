"""Depth and normal estimation streams.

Depth stream: isolate ground pixels, lift them to a 3D point cloud, fit a
plane (closed-form least squares, or sampling-based with a soft, probabilistic
hypothesis selection). Normal stream: average the masked per-pixel surface
normals. Fusion averages the unit normals from both streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, UnitNormal, pixel_directions
from .errors import (
    AllDegenerate,
    EmptyMask,
    OppositeNormals,
    ShapeMismatch,
    SingularSystem,
    TooFewPoints,
)
from .scene import DepthMap, GroundMask, NormalMap

DEFAULT_MAX_DEPTH = 30.0  # meters; farther pixels are too noisy to help the fit
CONDITION_LIMIT = 1e12
DEGENERATE_CROSS_TOL = 1e-9


@dataclass
class PointCloud:
    """Lifted ground points with their source pixels."""

    points: np.ndarray  # (N, 3) camera-frame meters
    rows: np.ndarray  # (N,) source pixel row
    cols: np.ndarray  # (N,) source pixel column

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        if len(self.rows) != len(self.points) or len(self.cols) != len(self.points):
            raise ValueError("pixel indices must match the point count")
        if len(self.points) == 0:
            raise ValueError("point cloud must be nonempty")
        if not np.all(self.points[:, 2] > 0):
            raise ValueError("all points must have z > 0")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DsacConfig:
    """Sampling-based fit parameters.

    inlier_tau is the point-plane distance threshold in meters; softness_beta
    (1/m) sharpens the sigmoid soft-inlier count; temperature_alpha scales the
    softmax over hypothesis scores.
    """

    n_hypotheses: int = 64
    inlier_tau: float = 0.05
    softness_beta: float = 100.0
    temperature_alpha: float = 0.1
    refine_with_ls: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_hypotheses < 1:
            raise ValueError("need at least one hypothesis")
        if self.inlier_tau <= 0 or self.softness_beta <= 0 or self.temperature_alpha <= 0:
            raise ValueError("tau, beta and alpha must be positive")


@dataclass
class FitResult:
    """Fitted plane n^T q + offset = 0 plus inlier statistics."""

    normal: UnitNormal
    offset: float
    inlier_count: int
    hypothesis_probs: list[tuple[UnitNormal, float]] | None = None


def isolate(src, mask: GroundMask):
    """Invalidate map entries outside the mask; values are left untouched."""
    if src.shape != mask.shape:
        raise ShapeMismatch(f"map shape {src.shape} != mask shape {mask.shape}")
    if isinstance(src, DepthMap):
        return DepthMap(src.values.copy(), src.valid & mask.values)
    if isinstance(src, NormalMap):
        return NormalMap(src.values.copy(), src.valid & mask.values)
    raise TypeError(f"cannot isolate {type(src).__name__}")


def lift_ground(
    depth: DepthMap,
    mask: GroundMask,
    k: CameraIntrinsics,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> PointCloud:
    """Unproject every masked valid pixel with depth <= max_depth."""
    if depth.shape != mask.shape:
        raise ShapeMismatch(f"depth shape {depth.shape} != mask shape {mask.shape}")
    keep = mask.values & depth.valid & (depth.values <= max_depth) & (depth.values > 0)
    rows, cols = np.nonzero(keep)
    if len(rows) < 3:
        raise TooFewPoints(f"plane fitting needs >= 3 points, got {len(rows)}")
    dirs = pixel_directions(k)[rows, cols]
    points = dirs * depth.values[rows, cols][:, None]
    return PointCloud(points, rows, cols)


def solve_ls_direction(points: np.ndarray) -> np.ndarray:
    """Unnormalized plane direction w solving C w = 1 in the least-squares sense.

    Points on a plane not through the origin satisfy q^T w = 1 with
    w = n / d for unit normal n and plane-origin distance d.
    """
    if len(points) < 3:
        raise TooFewPoints(f"plane fitting needs >= 3 points, got {len(points)}")
    gram = points.T @ points
    if np.linalg.cond(gram) > CONDITION_LIMIT:
        raise SingularSystem("normal equations are ill-conditioned")
    return np.linalg.solve(gram, points.sum(axis=0))


def fit_plane_ls(cloud: PointCloud) -> FitResult:
    """Closed-form least-squares plane through the cloud."""
    w = solve_ls_direction(cloud.points)
    normal = UnitNormal.from_vector(w)
    n = normal.as_array()
    offset = -float(np.mean(cloud.points @ n))
    return FitResult(normal=normal, offset=offset, inlier_count=len(cloud))


def _canonical_order(cloud: PointCloud) -> np.ndarray:
    """Permutation sorting points by source pixel (row, then column).

    Sampling through this order makes the fit independent of the order in
    which points were appended to the cloud.
    """
    return np.lexsort((cloud.cols, cloud.rows))


def _triple_is_degenerate(p1, p2, p3) -> tuple[bool, np.ndarray]:
    e1 = p2 - p1
    e2 = p3 - p1
    cross = np.cross(e1, e2)
    limit = DEGENERATE_CROSS_TOL * np.linalg.norm(e1) * np.linalg.norm(e2)
    return np.linalg.norm(cross) <= limit, cross


@dataclass
class DsacHypotheses:
    """Plane hypotheses from minimal sets, with soft scores and selection probs."""

    order: np.ndarray  # (N,) canonical permutation of the cloud
    triples: np.ndarray  # (J, 3) indices into the *ordered* points
    normals: np.ndarray  # (J, 3) unit, canonical sign
    offsets: np.ndarray  # (J,)
    signs: np.ndarray  # (J,) sign applied to the raw cross product
    scores: np.ndarray  # (J,) soft inlier counts
    probs: np.ndarray  # (J,) softmax selection distribution


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


def soft_inlier_scores(
    points: np.ndarray, normals: np.ndarray, offsets: np.ndarray, cfg: DsacConfig
) -> np.ndarray:
    """Per-hypothesis score: sum_i sigmoid(beta * (tau - dist(q_i, plane_j)))."""
    dist = np.abs(points @ normals.T + offsets[None, :])  # (N, J)
    return _sigmoid(cfg.softness_beta * (cfg.inlier_tau - dist)).sum(axis=0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dsac_hypotheses(cloud: PointCloud, cfg: DsacConfig) -> DsacHypotheses:
    """Sample minimal sets, build plane hypotheses and score them.

    Deterministic given cfg.seed and invariant to the cloud's point order;
    degenerate (near-collinear) triples are rejected and resampled.
    """
    n = len(cloud)
    if n < 3:
        raise TooFewPoints(f"plane fitting needs >= 3 points, got {n}")
    order = _canonical_order(cloud)
    pts = cloud.points[order]

    rng = np.random.default_rng(cfg.seed)
    triples = np.empty((cfg.n_hypotheses, 3), dtype=np.int64)
    crosses = np.empty((cfg.n_hypotheses, 3))
    attempts = 0
    budget = 100 * cfg.n_hypotheses
    j = 0
    while j < cfg.n_hypotheses:
        if attempts >= budget:
            raise AllDegenerate(
                f"no non-collinear minimal set found in {budget} attempts"
            )
        idx = rng.choice(n, size=3, replace=False)
        attempts += 1
        bad, cross = _triple_is_degenerate(pts[idx[0]], pts[idx[1]], pts[idx[2]])
        if bad:
            continue
        triples[j] = idx
        crosses[j] = cross
        j += 1

    norms = np.linalg.norm(crosses, axis=1, keepdims=True)
    unit = crosses / norms
    signs = np.where(unit[:, 1] > 0, -1.0, 1.0)
    normals = unit * signs[:, None]
    anchors = pts[triples[:, 0]]
    offsets = -np.sum(normals * anchors, axis=1)

    scores = soft_inlier_scores(pts, normals, offsets, cfg)
    probs = _softmax(cfg.temperature_alpha * scores)
    return DsacHypotheses(order, triples, normals, offsets, signs, scores, probs)


def fit_plane_dsac(cloud: PointCloud, cfg: DsacConfig) -> FitResult:
    """Robust plane fit: best-scoring sampled hypothesis, optionally LS-refined.

    The returned normal is the argmax hypothesis (refined on its hard inliers
    when cfg.refine_with_ls); hypothesis_probs carries the full soft selection
    distribution used by the differentiable path.
    """
    hyp = dsac_hypotheses(cloud, cfg)
    pts = cloud.points[hyp.order]
    best = int(hyp.scores.argmax())
    normal_vec = hyp.normals[best]
    offset = float(hyp.offsets[best])

    if cfg.refine_with_ls:
        dist = np.abs(pts @ normal_vec + offset)
        inliers = pts[dist <= cfg.inlier_tau]
        if len(inliers) >= 3:
            try:
                w = solve_ls_direction(inliers)
                refined = UnitNormal.from_vector(w)
                normal_vec = refined.as_array()
                offset = -float(np.mean(inliers @ normal_vec))
            except SingularSystem:
                pass  # keep the raw hypothesis; refinement is best-effort

    dist = np.abs(pts @ normal_vec + offset)
    inlier_count = int(np.sum(dist <= cfg.inlier_tau))
    probs = [
        (UnitNormal.from_vector(hyp.normals[i]), float(hyp.probs[i]))
        for i in range(len(hyp.probs))
    ]
    return FitResult(
        normal=UnitNormal.from_vector(normal_vec),
        offset=offset,
        inlier_count=inlier_count,
        hypothesis_probs=probs,
    )


def normal_from_normals(normals: NormalMap, mask: GroundMask) -> UnitNormal:
    """Average the masked per-pixel surface normals into one plane normal."""
    if normals.shape != mask.shape:
        raise ShapeMismatch(f"normals shape {normals.shape} != mask shape {mask.shape}")
    keep = mask.values & normals.valid
    if not keep.any():
        raise EmptyMask("no masked valid normal pixel")
    mean = normals.values[keep].mean(axis=0)
    return UnitNormal.from_vector(mean)


def fuse(n_d: UnitNormal, n_n: UnitNormal) -> UnitNormal:
    """Average the two stream normals on the unit sphere."""
    total = n_d.as_array() + n_n.as_array()
    if np.linalg.norm(total) < 1e-12:
        raise OppositeNormals("stream normals cancel; fusion undefined")
    return UnitNormal.from_vector(total)
