"""Synthetic scene oracle: planted-plane rendering, corruption, and disk format.

A scene is one infinite ground plane below the camera plus axis-aligned boxes
resting on it. Rendering ray-casts every pixel, so depth maps, normal maps and
ground masks are exact; that makes the estimation pipeline testable against
known ground truth without any learned components.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .camera import (
    CameraIntrinsics,
    RollPitch,
    UnitNormal,
    pixel_directions,
    rollpitch_to_normal,
)
from .errors import EmptyGround, FormatError

DEPTH_SCALE = 256.0  # stored depth is meters * 256 in a 16-bit PNG; 0 = invalid
NORMAL_UNIT_TOL = 1e-4  # loose enough for 16-bit quantized maps read from disk


@dataclass(frozen=True)
class GroundBox:
    """Axis-aligned cuboid resting on the ground plane.

    (x, y) place the base center on the ground in meters: x lateral (right
    positive), y forward along the ground away from the camera foot.
    """

    x: float
    y: float
    width: float
    depth: float
    height: float

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError("box dimensions must be positive")


@dataclass(frozen=True)
class SceneSpec:
    intrinsics: CameraIntrinsics
    ground_normal: UnitNormal
    camera_height: float
    boxes: tuple[GroundBox, ...] = ()
    background_depth: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not self.camera_height > 0:
            raise ValueError("camera height must be positive")
        if not self.background_depth > 0:
            raise ValueError("background depth must be positive")


@dataclass
class DepthMap:
    """Per-pixel depth in meters plus validity flags."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise ValueError("depth values and validity must share a 2D shape")
        held = self.values[self.valid]
        if held.size and not (np.all(np.isfinite(held)) and np.all(held > 0)):
            raise ValueError("valid depths must be finite and positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class NormalMap:
    """Per-pixel surface normals (unit vectors, not sign-canonicalized)."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise ValueError("normal map must have shape (H, W, 3)")
        if self.values.shape[:2] != self.valid.shape:
            raise ValueError("normal values and validity must share (H, W)")
        norms = np.linalg.norm(self.values[self.valid], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > NORMAL_UNIT_TOL):
            raise ValueError("valid normals must be unit length")

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass
class GroundMask:
    """Binary per-pixel ground indicator."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError("mask must be 2D")
        if arr.dtype != np.bool_:
            uniq = np.unique(arr)
            if not np.all(np.isin(uniq, (0, 1))):
                raise ValueError("mask entries must be 0 or 1")
            arr = arr.astype(bool)
        self.values = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption model: relative depth noise, normal jitter, planted outliers."""

    depth_sigma_rel: float = 0.0
    normal_sigma: float = 0.0
    outlier_frac: float = 0.0
    outlier_height: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.depth_sigma_rel < 0 or self.normal_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")
        if not 0.0 <= self.outlier_frac <= 1.0:
            raise ValueError("outlier fraction must lie in [0, 1]")


@dataclass
class Sample:
    """One scene observation: depth + normals + ground mask + intrinsics (+ gt)."""

    depth: DepthMap
    normals: NormalMap
    mask: GroundMask
    intrinsics: CameraIntrinsics
    gt_normal: UnitNormal | None = None
    gt_height: float | None = None

    def __post_init__(self):
        expected = (self.intrinsics.height, self.intrinsics.width)
        for name, shape in (
            ("depth", self.depth.shape),
            ("normals", self.normals.shape),
            ("mask", self.mask.shape),
        ):
            if shape != expected:
                raise ValueError(f"{name} shape {shape} does not match intrinsics {expected}")


def ground_frame(normal: UnitNormal) -> np.ndarray:
    """Orthonormal ground basis as matrix columns (lateral, forward, up).

    "up" is the plane normal; "forward" is the camera z-axis projected onto
    the plane (falling back to x when the camera looks straight at the plane).
    """
    up = normal.as_array()
    fwd = np.array([0.0, 0.0, 1.0]) - up[2] * up
    if np.linalg.norm(fwd) < 1e-9:
        fwd = np.array([1.0, 0.0, 0.0]) - up[0] * up
    fwd = fwd / np.linalg.norm(fwd)
    lateral = np.cross(fwd, up)
    lateral = lateral / np.linalg.norm(lateral)
    return np.stack([lateral, fwd, up], axis=1)


def _intersect_box(
    dirs: np.ndarray, box: GroundBox, frame: np.ndarray, foot: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Slab-test one box against all pixel rays.

    Returns (t, normals): ray parameter (inf where missed) and the camera-frame
    outward normal of the struck face.
    """
    base = foot + frame @ np.array([box.x, box.y, 0.0])
    origin_local = frame.T @ (-base)
    dirs_local = dirs @ frame  # (H, W, 3)

    lo = np.array([-box.width / 2.0, -box.depth / 2.0, 0.0])
    hi = np.array([box.width / 2.0, box.depth / 2.0, box.height])

    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin_local) / dirs_local
        t2 = (hi - origin_local) / dirs_local
    # rays parallel to a slab: inside -> (-inf, inf), outside -> empty
    parallel = dirs_local == 0.0
    inside = (origin_local >= lo) & (origin_local <= hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))

    t_near = t_lo.max(axis=2)
    t_far = t_hi.min(axis=2)
    hit = (t_far >= t_near) & (t_near > 1e-9)
    t = np.where(hit, t_near, np.inf)

    face_axis = t_lo.argmax(axis=2)
    axis_dir = np.take_along_axis(dirs_local, face_axis[:, :, None], axis=2)[:, :, 0]
    sign = np.where(axis_dir > 0, -1.0, 1.0)
    normals = frame.T[face_axis] * sign[:, :, None]
    return t, normals


def render(spec: SceneSpec) -> Sample:
    """Ray-cast the scene into a depth map, normal map and ground mask.

    Per pixel the nearest hit among the ground plane and all boxes sets the
    depth (camera z) and the true outward surface normal; the ground mask
    marks pixels whose nearest hit is the ground plane. Pixels hitting
    nothing receive the background depth with an invalid normal.
    """
    k = spec.intrinsics
    n = spec.ground_normal.as_array()
    h = spec.camera_height
    dirs = pixel_directions(k)

    denom = dirs @ n
    with np.errstate(divide="ignore"):
        t_ground = np.where(denom < -1e-12, -h / denom, np.inf)

    frame = ground_frame(spec.ground_normal)
    foot = -h * n  # point on the plane nearest the camera
    t_layers = [t_ground]
    normal_layers = [np.broadcast_to(n, dirs.shape)]
    for box in spec.boxes:
        t_box, n_box = _intersect_box(dirs, box, frame, foot)
        t_layers.append(t_box)
        normal_layers.append(n_box)

    t_all = np.stack(t_layers)
    winner = t_all.argmin(axis=0)
    t_best = np.take_along_axis(t_all, winner[None], axis=0)[0]
    hit = np.isfinite(t_best)

    mask = GroundMask((winner == 0) & hit)
    if mask.count == 0:
        raise EmptyGround("no pixel ray intersects the ground plane")

    # rays have unit z, so the ray parameter equals the camera z-depth
    depth_values = np.where(hit, t_best, spec.background_depth)
    depth = DepthMap(depth_values, np.ones_like(hit))

    normal_values = np.zeros(dirs.shape)
    stacked = np.stack(normal_layers)
    chosen = np.take_along_axis(stacked, winner[None, :, :, None], axis=0)[0]
    normal_values[hit] = chosen[hit]
    normals = NormalMap(normal_values, hit.copy())

    return Sample(depth, normals, mask, k, spec.ground_normal, h)


def _jitter_normals(values, valid, sigma, rng):
    """Rotate each valid normal by |N(0, sigma^2)| radians about a random axis."""
    shape = valid.shape
    angles = np.abs(rng.normal(0.0, sigma, shape))
    axes = rng.normal(size=shape + (3,))
    axes /= np.maximum(np.linalg.norm(axes, axis=-1, keepdims=True), 1e-12)

    cos_a = np.cos(angles)[..., None]
    sin_a = np.sin(angles)[..., None]
    dot = np.sum(axes * values, axis=-1, keepdims=True)
    rotated = (
        values * cos_a
        + np.cross(axes, values) * sin_a
        + axes * dot * (1.0 - cos_a)
    )
    rotated /= np.maximum(np.linalg.norm(rotated, axis=-1, keepdims=True), 1e-12)
    out = values.copy()
    out[valid] = rotated[valid]
    return out


def corrupt(sample: Sample, noise: NoiseSpec) -> Sample:
    """Apply seeded noise to a sample; deterministic given ``noise.seed``.

    Depth gets per-pixel relative Gaussian noise; normals get angular jitter;
    a fixed-size random subset of masked pixels is replaced by outliers whose
    3D points sit exactly ``outlier_height`` meters above the ground plane
    (requires the sample's ground truth). The mask is never altered.
    """
    rng = np.random.default_rng(noise.seed)
    depth_values = sample.depth.values.copy()
    depth_valid = sample.depth.valid.copy()
    normal_values = sample.normals.values.copy()

    if noise.depth_sigma_rel > 0:
        eps = rng.normal(0.0, noise.depth_sigma_rel, depth_values.shape)
        depth_values[depth_valid] *= 1.0 + eps[depth_valid]

    if noise.normal_sigma > 0:
        normal_values = _jitter_normals(
            normal_values, sample.normals.valid, noise.normal_sigma, rng
        )

    if noise.outlier_frac > 0:
        if sample.gt_normal is None or sample.gt_height is None:
            raise ValueError("outlier injection requires gt_normal and gt_height")
        if not noise.outlier_height < sample.gt_height:
            raise ValueError("outlier_height must be below the camera height")
        flat_masked = np.flatnonzero(sample.mask.values)
        count = int(round(noise.outlier_frac * flat_masked.size))
        if count:
            chosen = rng.choice(flat_masked.size, size=count, replace=False)
            idx = flat_masked[np.sort(chosen)]
            dirs = pixel_directions(sample.intrinsics).reshape(-1, 3)
            denom = dirs[idx] @ sample.gt_normal.as_array()
            if np.any(denom >= 0):
                raise ValueError("masked pixel ray does not reach the ground plane")
            lifted = (noise.outlier_height - sample.gt_height) / denom
            depth_values.reshape(-1)[idx] = lifted

    return Sample(
        DepthMap(depth_values, depth_valid),
        NormalMap(normal_values, sample.normals.valid.copy()),
        GroundMask(sample.mask.values.copy()),
        sample.intrinsics,
        sample.gt_normal,
        sample.gt_height,
    )


def save_sample(sample: Sample, directory) -> None:
    """Write depth.png, normals.png, mask.png and manifest.json.

    Depth: 16-bit grayscale, meters * 256, 0 = invalid. Normals: 16-bit RGB,
    channel = round((n * 0.5 + 0.5) * 65535), all-zero = invalid. Mask: 8-bit,
    255 = ground. The manifest stores intrinsics and ground truth as JSON.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    encoded = np.rint(sample.depth.values * DEPTH_SCALE)
    encoded = np.clip(encoded, 0, 65535).astype(np.uint16)
    encoded[~sample.depth.valid] = 0
    cv2.imwrite(str(directory / "depth.png"), encoded)

    norm_enc = np.rint((sample.normals.values * 0.5 + 0.5) * 65535.0)
    norm_enc = np.clip(norm_enc, 0, 65535).astype(np.uint16)
    norm_enc[~sample.normals.valid] = 0
    cv2.imwrite(str(directory / "normals.png"), norm_enc[:, :, ::-1])  # RGB -> BGR

    mask_enc = np.where(sample.mask.values, 255, 0).astype(np.uint8)
    cv2.imwrite(str(directory / "mask.png"), mask_enc)

    k = sample.intrinsics
    manifest = {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": k.width,
        "height": k.height,
        "gt_normal": None
        if sample.gt_normal is None
        else [sample.gt_normal.nx, sample.gt_normal.ny, sample.gt_normal.nz],
        "gt_height": sample.gt_height,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _read_png(path, field_name: str) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(field_name, "file missing or not a readable PNG")
    return img


def load_sample(directory) -> Sample:
    """Read a sample directory written by :func:`save_sample`."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError("manifest", "manifest.json not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError("manifest", f"invalid JSON ({e})") from e

    def pull(key, kind):
        if key not in manifest:
            raise FormatError(key, "missing from manifest")
        try:
            return kind(manifest[key])
        except (TypeError, ValueError) as e:
            raise FormatError(key, str(e)) from e

    k = CameraIntrinsics(
        fx=pull("fx", float),
        fy=pull("fy", float),
        cx=pull("cx", float),
        cy=pull("cy", float),
        width=pull("width", int),
        height=pull("height", int),
    )
    shape = (k.height, k.width)

    raw_depth = _read_png(directory / "depth.png", "depth")
    if raw_depth.dtype != np.uint16 or raw_depth.ndim != 2:
        raise FormatError("depth", "expected a single-channel 16-bit PNG")
    if raw_depth.shape != shape:
        raise FormatError("depth", f"shape {raw_depth.shape} != manifest {shape}")
    depth = DepthMap(raw_depth.astype(float) / DEPTH_SCALE, raw_depth > 0)

    raw_normals = _read_png(directory / "normals.png", "normals")
    if raw_normals.dtype != np.uint16 or raw_normals.ndim != 3 or raw_normals.shape[2] != 3:
        raise FormatError("normals", "expected a 3-channel 16-bit PNG")
    if raw_normals.shape[:2] != shape:
        raise FormatError("normals", f"shape {raw_normals.shape[:2]} != manifest {shape}")
    rgb = raw_normals[:, :, ::-1].astype(float)
    valid = np.any(raw_normals != 0, axis=2)
    values = np.zeros(rgb.shape)
    values[valid] = rgb[valid] / 65535.0 * 2.0 - 1.0
    normals = NormalMap(values, valid)

    raw_mask = _read_png(directory / "mask.png", "mask")
    if raw_mask.ndim != 2:
        raise FormatError("mask", "expected a single-channel PNG")
    if raw_mask.shape != shape:
        raise FormatError("mask", f"shape {raw_mask.shape} != manifest {shape}")
    if not np.all(np.isin(np.unique(raw_mask), (0, 255))):
        raise FormatError("mask", "pixel values must be 0 or 255")
    mask = GroundMask(raw_mask == 255)

    gt_normal_raw = manifest.get("gt_normal")
    if gt_normal_raw is None:
        gt_normal = None
    else:
        try:
            gt_normal = UnitNormal(*(float(x) for x in gt_normal_raw))
        except (TypeError, ValueError):
            try:
                gt_normal = UnitNormal.from_vector(gt_normal_raw)
            except (TypeError, ValueError) as e:
                raise FormatError("gt_normal", str(e)) from e
    gt_height_raw = manifest.get("gt_height")
    gt_height = None if gt_height_raw is None else float(gt_height_raw)

    return Sample(depth, normals, mask, k, gt_normal, gt_height)


DEFAULT_INTRINSICS = CameraIntrinsics(fx=70.0, fy=70.0, cx=48.0, cy=32.0, width=96, height=64)


def random_scene_spec(
    rng: np.random.Generator,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    rp_limit_deg: float = 0.0,
    height_range: tuple[float, float] = (1.2, 1.8),
    max_boxes: int = 3,
    background_depth: float = 100.0,
) -> SceneSpec:
    """Draw a scene: planted plane orientation, camera height and box clutter."""
    limit = math.radians(rp_limit_deg)
    theta = rng.uniform(-limit, limit) if limit > 0 else 0.0
    psi = rng.uniform(-limit, limit) if limit > 0 else 0.0
    normal = rollpitch_to_normal(RollPitch(theta, psi))
    h = rng.uniform(*height_range)
    boxes = []
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        boxes.append(
            GroundBox(
                x=rng.uniform(-4.0, 4.0),
                y=rng.uniform(5.0, 20.0),
                width=rng.uniform(0.8, 2.5),
                depth=rng.uniform(0.8, 2.5),
                height=rng.uniform(0.5, 2.0),
            )
        )
    return SceneSpec(
        intrinsics=intrinsics,
        ground_normal=normal,
        camera_height=h,
        boxes=tuple(boxes),
        background_depth=background_depth,
        seed=int(rng.integers(0, 2**63 - 1)),
    )
