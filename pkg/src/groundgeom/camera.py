"""Pinhole camera geometry and ground-plane parameterizations.

Conventions used across the package:

* camera frame: x right, y down, z forward; "up" is the -y direction;
* image coordinates: u rightward, v downward, in pixels;
* angles are radians inside the library (the CLI converts degrees);
* a plane normal is stored canonically with ny <= 0.

A ground plane can be expressed three equivalent ways: as a unit normal in
the camera frame, as roll/pitch angles of that normal against the up-axis,
or as the horizon line it induces in the image (angle plus signed distance
from the principal point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormal, HorizonAtInfinity, NonPositiveDepth

UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (0 <= self.cx < self.width):
            raise ValueError("cx must lie in [0, width)")
        if not (0 <= self.cy < self.height):
            raise ValueError("cy must lie in [0, height)")

    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_transpose(self) -> np.ndarray:
        """Closed-form inverse-transpose of the intrinsic matrix."""
        return np.array(
            [
                [1.0 / self.fx, 0.0, 0.0],
                [0.0, 1.0 / self.fy, 0.0],
                [-self.cx / self.fx, -self.cy / self.fy, 1.0],
            ]
        )


@dataclass(frozen=True)
class PixelPoint:
    """Continuous image location (pixels)."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("pixel coordinates must be finite")


@dataclass(frozen=True)
class CameraPoint:
    """Camera-frame 3D location (meters)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.z))):
            raise ValueError("camera point must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class UnitNormal:
    """Unit plane normal, canonicalized so that ny <= 0 ("up" is -y)."""

    nx: float
    ny: float
    nz: float

    def __post_init__(self):
        norm = math.sqrt(self.nx**2 + self.ny**2 + self.nz**2)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"normal must be unit length, got |n|={norm!r}")
        if self.ny > 0:
            raise ValueError("normal must be canonical (ny <= 0)")

    @classmethod
    def from_vector(cls, v) -> "UnitNormal":
        """Normalize an arbitrary nonzero 3-vector and canonicalize its sign."""
        v = np.asarray(v, dtype=float).reshape(3)
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm < 1e-300:
            raise ValueError("cannot normalize a zero or non-finite vector")
        v = v / norm
        if v[1] > 0:
            v = -v
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz])


@dataclass(frozen=True)
class RollPitch:
    """Roll and pitch (radians) of the ground normal against the up-axis."""

    theta: float
    psi: float

    def __post_init__(self):
        if not (abs(self.theta) < math.pi / 2 and abs(self.psi) < math.pi / 2):
            raise ValueError("roll and pitch must satisfy |angle| < pi/2")


@dataclass(frozen=True)
class HorizonLine:
    """Image horizon line.

    theta is the angle against the horizontal image axis (radians); rho is
    the perpendicular distance from the principal point in pixels, signed
    positive when the line passes above the principal point (smaller v).
    """

    theta: float
    rho: float

    def __post_init__(self):
        if not abs(self.theta) < math.pi / 2:
            raise ValueError("horizon angle must satisfy |theta| < pi/2")
        if not math.isfinite(self.rho):
            raise ValueError("rho must be finite")


def rotation_x(angle: float) -> np.ndarray:
    """Right-handed rotation about the camera x-axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(angle: float) -> np.ndarray:
    """Right-handed rotation about the camera z-axis (optical axis)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pixel_directions(k: CameraIntrinsics) -> np.ndarray:
    """(height, width, 3) grid of ray directions ((u-cx)/fx, (v-cy)/fy, 1).

    Scaling a direction by a pixel's depth reproduces :func:`unproject`.
    """
    u = (np.arange(k.width) - k.cx) / k.fx
    v = (np.arange(k.height) - k.cy) / k.fy
    dirs = np.empty((k.height, k.width, 3))
    dirs[:, :, 0] = u[None, :]
    dirs[:, :, 1] = v[:, None]
    dirs[:, :, 2] = 1.0
    return dirs


def unproject(p: PixelPoint, depth: float, k: CameraIntrinsics) -> CameraPoint:
    """Lift a pixel with known depth to the camera frame.

    x = (u - cx) * z / fx, y = (v - cy) * z / fy, z = depth.
    """
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    x = (p.u - k.cx) * depth / k.fx
    y = (p.v - k.cy) * depth / k.fy
    return CameraPoint(x, y, depth)


def project(q: CameraPoint, k: CameraIntrinsics) -> PixelPoint:
    """Project a camera-frame point to the image: u = fx*x/z + cx, v = fy*y/z + cy."""
    if not q.z > 0:
        raise NonPositiveDepth(f"camera point must have z > 0, got {q.z}")
    u = k.fx * q.x / q.z + k.cx
    v = k.fy * q.y / q.z + k.cy
    return PixelPoint(u, v)


def rollpitch_to_normal(rp: RollPitch) -> UnitNormal:
    """Ground normal for given roll/pitch: n = Rz(theta) @ Rx(psi) @ (0,-1,0).

    Positive psi pitches the camera down (more ground visible, horizon above
    the principal point); positive theta rolls about the optical axis.
    """
    n = rotation_z(rp.theta) @ rotation_x(rp.psi) @ np.array([0.0, -1.0, 0.0])
    return UnitNormal.from_vector(n)


def normal_to_rollpitch(n: UnitNormal) -> RollPitch:
    """Exact inverse of :func:`rollpitch_to_normal` on its range."""
    if n.ny >= 0:
        raise DegenerateNormal("plane is parallel to the viewing direction (ny >= 0)")
    psi = math.asin(max(-1.0, min(1.0, -n.nz)))
    theta = math.atan2(n.nx, -n.ny)
    return RollPitch(theta, psi)


def normal_to_horizon(n: UnitNormal, k: CameraIntrinsics) -> HorizonLine:
    """Convert a ground normal to its image horizon line.

    Points P = (u, v, 1) on the horizon satisfy P^T @ inv(K)^T @ n = 0. With
    A = inv(K)^T @ n = (a, b, c) and a_c = a/c, b_c = b/c the line is
    a_c*u + b_c*v + 1 = 0, theta = arctan(-a_c / b_c), and rho is the
    perpendicular distance from the principal point, signed positive when the
    line passes above it.
    """
    a, b, c = k.inverse_transpose() @ n.as_array()
    plane_scale = math.hypot(a, b)
    if plane_scale < 1e-15:
        raise HorizonAtInfinity("normal is parallel to the optical axis")
    # |c| / hypot(a, b) is the pixel distance from the image origin to the
    # line; the (a_c, b_c, 1) form cannot represent lines through the origin.
    if abs(c) < 1e-9 * plane_scale:
        raise HorizonAtInfinity("horizon passes through the image origin (c ~ 0)")
    if b == 0.0:
        raise HorizonAtInfinity("horizon line is vertical; theta unrepresentable")
    a_c = a / c
    b_c = b / c
    theta = math.atan(-a_c / b_c)
    norm = math.hypot(a_c, b_c)
    signed = (a_c * k.cx + b_c * k.cy + 1.0) / norm
    # sign(b_c) * signed is positive iff the line lies above the principal point
    rho = signed if b_c > 0 else -signed
    return HorizonLine(theta, rho)


def horizon_errors(
    est: HorizonLine, gt: HorizonLine, k: CameraIntrinsics
) -> tuple[float, float]:
    """Angle error in degrees and offset error in image units (fractions of height)."""
    d_theta = abs(est.theta - gt.theta) * 180.0 / math.pi
    d_rho = abs(est.rho - gt.rho) / k.height
    return d_theta, d_rho
