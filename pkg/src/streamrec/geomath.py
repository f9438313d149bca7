"""Quaternion, rigid-pose and similarity-transform algebra.

Conventions: Hamilton product, scalar-first (w, x, y, z) storage, and a
canonical sign of w >= 0 so that equal rotations compare equal. Poses map
camera coordinates into world coordinates (x_world = R x_cam + t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import DegenerateConfigurationError, as_points, as_vector

_ZERO_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Quaternion:
    """Rotation quaternion. Construction is raw; use :meth:`normalized` for a unit one."""

    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values, normalize: bool = False) -> "Quaternion":
        v = as_vector(values, 4, "quaternion")
        q = cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))
        return q.normalized() if normalize else q

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Quaternion":
        a = as_vector(axis, 3, "axis")
        n = float(np.linalg.norm(a))
        if n < _ZERO_NORM_TOL:
            raise ValueError("rotation axis has zero length")
        half = 0.5 * float(angle_rad)
        s = math.sin(half) / n
        return cls(math.cos(half), a[0] * s, a[1] * s, a[2] * s).normalized()

    @classmethod
    def from_rotation_matrix(cls, matrix) -> "Quaternion":
        """Convert a proper rotation matrix to a unit, sign-canonical quaternion."""
        m = np.asarray(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        trace = m[0, 0] + m[1, 1] + m[2, 2]
        if trace > 0.0:
            s = math.sqrt(trace + 1.0) * 2.0
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                 (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                 (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                 (m[1, 2] + m[2, 1]) / s)
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                 (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        return cls(*q).normalized()

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2)

    def canonical(self) -> "Quaternion":
        """Flip the sign so w > 0; for w == 0, the first nonzero vector part is positive."""
        if self.w > 0.0:
            return self
        if self.w < 0.0:
            return Quaternion(-self.w, -self.x, -self.y, -self.z)
        for c in (self.x, self.y, self.z):
            if c > 0.0:
                return self
            if c < 0.0:
                return Quaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def normalized(self) -> "Quaternion":
        """Unit-norm, sign-canonical copy. Raises ValueError on a ~zero quaternion."""
        n = self.norm()
        if not math.isfinite(n) or n < _ZERO_NORM_TOL:
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n).canonical()

    def to_rotation_matrix(self) -> np.ndarray:
        """3x3 rotation matrix; assumes a unit quaternion."""
        w, x, y, z = self.w, self.x, self.y, self.z
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        return np.array([
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ])


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a (x) b, renormalized and sign-canonical.

    Both factors are expected to be unit quaternions (within ~1e-6); the
    product is renormalized so rounding never accumulates.
    """
    for q in (a, b):
        if not all(math.isfinite(c) for c in (q.w, q.x, q.y, q.z)):
            raise ValueError("quaternion factors must be finite")
    w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z
    x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y
    y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x
    z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w
    return Quaternion(w, x, y, z).normalized()


def quat_conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q.w, -q.x, -q.y, -q.z)


def rotate(t, q: Quaternion) -> np.ndarray:
    """Apply the rotation represented by unit quaternion q to 3-vector t."""
    v = as_vector(t, 3, "vector")
    return q.to_rotation_matrix() @ v


def rotation_angle_deg(a: Quaternion, b: Quaternion) -> float:
    """Geodesic angle between two unit quaternions in degrees, in [0, 180]."""
    dot = abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z)
    return math.degrees(2.0 * math.acos(min(1.0, dot)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world rigid transform: rotation quaternion plus translation."""

    rotation: Quaternion
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "translation", as_vector(self.translation, 3, "translation"))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Quaternion.identity(), np.zeros(3))

    def as_array(self) -> np.ndarray:
        """(qw, qx, qy, qz, tx, ty, tz) as a length-7 array."""
        return np.concatenate([self.rotation.as_array(), self.translation])

    @classmethod
    def from_array(cls, values, normalize: bool = True) -> "Pose":
        v = as_vector(values, 7, "pose")
        return cls(Quaternion.from_array(v[:4], normalize=normalize), v[4:])

    def apply(self, points) -> np.ndarray:
        """Map local points (n, 3) or (3,) into world coordinates."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.to_rotation_matrix().T + self.translation


def relative_pose(pose_i: Pose, pose_j: Pose) -> Pose:
    """Transform taking frame-i camera coordinates to frame-j camera coordinates.

    Rotation is conj(q_j) (x) q_i and translation is the rotation of
    t_i - t_j by conj(q_j).
    """
    q_j_conj = quat_conjugate(pose_j.rotation)
    q_ij = quat_mul(q_j_conj, pose_i.rotation)
    t_ij = rotate(pose_i.translation - pose_j.translation, q_j_conj)
    return Pose(q_ij, t_ij)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """y = scale * R x + t with scale > 0 and a proper rotation."""

    scale: float
    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "translation", as_vector(self.translation, 3, "translation"))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * (pts @ self.rotation.to_rotation_matrix().T) + self.translation


def umeyama_align(source, target, with_scale: bool = True) -> SimilarityTransform:
    """Least-squares similarity (or rigid) transform mapping source onto target.

    Minimizes sum_k |s R x_k + t - y_k|^2 over proper rotations R, translation
    t and, when ``with_scale`` is set, scale s. Configurations whose
    cross-covariance has rank < 2 (fewer than 3 points, collinear or
    coincident clouds) are rejected rather than silently reflected.
    """
    src = as_points(source, "source")
    dst = as_points(target, "target")
    if src.shape != dst.shape:
        raise ValueError(f"point sets must match: {src.shape} vs {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateConfigurationError(f"need at least 3 point pairs, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst

    cov = dst_c.T @ src_c / n
    u, d, vt = np.linalg.svd(cov)
    if d[0] <= 0.0 or d[1] <= 1e-12 * d[0]:
        raise DegenerateConfigurationError("covariance rank < 2; alignment is ill-posed")

    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        s[2] = -1.0
    rot = u @ np.diag(s) @ vt

    if with_scale:
        var_src = float((src_c ** 2).sum() / n)
        scale = float((d * s).sum() / var_src)
    else:
        scale = 1.0
    trans = mu_dst - scale * rot @ mu_src
    return SimilarityTransform(scale, Quaternion.from_rotation_matrix(rot), trans)
