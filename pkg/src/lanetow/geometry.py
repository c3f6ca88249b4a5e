"""Planar poses, SE(2) transforms and angle helpers.

Conventions used throughout the package:

* Global frame ``G``: right-handed, angles counterclockwise positive.
* ``Pose2.psi`` is the heading, i.e. the forward direction of the vehicle is
  ``(cos psi, sin psi)``.
* The robot body frame ``R`` follows the wheel allocation convention: ``e_1R``
  points to the right of the robot and ``e_2R`` points forward. It is therefore
  rotated by ``psi - pi/2`` with respect to the global frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    w = math.fmod(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot wrap non-finite angles")
    w = np.fmod(a, TWO_PI)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return np.where(w > math.pi, w - TWO_PI, w)


class FrameId(enum.Enum):
    GLOBAL = "G"
    ROBOT = "R"
    WHEELCHAIR = "W"
    CAMERA_D = "C1"
    CAMERA_T = "C2"
    BEV = "BEV"


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    psi: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading_vector(self) -> np.ndarray:
        return np.array([math.cos(self.psi), math.sin(self.psi)])

    def advanced(self, distance: float) -> Pose2:
        """Pose moved ``distance`` along its own heading."""
        return Pose2(self.x + distance * math.cos(self.psi),
                     self.y + distance * math.sin(self.psi), self.psi)


class Transform2:
    """Homogeneous 3x3 SE(2) transform."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.array_equal(m[2], [0.0, 0.0, 1.0]):
            raise ValueError("bottom row of an SE(2) transform must be [0 0 1]")
        rot = m[:2, :2]
        if (np.abs(rot.T @ rot - np.eye(2)).max() > 1e-9
                or abs(np.linalg.det(rot) - 1.0) > 1e-9):
            raise ValueError("rotation block is not a proper rotation")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def identity(cls) -> Transform2:
        return cls(np.eye(3))

    @classmethod
    def rotation(cls, theta: float) -> Transform2:
        return pose_to_transform(Pose2(0.0, 0.0, theta))

    @classmethod
    def translation(cls, tx: float, ty: float) -> Transform2:
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    @property
    def angle(self) -> float:
        return math.atan2(self.matrix[1, 0], self.matrix[0, 0])

    @property
    def translation_vector(self) -> np.ndarray:
        return self.matrix[:2, 2].copy()

    def __matmul__(self, other: Transform2) -> Transform2:
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        """Map a point ``(2,)`` or an array of points ``(n, 2)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.matrix[:2, :2].T + self.matrix[:2, 2]

    def apply_vector(self, vectors) -> np.ndarray:
        """Rotate free vectors (translation ignored)."""
        return np.asarray(vectors, dtype=float) @ self.matrix[:2, :2].T

    def inverse(self) -> Transform2:
        return invert(self)

    def allclose(self, other: Transform2, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Transform2(angle={self.angle:.6g}, t={self.translation_vector.tolist()})"


def _unchecked(m: np.ndarray) -> Transform2:
    # results of compose/invert inherit validity from their inputs
    t = Transform2.__new__(Transform2)
    m[2] = (0.0, 0.0, 1.0)
    m.setflags(write=False)
    t.matrix = m
    return t


def compose(a: Transform2, b: Transform2) -> Transform2:
    """Return ``a . b`` (apply ``b`` first)."""
    return _unchecked(a.matrix @ b.matrix)


def invert(t: Transform2) -> Transform2:
    rot = t.matrix[:2, :2]
    m = np.eye(3)
    m[:2, :2] = rot.T
    m[:2, 2] = -rot.T @ t.matrix[:2, 2]
    return _unchecked(m)


def pose_to_transform(p: Pose2) -> Transform2:
    c, s = math.cos(p.psi), math.sin(p.psi)
    return _unchecked(np.array([[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]]))


# The body frame R has e_2R forward; a heading frame has its x axis forward.
BODY_IN_HEADING_FRAME = Transform2.rotation(-math.pi / 2)


def body_to_global(pose: Pose2) -> Transform2:
    """Transform from the robot body frame ``R`` to the global frame."""
    return compose(pose_to_transform(pose), BODY_IN_HEADING_FRAME)


def signed_distance_to_polyline(points, polyline) -> np.ndarray:
    """Signed distance of each point to a polyline (left of travel positive).

    ``points`` is ``(n, 2)`` and ``polyline`` is ``(m, 2)`` with ``m >= 2``.
    The sign is taken from the segment that realises the minimum distance.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polyline, dtype=float)
    a = poly[:-1]
    seg = poly[1:] - a
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    rel = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nij,ij->ni", rel, seg) / seg_len2, 0.0, 1.0)
    closest = a[None] + t[..., None] * seg[None]
    diff = p[:, None, :] - closest
    dist = np.hypot(diff[..., 0], diff[..., 1])
    best = np.argmin(dist, axis=1)
    idx = np.arange(p.shape[0])
    cross = seg[best, 0] * rel[idx, best, 1] - seg[best, 1] * rel[idx, best, 0]
    sign = np.where(cross >= 0.0, 1.0, -1.0)
    return sign * dist[idx, best]
