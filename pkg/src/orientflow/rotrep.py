"""Rotations as unit quaternions, and the sphere geometry around the north pole.

Quaternions are ``(q0, q1, q2, q3)`` with scalar part first and the
right-handed Hamilton product, so ``(1, 0, 0, 0)`` is the identity and
``q -> q (.) q^-1`` is a homomorphism onto SO(3).  Each rotation has two
preimages ``q`` and ``-q``; the hemisphere ``q0 > 0`` picks one, which is only
ambiguous for half-turns (``q0 = 0``).

Sphere helpers work in any dimension ``M``; the pole ``p0`` is the first
basis vector and the cap of parameter ``r`` is ``{p : p[0] >= r}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10
# q0^2 = (1 + trace) / 4 below this is treated as a half-turn
HALF_TURN_TOL = 1e-14


class AmbiguousRotationError(ValueError):
    """Rotation by pi: no unique upper-hemisphere quaternion."""


class SphereError(ValueError):
    pass


@dataclass(frozen=True)
class AxisAngle:
    angle: float
    axis: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.axis, dtype=float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-10:
            raise SphereError(f"axis must be a unit 3-vector, got {self.axis}")
        if not 0.0 <= self.angle <= np.pi:
            raise SphereError(f"angle must lie in [0, pi], got {self.angle}")
        object.__setattr__(self, "axis", tuple(float(x) for x in n))


def as_unit_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise SphereError(f"quaternion must have 4 components, got shape {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise SphereError(f"quaternion is not unit: |q| = {np.linalg.norm(q)!r}")
    return q


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product ``p q``."""
    p0, p1, p2, p3 = np.asarray(p, dtype=float)
    q0, q1, q2, q3 = np.asarray(q, dtype=float)
    return np.array([
        p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
        p0 * q1 + p1 * q0 + p2 * q3 - p3 * q2,
        p0 * q2 - p1 * q3 + p2 * q0 + p3 * q1,
        p0 * q3 + p1 * q2 - p2 * q1 + p3 * q0,
    ])


def axisangle_to_quat(aa: AxisAngle) -> np.ndarray:
    half = 0.5 * aa.angle
    return np.concatenate(([np.cos(half)], np.sin(half) * np.asarray(aa.axis)))


def quat_to_axisangle(q) -> AxisAngle:
    q = as_unit_quaternion(q)
    if q[0] < 0:
        q = -q
    s = np.linalg.norm(q[1:])
    if s == 0.0:
        return AxisAngle(0.0, (0.0, 0.0, 1.0))
    angle = 2.0 * np.arctan2(s, q[0])
    return AxisAngle(float(min(angle, np.pi)), tuple(q[1:] / s))


def quat_to_rotmat(q) -> np.ndarray:
    """Matrix of ``x -> q x q^-1``; invariant under ``q -> -q``."""
    w, x, y, z = as_unit_quaternion(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotmat_to_quat(R) -> np.ndarray:
    """Upper-hemisphere quaternion of a rotation with angle < pi.

    Raises
    ------
    AmbiguousRotationError
        If the rotation angle is pi (trace = -1), where ``q`` and ``-q`` both
        lie on the equator.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise SphereError(f"expected a 3x3 matrix, got shape {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-10) or abs(np.linalg.det(R) - 1.0) > 1e-10:
        raise SphereError("matrix is not a proper rotation")
    tr = np.trace(R)
    w2 = 0.25 * (1.0 + tr)
    if w2 <= HALF_TURN_TOL:
        raise AmbiguousRotationError(
            f"rotation angle is pi (trace = {tr!r}); the quaternion lies on the equator"
        )
    # Shepperd: divide by the largest of the four squared components
    diag = np.array([w2, 0.25 * (1 + R[0, 0] - R[1, 1] - R[2, 2]),
                     0.25 * (1 - R[0, 0] + R[1, 1] - R[2, 2]),
                     0.25 * (1 - R[0, 0] - R[1, 1] + R[2, 2])])
    i = int(np.argmax(diag))
    if i == 0:
        w = np.sqrt(w2)
        q = np.array([w, (R[2, 1] - R[1, 2]) / (4 * w), (R[0, 2] - R[2, 0]) / (4 * w),
                      (R[1, 0] - R[0, 1]) / (4 * w)])
    elif i == 1:
        x = np.sqrt(diag[1])
        q = np.array([(R[2, 1] - R[1, 2]) / (4 * x), x, (R[0, 1] + R[1, 0]) / (4 * x),
                      (R[0, 2] + R[2, 0]) / (4 * x)])
    elif i == 2:
        y = np.sqrt(diag[2])
        q = np.array([(R[0, 2] - R[2, 0]) / (4 * y), (R[0, 1] + R[1, 0]) / (4 * y), y,
                      (R[1, 2] + R[2, 1]) / (4 * y)])
    else:
        z = np.sqrt(diag[3])
        q = np.array([(R[1, 0] - R[0, 1]) / (4 * z), (R[0, 2] + R[2, 0]) / (4 * z),
                      (R[1, 2] + R[2, 1]) / (4 * z), z])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def north_pole(M: int) -> np.ndarray:
    p = np.zeros(M)
    p[0] = 1.0
    return p


def as_sphere_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise SphereError(f"sphere point must be a vector of length >= 2, got shape {p.shape}")
    if abs(np.linalg.norm(p) - 1.0) > UNIT_TOL:
        raise SphereError(f"point is not on the unit sphere: |p| = {np.linalg.norm(p)!r}")
    return p


def geodesic_dist(p, q) -> float:
    p, q = as_sphere_point(p), as_sphere_point(q)
    return float(np.arccos(np.clip(p @ q, -1.0, 1.0)))


def _check_cap_parameter(r: float) -> None:
    if not 0.0 < r < 1.0:
        raise SphereError(f"cap parameter must lie in (0, 1), got {r}")


def in_cap(p, r: float) -> bool:
    _check_cap_parameter(r)
    return bool(as_sphere_point(p)[0] >= r)


def radial_coordinate(p) -> float:
    """Geodesic distance from the pole, the radius of the polar chart."""
    p = as_sphere_point(p)
    if p[0] <= -1.0 + UNIT_TOL:
        raise SphereError("antipode of the pole lies on the chart boundary")
    return float(np.arccos(np.clip(p[0], -1.0, 1.0)))


def exp_map(base, v) -> np.ndarray:
    base = as_sphere_point(base)
    v = np.asarray(v, dtype=float)
    if abs(v @ base) > TANGENT_TOL:
        raise SphereError(f"vector is not tangent at base: v.base = {v @ base!r}")
    t = np.linalg.norm(v)
    if t >= np.pi:
        raise SphereError(f"tangent length must be below pi, got {t}")
    if t == 0.0:
        return base.copy()
    return np.cos(t) * base + np.sin(t) * (v / t)


def slerp(p, q, s):
    """Great-circle interpolation from ``p`` (s = 0) to ``q`` (s = 1).

    ``s`` may be an array; the result then has shape ``s.shape + (M,)``.
    """
    p, q = as_sphere_point(p), as_sphere_point(q)
    s = np.asarray(s, dtype=float)[..., None]
    theta = np.arccos(np.clip(p @ q, -1.0, 1.0))
    if theta < 1e-12:
        return np.broadcast_to(p, s.shape[:-1] + p.shape).copy()
    if np.pi - theta < 1e-12:
        raise SphereError("antipodal endpoints: geodesic is not unique")
    return (np.sin((1 - s) * theta) * p + np.sin(s * theta) * q) / np.sin(theta)
