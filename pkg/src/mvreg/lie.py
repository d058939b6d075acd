"""SE(3) rigid motions and their se(3) twist coordinates.

A rigid motion is stored as a rotation matrix plus translation vector and
acts on points as p -> R p + t.  Twists are the 6-vector coordinates of the
matrix logarithm, ordered as the entries of the se(3) matrix

    [  0   -w0  -w1   n0 ]
    [  w0    0  -w2   n1 ]        omega = (w0, w1, w2) = (m[1,0], m[2,0], m[2,1])
    [  w1   w2    0   n2 ]        nu    = (n0, n1, n2)
    [  0     0    0    0 ]

i.e. the lower-triangle skew entries read column by column, followed by the
translation block.  This single ordering is used everywhere twists are
stacked into vectors (motion averaging relies on it being consistent).

exp/log use the closed-form Rodrigues formula with a Taylor fallback below
SMALL_ANGLE to avoid cancellation in the sin(theta)/theta terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import AngleNearPi, NotSe3

# Closed form -> series switch for exp/log coefficient evaluation.
SMALL_ANGLE = 1e-8
# log is refused within this margin of pi, where it stops being unique.
NEAR_PI_MARGIN = 1e-6
# Elementwise tolerance on R^T R = I and det(R) = 1.
ROTATION_TOL = 1e-9


def _as_readonly(a, shape):
    out = np.array(a, dtype=float)
    if out.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Element of SE(3): 3x3 rotation plus 3-vector translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_readonly(self.rotation, (3, 3))
        t = _as_readonly(self.translation, (3,))
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("rigid motion entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
            raise ValueError("rotation matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation matrix determinant differs from +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), np.asarray(t, dtype=float))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
            raise ValueError("bottom row of a homogeneous motion must be [0 0 0 1]")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        """Transform one point (3,) or a stack of points (N, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True, eq=False)
class Twist:
    """se(3) coordinates: omega (rotation block entries) and nu (translation)."""

    omega: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        w = _as_readonly(self.omega, (3,))
        n = _as_readonly(self.nu, (3,))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(n))):
            raise ValueError("twist entries must be finite")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "nu", n)

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self):
        return np.concatenate([self.omega, self.nu])

    def norm(self):
        return float(np.linalg.norm(self.as_vector()))


def _skew(r):
    return np.array([
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ])


def _omega_to_rotvec(w):
    # omega = (m[1,0], m[2,0], m[2,1]) of skew(r)  <=>  r = (w2, -w1, w0).
    return np.array([w[2], -w[1], w[0]])


def _rotvec_to_omega(r):
    return np.array([r[2], -r[1], r[0]])


def _nearest_rotation(r):
    """Project onto SO(3) (polar factor, reflection corrected)."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def compose(a: RigidMotion, b: RigidMotion) -> RigidMotion:
    """Motion applying b first, then a."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    # Long compose chains drift; snap back before the constructor rejects.
    if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
        r = _nearest_rotation(r)
    return RigidMotion(r, t)


def inverse(a: RigidMotion) -> RigidMotion:
    rt = a.rotation.T
    return RigidMotion(rt, -rt @ a.translation)


def vec2mat(v: Twist) -> np.ndarray:
    """4x4 se(3) matrix with the twist's entries in their defining slots."""
    m = np.zeros((4, 4))
    w0, w1, w2 = v.omega
    m[1, 0], m[0, 1] = w0, -w0
    m[2, 0], m[0, 2] = w1, -w1
    m[2, 1], m[1, 2] = w2, -w2
    m[:3, 3] = v.nu
    return m


def mat2vec(m) -> Twist:
    """Inverse of vec2mat; validates the se(3) structure."""
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise NotSe3(f"expected 4x4 matrix, got {m.shape}")
    block = m[:3, :3]
    if np.max(np.abs(block + block.T)) > 1e-9:
        raise NotSe3("upper-left 3x3 block is not skew-symmetric")
    if np.max(np.abs(m[3])) > 1e-9:
        raise NotSe3("bottom row is not zero")
    return Twist(np.array([m[1, 0], m[2, 0], m[2, 1]]), m[:3, 3].copy())


def exp_map(v: Twist) -> RigidMotion:
    """Matrix exponential of vec2mat(v), in closed form."""
    r = _omega_to_rotvec(v.omega)
    theta = float(np.linalg.norm(r))
    s = _skew(r)
    s2 = s @ s
    if theta < SMALL_ANGLE:
        rot = np.eye(3) + s + 0.5 * s2
        vmat = np.eye(3) + 0.5 * s + s2 / 6.0
    else:
        t2 = theta * theta
        # 1 - cos(theta) as 2 sin^2(theta/2): exact cancellation kills the
        # naive form just above the series switch.
        one_minus_cos = 2.0 * math.sin(0.5 * theta) ** 2
        rot = np.eye(3) + (math.sin(theta) / theta) * s + (one_minus_cos / t2) * s2
        vmat = (
            np.eye(3)
            + (one_minus_cos / t2) * s
            + ((theta - math.sin(theta)) / (t2 * theta)) * s2
        )
    rot = rot if np.max(np.abs(rot.T @ rot - np.eye(3))) <= ROTATION_TOL else _nearest_rotation(rot)
    return RigidMotion(rot, vmat @ v.nu)


def log_map(a: RigidMotion) -> Twist:
    """Twist v with exp_map(v) = a; requires rotation angle below pi."""
    rot = a.rotation
    cos_theta = min(1.0, max(-1.0, 0.5 * (np.trace(rot) - 1.0)))
    theta = math.acos(cos_theta)
    if theta > math.pi - NEAR_PI_MARGIN:
        raise AngleNearPi(f"rotation angle {theta:.9f} is within 1e-6 of pi")
    if theta < SMALL_ANGLE:
        r = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]) * 0.5
        s = _skew(r)
        vinv = np.eye(3) - 0.5 * s + (s @ s) / 12.0
    else:
        scale = theta / (2.0 * math.sin(theta))
        r = scale * np.array(
            [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
        )
        s = _skew(r)
        # V^-1 = I - S/2 + coeff * S^2 with coeff = (1 - (t/2)cot(t/2)) / t^2.
        # The subtraction cancels below ~1e-4, so switch to its series there.
        if theta < 1e-4:
            coeff = 1.0 / 12.0 + theta * theta / 720.0
        else:
            half = 0.5 * theta
            coeff = (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)
        vinv = np.eye(3) - 0.5 * s + coeff * (s @ s)
    return Twist(_rotvec_to_omega(r), vinv @ a.translation)


def rotation_angle(a: RigidMotion) -> float:
    """Rotation angle of the motion, in radians."""
    cos_theta = min(1.0, max(-1.0, 0.5 * (np.trace(a.rotation) - 1.0)))
    return math.acos(cos_theta)


def geodesic_distance(a: RigidMotion, b: RigidMotion) -> float:
    """2-norm of the twist taking a to b, ||log(a^-1 b)||."""
    return log_map(compose(inverse(a), b)).norm()
