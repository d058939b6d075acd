"""Shared helpers for building random motions and oracle computations."""

import math

import numpy as np

from mvreg.lie import RigidMotion, Twist, exp_map


def random_twist(rng, max_angle=3.0, trans_scale=1.0):
    """Twist with |omega| uniform in [0, max_angle] and uniform direction."""
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    omega = direction * rng.uniform(0.0, max_angle)
    nu = rng.uniform(-trans_scale, trans_scale, size=3)
    return Twist(omega, nu)


def random_motion(rng, max_angle=3.0, trans_scale=1.0):
    return exp_map(random_twist(rng, max_angle, trans_scale))


def rotation_about_z(angle, translation=(0.0, 0.0, 0.0)):
    c, s = math.cos(angle), math.sin(angle)
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return RigidMotion(r, np.asarray(translation, dtype=float))


def rotation_about_x(angle, translation=(0.0, 0.0, 0.0)):
    c, s = math.cos(angle), math.sin(angle)
    r = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    return RigidMotion(r, np.asarray(translation, dtype=float))


def series_expm(m, terms=20):
    """Truncated matrix-power series for the matrix exponential."""
    m = np.asarray(m, dtype=float)
    out = np.eye(m.shape[0])
    acc = np.eye(m.shape[0])
    for k in range(1, terms + 1):
        acc = acc @ m / k
        out = out + acc
    return out
