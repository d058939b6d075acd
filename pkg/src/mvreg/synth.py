"""Ground-truth synthetic scenes and the Monte-Carlo robustness harness.

Scenes sample one parametric surface on a global lattice and cut N windows
along the first parameter; consecutive windows share an exact fraction of
lattice points, which gives every scan pair a known constructed overlap.
Each window is pulled into its own scan frame by the inverse of a random
ground-truth motion, optionally plus isotropic Gaussian noise.  All
randomness flows through explicit seeds.
"""

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .averaging import GlobalMotions
from .cloud import PointCloud
from .exceptions import InvalidOverlap, MvregError
from .lie import RigidMotion, compose, inverse, rotation_angle
from .pipeline import PipelineConfig, register_multiview

SHAPES = ("sphere-section", "saddle", "wave")


def _surface(shape, u, v):
    """Map lattice coordinates (u, v) in [0,1]^2 onto the chosen surface.

    All three shapes are curved in both directions so rigid registration has
    no sliding ambiguity (planes are deliberately not offered).
    """
    if shape == "wave":
        x = 2.0 * u - 1.0
        y = 2.0 * v - 1.0
        z = 0.25 * np.sin(2 * np.pi * u) + 0.25 * np.cos(2 * np.pi * v)
    elif shape == "saddle":
        x = 2.0 * u - 1.0
        y = 2.0 * v - 1.0
        z = 0.5 * (x * x - y * y)
    elif shape == "sphere-section":
        phi = 1.5 * np.pi * u
        theta = np.pi * (0.3 + 0.4 * v)
        # A pure sphere band is rotationally symmetric about its axis, which
        # leaves registration free to slide along azimuth; modulating the
        # radius removes that ambiguity while keeping the spherical shape.
        r = 1.0 + 0.15 * np.sin(2.5 * np.pi * u)
        x = r * np.sin(theta) * np.cos(phi)
        y = r * np.sin(theta) * np.sin(phi)
        z = r * np.cos(theta)
    else:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def _window_aspect(shape, width):
    """Ratio of a window's 3D extent along u to its extent along v.

    Used to size the sampling lattice so point spacing is roughly isotropic
    on the surface; probe arc lengths are averaged over a coarse grid.
    """
    probe = np.linspace(0.0, 1.0, 17)
    uu, vv = np.meshgrid(probe * width, probe, indexing="ij")
    pts = _surface(shape, uu, vv).reshape(17, 17, 3)
    len_u = np.linalg.norm(np.diff(pts, axis=0), axis=2).sum(axis=0).mean()
    len_v = np.linalg.norm(np.diff(pts, axis=1), axis=2).sum(axis=1).mean()
    return float(len_u / len_v)


def _axis_rotations(angles):
    ax, ay, az = angles
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=float)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=float)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=float)
    return rx @ ry @ rz


def _random_motion(rng, max_angle=0.5, box=0.5):
    angles = rng.uniform(-max_angle, max_angle, 3)
    t = rng.uniform(-box, box, 3)
    return RigidMotion(_axis_rotations(angles), t)


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Scans in their own frames plus the ground-truth global motions."""

    scans: tuple
    truth: GlobalMotions
    shape: str
    overlap: float
    sigma: float
    seed: int

    @property
    def n_scans(self):
        return len(self.scans)

    @property
    def diameter(self):
        """Bounding-box diagonal of the merged ground-truth global cloud."""
        merged = np.vstack(
            [m.apply(s.points) for s, m in zip(self.scans, self.truth.motions)]
        )
        return float(np.linalg.norm(np.ptp(merged, axis=0)))


def generate_scene(
    shape, n_scans, points_per_scan=500, overlap=0.6, sigma=0.0, seed=0
) -> SyntheticScene:
    """Build an N-view scene with the given consecutive-pair overlap fraction.

    Window width along u is w = 1 / (1 + (1-overlap)(N-1)), and window k
    starts at k(1-overlap)w, so consecutive windows share exactly `overlap`
    of their width (and their lattice samples).  Scan k's points are the
    window mapped by the inverse of ground-truth motion k, plus Gaussian
    noise of scale sigma.  Identical seeds give bitwise-identical scenes.
    """
    if n_scans < 2:
        raise ValueError("need at least two scans")
    if not 0.0 < overlap <= 1.0:
        raise InvalidOverlap(f"overlap fraction must lie in (0, 1], got {overlap}")
    if points_per_scan < 9:
        raise ValueError("need at least 9 points per scan")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")

    width = 1.0 / (1.0 + (1.0 - overlap) * (n_scans - 1))
    aspect = _window_aspect(shape, width)
    n_u_window = max(3, int(round(math.sqrt(points_per_scan * aspect))))
    n_v = max(3, int(round(points_per_scan / n_u_window)))
    n_u = max(n_u_window, int(round(n_u_window / width)))
    u_axis = np.linspace(0.0, 1.0, n_u)
    v_axis = np.linspace(0.0, 1.0, n_v)
    uu, vv = np.meshgrid(u_axis, v_axis, indexing="ij")
    surface = _surface(shape, uu, vv)
    u_flat = uu.ravel()

    rng = np.random.default_rng(seed)
    motions = [RigidMotion.identity()]
    motions.extend(_random_motion(rng) for _ in range(n_scans - 1))

    scans = []
    eps = 1e-12
    for k in range(n_scans):
        start = k * (1.0 - overlap) * width
        mask = (u_flat >= start - eps) & (u_flat <= start + width + eps)
        local = inverse(motions[k]).apply(surface[mask])
        local = local + rng.normal(0.0, sigma, local.shape)
        scans.append(PointCloud(local, scan_id=k))

    return SyntheticScene(
        scans=tuple(scans),
        truth=GlobalMotions(tuple(motions)),
        shape=shape,
        overlap=float(overlap),
        sigma=float(sigma),
        seed=seed,
    )


def perturb_motions(
    truth: GlobalMotions, rotation_bound, translation_bound, seed
) -> GlobalMotions:
    """Compose each non-reference motion with bounded uniform noise.

    The noise rotation applies per-axis angles drawn uniformly from
    [-rotation_bound, rotation_bound] (x, then y, then z); the noise
    translation is uniform in the cube of half-width translation_bound.
    Noise is applied on the left, i.e. in the global frame.
    """
    if rotation_bound < 0 or translation_bound < 0:
        raise ValueError("noise bounds must be nonnegative")
    rng = np.random.default_rng(seed)
    out = [truth[0]]
    for m in truth.motions[1:]:
        angles = rng.uniform(-rotation_bound, rotation_bound, 3)
        t = rng.uniform(-translation_bound, translation_bound, 3)
        out.append(compose(RigidMotion(_axis_rotations(angles), t), m))
    return GlobalMotions(tuple(out))


def motion_errors(estimated: GlobalMotions, truth: GlobalMotions):
    """Per-scan (rotation error in degrees, translation error) after gauge
    alignment that pins the reference scan."""
    if len(estimated) != len(truth):
        raise ValueError("motion sets differ in length")
    g = compose(truth[0], inverse(estimated[0]))
    errors = []
    for est, ref in zip(estimated.motions, truth.motions):
        aligned = compose(g, est)
        rel = compose(inverse(ref), aligned)
        deg = math.degrees(rotation_angle(rel))
        errors.append((deg, float(np.linalg.norm(aligned.translation - ref.translation))))
    return errors


class TrialResult(NamedTuple):
    level: float
    trial: int
    objective: float
    mean_rot_err_deg: float
    mean_trans_err: float
    seconds: float
    converged: bool
    failed: bool


@dataclass(frozen=True, eq=False)
class MCReport:
    """All Monte-Carlo trial rows plus per-level aggregation."""

    trials: tuple
    levels: tuple

    def aggregate(self):
        """Per-level mean/std over non-failed trials (population std)."""
        out = {}
        for level in self.levels:
            rows = [t for t in self.trials if t.level == level and not t.failed]
            failed = sum(1 for t in self.trials if t.level == level and t.failed)
            if rows:
                obj = np.array([t.objective for t in rows])
                rot = np.array([t.mean_rot_err_deg for t in rows])
                tra = np.array([t.mean_trans_err for t in rows])
                sec = np.array([t.seconds for t in rows])
                out[level] = {
                    "n": len(rows),
                    "n_failed": failed,
                    "objective_mean": float(obj.mean()),
                    "objective_std": float(obj.std()),
                    "rot_mean_deg": float(rot.mean()),
                    "rot_std_deg": float(rot.std()),
                    "trans_mean": float(tra.mean()),
                    "trans_std": float(tra.std()),
                    "seconds_mean": float(sec.mean()),
                }
            else:
                out[level] = {"n": 0, "n_failed": failed}
        return out


def run_mc_trials(
    scene: SyntheticScene,
    noise_levels,
    trials_per_level=50,
    config: PipelineConfig = None,
    master_seed=0,
) -> MCReport:
    """Repeatedly perturb the ground truth and re-register.

    Per trial the initial motions are the truth disturbed by uniform rotation
    noise at the given level (radians) and translation noise with bound
    0.5 * diameter * level (i.e. 1% of the diameter at the 0.02 rad level).
    Per-trial seeds derive from (master_seed, level index, trial index), so
    results are independent of execution order.  Failed trials are recorded,
    not fatal.
    """
    if config is None:
        config = PipelineConfig()
    diameter = scene.diameter
    rows = []
    for li, level in enumerate(noise_levels):
        if level < 0:
            raise ValueError("noise levels must be nonnegative")
        for trial in range(trials_per_level):
            init = perturb_motions(
                scene.truth, level, 0.5 * diameter * level,
                seed=[master_seed, li, trial],
            )
            t0 = time.perf_counter()
            try:
                motions, report = register_multiview(scene.scans, init, config)
            except MvregError:
                rows.append(
                    TrialResult(level, trial, math.nan, math.nan, math.nan,
                                time.perf_counter() - t0, False, True)
                )
                continue
            seconds = time.perf_counter() - t0
            errs = motion_errors(motions, scene.truth)[1:]  # reference scan is 0 by gauge
            rot = float(np.mean([e[0] for e in errs]))
            tra = float(np.mean([e[1] for e in errs]))
            rows.append(
                TrialResult(level, trial, report.iterations[-1].objective,
                            rot, tra, seconds, report.converged, False)
            )
    return MCReport(trials=tuple(rows), levels=tuple(noise_levels))


def save_mc_csv(report: MCReport, path) -> None:
    """One row per trial: level, trial, objective, errors, runtime, converged."""
    with open(path, "w") as fh:
        fh.write("level,trial,objective,mean_rot_err_deg,mean_trans_err,seconds,converged\n")
        for t in report.trials:
            fh.write(
                f"{t.level!r},{t.trial},{t.objective!r},{t.mean_rot_err_deg!r},"
                f"{t.mean_trans_err!r},{t.seconds!r},{int(t.converged)}\n"
            )
