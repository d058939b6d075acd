"""Trimmed-ICP registration of one scan pair.

Each iteration runs three steps: nearest-neighbor correspondence under the
current motion, overlap re-estimation by exhaustive minimization of

    psi(xi) = e(xi) / xi^(1 + lam)

over all trim counts (e(xi) is the mean of the smallest ceil(xi*N) squared
residuals), and a rigid re-fit on the kept correspondences via the SVD of the
cross-covariance (Kabsch/Arun with reflection correction).  The result carries
the relative motion, the estimated overlap fraction, and the final objective.
"""

from dataclasses import dataclass

import numpy as np

from .cloud import NearestNeighborIndex, PointCloud, build_index
from .exceptions import DegenerateConfiguration, NoFeasibleOverlap, TooFewPoints
from .lie import RigidMotion, geodesic_distance


@dataclass(frozen=True)
class TrICPConfig:
    """Knobs for one trimmed-ICP run.

    lam is the overlap penalty exponent (psi divides by xi^(1+lam)); xi_min is
    the lower search bound on the overlap fraction; iteration stops when the
    geodesic distance between successive motions drops below motion_tolerance.
    """

    lam: float = 2.0
    xi_min: float = 0.3
    max_iterations: int = 100
    motion_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0.0 < self.xi_min <= 1.0:
            raise ValueError(f"xi_min must lie in (0, 1], got {self.xi_min}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.motion_tolerance > 0:
            raise ValueError("motion_tolerance must be positive")


@dataclass(frozen=True)
class PairwiseResult:
    """Outcome of one pairwise registration.

    motion maps the data scan into the model scan's frame; overlap is the
    estimated fraction xi of data points kept; psi is the final objective;
    psi_history holds the objective at every iteration (nonincreasing).
    """

    motion: RigidMotion
    overlap: float
    psi: float
    iterations: int
    converged: bool
    psi_history: tuple


def find_correspondences(data: PointCloud, model_index: NearestNeighborIndex, m: RigidMotion):
    """Nearest model point for every data point under motion m.

    Returns a list of (data index, model index, squared distance), one entry
    per data point in order.
    """
    idx, dist = model_index.query(m.apply(data.points))
    return [(i, int(j), float(d) ** 2) for i, (j, d) in enumerate(zip(idx, dist))]


def update_overlap(sorted_sq_residuals, config: TrICPConfig):
    """Minimize psi over every feasible trim count; returns (xi, count, psi).

    sorted_sq_residuals must be ascending.  Feasible counts n satisfy
    n/N > xi_min; ties in psi go to the larger overlap.
    """
    r = np.asarray(sorted_sq_residuals, dtype=float)
    n_total = r.shape[0]
    if n_total < 1:
        raise ValueError("need at least one residual")
    n_min = int(np.floor(config.xi_min * n_total)) + 1
    if n_min > n_total:
        raise NoFeasibleOverlap(
            f"no trim count of {n_total} residuals exceeds xi_min={config.xi_min}"
        )
    counts = np.arange(n_min, n_total + 1)
    xi = counts / n_total
    mean_err = np.cumsum(r)[n_min - 1 :] / counts
    psi = mean_err / xi ** (1.0 + config.lam)
    # argmin on the reversed array lands on the largest count among exact ties
    best = psi.shape[0] - 1 - int(np.argmin(psi[::-1]))
    return float(xi[best]), int(counts[best]), float(psi[best])


def _fit_rigid(src, dst):
    """Least-squares R, t with det(R) = +1 for matched point arrays (n, 3)."""
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cov = (src - src_mean).T @ (dst - dst_mean)
    u, s, vt = np.linalg.svd(cov)
    if s[0] <= 0.0 or s[1] <= s[0] * 1e-9:
        raise DegenerateConfiguration(
            "correspondences are collinear or coincident; rotation is not unique"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidMotion(rot, dst_mean - rot @ src_mean)


def estimate_rigid_transform(pairs) -> RigidMotion:
    """Rigid motion minimizing sum ||R p + t - q||^2 over (p, q) pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[1:] != (2, 3):
        raise ValueError(f"expected pairs of shape (n, 2, 3), got {arr.shape}")
    return _fit_rigid(arr[:, 0, :], arr[:, 1, :])


def tricp(
    data: PointCloud,
    model: PointCloud,
    initial: RigidMotion = None,
    config: TrICPConfig = None,
) -> PairwiseResult:
    """Register data onto model by trimmed ICP starting from `initial`."""
    if len(data) < 3 or len(model) < 3:
        raise TooFewPoints("trimmed ICP needs at least 3 points per cloud")
    if initial is None:
        initial = RigidMotion.identity()
    if config is None:
        config = TrICPConfig()

    index = build_index(model)
    m = initial
    history = []
    iterations = 0
    converged = False
    xi = psi = None
    for _ in range(config.max_iterations):
        model_idx, dist = index.query(m.apply(data.points))
        sq = dist * dist
        order = np.argsort(sq, kind="stable")
        xi, count, psi = update_overlap(sq[order], config)
        history.append(psi)
        kept = order[:count]
        m_new = _fit_rigid(data.points[kept], model.points[model_idx[kept]])
        step = geodesic_distance(m, m_new)
        m = m_new
        iterations += 1
        if step < config.motion_tolerance:
            converged = True
            break

    return PairwiseResult(
        motion=m,
        overlap=xi,
        psi=psi,
        iterations=iterations,
        converged=converged,
        psi_history=tuple(history),
    )
