"""Overlap percentages, motion weights, and pair-graph gating.

The scene-wide distance threshold is fixed once from the initial motions:
threshold = c * median resolution of the merged (deduplicated) global cloud.
Overlap xi_ij is the fraction of scan j's points that land within that
threshold of scan i after mapping j into i's frame; the weight of a relative
motion is xi squared.  Pairs with xi below the gate are dropped from the
motion graph, which must stay connected.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, build_index, median_resolution
from .exceptions import DisconnectedGraph, InvalidOverlap
from .lie import RigidMotion, compose, inverse

DEFAULT_THRESHOLD_SCALE = 3.0


def _motion_list(motions):
    """Accept either a GlobalMotions container or a plain motion sequence."""
    return list(getattr(motions, "motions", motions))


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """All-pairs overlap fractions plus the distance threshold that made them.

    xi[i, j] is the fraction of scan j inside scan i's neighborhood; the
    matrix is generally asymmetric and has a unit diagonal.
    """

    xi: np.ndarray
    threshold: float

    def __post_init__(self):
        x = np.array(self.xi, dtype=float)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {x.shape}")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise InvalidOverlap("overlap fractions must lie in [0, 1]")
        if np.any(np.diag(x) != 1.0):
            raise InvalidOverlap("overlap of a scan with itself must be 1")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "xi", x)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def n_scans(self):
        return self.xi.shape[0]


def estimate_threshold(scans, motions, scale=DEFAULT_THRESHOLD_SCALE) -> float:
    """Scene-wide distance threshold from all scans mapped by their motions.

    Merges every scan into the global frame, drops exactly duplicated points
    (coincident scans would otherwise drive the resolution to zero), and
    returns scale * median nearest-neighbor distance of the merged cloud.
    """
    motions = _motion_list(motions)
    if len(scans) < 2:
        raise ValueError("need at least two scans")
    if len(scans) != len(motions):
        raise ValueError(f"{len(scans)} scans but {len(motions)} motions")
    merged = np.vstack([m.apply(s.points) for s, m in zip(scans, motions)])
    # Collapse coincident copies (same surface point seen by several scans).
    # Snapping to a grid of 1e-9 x bounding-box diagonal also absorbs the
    # float nudge that transforming into the global frame leaves behind.
    tol = 1e-9 * float(np.linalg.norm(np.ptp(merged, axis=0)))
    if tol > 0:
        _, keep = np.unique(np.round(merged / tol), axis=0, return_index=True)
        merged = merged[np.sort(keep)]
    return scale * median_resolution(PointCloud(merged))


def estimate_overlap_percentage(
    p_i: PointCloud, p_j: PointCloud, m_ij: RigidMotion, threshold: float
) -> float:
    """Fraction of p_j whose nearest point in p_i is within threshold, after
    mapping p_j by m_ij."""
    _, dist = build_index(p_i).query(m_ij.apply(p_j.points))
    return float(np.count_nonzero(dist <= threshold)) / len(p_j)


def motion_weight(xi: float) -> float:
    """Weight of a relative motion: the squared overlap fraction."""
    if not 0.0 <= xi <= 1.0:
        raise InvalidOverlap(f"overlap fraction must lie in [0, 1], got {xi}")
    return xi * xi


def estimate_overlap_matrix(scans, motions, threshold: float) -> OverlapMatrix:
    """xi_ij for every ordered scan pair under the current global motions."""
    motions = _motion_list(motions)
    n = len(scans)
    if n != len(motions):
        raise ValueError(f"{n} scans but {len(motions)} motions")
    indexes = [build_index(s) for s in scans]
    xi = np.eye(n)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            # Relative motion mapping scan j's coordinates into scan i's frame.
            m_ij = compose(inverse(motions[i]), motions[j])
            _, dist = indexes[i].query(m_ij.apply(scans[j].points))
            xi[i, j] = np.count_nonzero(dist <= threshold) / len(scans[j])
    return OverlapMatrix(xi, threshold)


def build_pair_graph(overlaps: OverlapMatrix, xi_thr: float):
    """Edges (i, j), i < j, with xi_ij >= xi_thr; the graph must be connected."""
    n = overlaps.n_scans
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if overlaps.xi[i, j] >= xi_thr]
    adjacency = [[] for _ in range(n)]
    for i, j in edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    seen = {0}
    frontier = deque([0])
    while frontier:
        k = frontier.popleft()
        for nb in adjacency[k]:
            if nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    if len(seen) < n:
        missing = sorted(set(range(n)) - seen)
        raise DisconnectedGraph(
            f"scans {missing} are unreachable from scan 0 at gate {xi_thr}"
        )
    return edges


def save_overlap_csv(overlaps: OverlapMatrix, path) -> None:
    """Write the xi matrix as plain N x N comma-separated rows."""
    with open(path, "w") as fh:
        for row in overlaps.xi:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
