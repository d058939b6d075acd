"""Motion averaging: single-set weighted means and multi-view global solves.

A motion graph stores relative motions m_ij (mapping scan j's frame into scan
i's) with positive weights.  The multi-view solver linearizes the per-edge
inconsistency DM_ij = M_i m_ij M_j^-1 around the identity: with first-order
updates M_k <- exp(d_k) M_k, each edge asks for d_j - d_i = log(DM_ij).  The
weighted rows (-w I6 at i, +w I6 at j | w log DM_ij) are stacked and solved by
least squares; scan 0 is the gauge anchor and its columns are deleted.  Note
the weight enters both the matrix and the right-hand side, so residuals are
effectively weighted by w^2 relative to the unweighted system.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DisconnectedGraph, NotConverged, RankDeficient
from .lie import RigidMotion, Twist, compose, exp_map, inverse, log_map


class GraphEdge(NamedTuple):
    i: int
    j: int
    motion: RigidMotion  # maps scan j's coordinates into scan i's frame
    weight: float


@dataclass(frozen=True, eq=False)
class MotionGraph:
    """Relative motions over scan pairs; every scan must reach scan 0."""

    n_scans: int
    edges: tuple

    def __post_init__(self):
        n = int(self.n_scans)
        if n < 2:
            raise ValueError("a motion graph needs at least 2 scans")
        edges = tuple(GraphEdge(int(e[0]), int(e[1]), e[2], float(e[3])) for e in self.edges)
        adjacency = [[] for _ in range(n)]
        for e in edges:
            if not (0 <= e.i < n and 0 <= e.j < n) or e.i == e.j:
                raise ValueError(f"edge ({e.i}, {e.j}) invalid for {n} scans")
            if not e.weight > 0:
                raise ValueError(f"edge ({e.i}, {e.j}) has non-positive weight {e.weight}")
            if not isinstance(e.motion, RigidMotion):
                raise TypeError("edge motions must be RigidMotion instances")
            adjacency[e.i].append(e.j)
            adjacency[e.j].append(e.i)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adjacency[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) < n:
            missing = sorted(set(range(n)) - seen)
            raise DisconnectedGraph(f"scans {missing} are unreachable from scan 0")
        object.__setattr__(self, "n_scans", n)
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self):
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class GlobalMotions:
    """One motion per scan, mapping that scan's frame into the global frame.

    Scan 0 is the reference; use anchored() to renormalize so motions[0] is
    exactly the identity (solvers keep whatever gauge they were given).
    """

    motions: tuple

    def __post_init__(self):
        ms = tuple(self.motions)
        if not ms:
            raise ValueError("need at least one motion")
        for m in ms:
            if not isinstance(m, RigidMotion):
                raise TypeError("global motions must be RigidMotion instances")
        object.__setattr__(self, "motions", ms)

    def __len__(self):
        return len(self.motions)

    def __getitem__(self, k):
        return self.motions[k]

    @property
    def is_anchored(self):
        m0 = self.motions[0]
        return bool(
            np.array_equal(m0.rotation, np.eye(3)) and np.array_equal(m0.translation, np.zeros(3))
        )

    def anchored(self):
        """Left-multiply everything by motions[0]^-1 so scan 0 is the identity."""
        g = inverse(self.motions[0])
        out = [RigidMotion.identity()]
        out.extend(compose(g, m) for m in self.motions[1:])
        return GlobalMotions(tuple(out))

    @classmethod
    def identities(cls, n):
        return cls(tuple(RigidMotion.identity() for _ in range(n)))


def average_weighted_motions(motions, weights=None, epsilon=1e-8, max_iter=100) -> RigidMotion:
    """Weighted intrinsic mean of a set of motions.

    Iterates mean <- mean * exp(sum_i w_i log(mean^-1 M_i) / sum_i w_i) until
    the tangent step norm drops below epsilon.  At the fixed point the
    weighted log-residuals cancel.
    """
    motions = list(motions)
    if not motions:
        raise ValueError("need at least one motion")
    if weights is None:
        weights = [1.0] * len(motions)
    w = np.asarray(list(weights), dtype=float)
    if w.shape[0] != len(motions) or np.any(w <= 0):
        raise ValueError("need one strictly positive weight per motion")
    w = w / w.sum()

    mean = motions[0]
    for _ in range(max_iter):
        tangent = np.zeros(6)
        for wk, mk in zip(w, motions):
            tangent += wk * log_map(compose(inverse(mean), mk)).as_vector()
        mean = compose(mean, exp_map(Twist.from_vector(tangent)))
        if np.linalg.norm(tangent) <= epsilon:
            return mean
    raise NotConverged(f"motion mean did not converge in {max_iter} iterations")


def build_design_matrix(graph: MotionGraph) -> np.ndarray:
    """Stack per-edge blocks (-w I6 at column i, +w I6 at column j); scan 0's
    six columns are dropped, leaving shape (6R, 6(N-1))."""
    n_cols = 6 * (graph.n_scans - 1)
    d = np.zeros((6 * graph.n_edges, n_cols))
    eye6 = np.eye(6)
    for r, e in enumerate(graph.edges):
        rows = slice(6 * r, 6 * r + 6)
        if e.i > 0:
            d[rows, 6 * (e.i - 1) : 6 * e.i] = -e.weight * eye6
        if e.j > 0:
            d[rows, 6 * (e.j - 1) : 6 * e.j] = e.weight * eye6
    return d


def stack_residual_vector(graph: MotionGraph, globals_: GlobalMotions) -> np.ndarray:
    """Per edge, w * log(M_i m_ij M_j^-1) as a 6-vector, concatenated."""
    if len(globals_) != graph.n_scans:
        raise ValueError(f"graph has {graph.n_scans} scans, got {len(globals_)} motions")
    v = np.empty(6 * graph.n_edges)
    for r, e in enumerate(graph.edges):
        increment = compose(globals_[e.i], compose(e.motion, inverse(globals_[e.j])))
        v[6 * r : 6 * r + 6] = e.weight * log_map(increment).as_vector()
    return v


def solve_update(d: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Least-squares correction solving D x = V; D must have full column rank."""
    x, _, rank, _ = np.linalg.lstsq(d, v, rcond=None)
    if rank < d.shape[1]:
        raise RankDeficient(f"design matrix rank {rank} < {d.shape[1]} columns")
    return x


def multiview_step(graph: MotionGraph, globals_: GlobalMotions, design=None):
    """One stack-solve-update pass; returns (new globals, correction norm).

    design may carry a precomputed build_design_matrix(graph) (it only
    depends on the graph, so callers iterating can reuse it).
    """
    if len(globals_) != graph.n_scans:
        raise ValueError(f"graph has {graph.n_scans} scans, got {len(globals_)} motions")
    d = build_design_matrix(graph) if design is None else design
    v = stack_residual_vector(graph, globals_)
    x = solve_update(d, v)
    motions = [globals_[0]]
    for k in range(1, graph.n_scans):
        delta = Twist.from_vector(x[6 * (k - 1) : 6 * k])
        motions.append(compose(exp_map(delta), globals_[k]))
    return GlobalMotions(tuple(motions)), float(np.linalg.norm(x))


def multiview_average(
    graph: MotionGraph, initial: GlobalMotions, epsilon=1e-8, max_iter=100
) -> GlobalMotions:
    """Refine global motions so relative motions best agree with the graph.

    Each iteration stacks the weighted residuals, solves for the per-scan
    corrections, and applies M_k <- exp(d_k) M_k for k >= 1 (scan 0 is the
    fixed gauge).  Stops when the full correction vector's norm is below
    epsilon.
    """
    current = initial
    d = build_design_matrix(graph)
    for _ in range(max_iter):
        current, step_norm = multiview_step(graph, current, design=d)
        if step_norm < epsilon:
            return current
    raise NotConverged(f"multi-view averaging did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# Text serialization


def save_motion_graph(graph: MotionGraph, path) -> None:
    """One edge per line: i j w then the row-major 3x4 [R|t] of m_ij."""
    with open(path, "w") as fh:
        for e in graph.edges:
            m = e.motion.as_matrix()[:3, :].ravel()
            vals = " ".join(repr(float(x)) for x in m)
            fh.write(f"{e.i} {e.j} {e.weight!r} {vals}\n")


def load_motion_graph(path, n_scans=None) -> MotionGraph:
    """Inverse of save_motion_graph; n_scans defaults to max index + 1."""
    edges = []
    with open(path) as fh:
        for line in fh:
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            i, j = int(fields[0]), int(fields[1])
            w = float(fields[2])
            body = np.array([float(x) for x in fields[3:15]]).reshape(3, 4)
            edges.append(GraphEdge(i, j, RigidMotion(body[:, :3], body[:, 3]), w))
    if n_scans is None:
        n_scans = 1 + max(max(e.i, e.j) for e in edges)
    return MotionGraph(n_scans, tuple(edges))


def save_global_motions(globals_: GlobalMotions, path) -> None:
    """One motion per line: scan index then the row-major 3x4 [R|t]."""
    with open(path, "w") as fh:
        for k, m in enumerate(globals_.motions):
            body = m.as_matrix()[:3, :].ravel()
            fh.write(f"{k} " + " ".join(repr(float(x)) for x in body) + "\n")


def load_global_motions(path) -> GlobalMotions:
    rows = {}
    with open(path) as fh:
        for line in fh:
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            k = int(fields[0])
            body = np.array([float(x) for x in fields[1:13]]).reshape(3, 4)
            rows[k] = RigidMotion(body[:, :3], body[:, 3])
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"motion file indexes {sorted(rows)} are not 0..N-1")
    return GlobalMotions(tuple(rows[k] for k in range(len(rows))))
