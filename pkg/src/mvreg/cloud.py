"""Point-cloud container, file I/O, subsampling, and nearest-neighbor queries.

Clouds are immutable stacks of 3D points.  Two ASCII interchange formats are
supported: plain XYZ (three whitespace-separated decimals per line, ``#``
comments allowed) and ASCII PLY (header parsed for the vertex element's
``x``/``y``/``z`` properties; any other properties are read and discarded).
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import EmptyCloud, ParseError, TooFewPoints
from .lie import RigidMotion


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered, immutable set of 3D points plus the index of the scan it came from."""

    points: np.ndarray
    scan_id: int = 0

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"expected points of shape (n, 3), got {p.shape}")
        if p.shape[0] == 0:
            raise EmptyCloud("point cloud has no points")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "scan_id", int(self.scan_id))

    def __len__(self):
        return self.points.shape[0]


class NearestNeighborIndex:
    """k-d tree over one cloud; immutable once built, safe for concurrent reads."""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._tree = cKDTree(cloud.points)

    def nearest(self, q):
        """Index and distance of the point nearest to q; ties go to the lowest index."""
        q = np.asarray(q, dtype=float).reshape(3)
        n = len(self.cloud)
        if n == 1:
            return 0, float(np.linalg.norm(self.cloud.points[0] - q))
        dist, idx = self._tree.query(q, k=2)
        if dist[0] < dist[1]:
            return int(idx[0]), float(dist[0])
        # Exact tie: rank every candidate at the minimum radius by index.
        cand = sorted(self._tree.query_ball_point(q, dist[0]))
        d = np.linalg.norm(self.cloud.points[cand] - q, axis=1)
        dmin = d.min()
        return int(cand[int(np.argmin(d))]), float(dmin)

    def query(self, points):
        """Vectorized 1-NN for a stack of points -> (indices, distances).

        No tie-break guarantee; intended for bulk correspondence search where
        exact ties are measure-zero.
        """
        dist, idx = self._tree.query(np.asarray(points, dtype=float))
        return np.atleast_1d(idx).astype(int), np.atleast_1d(dist).astype(float)


def build_index(cloud: PointCloud) -> NearestNeighborIndex:
    return NearestNeighborIndex(cloud)


def subsample(cloud: PointCloud, frequency: int) -> PointCloud:
    """Keep every frequency-th point (indices 0, f, 2f, ...)."""
    frequency = int(frequency)
    if frequency < 1:
        raise ValueError(f"sampling frequency must be >= 1, got {frequency}")
    return PointCloud(cloud.points[::frequency], scan_id=cloud.scan_id)


def transform_cloud(cloud: PointCloud, m: RigidMotion) -> PointCloud:
    """Apply R p + t to every point."""
    return PointCloud(m.apply(cloud.points), scan_id=cloud.scan_id)


def median_resolution(cloud: PointCloud) -> float:
    """Median over points of the distance to their nearest *other* point."""
    if len(cloud) < 2:
        raise TooFewPoints("resolution needs at least 2 points")
    tree = cKDTree(cloud.points)
    dist, _ = tree.query(cloud.points, k=2)
    return float(np.median(dist[:, 1]))


# ---------------------------------------------------------------------------
# File formats


def _infer_format(path, format):
    if format is not None:
        if format not in ("xyz", "ply-ascii"):
            raise ValueError(f"unknown cloud format {format!r}")
        return format
    ext = os.path.splitext(str(path))[1].lower()
    return "ply-ascii" if ext == ".ply" else "xyz"


def _parse_xyz_fields(fields, path, lineno):
    if len(fields) != 3:
        raise ParseError(path, lineno, f"expected 3 coordinates, got {len(fields)}")
    try:
        xyz = [float(f) for f in fields]
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric coordinate in {fields!r}") from None
    if not all(np.isfinite(v) for v in xyz):
        raise ParseError(path, lineno, "coordinates must be finite")
    return xyz


def _load_xyz(path):
    pts = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            pts.append(_parse_xyz_fields(stripped.split(), path, lineno))
    if not pts:
        raise EmptyCloud(f"{path}: no points")
    return np.array(pts, dtype=float)


def _load_ply(path):
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, 1, "missing 'ply' magic line")

    vertex_count = None
    vertex_props = []
    current_element = None
    saw_format = False
    body_start = None
    for lineno, raw in enumerate(lines[1:], start=2):
        fields = raw.strip().split()
        if not fields or fields[0] == "comment" or fields[0] == "obj_info":
            continue
        if fields[0] == "format":
            if fields[1:2] != ["ascii"]:
                raise ParseError(path, lineno, f"unsupported PLY format {raw.strip()!r}")
            saw_format = True
        elif fields[0] == "element":
            if len(fields) != 3:
                raise ParseError(path, lineno, f"malformed element line {raw.strip()!r}")
            current_element = fields[1]
            if current_element == "vertex":
                try:
                    vertex_count = int(fields[2])
                except ValueError:
                    raise ParseError(path, lineno, f"bad vertex count {fields[2]!r}") from None
        elif fields[0] == "property":
            if current_element == "vertex":
                vertex_props.append(fields[-1])
        elif fields[0] == "end_header":
            body_start = lineno + 1
            break
        else:
            raise ParseError(path, lineno, f"unrecognized header line {raw.strip()!r}")
    if body_start is None:
        raise ParseError(path, len(lines), "header has no end_header line")
    if not saw_format:
        raise ParseError(path, 1, "header has no format line")
    if vertex_count is None:
        raise ParseError(path, 1, "header declares no vertex element")
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ParseError(path, 1, "vertex element lacks x/y/z properties") from None

    pts = np.empty((vertex_count, 3), dtype=float)
    row = 0
    lineno = body_start - 1
    for raw in lines[body_start - 1 :]:
        lineno += 1
        stripped = raw.strip()
        if not stripped:
            continue
        if row == vertex_count:
            break  # remaining rows belong to later elements (faces etc.)
        fields = stripped.split()
        if len(fields) != len(vertex_props):
            raise ParseError(
                path, lineno,
                f"expected {len(vertex_props)} vertex fields, got {len(fields)}",
            )
        try:
            pts[row] = [float(fields[c]) for c in cols]
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric coordinate in {stripped!r}") from None
        if not np.all(np.isfinite(pts[row])):
            raise ParseError(path, lineno, "coordinates must be finite")
        row += 1
    if row < vertex_count:
        raise ParseError(path, lineno, f"expected {vertex_count} vertices, file has {row}")
    if vertex_count == 0:
        raise EmptyCloud(f"{path}: no points")
    return pts


def load_cloud(path, format=None, scan_id=0) -> PointCloud:
    """Read a cloud from an XYZ or ASCII-PLY file.

    format is "xyz" or "ply-ascii"; when omitted it is inferred from the
    extension (.ply -> PLY, anything else -> XYZ).
    """
    fmt = _infer_format(path, format)
    pts = _load_ply(path) if fmt == "ply-ascii" else _load_xyz(path)
    return PointCloud(pts, scan_id=scan_id)


def save_cloud(cloud: PointCloud, path, format=None) -> None:
    """Write a cloud with shortest round-tripping decimal coordinates."""
    fmt = _infer_format(path, format)
    # repr of a Python float is the shortest string that round-trips exactly.
    rows = ["%r %r %r" % (float(x), float(y), float(z)) for x, y, z in cloud.points]
    with open(path, "w") as fh:
        if fmt == "ply-ascii":
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(cloud)}\n")
            fh.write("property float x\nproperty float y\nproperty float z\n")
            fh.write("end_header\n")
        fh.write("\n".join(rows))
        fh.write("\n")
