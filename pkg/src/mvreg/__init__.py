"""Multi-view range scan registration.

Pairwise alignment uses trimmed ICP, which jointly estimates the rigid
motion and the overlap fraction of a scan pair.  Global alignment of N
scans distributes pairwise inconsistency by motion averaging on SE(3),
with each relative motion weighted by the square of its overlap fraction
so that reliable, high-overlap pairs dominate the solve.
"""

from . import averaging, cli, cloud, lie, overlap, pairwise, pipeline, synth
from .exceptions import (
    AngleNearPi,
    DegenerateConfiguration,
    DisconnectedGraph,
    EmptyCloud,
    InvalidOverlap,
    MvregError,
    NoFeasibleOverlap,
    NotConverged,
    NotSe3,
    ParseError,
    RankDeficient,
    TooFewPoints,
)
from .lie import RigidMotion, Twist, compose, exp_map, geodesic_distance, inverse, log_map

__version__ = "0.1.0"
