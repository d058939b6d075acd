"""Cloud container, file parsing, subsampling, and nearest-neighbor tests."""

import numpy as np
import pytest

from mvreg.cloud import (
    NearestNeighborIndex,
    PointCloud,
    build_index,
    load_cloud,
    median_resolution,
    save_cloud,
    subsample,
    transform_cloud,
)
from mvreg.exceptions import EmptyCloud, ParseError, TooFewPoints
from mvreg.lie import RigidMotion, compose, inverse

from helpers import rotation_about_z


# ---------------------------------------------------------------------------
# PointCloud container


def test_cloud_basic_construction():
    c = PointCloud([[0, 0, 0], [1, 0, 0]], scan_id=3)
    assert len(c) == 2
    assert c.scan_id == 3
    assert c.points.dtype == np.float64


def test_cloud_rejects_empty():
    with pytest.raises(EmptyCloud):
        PointCloud(np.zeros((0, 3)))


def test_cloud_rejects_bad_shape_and_nonfinite():
    with pytest.raises(ValueError):
        PointCloud([[1.0, 2.0]])
    with pytest.raises(ValueError):
        PointCloud([[1.0, 2.0, np.nan]])


def test_cloud_points_are_readonly():
    c = PointCloud([[0, 0, 0], [1, 0, 0]])
    with pytest.raises(ValueError):
        c.points[0, 0] = 5.0


# ---------------------------------------------------------------------------
# XYZ format


def test_load_xyz_three_lines(tmp_path):
    p = tmp_path / "tri.xyz"
    p.write_text("0 0 0\n1 0 0\n0 1 0\n")
    c = load_cloud(p, format="xyz")
    assert len(c) == 3
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_load_xyz_skips_comments_and_blanks(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("# header comment\n\n1 2 3\n   \n# mid\n4 5 6\n")
    c = load_cloud(p)
    np.testing.assert_array_equal(c.points, [[1, 2, 3], [4, 5, 6]])


def test_load_xyz_two_fields_is_parse_error_with_line(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 0\n1 2\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(p)
    assert exc.value.line_number == 2
    assert "2" in str(exc.value)


def test_load_xyz_non_numeric_is_parse_error(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 zero\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(p)
    assert exc.value.line_number == 1


def test_load_xyz_nan_is_parse_error(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 nan\n")
    with pytest.raises(ParseError):
        load_cloud(p)


def test_load_xyz_empty_file_is_empty_cloud(tmp_path):
    p = tmp_path / "empty.xyz"
    p.write_text("# nothing here\n")
    with pytest.raises(EmptyCloud):
        load_cloud(p)


def test_xyz_round_trip_is_bit_identical(tmp_path):
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((57, 3)) * np.array([1e-7, 1.0, 1e5])
    c = PointCloud(pts)
    p = tmp_path / "rt.xyz"
    save_cloud(c, p, format="xyz")
    back = load_cloud(p, format="xyz")
    assert np.array_equal(back.points, c.points)  # exact, not approx


# ---------------------------------------------------------------------------
# ASCII PLY format


PLY_WITH_NORMALS = """\
ply
format ascii 1.0
comment exported for testing
element vertex 2
property float x
property float y
property float z
property float nx
property float ny
property float nz
end_header
0 0 0 1 0 0
1 2 3 0 1 0
"""


def test_load_ply_ignores_extra_properties(tmp_path):
    p = tmp_path / "n.ply"
    p.write_text(PLY_WITH_NORMALS)
    c = load_cloud(p, format="ply-ascii")
    assert len(c) == 2
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 2, 3]])


def test_load_ply_reordered_properties(tmp_path):
    p = tmp_path / "zyx.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float z\nproperty float y\nproperty float x\n"
        "end_header\n3 2 1\n"
    )
    c = load_cloud(p)
    np.testing.assert_array_equal(c.points, [[1, 2, 3]])


def test_load_ply_stops_at_face_rows(tmp_path):
    p = tmp_path / "f.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\nproperty list uchar int vertex_indices\n"
        "end_header\n0 0 0\n1 1 1\n3 0 1 0\n"
    )
    c = load_cloud(p)
    assert len(c) == 2


def test_load_ply_missing_magic(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("not a ply\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(p, format="ply-ascii")
    assert exc.value.line_number == 1


def test_load_ply_binary_rejected(tmp_path):
    p = tmp_path / "bin.ply"
    p.write_text(
        "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n"
    )
    with pytest.raises(ParseError):
        load_cloud(p)


def test_load_ply_truncated_body(tmp_path):
    p = tmp_path / "short.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 1 1\n"
    )
    with pytest.raises(ParseError):
        load_cloud(p)


def test_load_ply_row_with_wrong_field_count(tmp_path):
    p = tmp_path / "w.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0\n"
    )
    with pytest.raises(ParseError) as exc:
        load_cloud(p)
    assert exc.value.line_number == 8


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    c = PointCloud(rng.standard_normal((23, 3)))
    p = tmp_path / "rt.ply"
    save_cloud(c, p)
    back = load_cloud(p)
    assert np.array_equal(back.points, c.points)


def test_format_inferred_from_extension(tmp_path):
    c = PointCloud([[1, 2, 3]])
    ply = tmp_path / "a.ply"
    xyz = tmp_path / "a.xyz"
    save_cloud(c, ply)
    save_cloud(c, xyz)
    assert ply.read_text().startswith("ply\n")
    assert xyz.read_text().splitlines()[0].split()[0] == "1.0"


# ---------------------------------------------------------------------------
# Subsampling


def test_subsample_frequency_one_is_identity():
    c = PointCloud(np.arange(30.0).reshape(10, 3))
    s = subsample(c, 1)
    np.testing.assert_array_equal(s.points, c.points)


def test_subsample_16_points_frequency_8():
    c = PointCloud(np.arange(48.0).reshape(16, 3))
    s = subsample(c, 8)
    assert len(s) == 2
    np.testing.assert_array_equal(s.points, c.points[[0, 8]])


def test_subsample_17_points_frequency_8_keeps_boundary():
    c = PointCloud(np.arange(51.0).reshape(17, 3))
    s = subsample(c, 8)
    assert len(s) == 3
    np.testing.assert_array_equal(s.points, c.points[[0, 8, 16]])


def test_subsample_rejects_zero_frequency():
    c = PointCloud([[0, 0, 0]])
    with pytest.raises(ValueError):
        subsample(c, 0)


# ---------------------------------------------------------------------------
# Nearest-neighbor index


def test_nearest_exact_hit():
    c = PointCloud([[0, 0, 0], [10, 0, 0], [0, 5, 0]])
    idx = build_index(c)
    i, d = idx.nearest([0, 5, 0])
    assert i == 2
    assert d == 0.0


def test_nearest_simple_two_point():
    c = PointCloud([[0, 0, 0], [10, 0, 0]])
    idx = build_index(c)
    i, d = idx.nearest([1, 0, 0])
    assert i == 0
    assert d == pytest.approx(1.0)


def test_nearest_tie_goes_to_lowest_index():
    c = PointCloud([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]])
    idx = build_index(c)
    i, d = idx.nearest([0, 0, 0])
    assert i == 0
    assert d == pytest.approx(1.0)


def test_nearest_single_point_cloud():
    c = PointCloud([[2, 0, 0]])
    i, d = build_index(c).nearest([0, 0, 0])
    assert i == 0
    assert d == pytest.approx(2.0)


def test_nearest_matches_linear_scan():
    # Oracle: exhaustive distance scan over the whole cloud.
    rng = np.random.default_rng(2024)
    pts = rng.uniform(-1, 1, size=(500, 3))
    c = PointCloud(pts)
    idx = build_index(c)
    for q in rng.uniform(-1.2, 1.2, size=(100, 3)):
        dists = np.linalg.norm(pts - q, axis=1)
        want = int(np.argmin(dists))
        got_i, got_d = idx.nearest(q)
        assert got_i == want
        assert got_d == pytest.approx(dists[want], abs=1e-12)


def test_batch_query_matches_single():
    rng = np.random.default_rng(5)
    c = PointCloud(rng.standard_normal((200, 3)))
    idx = build_index(c)
    queries = rng.standard_normal((40, 3))
    bi, bd = idx.query(queries)
    for k, q in enumerate(queries):
        i, d = idx.nearest(q)
        assert bi[k] == i
        assert bd[k] == pytest.approx(d, abs=1e-12)


# ---------------------------------------------------------------------------
# Rigid transforms of clouds


def test_transform_identity_is_noop():
    c = PointCloud([[1, 2, 3], [4, 5, 6]])
    out = transform_cloud(c, RigidMotion.identity())
    np.testing.assert_array_equal(out.points, c.points)


def test_transform_then_inverse_recovers():
    rng = np.random.default_rng(3)
    c = PointCloud(rng.standard_normal((50, 3)))
    m = rotation_about_z(0.7, (0.3, -0.2, 1.1))
    back = transform_cloud(transform_cloud(c, m), inverse(m))
    assert np.max(np.abs(back.points - c.points)) < 1e-12


def test_transform_quarter_turn_about_z():
    c = PointCloud([[1, 0, 0]])
    out = transform_cloud(c, rotation_about_z(np.pi / 2))
    assert np.max(np.abs(out.points[0] - np.array([0, 1, 0]))) < 1e-12


def test_transform_preserves_scan_id_and_composes():
    rng = np.random.default_rng(4)
    c = PointCloud(rng.standard_normal((20, 3)), scan_id=5)
    a = rotation_about_z(0.3, (1.0, 0, 0))
    b = rotation_about_z(-1.1, (0, 2.0, 0))
    two_step = transform_cloud(transform_cloud(c, b), a)
    one_step = transform_cloud(c, compose(a, b))
    assert two_step.scan_id == 5
    assert np.max(np.abs(two_step.points - one_step.points)) < 1e-12


# ---------------------------------------------------------------------------
# Median resolution


def test_median_resolution_unit_lattice():
    pts = np.zeros((10, 3))
    pts[:, 0] = np.arange(10.0)
    assert median_resolution(PointCloud(pts)) == pytest.approx(1.0)


def test_median_resolution_two_points():
    c = PointCloud([[0, 0, 0], [3, 0, 0]])
    assert median_resolution(c) == pytest.approx(3.0)


def test_median_resolution_matches_brute_force():
    rng = np.random.default_rng(99)
    pts = rng.uniform(0, 2, size=(200, 3))
    # Oracle: full pairwise distance matrix, min over rows excluding self.
    diff = pts[:, None, :] - pts[None, :, :]
    dmat = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dmat, np.inf)
    want = float(np.median(dmat.min(axis=1)))
    assert median_resolution(PointCloud(pts)) == pytest.approx(want, abs=1e-12)


def test_median_resolution_needs_two_points():
    with pytest.raises(TooFewPoints):
        median_resolution(PointCloud([[0, 0, 0]]))
