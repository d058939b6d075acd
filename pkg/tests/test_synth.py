"""Tests for synthetic scene generation and the Monte-Carlo harness."""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.stats import kstest

from mvreg.averaging import GlobalMotions
from mvreg.exceptions import InvalidOverlap
from mvreg.lie import RigidMotion, compose, geodesic_distance, inverse, rotation_angle
from mvreg.overlap import estimate_overlap_percentage, estimate_threshold
from mvreg.pairwise import tricp
from mvreg.pipeline import PipelineConfig, register_multiview
from mvreg.synth import (
    SHAPES,
    MCReport,
    TrialResult,
    generate_scene,
    motion_errors,
    perturb_motions,
    run_mc_trials,
    save_mc_csv,
)

from helpers import rotation_about_z


def locked_mc_scene():
    """Small sphere-section scene with second-neighbor pairs near xi = 0.45."""
    clean = generate_scene("sphere-section", 6, points_per_scan=150,
                           overlap=0.725, sigma=0.0, seed=5)
    return generate_scene("sphere-section", 6, points_per_scan=150,
                          overlap=0.725, sigma=0.001 * clean.diameter, seed=5)


# ------------------------------------------------------------ scenes


def test_scene_determinism_is_bitwise():
    a = generate_scene("saddle", 4, points_per_scan=200, overlap=0.6,
                       sigma=0.01, seed=11)
    b = generate_scene("saddle", 4, points_per_scan=200, overlap=0.6,
                       sigma=0.01, seed=11)
    for sa, sb in zip(a.scans, b.scans):
        assert np.array_equal(sa.points, sb.points)
    for ma, mb in zip(a.truth.motions, b.truth.motions):
        assert np.array_equal(ma.rotation, mb.rotation)
        assert np.array_equal(ma.translation, mb.translation)


def test_scene_seed_changes_truth():
    a = generate_scene("saddle", 3, points_per_scan=100, overlap=0.6,
                       sigma=0.0, seed=0)
    b = generate_scene("saddle", 3, points_per_scan=100, overlap=0.6,
                       sigma=0.0, seed=1)
    assert not np.allclose(a.truth[1].rotation, b.truth[1].rotation)


def test_scene_shape_and_ids():
    scene = generate_scene("wave", 5, points_per_scan=250, overlap=0.65,
                           sigma=0.0, seed=2)
    assert scene.n_scans == 5
    assert len(scene.truth) == 5
    assert scene.diameter > 0
    for k, scan in enumerate(scene.scans):
        assert scan.scan_id == k
        # Window sampling hits the requested budget within lattice rounding.
        assert 0.5 * 250 <= len(scan) <= 2.0 * 250


def test_reference_motion_is_identity():
    scene = generate_scene("wave", 3, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=3)
    assert np.array_equal(scene.truth[0].rotation, np.eye(3))
    assert np.array_equal(scene.truth[0].translation, np.zeros(3))


def test_scene_rejects_bad_arguments():
    with pytest.raises(InvalidOverlap):
        generate_scene("wave", 3, overlap=0.0)
    with pytest.raises(InvalidOverlap):
        generate_scene("wave", 3, overlap=1.2)
    with pytest.raises(ValueError):
        generate_scene("wave", 1)
    with pytest.raises(ValueError):
        generate_scene("wave", 3, points_per_scan=4)
    with pytest.raises(ValueError):
        generate_scene("wave", 3, sigma=-0.1)
    with pytest.raises(ValueError):
        generate_scene("plane", 3)


def test_all_shapes_generate():
    for shape in SHAPES:
        scene = generate_scene(shape, 3, points_per_scan=120, overlap=0.6,
                               sigma=0.0, seed=7)
        assert scene.shape == shape
        assert all(len(s) > 0 for s in scene.scans)


def test_consecutive_scans_share_lattice_points():
    scene = generate_scene("saddle", 5, points_per_scan=300, overlap=0.6,
                           sigma=0.0, seed=4)
    for k in range(4):
        ga = {tuple(np.round(p, 9))
              for p in scene.truth[k].apply(scene.scans[k].points)}
        gb = {tuple(np.round(p, 9))
              for p in scene.truth[k + 1].apply(scene.scans[k + 1].points)}
        fraction = len(ga & gb) / len(gb)
        assert abs(fraction - 0.6) < 0.1


def test_consecutive_overlap_estimates_near_nominal():
    scene = generate_scene("sphere-section", 8, points_per_scan=8000,
                           overlap=0.6, sigma=0.0, seed=0)
    threshold = estimate_threshold(scene.scans, scene.truth)
    for i in range(7):
        m = compose(inverse(scene.truth[i]), scene.truth[i + 1])
        xi = estimate_overlap_percentage(scene.scans[i], scene.scans[i + 1],
                                         m, threshold)
        assert abs(xi - 0.6) < 0.05


def test_second_neighbor_overlap_follows_construction():
    # Windows at consecutive starts overlap by 2o-1 two steps apart.
    scene = generate_scene("sphere-section", 8, points_per_scan=8000,
                           overlap=0.6, sigma=0.0, seed=0)
    threshold = estimate_threshold(scene.scans, scene.truth)
    for i in range(0, 6, 2):
        m = compose(inverse(scene.truth[i]), scene.truth[i + 2])
        xi = estimate_overlap_percentage(scene.scans[i], scene.scans[i + 2],
                                         m, threshold)
        assert abs(xi - 0.2) < 0.07


def test_full_overlap_pair_recovers_relative_truth():
    scene = generate_scene("sphere-section", 2, points_per_scan=200,
                           overlap=1.0, sigma=0.0, seed=6)
    rel = compose(inverse(scene.truth[0]), scene.truth[1])
    result = tricp(scene.scans[1], scene.scans[0], rel)
    assert geodesic_distance(result.motion, rel) < 1e-6
    # Also from a slightly disturbed start.
    start = compose(rotation_about_z(0.005, (0.005, 0.0, 0.0)), rel)
    result = tricp(scene.scans[1], scene.scans[0], start)
    assert geodesic_distance(result.motion, rel) < 1e-6


def test_noise_is_additive_and_bounded():
    clean = generate_scene("wave", 3, points_per_scan=200, overlap=0.7,
                           sigma=0.0, seed=8)
    sigma = 0.01
    noisy = generate_scene("wave", 3, points_per_scan=200, overlap=0.7,
                           sigma=sigma, seed=8)
    for a, b in zip(clean.truth.motions, noisy.truth.motions):
        assert np.array_equal(a.rotation, b.rotation)
    for a, b in zip(clean.scans, noisy.scans):
        delta = np.linalg.norm(a.points - b.points, axis=1)
        assert delta.max() > 0.0
        assert delta.max() < 8.0 * sigma


# ------------------------------------------------------ perturbations


def test_perturb_zero_bounds_is_identity():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=9)
    out = perturb_motions(scene.truth, 0.0, 0.0, seed=0)
    for a, b in zip(out.motions, scene.truth.motions):
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)


def test_perturb_keeps_reference_scan():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=9)
    out = perturb_motions(scene.truth, 0.1, 0.1, seed=1)
    assert out[0] is scene.truth[0]
    assert not np.allclose(out[1].rotation, scene.truth[1].rotation)


def test_perturb_rotation_bound_arithmetic():
    scene = generate_scene("wave", 8, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=9)
    bound = 0.02
    for seed in range(20):
        out = perturb_motions(scene.truth, bound, 0.0, seed=[seed, 3])
        for k in range(1, 8):
            noise = compose(out[k], inverse(scene.truth[k]))
            assert rotation_angle(noise) <= math.sqrt(3.0) * bound * (1 + 1e-9)


def test_perturb_translation_bound():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=9)
    bound = 0.05
    for seed in range(10):
        out = perturb_motions(scene.truth, 0.0, bound, seed=seed)
        for k in range(1, 4):
            noise = compose(out[k], inverse(scene.truth[k]))
            assert np.all(np.abs(noise.translation) <= bound)


def test_perturb_axis_angles_uniform():
    scene = generate_scene("wave", 8, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=0)
    bound = 0.02
    angles = []
    for seed in range(50):
        noisy = perturb_motions(scene.truth, bound, 0.0, seed=[seed, 5])
        for k in range(1, 8):
            noise = compose(noisy[k], inverse(scene.truth[k]))
            angles.extend(Rotation.from_matrix(noise.rotation).as_euler("XYZ"))
    angles = np.asarray(angles)
    assert np.all(np.abs(angles) <= bound * (1 + 1e-9))
    assert kstest(angles, "uniform", args=(-bound, 2 * bound)).pvalue > 1e-3


def test_perturb_rejects_negative_bounds():
    scene = generate_scene("wave", 3, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=9)
    with pytest.raises(ValueError):
        perturb_motions(scene.truth, -0.1, 0.0, seed=0)
    with pytest.raises(ValueError):
        perturb_motions(scene.truth, 0.0, -0.1, seed=0)


# ------------------------------------------------------- motion errors


def test_motion_errors_zero_at_truth():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=10)
    for rot, trans in motion_errors(scene.truth, scene.truth):
        assert rot < 1e-9
        assert trans < 1e-12


def test_motion_errors_single_rotation():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=10)
    motions = list(scene.truth.motions)
    motions[2] = compose(rotation_about_z(math.radians(1.0)), motions[2])
    errors = motion_errors(GlobalMotions(tuple(motions)), scene.truth)
    assert errors[2][0] == pytest.approx(1.0, abs=1e-9)
    for k in (0, 1, 3):
        assert errors[k][0] < 1e-9


def test_motion_errors_gauge_invariant():
    from helpers import random_motion

    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=10)
    estimated = perturb_motions(scene.truth, 0.05, 0.05, seed=3)
    base = motion_errors(estimated, scene.truth)

    g = random_motion(np.random.default_rng(4), max_angle=2.0)
    shifted_est = GlobalMotions(tuple(compose(g, m) for m in estimated.motions))
    shifted_truth = GlobalMotions(tuple(compose(g, m) for m in scene.truth.motions))
    moved = motion_errors(shifted_est, shifted_truth)
    for (r0, t0), (r1, t1) in zip(base, moved):
        assert r1 == pytest.approx(r0, abs=1e-9)
        assert t1 == pytest.approx(t0, abs=1e-9)


def test_motion_errors_length_mismatch():
    scene = generate_scene("wave", 4, points_per_scan=100, overlap=0.7,
                           sigma=0.0, seed=10)
    with pytest.raises(ValueError):
        motion_errors(GlobalMotions(scene.truth.motions[:3]), scene.truth)


def test_pipeline_recovers_truth_from_perfect_start():
    # Overlap 0.8 keeps every admitted pair's true overlap above the trim
    # floor, so no edge can be wrenched off the exact alignment.
    scene = generate_scene("saddle", 4, points_per_scan=150, overlap=0.8,
                           sigma=0.0, seed=12)
    motions, _ = register_multiview(scene.scans, scene.truth)
    for got, want in zip(motions.motions, scene.truth.motions):
        assert geodesic_distance(got, want) < 1e-6


# --------------------------------------------------------------- MC


def test_mc_zero_level_trials_identical():
    clean = generate_scene("sphere-section", 4, points_per_scan=150,
                           overlap=0.7, sigma=0.0, seed=13)
    report = run_mc_trials(clean, [0.0], trials_per_level=3, master_seed=0)
    objectives = [t.objective for t in report.trials]
    assert len(objectives) == 3
    assert max(objectives) - min(objectives) < 1e-12
    assert all(not t.failed for t in report.trials)


def test_mc_row_budget_and_fields():
    scene = locked_mc_scene()
    report = run_mc_trials(scene, [0.02, 0.04], trials_per_level=2,
                           master_seed=1)
    assert len(report.trials) == 4
    assert report.levels == (0.02, 0.04)
    for t in report.trials:
        assert isinstance(t, TrialResult)
        assert t.level in (0.02, 0.04)
        assert t.objective >= 0.0
        assert t.seconds > 0.0


def test_mc_weighted_mean_beats_uniform():
    scene = locked_mc_scene()
    weighted = run_mc_trials(scene, [0.04], trials_per_level=8,
                             config=PipelineConfig(weighting="overlap-squared"),
                             master_seed=11)
    uniform = run_mc_trials(scene, [0.04], trials_per_level=8,
                            config=PipelineConfig(weighting="uniform"),
                            master_seed=11)
    w = weighted.aggregate()[0.04]["objective_mean"]
    u = uniform.aggregate()[0.04]["objective_mean"]
    assert w <= u


def test_mc_objective_spread_grows_with_noise():
    scene = locked_mc_scene()
    report = run_mc_trials(scene, [0.02, 0.06], trials_per_level=15,
                           master_seed=11)
    agg = report.aggregate()
    assert agg[0.02]["objective_std"] <= agg[0.06]["objective_std"]


def test_mc_failed_trials_counted_not_fatal():
    scene = locked_mc_scene()
    report = run_mc_trials(scene, [1.5], trials_per_level=3, master_seed=2)
    failed = [t for t in report.trials if t.failed]
    assert failed, "extreme noise should break the pair graph"
    for t in failed:
        assert math.isnan(t.objective)
    assert report.aggregate()[1.5]["n_failed"] == len(failed)


def test_mc_rejects_negative_level():
    scene = locked_mc_scene()
    with pytest.raises(ValueError):
        run_mc_trials(scene, [-0.02], trials_per_level=1)


def test_mc_aggregate_matches_numpy():
    scene = locked_mc_scene()
    report = run_mc_trials(scene, [0.02], trials_per_level=5, master_seed=3)
    objectives = np.array([t.objective for t in report.trials])
    agg = report.aggregate()[0.02]
    assert agg["n"] == 5
    assert agg["objective_mean"] == pytest.approx(objectives.mean(), rel=1e-12)
    assert agg["objective_std"] == pytest.approx(objectives.std(), rel=1e-12)


def test_mc_csv_schema(tmp_path):
    scene = locked_mc_scene()
    report = run_mc_trials(scene, [0.02, 0.04], trials_per_level=2,
                           master_seed=4)
    path = tmp_path / "mc.csv"
    save_mc_csv(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "level,trial,objective,mean_rot_err_deg,mean_trans_err,seconds,converged"
    assert len(lines) == 5
    for line, trial in zip(lines[1:], report.trials):
        fields = line.split(",")
        assert float(fields[0]) == trial.level
        assert int(fields[1]) == trial.trial
        assert float(fields[2]) == pytest.approx(trial.objective, rel=1e-15)
        assert fields[6] in ("0", "1")
