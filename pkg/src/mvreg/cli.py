"""Command-line entry point: register, pairwise, overlap, synth, mc.

Every command reads an optional flat JSON config file (``--config``) whose
keys mirror :class:`RunConfig`; explicitly passed flags override file values,
which override the built-in defaults.  Same config + seed means bitwise
identical output files.
"""

import argparse
import dataclasses
import glob
import json
import logging
import os
import sys
from dataclasses import dataclass

from .averaging import (
    GlobalMotions,
    GraphEdge,
    MotionGraph,
    load_global_motions,
    save_global_motions,
    save_motion_graph,
)
from .cloud import load_cloud, save_cloud, subsample
from .exceptions import MvregError
from .lie import compose, inverse
from .overlap import (
    DEFAULT_THRESHOLD_SCALE,
    estimate_overlap_matrix,
    estimate_threshold,
    save_overlap_csv,
)
from .pairwise import TrICPConfig, tricp
from .pipeline import (
    PipelineConfig,
    register_multiview,
    write_edge_csv,
    write_report_csv,
)
from .synth import SHAPES, generate_scene, perturb_motions, run_mc_trials, save_mc_csv

_log = logging.getLogger(__name__)

# How a run mode maps onto the pipeline's edge weighting.
MODE_TO_WEIGHTING = {"weighted": "overlap-squared", "unweighted": "uniform"}
MODES = ("weighted", "unweighted", "paired")
FORMATS = ("xyz", "ply-ascii")


@dataclass
class RunConfig:
    """Flat bag of every run setting; JSON config files mirror these names."""

    # ingestion
    inputs: tuple = ()
    initial_motions: str = None
    format: str = None  # None: infer per file from the extension
    subsample: int = 8
    # plumbing
    out: str = "."
    seed: int = 0
    workers: int = None  # accepted for interface compatibility; runs are sequential
    mode: str = "weighted"
    # pipeline knobs
    xi_thr: float = 0.4
    delta: float = 1e-4
    max_outer_iterations: int = 30
    averaging_epsilon: float = 1e-8
    averaging_max_iter: int = 100
    threshold_scale: float = DEFAULT_THRESHOLD_SCALE
    # pairwise knobs
    lam: float = 2.0
    xi_min: float = 0.3
    tricp_max_iterations: int = 100
    motion_tolerance: float = 1e-6
    # synthetic-scene knobs
    shape: str = "wave"
    n_scans: int = 8
    points_per_scan: int = 500
    overlap: float = 0.6
    sigma: float = 0.0
    init_noise: float = 0.02
    # Monte-Carlo knobs
    levels: tuple = (0.02, 0.04, 0.06)
    trials: int = 50

    def validate(self, allowed_modes=("weighted", "unweighted")):
        """Check plumbing fields; compute-level fields are checked by the
        config objects they feed (built eagerly before any data is read)."""
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        if not isinstance(self.subsample, int) or self.subsample < 1:
            raise ValueError(f"subsample must be a positive integer, got {self.subsample!r}")
        if self.format is not None and self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.mode not in allowed_modes:
            raise ValueError(f"mode must be one of {allowed_modes}, got {self.mode!r}")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ValueError(f"workers must be a positive integer, got {self.workers!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if self.init_noise < 0:
            raise ValueError(f"init_noise must be nonnegative, got {self.init_noise!r}")
        return self

    def tricp_config(self) -> TrICPConfig:
        return TrICPConfig(
            lam=self.lam,
            xi_min=self.xi_min,
            max_iterations=self.tricp_max_iterations,
            motion_tolerance=self.motion_tolerance,
        )

    def pipeline_config(self, mode=None) -> PipelineConfig:
        if mode is None:
            mode = self.mode
        return PipelineConfig(
            xi_thr=self.xi_thr,
            delta=self.delta,
            max_outer_iterations=self.max_outer_iterations,
            tricp=self.tricp_config(),
            averaging_epsilon=self.averaging_epsilon,
            averaging_max_iter=self.averaging_max_iter,
            threshold_scale=self.threshold_scale,
            weighting=MODE_TO_WEIGHTING[mode],
        )


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_run_config(path) -> dict:
    """Read a flat JSON object whose keys are RunConfig field names."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a flat JSON object")
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"{path}: unknown config field(s): {', '.join(unknown)}")
    return data


def _config_from_args(args, allowed_modes=("weighted", "unweighted")) -> RunConfig:
    """defaults < config file < explicitly passed flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_run_config(args.config))
    for key, val in vars(args).items():
        if key in _CONFIG_FIELDS and val not in (None, [], ()):
            values[key] = val
    rc = RunConfig()
    for key, val in values.items():
        if key in ("inputs", "levels") and isinstance(val, list):
            val = tuple(val)
        setattr(rc, key, val)
    rc.levels = tuple(float(x) for x in rc.levels)
    return rc.validate(allowed_modes)


# ---------------------------------------------------------------------------
# ingestion helpers


def _expand_inputs(tokens):
    """Expand each file name or glob pattern, keeping token order and
    sorting matches within a token; every token must match something."""
    paths = []
    for token in tokens:
        matches = sorted(glob.glob(str(token)))
        if matches:
            paths.extend(matches)
        elif os.path.exists(token):
            paths.append(str(token))
        else:
            raise FileNotFoundError(f"input '{token}' matched no files")
    return paths


def _load_scans(rc: RunConfig):
    paths = _expand_inputs(rc.inputs)
    if len(paths) < 2:
        raise ValueError(f"need at least two input clouds, got {len(paths)}")
    return [
        subsample(load_cloud(p, rc.format, scan_id=k), rc.subsample)
        for k, p in enumerate(paths)
    ]


def _load_initial(rc: RunConfig, n_scans):
    if rc.initial_motions is None:
        return GlobalMotions.identities(n_scans)
    initial = load_global_motions(rc.initial_motions)
    if len(initial) != n_scans:
        raise ValueError(
            f"{rc.initial_motions}: has {len(initial)} motions for {n_scans} scans"
        )
    return initial


# ---------------------------------------------------------------------------
# output helpers


def _ensure_outdir(rc: RunConfig):
    os.makedirs(rc.out, exist_ok=True)
    return rc.out


def _write_matrices(motions: GlobalMotions, path):
    """One homogeneous 4x4 matrix per scan, preceded by '# scan k'."""
    with open(path, "w") as fh:
        for k, m in enumerate(motions.motions):
            fh.write(f"# scan {k}\n")
            for row in m.as_matrix():
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _induced_graph(motions: GlobalMotions, edge_records, n_scans) -> MotionGraph:
    """Relative motions implied by the final globals over the final edge set."""
    edges = tuple(
        GraphEdge(e.i, e.j, compose(inverse(motions[e.i]), motions[e.j]), e.weight)
        for e in edge_records
    )
    return MotionGraph(n_scans, edges)


def _print_motion(motion):
    for row in motion.as_matrix()[:3, :]:
        print(" ".join(repr(float(x)) for x in row))


# ---------------------------------------------------------------------------
# commands


def cmd_register(args) -> int:
    rc = _config_from_args(args)
    config = rc.pipeline_config()  # validates every knob before any IO
    scans = _load_scans(rc)
    initial = _load_initial(rc, len(scans))
    motions, report = register_multiview(scans, initial, config)

    out = _ensure_outdir(rc)
    save_global_motions(motions, os.path.join(out, "motions.txt"))
    _write_matrices(motions, os.path.join(out, "matrices.txt"))
    write_report_csv(report, os.path.join(out, "report.csv"))
    write_edge_csv(report, os.path.join(out, "edges.csv"))
    overlaps = estimate_overlap_matrix(scans, motions, report.threshold)
    save_overlap_csv(overlaps, os.path.join(out, "overlap.csv"))
    save_motion_graph(
        _induced_graph(motions, report.iterations[-1].edges, len(scans)),
        os.path.join(out, "graph.txt"),
    )

    final = report.iterations[-1].objective
    print(
        f"registered {len(scans)} scans in {len(report.iterations)} iterations; "
        f"objective {final!r}; converged={report.converged}"
    )
    print(f"wrote motions.txt, matrices.txt, graph.txt, report.csv, edges.csv, overlap.csv to {out}")
    if not report.converged:
        print("warning: did not converge within the iteration budget", file=sys.stderr)
        return 2
    return 0


def cmd_pairwise(args) -> int:
    rc = _config_from_args(args)
    config = rc.tricp_config()
    data = subsample(load_cloud(args.data, rc.format, scan_id=0), rc.subsample)
    model = subsample(load_cloud(args.model, rc.format, scan_id=1), rc.subsample)
    result = tricp(data, model, None, config)
    _print_motion(result.motion)
    print(f"xi {result.overlap!r}")
    print(f"psi {result.psi!r}")
    print(f"iterations {result.iterations}")
    print(f"converged {result.converged}")
    return 0


def cmd_overlap(args) -> int:
    rc = _config_from_args(args)
    scans = _load_scans(rc)
    motions = _load_initial(rc, len(scans))
    threshold = estimate_threshold(scans, motions, rc.threshold_scale)
    overlaps = estimate_overlap_matrix(scans, motions, threshold)
    out = _ensure_outdir(rc)
    save_overlap_csv(overlaps, os.path.join(out, "overlap.csv"))
    print(f"threshold {threshold!r}")
    for row in overlaps.xi:
        print(" ".join(f"{x:.4f}" for x in row))
    print(f"wrote overlap.csv to {out}")
    return 0


def cmd_synth(args) -> int:
    rc = _config_from_args(args)
    scene = generate_scene(
        rc.shape, rc.n_scans, rc.points_per_scan, rc.overlap, rc.sigma, rc.seed
    )
    out = _ensure_outdir(rc)
    ext = ".ply" if rc.format == "ply-ascii" else ".xyz"
    files = []
    for k, scan in enumerate(scene.scans):
        name = f"scan_{k:03d}{ext}"
        save_cloud(scan, os.path.join(out, name), rc.format)
        files.append(name)
    save_global_motions(scene.truth, os.path.join(out, "truth_motions.txt"))
    initial = perturb_motions(scene.truth, rc.init_noise, 0.0, seed=[rc.seed, 1])
    save_global_motions(initial, os.path.join(out, "initial_motions.txt"))
    meta = {
        "shape": rc.shape,
        "n_scans": rc.n_scans,
        "points_per_scan": rc.points_per_scan,
        "overlap": rc.overlap,
        "sigma": rc.sigma,
        "seed": rc.seed,
        "init_noise": rc.init_noise,
        "diameter": scene.diameter,
        "files": files,
    }
    with open(os.path.join(out, "scene.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"wrote {len(files)} scans, truth_motions.txt, initial_motions.txt, "
        f"scene.json to {out}"
    )
    return 0


def cmd_mc(args) -> int:
    rc = _config_from_args(args, allowed_modes=MODES)
    modes = ("weighted", "unweighted") if rc.mode == "paired" else (rc.mode,)
    # Validate every pipeline config before generating anything.
    configs = {mode: rc.pipeline_config(mode) for mode in modes}
    scene = generate_scene(
        rc.shape, rc.n_scans, rc.points_per_scan, rc.overlap, rc.sigma, rc.seed
    )
    out = _ensure_outdir(rc)
    aggregates = {}
    written = []
    for mode in modes:
        report = run_mc_trials(scene, rc.levels, rc.trials, configs[mode], master_seed=rc.seed)
        name = f"mc_{mode}.csv" if rc.mode == "paired" else "mc.csv"
        save_mc_csv(report, os.path.join(out, name))
        written.append(name)
        aggregates[mode] = report.aggregate()
    for level in rc.levels:
        parts = []
        for mode in modes:
            agg = aggregates[mode][level]
            if agg["n"]:
                parts.append(f"{mode} mean objective {agg['objective_mean']:.6e}")
            else:
                parts.append(f"{mode} all {agg['n_failed']} trials failed")
        print(f"level {level:g}: " + ", ".join(parts))
    print(f"wrote {', '.join(written)} to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_pipeline_flags(parser):
    parser.add_argument("--xi-thr", dest="xi_thr", type=float, help="overlap gate for pair admission")
    parser.add_argument("--delta", type=float, help="outer-loop step-norm stopping tolerance")
    parser.add_argument("--max-outer-iterations", dest="max_outer_iterations", type=int)
    parser.add_argument("--averaging-epsilon", dest="averaging_epsilon", type=float)
    parser.add_argument("--averaging-max-iter", dest="averaging_max_iter", type=int)
    parser.add_argument("--threshold-scale", dest="threshold_scale", type=float,
                        help="overlap distance threshold as a multiple of median resolution")
    _add_tricp_flags(parser)


def _add_tricp_flags(parser):
    parser.add_argument("--lam", type=float, help="overlap penalty exponent")
    parser.add_argument("--xi-min", dest="xi_min", type=float, help="lower bound on the overlap search")
    parser.add_argument("--tricp-max-iterations", dest="tricp_max_iterations", type=int)
    parser.add_argument("--motion-tolerance", dest="motion_tolerance", type=float)


def _add_scene_flags(parser):
    parser.add_argument("--shape", choices=SHAPES)
    parser.add_argument("--n-scans", dest="n_scans", type=int)
    parser.add_argument("--points-per-scan", dest="points_per_scan", type=int)
    parser.add_argument("--overlap", type=float, help="consecutive-pair overlap fraction")
    parser.add_argument("--sigma", type=float, help="Gaussian noise scale")
    parser.add_argument("--init-noise", dest="init_noise", type=float,
                        help="rotation noise bound (radians) for initial motions")


def _parse_levels(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat JSON settings file; flags override it")
    shared.add_argument("--out", help="output directory (default '.')")
    shared.add_argument("--seed", type=int, help="seed controlling every random draw")
    shared.add_argument("--workers", type=int,
                        help="accepted for interface compatibility; runs are sequential")
    shared.add_argument("--mode", choices=MODES,
                        help="edge weighting: weighted (overlap squared) or unweighted; "
                             "mc also accepts paired to run both")
    shared.add_argument("--format", choices=FORMATS, help="cloud file format (default: infer)")
    shared.add_argument("--subsample", type=int, help="keep every f-th point (default 8)")

    parser = argparse.ArgumentParser(
        prog="mvreg",
        description="Multiview rigid registration: trimmed ICP pairs fused by "
                    "overlap-weighted motion averaging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", parents=[shared],
                       help="align many scans into one global frame")
    p.add_argument("inputs", nargs="*", help="cloud files or glob patterns, in scan order")
    p.add_argument("--initial-motions", dest="initial_motions",
                   help="starting motions file (default: identities)")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("pairwise", parents=[shared],
                       help="register one data cloud onto one model cloud")
    p.add_argument("data", help="data cloud file")
    p.add_argument("model", help="model cloud file")
    _add_tricp_flags(p)
    p.set_defaults(func=cmd_pairwise)

    p = sub.add_parser("overlap", parents=[shared],
                       help="estimate the pairwise overlap matrix at given motions")
    p.add_argument("inputs", nargs="*", help="cloud files or glob patterns, in scan order")
    p.add_argument("--motions", dest="initial_motions",
                   help="motions file to evaluate at (default: identities)")
    p.add_argument("--threshold-scale", dest="threshold_scale", type=float)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("synth", parents=[shared],
                       help="generate a synthetic multi-scan scene to disk")
    _add_scene_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mc", parents=[shared],
                       help="Monte-Carlo robustness trials over initial-motion noise")
    _add_scene_flags(p)
    p.add_argument("--levels", type=_parse_levels,
                   help="comma-separated rotation noise levels in radians")
    p.add_argument("--trials", type=int, help="trials per noise level")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_mc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
        )
    try:
        return args.func(args)
    except MvregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
