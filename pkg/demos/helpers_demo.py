"""Small shared printing helpers for the demo scripts."""

from mvreg.synth import motion_errors


def print_errors(estimated, truth, indent="  "):
    """Per-scan rotation (deg) and translation error, gauge-aligned."""
    for k, (rot, trans) in enumerate(motion_errors(estimated, truth)):
        print(f"{indent}scan {k}: rotation error {rot:7.4f} deg, "
              f"translation error {trans:.5f}")
