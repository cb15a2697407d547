#!/usr/bin/env python3
"""Profile reconstruction error against the closed-form bounds.

Reconstructs a synthetic cloud through the quantization pipeline, reports
per-part worst cases against the midpoint and edge bounds, and optionally
exports a per-point error PLY plus histogram CSV for visual inspection.

Usage:
    python3 scripts/error_profile.py --depth 12 --ply err.ply --hist err.csv
"""

import argparse
import sys

from lidarpcc import (
    CodecConfig,
    SynthParams,
    bound_cart,
    crossover_radii,
    empirical_error,
    error_colormap_export,
    pipeline_reconstruct,
    synth_lidar,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--beams", type=int, default=64)
    ap.add_argument("--points-per-ring", type=int, default=1800)
    ap.add_argument("--noise-sigma", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ply", default=None)
    ap.add_argument("--hist", default=None)
    args = ap.parse_args()

    cloud = synth_lidar(
        SynthParams(
            beams=args.beams,
            points_per_ring=args.points_per_ring,
            noise_sigma=args.noise_sigma,
            seed=args.seed,
        )
    )
    cfg = CodecConfig(depth=args.depth, convention="kitti")
    report = empirical_error(cloud, cfg, keep_per_point=bool(args.ply or args.hist))

    q = report.q
    print(f"{len(cloud)} points, spherical lattice, q = {q:.6f} m")
    print(f"max error  {report.max_error:.6f} m   mean {report.mean_error:.6f} m")
    print(f"edge bound {report.bound:.6f} m   utilization {report.utilization:.3f}")
    print(f"cartesian bound at same q would be {bound_cart(q):.6f} m")
    for ps in report.per_part:
        print(
            f"  part {ps.part}: {ps.count:7d} pts  max {ps.max_error:.6f}"
            f"  mid bound {ps.bound_mid:.6f}  edge bound {ps.bound_edge:.6f}"
            f"  util {0.0 if ps.utilization is None else ps.utilization:.3f}"
        )
    frac = crossover_radii()
    print("crossover radii (fraction of rho_max):", " ".join(f"{r:.4f}" for r in frac))

    if args.ply or args.hist:
        recon, _, _ = pipeline_reconstruct(cloud, cfg)
        ply = args.ply or "error_profile.ply"
        hist = args.hist or "error_profile_hist.csv"
        error_colormap_export(recon, report.per_point, ply, hist)
        print(f"wrote {ply} and {hist}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
