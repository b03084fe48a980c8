"""GPU-hour breakdown for full training versus culled sets of several sizes and scales.

    python3 scripts/cost_table.py --targets 256 128 64 --scales 1.0 0.5
"""

import argparse

from cullforge.costmodel import (
    SURVEILLANCE_DAY_FRAMES,
    TABLE1_STAGE1_KEEP,
    TABLE1_SURVEILLANCE,
    estimate_culled,
    estimate_full,
)


def row(label, r):
    return (f"{label:<18}{r.student_training:>10.2f}{r.student_prediction:>10.2f}"
            f"{r.teacher_prediction:>10.2f}{r.total:>10.2f}{r.speedup_vs_full:>9.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--frames", type=int, default=SURVEILLANCE_DAY_FRAMES)
    ap.add_argument("--stage1", type=int, default=TABLE1_STAGE1_KEEP)
    ap.add_argument("--targets", type=int, nargs="+", default=[256, 128, 64])
    ap.add_argument("--scales", type=float, nargs="+", default=[1.0])
    args = ap.parse_args()

    p = TABLE1_SURVEILLANCE
    print(f"{'set':<18}{'train':>10}{'s-pred':>10}{'t-pred':>10}{'total':>10}{'speedup':>10}")
    print(row(f"full {args.frames}", estimate_full(p, args.frames)))
    for scale in args.scales:
        for t in args.targets:
            print(row(f"{t} @ {scale:g}", estimate_culled(p, args.frames, args.stage1, t, scale)))


if __name__ == "__main__":
    main()
