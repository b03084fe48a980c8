"""MSE-vs-scale curves and chosen scales on the synthetic stream.

Sweeps the culled set and, for contrast, an evenly spaced sample of the
same size. Culled frames carry low-confidence detections near the score
floor, so they lose detections sooner when downsampled.

    python3 scripts/resolution_curve.py --frames 20000 --target 64
"""

import argparse

from cullforge.core import CullConfig
from cullforge.optres import choose_scale, sweep_scales
from cullforge.pipeline import intermittent_ids, run_pipeline
from cullforge.scoring import DifficultyScorer
from cullforge.synthdet import build_adapters, fixture_params


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--frames", type=int, default=20_000)
    ap.add_argument("--target", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mse-threshold", type=float, default=0.05)
    args = ap.parse_args()

    cfg = CullConfig(target_n=args.target, mse_threshold=args.mse_threshold)
    scenes, student, teacher = build_adapters(fixture_params(args.frames, args.seed))
    manifest, _ = run_pipeline(cfg, student, teacher, [s.frame_id for s in scenes])
    scorer = DifficultyScorer.confidence(cfg.q_weight, cfg.b_offset)
    spaced = intermittent_ids([s.frame_id for s in scenes], len(manifest))
    for label, ids in (("culled", manifest.frame_ids), ("evenly spaced", spaced)):
        thr = cfg.mse_threshold * len(ids)
        sweep = sweep_scales(ids, student, scorer, cfg.scale_step, cfg.min_scale, score_floor=cfg.score_floor)
        chosen = choose_scale(sweep, thr)
        print(f"\n{label}: {len(ids)} frames, threshold {thr:.4g}, chosen scale {chosen:.4f}")
        for s, m in zip(sweep.scales, sweep.mse_per_scale):
            mark = "  <- chosen" if s == chosen else ""
            print(f"{s:8.4f} {m:12.6g}{mark}")


if __name__ == "__main__":
    main()
