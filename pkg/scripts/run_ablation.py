"""Hard-set recall and teacher cost of the five selection strategies over several seeds.

    python3 scripts/run_ablation.py --seeds 0 1 2 --frames 12800 --target 128
"""

import argparse
import statistics

from cullforge.core import CullConfig
from cullforge.pipeline import CountingAdapter, Strategy, StrategyKind, overlap_report, run_strategy
from cullforge.synthdet import build_adapters, fixture_params, oracle_hard_set


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--frames", type=int, default=12_800)
    ap.add_argument("--target", type=int, default=128)
    args = ap.parse_args()

    cfg = CullConfig(target_n=args.target)
    recalls = {k: [] for k in StrategyKind}
    calls = {k: [] for k in StrategyKind}
    for seed in args.seeds:
        scenes, student, teacher = build_adapters(fixture_params(args.frames, seed))
        ids = [s.frame_id for s in scenes]
        hard = oracle_hard_set(scenes, args.target)
        for kind in StrategyKind:
            counting = CountingAdapter(teacher)
            m = run_strategy(Strategy(kind), cfg, student, counting, ids)
            recalls[kind].append(overlap_report(m, hard))
            calls[kind].append(counting.calls)
        print(f"seed {seed} done", flush=True)

    print(f"\n{'strategy':<22}{'recall mean':>12}{'min':>8}{'max':>8}{'teacher calls':>15}")
    for kind in StrategyKind:
        r = recalls[kind]
        print(f"{kind.value:<22}{statistics.mean(r):>12.3f}{min(r):>8.3f}{max(r):>8.3f}"
              f"{statistics.mean(calls[kind]):>15.0f}")


if __name__ == "__main__":
    main()
