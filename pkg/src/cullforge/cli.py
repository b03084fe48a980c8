"""Command-line entry point: ``cullforge <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from .core import ConfigError, CullConfig, CullError, InvariantViolation, Manifest, validate_frame
from .costmodel import PROFILES, TABLE1_SURVEILLANCE, CostParams, estimate_culled, estimate_full, speedup
from .io import (
    DetectionStore,
    load_config_file,
    parse_detections_jsonl,
    read_manifest,
    write_csv,
    write_detections,
    dumps_manifest,
)
from .optres import choose_scale, scale_grid, sweep_scales
from .pipeline import (
    CountingAdapter,
    EmptyStream,
    Strategy,
    StrategyKind,
    cull_stage1,
    cull_stage2,
    overlap_report,
    run_pipeline,
    run_strategy,
)
from .scoring import DifficultyScorer
from .synthdet import (
    ABLATION_FIXTURE,
    build_adapters,
    fixture_params,
    oracle_hard_set,
    simulate_student,
    simulate_teacher,
)

log = logging.getLogger("cullforge")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# flag dest -> CullConfig field
CONFIG_FLAGS = {
    "target_size": "target_n",
    "stage1_keep": "stage1_keep",
    "q": "q_weight",
    "b": "b_offset",
    "iou": "iou_threshold",
    "scale_step": "scale_step",
    "min_scale": "min_scale",
    "mse_threshold": "mse_threshold",
    "score_floor": "score_floor",
}


class UsageError(CullError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _shared_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("shared")
    g.add_argument("--config", help="JSON config (CullConfig field names); falls back to $CULLFORGE_CONFIG")
    g.add_argument("--target-size", type=int, help="frames kept after stage 2")
    g.add_argument("--stage1-keep", type=int, help="frames kept after stage 1 (default 6 x target)")
    g.add_argument("--q", type=float, help="confidence-loss weight Q")
    g.add_argument("--b", type=float, help="confidence-loss offset b")
    g.add_argument("--iou", type=float, help="IoU match threshold")
    g.add_argument("--scale-step", type=float)
    g.add_argument("--min-scale", type=float)
    g.add_argument("--mse-threshold", type=float, help="per-frame MSE tolerance for resolution search")
    g.add_argument("--score-floor", type=float, help="drop detections scoring below this")
    g.add_argument("--strategy", choices=[k.value for k in StrategyKind])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", "-o", help="output path (default stdout)")
    g.add_argument("--workers", type=int, default=1, help="threads for detector calls")
    g.add_argument("-v", "--verbose", action="store_true")
    src = p.add_argument_group("data source")
    src.add_argument("--student", help="student detections JSONL")
    src.add_argument("--teacher", help="teacher detections JSONL")
    src.add_argument("--synthetic", action="store_true", help="use the seeded synthetic detector")
    src.add_argument("--frames", type=int, help="synthetic stream length")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    ap = _Parser(prog="cullforge", description="Cull a video-frame dataset to a small hard-example set.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    sub.add_parser("score", parents=[shared], help="per-frame difficulty CSV")
    sub.add_parser("stage1", parents=[shared], help="confidence-loss top-k cull -> manifest")
    s2 = sub.add_parser("stage2", parents=[shared], help="precision cull of a manifest -> manifest")
    s2.add_argument("--manifest", required=True)
    run = sub.add_parser("run", parents=[shared], help="full pipeline -> manifest")
    run.add_argument("--opt-resolution", action="store_true")
    run.add_argument("--trace", help="write the stage trace JSON here")
    opt = sub.add_parser("optres", parents=[shared], help="resolution sweep on a manifest -> scale,mse CSV")
    opt.add_argument("--manifest", required=True)
    opt.add_argument("--manifest-out", help="write the manifest with the chosen scale here")
    sub.add_parser("ablate", parents=[shared], help="compare the five selection strategies")
    rep = sub.add_parser("report", parents=[shared], help="cost report for a manifest")
    rep.add_argument("--manifest", required=True)
    rep.add_argument("--profile", help="cost profile JSON or a built-in name: " + ", ".join(PROFILES))
    syn = sub.add_parser("synth", parents=[shared], help="write synthetic student/teacher JSONL")
    syn.add_argument("--sweep", action="store_true", help="also write student records at every swept scale")
    return ap


def resolve_config(args, base: CullConfig | None = None) -> tuple[CullConfig, CostParams | None]:
    """Defaults < $CULLFORGE_CONFIG or --config < command-line flags."""
    values = base.to_dict() if base is not None else {}
    file_values, cost = load_config_file(args.config)
    values.update(file_values)
    explicit = {field: getattr(args, dest) for dest, field in CONFIG_FLAGS.items() if getattr(args, dest) is not None}
    if "target_n" in explicit and "stage1_keep" not in explicit and "stage1_keep" not in file_values:
        values.pop("stage1_keep", None)
    values.update(explicit)
    return CullConfig.from_dict(values), cost


@contextmanager
def _out(path: str | None) -> Iterator:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _synthetic(args, default_frames: int):
    n = args.frames if args.frames is not None else default_frames
    return build_adapters(fixture_params(n_frames=n, seed=args.seed))


def _sources(args, default_frames: int = 86_400, need_teacher: bool = True):
    """(frame_ids, student adapter, teacher adapter or None, scenes or None)."""
    if args.synthetic:
        if args.student or args.teacher:
            raise UsageError("--synthetic cannot be combined with --student/--teacher")
        scenes, student, teacher = _synthetic(args, default_frames)
        return [s.frame_id for s in scenes], student, teacher, scenes
    if not args.student:
        raise UsageError("need --student PATH (and --teacher PATH) or --synthetic")
    student = DetectionStore.from_path(args.student)
    teacher = None
    if need_teacher:
        if not args.teacher:
            raise UsageError("this command needs --teacher PATH")
        teacher = DetectionStore.from_path(args.teacher)
    return student.frame_ids(), student, teacher, None


def _full_res_frames(args, config: CullConfig):
    """Stream of validated full-resolution student frames, without buffering files."""
    if args.synthetic:
        ids, student, _, _ = _sources(args, need_teacher=False)
        return (validate_frame(student.detect(fid, 1.0), config.score_floor) for fid in ids)
    if not args.student:
        raise UsageError("need --student PATH or --synthetic")

    def gen():
        with open(args.student, "rb") as fh:
            for frame in parse_detections_jsonl(fh):
                if frame.scale == 1.0:
                    yield validate_frame(frame, config.score_floor)

    return gen()


def _write_manifest(m: Manifest, path: str | None) -> None:
    with _out(path) as fh:
        fh.write(dumps_manifest(m))


def cmd_score(args) -> int:
    config, _ = resolve_config(args)
    if args.strategy == StrategyKind.ENTROPY.value:
        scorer = DifficultyScorer.entropy()
    else:
        scorer = DifficultyScorer.confidence(config.q_weight, config.b_offset)
    rows = ((f.frame_id, scorer(f)) for f in _full_res_frames(args, config))
    with _out(args.output) as fh:
        write_csv(rows, ("frame_id", "difficulty"), fh)
    return EXIT_OK


def cmd_stage1(args) -> int:
    config, _ = resolve_config(args)
    count = 0

    def counted(frames):
        nonlocal count
        for f in frames:
            count += 1
            yield f

    scorer = DifficultyScorer.confidence(config.q_weight, config.b_offset)
    kept = cull_stage1(counted(_full_res_frames(args, config)), scorer, config.stage1_keep)
    if count == 0:
        raise EmptyStream("no frames to cull")
    _write_manifest(Manifest(tuple(kept), 1.0, config, count), args.output)
    return EXIT_OK


def cmd_stage2(args) -> int:
    manifest = read_manifest(args.manifest)
    config, _ = resolve_config(args, manifest.config_snapshot)
    ids = manifest.frame_ids
    if args.synthetic:
        _, student, teacher, _ = _sources(args)
    else:
        if not (args.student and args.teacher):
            raise UsageError("stage2 needs --student and --teacher, or --synthetic")
        wanted = set(ids)
        student = DetectionStore.from_path(args.student, only=wanted)
        teacher = DetectionStore.from_path(args.teacher, only=wanted)

    def lookup(adapter):
        return lambda fid: validate_frame(adapter.detect(fid, 1.0), config.score_floor)

    target = min(config.target_n, len(ids))
    kept = cull_stage2(ids, lookup(student), lookup(teacher), config.iou_threshold, target)
    _write_manifest(Manifest(tuple(kept), manifest.chosen_scale, config, manifest.source_count), args.output)
    return EXIT_OK


def cmd_run(args) -> int:
    config, _ = resolve_config(args)
    ids, student, teacher, _ = _sources(args)
    manifest, trace = run_pipeline(
        config, student, teacher, ids, opt_resolution=args.opt_resolution, workers=args.workers
    )
    _write_manifest(manifest, args.output)
    if args.trace:
        r1, r2 = trace.per_stage_reduction
        Path(args.trace).write_text(json.dumps({
            "input_count": trace.input_count,
            "stage1_survivors": list(trace.stage1_survivors),
            "stage2_survivors": list(trace.stage2_survivors),
            "per_stage_reduction": [r1, r2],
            "total_reduction": trace.total_reduction,
        }, indent=2) + "\n", encoding="utf-8")
    log.info("kept %d of %d frames (%.1fx), scale %.6g", len(manifest), trace.input_count,
             trace.total_reduction, manifest.chosen_scale)
    return EXIT_OK


def cmd_optres(args) -> int:
    manifest = read_manifest(args.manifest)
    config, _ = resolve_config(args, manifest.config_snapshot)
    ids = manifest.frame_ids
    if args.synthetic:
        _, student, _, _ = _sources(args, need_teacher=False)
    elif args.student:
        student = DetectionStore.from_path(args.student, only=set(ids))
    else:
        raise UsageError("optres needs --student PATH or --synthetic")
    scorer = DifficultyScorer.confidence(config.q_weight, config.b_offset)
    if ids:
        threshold = config.mse_threshold * len(ids)
        sweep = sweep_scales(ids, student, scorer, config.scale_step, config.min_scale,
                             stop_threshold=threshold, score_floor=config.score_floor)
        chosen = choose_scale(sweep, threshold)
        curve = list(zip(sweep.scales, sweep.mse_per_scale))
    else:
        chosen, curve = 1.0, [(1.0, 0.0)]
    with _out(args.output) as fh:
        write_csv(curve, ("scale", "mse"), fh)
    print(f"chosen_scale {chosen!r}", file=sys.stderr)
    if args.manifest_out:
        _write_manifest(Manifest(manifest.entries, chosen, config, manifest.source_count), args.manifest_out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config, _ = resolve_config(args)
    default_frames = ABLATION_FIXTURE.n_frames
    ids, student, teacher, scenes = _sources(args, default_frames=default_frames)
    hard = oracle_hard_set(scenes, min(config.target_n, len(scenes))) if scenes is not None else None
    results = {}
    for kind in StrategyKind:
        counter = CountingAdapter(teacher)
        m = run_strategy(Strategy(kind), config, student, counter, ids, workers=args.workers)
        results[kind] = (m, counter.calls)
    reference = results[StrategyKind.PRECISION][0]
    rows = []
    for kind, (m, calls) in results.items():
        recall = overlap_report(m, hard) if hard is not None else ""
        rows.append((kind.value, len(m), calls, recall, overlap_report(m, reference)))
    with _out(args.output) as fh:
        write_csv(rows, ("strategy", "selected", "teacher_calls", "hard_recall", "overlap_with_precision"), fh)
    return EXIT_OK


def _load_profile(choice: str | None, from_config: CostParams | None) -> CostParams:
    if choice is None:
        return from_config or TABLE1_SURVEILLANCE
    if choice in PROFILES:
        return PROFILES[choice]
    try:
        d = json.loads(Path(choice).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read cost profile {choice}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cost profile {choice} is not valid JSON: {exc.msg}") from None
    return CostParams.from_dict(d.get("cost_profile", d))


def cmd_report(args) -> int:
    manifest = read_manifest(args.manifest)
    config, cost = resolve_config(args, manifest.config_snapshot)
    params = _load_profile(args.profile, cost)
    n = manifest.source_count
    target = max(1, len(manifest))
    stage1 = min(max(config.stage1_keep, target), n)
    full = estimate_full(params, n)
    culled = estimate_culled(params, n, stage1, target, manifest.chosen_scale)
    doc = {"full": full.to_dict(), "culled": culled.to_dict(), "speedup": speedup(full, culled),
           "images": {"source": n, "stage1": stage1, "target": target}}
    with _out(args.output) as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    config, _ = resolve_config(args)
    outdir = Path(args.output or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    params = fixture_params(n_frames=args.frames if args.frames is not None else 86_400, seed=args.seed)
    scenes, _, _ = build_adapters(params)
    scales = scale_grid(config.scale_step, config.min_scale) if args.sweep else [1.0]
    with open(outdir / "student.jsonl", "w", encoding="utf-8") as fh:
        write_detections((simulate_student(s, sc, params.seed, params.confidence_noise)
                          for s in scenes for sc in scales), fh)
    with open(outdir / "teacher.jsonl", "w", encoding="utf-8") as fh:
        write_detections((simulate_teacher(s, params.seed) for s in scenes), fh)
    return EXIT_OK


COMMANDS = {
    "score": cmd_score,
    "stage1": cmd_stage1,
    "stage2": cmd_stage2,
    "run": cmd_run,
    "optres": cmd_optres,
    "ablate": cmd_ablate,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"cullforge: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"cullforge: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (CullError, OSError) as exc:
        print(f"cullforge: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
