"""Batch command-line interface: simulate, diarize, and score subcommands."""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config, parse_array_spec
from .pipeline import MODES, PipelineError, run_diarize
from .scoring import format_report, score_der
from .simulator import BUNDLE_FILES, Scenario, load_scenario, simulate
from .timeline import parse_rttm

__all__ = ["main"]


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise PipelineError(f"config file not found: {p}")
    try:
        return load_config(p.read_text())
    except ConfigError as exc:
        raise PipelineError(f"{p}: {exc}") from exc


def _cmd_simulate(args) -> int:
    if args.scenario is not None:
        path = Path(args.scenario)
        if not path.is_file():
            raise PipelineError(f"scenario file not found: {path}")
        scenario = load_scenario(path.read_text())
    else:
        scenario = Scenario()
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    geometry = parse_array_spec(args.array)
    bundle = simulate(scenario, geometry)
    paths = bundle.write(args.out)
    for key in sorted(paths):
        print(f"wrote {paths[key]}")
    return 0


def _bundle_job(bundle_dir: str, mode: str, vad: str, config_path: str | None) -> str:
    """Diarize one bundle directory; safe to run in a worker process."""
    config = _load_pipeline_config(config_path)
    root = Path(bundle_dir)
    emb = root / BUNDLE_FILES["emb"]
    result = run_diarize(
        audio_path=root / BUNDLE_FILES["wav"],
        config=config,
        mode=mode,
        faces_path=root / BUNDLE_FILES["faces"],
        avc_path=root / BUNDLE_FILES["avc"],
        emb_path=emb if (config.embedding == "file" and emb.is_file()) else None,
        ref_path=root / BUNDLE_FILES["rttm"] if vad == "reference" else None,
        vad=vad,
    )
    out = root / f"hyp_{mode}.rttm"
    scores = root / f"scores_{mode}.csv"
    out.write_text(result.rttm)
    scores.write_text(result.score_dump)
    return f"{bundle_dir}: {len(result.hypothesis)} segments -> {out}"


def _cmd_diarize(args) -> int:
    if args.bundle:
        if args.audio or args.faces or args.avc or args.emb or args.ref:
            raise PipelineError("--bundle cannot be combined with explicit input paths")
        jobs = max(args.jobs, 1)
        if jobs == 1 or len(args.bundle) == 1:
            for bundle_dir in args.bundle:
                print(_bundle_job(bundle_dir, args.mode, args.vad, args.config))
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_bundle_job, d, args.mode, args.vad, args.config)
                    for d in args.bundle
                ]
                for future in futures:  # report in submission order
                    print(future.result())
        return 0
    if args.audio is None:
        raise PipelineError("provide --bundle DIR or --audio (with --faces/--avc as needed)")
    config = _load_pipeline_config(args.config)
    result = run_diarize(
        audio_path=args.audio,
        config=config,
        mode=args.mode,
        faces_path=args.faces,
        avc_path=args.avc,
        emb_path=args.emb,
        ref_path=args.ref,
        vad=args.vad,
        source_id=args.source_id,
    )
    out = Path(args.out) if args.out else Path(args.audio).with_suffix(f".{args.mode}.rttm")
    scores_out = Path(args.scores_out) if args.scores_out else out.with_suffix(".scores.csv")
    out.write_text(result.rttm)
    scores_out.write_text(result.score_dump)
    if result.enrollment_failures:
        print(f"enrollment failed for: {', '.join(result.enrollment_failures)}", file=sys.stderr)
    print(f"{len(result.hypothesis)} segments -> {out}")
    return 0


def _cmd_score(args) -> int:
    if not args.ref or len(args.ref) != len(args.hyp or []):
        raise PipelineError("score needs matching --ref/--hyp pairs")
    per_file = []
    for ref_path, hyp_path in zip(args.ref, args.hyp):
        for path in (ref_path, hyp_path):
            if not Path(path).is_file():
                raise PipelineError(f"RTTM file not found: {path}")
        try:
            reference = parse_rttm(Path(ref_path).read_text())
            hypothesis = parse_rttm(Path(hyp_path).read_text(), source_id=reference.source_id)
            per_file.append((reference.source_id, score_der(reference, hypothesis, args.collar)))
        except ValueError as exc:
            raise PipelineError(f"{ref_path} vs {hyp_path}: {exc}") from exc
    sys.stdout.write(format_report(per_file))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avdiar",
        description="Audio-visual speaker diarisation: simulate meetings, "
        "diarize recordings, and score hypotheses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a synthetic meeting bundle")
    sim.add_argument("--scenario", help="flat key=value scenario file (defaults used if omitted)")
    sim.add_argument("--out", required=True, help="output bundle directory")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--array", default="ami8", help="ami8 | bformat | 'x,y;x,y;...'")
    sim.set_defaults(func=_cmd_simulate)

    dia = sub.add_parser("diarize", help="produce a hypothesis RTTM and score dump")
    dia.add_argument("--bundle", nargs="*", default=[], help="bundle directories (fixed file names)")
    dia.add_argument("--audio", help="WAV path (explicit-file mode)")
    dia.add_argument("--faces", help="face-track CSV path")
    dia.add_argument("--avc", help="AVC score CSV path")
    dia.add_argument("--emb", help="embedding file path (selects the file provider)")
    dia.add_argument("--ref", help="reference RTTM (required for --vad reference)")
    dia.add_argument("--mode", default="sm+avc+ssl", choices=MODES)
    dia.add_argument("--vad", default="energy", choices=("energy", "reference"))
    dia.add_argument("--config", help="flat key=value pipeline configuration")
    dia.add_argument("--out", help="hypothesis RTTM path (explicit-file mode)")
    dia.add_argument("--scores-out", help="per-window score dump path")
    dia.add_argument("--source-id", help="override the hypothesis source id")
    dia.add_argument("--jobs", type=int, default=1, help="parallel workers over bundles")
    dia.set_defaults(func=_cmd_diarize)

    sco = sub.add_parser("score", help="evaluate hypothesis RTTMs against references")
    sco.add_argument("--ref", action="append", help="reference RTTM (repeatable)")
    sco.add_argument("--hyp", action="append", help="hypothesis RTTM (repeatable, paired)")
    sco.add_argument("--collar", type=float, default=0.25, help="scoring collar in seconds")
    sco.set_defaults(func=_cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, ConfigError, ValueError, LookupError, OSError) as exc:
        print(f"avdiar: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
