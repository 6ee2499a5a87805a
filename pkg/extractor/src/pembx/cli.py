"""Command-line front end.

    pembx extract --list jobs.csv --model muq --layers 9,10,11,12 --out-dir emb/
    pembx models

The job list is a CSV with header audio_path,segment_id,rendition;
relative audio paths are resolved against the list file's directory.
Typed failures print a JSON error envelope on stderr and exit 1;
anything unexpected exits 2. Per-job failures inside a batch do not
change the exit code: they land in the summary and failures.json.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .encoders import ENCODERS, get_spec
from .errors import ConfigError, ExtractorError
from .extract import ExtractionJob, extract_batch

_JOB_COLUMNS = ("audio_path", "segment_id", "rendition")


def parse_layers(text: str) -> list[int]:
    try:
        layers = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse layer list {text!r}; expected e.g. 9,10,11,12") from None
    if not layers:
        raise ConfigError("layer list is empty")
    return layers


def load_jobs(list_path: str | Path, args: argparse.Namespace) -> list[ExtractionJob]:
    path = Path(list_path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            missing = [col for col in _JOB_COLUMNS if col not in header]
            if missing:
                raise ConfigError(f"{path}: job list is missing columns: {', '.join(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read job list {path}: {exc}") from exc
    jobs = []
    for index, row in enumerate(rows, start=2):
        values = {col: (row.get(col) or "").strip() for col in _JOB_COLUMNS}
        if any(not value for value in values.values()):
            raise ConfigError(f"{path}:{index}: every row needs audio_path, segment_id, rendition")
        audio_path = Path(values["audio_path"])
        if not audio_path.is_absolute():
            audio_path = path.parent / audio_path
        jobs.append(
            ExtractionJob(
                audio_path=str(audio_path),
                segment_id=values["segment_id"],
                rendition=values["rendition"],
                model=args.model,
                layers=parse_layers(args.layers),
                max_segment_seconds=args.max_seconds,
                target_sample_rate=args.sample_rate,
            )
        )
    return jobs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pembx", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser("extract", help="extract embeddings for a list of audio files")
    run.add_argument("--list", required=True, dest="list_path", help="CSV of jobs")
    run.add_argument("--model", default="muq", help="encoder name (default: muq)")
    run.add_argument("--layers", default="9,10,11,12", help="comma-separated 1-based layers")
    run.add_argument("--out-dir", required=True, help="directory for PEMB files and manifest")
    run.add_argument("--backend", default="simulated", help="simulated or hf")
    run.add_argument("--max-seconds", type=float, default=10.0, help="window length bound")
    run.add_argument("--sample-rate", type=int, default=24000, help="encoder input rate")

    commands.add_parser("models", help="print the encoder registry")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        if args.command == "models":
            registry = {name: dataclasses.asdict(spec) for name, spec in sorted(ENCODERS.items())}
            print(json.dumps(registry, indent=2))
            return 0
        # options shared by every job fail the whole invocation, not per job
        spec = get_spec(args.model)
        out_of_range = [l for l in parse_layers(args.layers) if not 1 <= l <= spec.num_layers]
        if out_of_range:
            raise ConfigError(
                f"layers {out_of_range} out of range for {args.model} (1..{spec.num_layers})"
            )
        jobs = load_jobs(args.list_path, args)
        summary = extract_batch(jobs, args.out_dir, backend=args.backend)
        print(json.dumps(summary, indent=2))
        return 0
    except ExtractorError as exc:
        envelope = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(envelope), file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        envelope = {"error": "UnexpectedError", "message": f"{type(exc).__name__}: {exc}"}
        print(json.dumps(envelope), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
