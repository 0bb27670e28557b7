"""Command-line entry point.

    exporter --images DIR --schema FILE --out FILE [--model ID] [--batch N]
    exporter --images DIR --out FILE --baseline resnet50 [--no-weights]

Exit codes: 0 success, 1 internal error, 2 invalid input.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .export import (
    DEFAULT_MODEL,
    ExportError,
    ExportJob,
    export_baseline_features,
    export_embeddings,
)
from .schema_io import SchemaFileError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="exporter",
        description="Export image/query embeddings for the risk-prediction pipeline",
    )
    parser.add_argument("--images", required=True, help="directory of images")
    parser.add_argument("--schema", help="schema JSON (query texts to encode)")
    parser.add_argument("--out", required=True, help="output embeddings JSONL")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="contrastive checkpoint id or local path")
    parser.add_argument("--baseline", nargs="?", const="resnet50", default=None,
                        metavar="ARCH",
                        help="export ResNet baseline features instead (default arch: resnet50)")
    parser.add_argument("--no-weights", action="store_true",
                        help="baseline only: random initialization instead of "
                             "pretrained weights (for offline smoke runs)")
    parser.add_argument("--batch", type=int, default=16, help="batch size")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    job = ExportJob(
        image_dir=args.images,
        out_path=args.out,
        schema_path=args.schema,
        model_id=args.model,
        baseline=args.baseline,
        baseline_weights=None if args.no_weights else "DEFAULT",
        batch_size=args.batch,
        device=args.device,
    )
    try:
        if args.baseline:
            count = export_baseline_features(job)
        else:
            count = export_embeddings(job)
    except (ExportError, SchemaFileError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records to {args.out}"
          + (f" ({len(job.skipped)} skipped)" if job.skipped else ""))
    return 0
