"""Command line: encode inputs and write an embedding bundle.

Prints one JSON summary object to stdout; warnings go to stderr. Exit
codes: 0 success, 2 input or tag problems, 3 encoder problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .binfmt import read_embeddings
from .errors import EXIT_INPUT, EXIT_OK, ExporterError, exit_code_for
from .export import export_centroids, export_embeddings, write_centroids
from .jobs import ExportJob, split_tag

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedexport",
        description="Run a local encoder over images or prompt texts and "
        "emit embedding files, manifests, patch grids, and centroid stores.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--images", nargs="+", metavar="PATH", help="image files")
    source.add_argument("--texts", nargs="+", metavar="TEXT", help="prompt texts")
    parser.add_argument(
        "--tags",
        nargs="+",
        required=True,
        metavar="TAG",
        help="one per input: 'defect_type' or 'category/defect_type'",
    )
    parser.add_argument(
        "--encoder",
        default="hash768",
        help="hash<dim> or clip:<dir>[@<layer>], default hash768",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--patch-grid",
        action="store_true",
        help="also write per-image patch-token files",
    )
    parser.add_argument(
        "--centroids",
        type=int,
        metavar="C",
        help="also write C centroids per defect-type tag",
    )
    parser.add_argument("--seed", type=int, default=0, help="centroid k-means seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            kind="images" if args.images is not None else "texts",
            inputs=tuple(args.images if args.images is not None else args.texts),
            tags=tuple(args.tags),
            encoder_id=args.encoder,
            out_dir=args.out,
            patch_grid=args.patch_grid,
        )
        result = export_embeddings(job)
        files = list(result.files)
        if args.centroids is not None:
            # group by the written file, not the in-memory rows: centroids
            # must reflect exactly what a consumer of the bundle will read
            keys = read_embeddings(Path(result.out_dir) / "embeddings.adsk")
            defect_tags = [split_tag(tag)[1] for tag in job.tags]
            centroids, labels = export_centroids(
                keys, defect_tags, c=args.centroids, seed=args.seed
            )
            write_centroids(centroids, labels, Path(result.out_dir) / "centroids.adsk")
            files.extend(["centroids.adsk", "centroids.adsk.labels.json"])
        payload = {
            "count": result.count,
            "dim": result.dim,
            "encoder": args.encoder,
            "files": sorted(files),
            "out": result.out_dir,
        }
    except ExporterError as err:
        print(f"error: {err}", file=sys.stderr)
        return exit_code_for(err)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
