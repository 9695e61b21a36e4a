"""export_model command: one-shot graph export plus optional fixture emission."""

from __future__ import annotations

import argparse
import sys

from .builder import WeightLoadError
from .export import ExportSpec, ShapeCheckError, emit_fixture, export_graph, metadata_path

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own exit code for bad invocations
EXIT_WEIGHTS = 3
EXIT_SHAPE = 4
EXIT_FIXTURE = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="export_model",
        description="Export the X-ray DenseNet-121 feature extractor as a "
                    "portable inference graph.")
    parser.add_argument(
        "--weights", default="all",
        help="pretrained weights identifier, or random[:seed] (default: all)")
    parser.add_argument("--out", required=True, help="output graph file")
    parser.add_argument(
        "--fixture", help="image to run through the exported graph afterwards")
    parser.add_argument(
        "--fixture-out", help="CSV path for the fixture image's feature map")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if bool(args.fixture) != bool(args.fixture_out):
        parser.error("--fixture and --fixture-out go together")
    spec = ExportSpec(
        weights_identifier=args.weights,
        output_graph_path=args.out,
        fixture_image_path=args.fixture or "",
        fixture_output_path=args.fixture_out or "",
    )
    try:
        export_graph(spec)
    except WeightLoadError as e:
        print(f"weights error: {e}", file=sys.stderr)
        return EXIT_WEIGHTS
    except ShapeCheckError as e:
        print(f"shape error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    print(f"exported {args.out} (metadata {metadata_path(args.out).name})")
    if args.fixture:
        try:
            emit_fixture(spec)
        except FileNotFoundError as e:
            print(f"fixture error: {e}", file=sys.stderr)
            return EXIT_FIXTURE
        print(f"fixture features written to {args.fixture_out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
