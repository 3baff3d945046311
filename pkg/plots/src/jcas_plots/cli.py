"""Batch entry point: `jcas-plots <spec.json> [<spec.json> ...]` renders
each figure spec in turn. Exit 0 on success, 2 on any spec/schema error."""

import argparse
import sys

from .figspec import SchemaError, load_spec
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="jcas-plots", description="Render jcas campaign CSVs to figures"
    )
    parser.add_argument("specs", nargs="+", help="figure-spec JSON files")
    args = parser.parse_args(argv)
    for spec_path in args.specs:
        try:
            spec = load_spec(spec_path)
            output = render(spec)
        except (OSError, ValueError, SchemaError) as exc:
            print(f"error: {spec_path}: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
