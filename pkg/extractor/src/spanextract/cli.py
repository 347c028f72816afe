"""Command-line entry points: extract a corpus, validate a span file.

`extract` exits 0 and prints the manifest counts; `validate` prints every
violation and exits 1 if there are any. File and format errors exit 1 with
an `error:` line; argparse handles unknown flags with usage text and exit 2.
"""

import argparse
import sys

from spanextract.extract import extract_corpus, manifest_path
from spanextract.spanfile import validate_path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spanextract", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("extract", help="chunk a corpus into span-annotation JSONL")
    sp.add_argument("--in", dest="corpus", required=True,
                    help="corpus JSONL ({sample_id, prompt, response} per line)")
    sp.add_argument("--out", dest="out", required=True,
                    help="span JSONL to write (manifest goes beside it)")

    sp = sub.add_parser("validate", help="check a span JSONL file against the contract")
    sp.add_argument("spans", help="span JSONL path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "extract":
        manifest = extract_corpus(args.corpus, args.out)
        print(f"{manifest.samples} sample(s): {manifest.words} words, "
              f"{manifest.nps} NP / {manifest.vps} VP chunks, "
              f"{manifest.skipped} skipped ({manifest.chunker})")
        print(f"spans written to {args.out}")
        print(f"manifest written to {manifest_path(args.out)}")
        return 0

    if args.command == "validate":
        report = validate_path(args.spans)
        for err in report.errors:
            print(err, file=sys.stderr)
        print(report.summary())
        return 0 if report.ok else 1

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
