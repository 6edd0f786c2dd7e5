#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Print the syntactic head of a noun phrase, one word on stdout.

Usage: spacy_head.py "<phrase>"

Used by `parser = command` with `parser_command = python3 tools/spacy_head.py`.
Exits non-zero when spaCy or its English model is not installed, which makes
the caller fall back to the built-in rule parser.
"""

import sys


def main() -> int:
    if len(sys.argv) != 2 or not sys.argv[1].strip():
        print("usage: spacy_head.py <phrase>", file=sys.stderr)
        return 64
    try:
        import spacy

        nlp = spacy.load("en_core_web_sm")
    except (ImportError, OSError) as exc:
        print(f"spacy unavailable: {exc}", file=sys.stderr)
        return 69
    doc = nlp(sys.argv[1])
    roots = [t for t in doc if t.head == t]
    if not roots:
        return 1
    print(roots[0].text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
