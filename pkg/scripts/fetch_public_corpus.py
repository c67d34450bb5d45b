#!/usr/bin/env python3
"""Download the public seven-label resume sentence corpus and report counts.

Pulls every data file of the corpus repository into a local cache, joins
them into one TSV, and prints how many resumes and sentences came out of
ingestion. Needs network access to huggingface.co.
"""

import argparse
import json
import urllib.request
from pathlib import Path

from resumepipe.ingest import fetch_dataset, ingest_documents, load_labeled_corpus

DATASET_API = "https://huggingface.co/api/datasets/ganchengguang/resume_seven_class"
DATASET_RAW = ("https://huggingface.co/datasets/ganchengguang/"
               "resume_seven_class/resolve/main/{name}")


def fetch_bytes(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cache", default="dataset_cache",
                        help="download cache directory")
    parser.add_argument("--out", default="public_corpus.tsv",
                        help="combined TSV output path")
    args = parser.parse_args()

    listing = json.loads(fetch_bytes(DATASET_API))
    names = [s["rfilename"] for s in listing.get("siblings", [])
             if s["rfilename"].lower().endswith((".tsv", ".txt", ".csv"))
             and "readme" not in s["rfilename"].lower()]
    if not names:
        print("no data files listed for the corpus repository")
        return 1

    parts = []
    for name in names:
        path = fetch_dataset(DATASET_RAW.format(name=name), args.cache,
                             fetcher=fetch_bytes)
        print(f"fetched {name} -> {path}")
        parts.append(path.read_text(encoding="utf-8").strip())

    combined = Path(args.out)
    combined.write_text("\n\n".join(parts) + "\n", encoding="utf-8")
    docs, gold = load_labeled_corpus(combined)
    records = ingest_documents(docs)
    sentences = sum(len(r.segments) for r in records)
    print(f"wrote {combined}")
    print(f"resumes: {len(docs)}")
    print(f"sentences after segmentation: {sentences}")
    print(f"gold-labeled lines: {len(gold)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
