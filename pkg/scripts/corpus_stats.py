#!/usr/bin/env python3
"""Print corpus statistics: sizes, token counts, and the offline label mix.

Works on the bundled fixture, a directory of .txt resumes, or a JSONL
corpus. Labels come from the rule cascade, so no backend is needed.
"""

import argparse
from collections import Counter

from resumepipe.classify import heuristic_classify_resume
from resumepipe.ingest import (
    ingest_documents,
    load_bundled_corpus,
    load_corpus_dir,
    load_corpus_jsonl,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--corpus", help="directory of .txt resumes")
    source.add_argument("--jsonl", help="line-delimited {id, text} file")
    parser.add_argument("--estimator", default="chars_div_4",
                        choices=["chars_div_4", "whitespace"])
    args = parser.parse_args()

    if args.corpus:
        docs = load_corpus_dir(args.corpus)
    elif args.jsonl:
        docs = load_corpus_jsonl(args.jsonl)
    else:
        docs = load_bundled_corpus()

    records = ingest_documents(docs, args.estimator)
    labels = Counter()
    for record in records:
        for sentence in heuristic_classify_resume(record):
            labels[sentence.label] += 1

    total_sentences = sum(len(r.segments) for r in records)
    total_words = sum(r.word_count for r in records)
    total_tokens = sum(r.token_count for r in records)
    print(f"resumes: {len(records)}")
    print(f"sentences: {total_sentences}")
    print(f"words: {total_words}")
    print(f"tokens ({args.estimator}): {total_tokens}")
    print(f"tokens per resume: min {min(r.token_count for r in records)}, "
          f"max {max(r.token_count for r in records)}")
    print("label mix:")
    for label, count in labels.most_common():
        share = 100.0 * count / total_sentences
        print(f"  {label}: {count} ({share:.1f}%)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
