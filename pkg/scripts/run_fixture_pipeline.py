#!/usr/bin/env python3
"""Run the bundled 20-resume fixture through the full pipeline offline.

Uses the deterministic mock backend, so repeated runs reproduce the same
content hash. Handy as a smoke test and as a way to populate a run store
for the HTTP service and the review UI.
"""

import argparse
import json

from resumepipe.backend import BackendConfig
from resumepipe.config import CorpusSource, RunConfig
from resumepipe.decide import DecisionCriteria
from resumepipe.runtime import run_pipeline


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--store", default="runs", help="run store root")
    parser.add_argument("--top", type=int, default=10, help="shortlist size")
    parser.add_argument("--hires", type=int, default=1, help="hires to select")
    parser.add_argument("--role", default="", help="role description text")
    parser.add_argument("--repeat", type=int, default=1,
                        help="repeat the run to demonstrate reproducibility")
    args = parser.parse_args()

    cfg = RunConfig(corpus=CorpusSource(kind="bundled"),
                    backend=BackendConfig(kind="mock"),
                    top_k=args.top,
                    criteria=DecisionCriteria(hires=args.hires,
                                              role_description=args.role),
                    store_root=args.store)

    hashes = []
    for i in range(args.repeat):
        report = run_pipeline(cfg)
        hashes.append(report.content_hash)
        print(f"run {report.run_id}: {report.status}")
        print(f"  counts: {json.dumps(report.counts)}")
        print(f"  shortlist: "
              f"{', '.join(c['id'] for c in report.shortlist)}")
        if report.decision:
            print(f"  decision ({report.decision['mode']}): "
                  f"{', '.join(report.decision['selected_ids'])}")
        print(f"  content hash: {report.content_hash}")
    if args.repeat > 1:
        verdict = "identical" if len(set(hashes)) == 1 else "DIVERGENT"
        print(f"{args.repeat} runs, content hashes {verdict}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
