"""Command line interface.

Subcommands mirror the pipeline stages (ingest, classify, assess, decide,
eval) plus `run` for the whole pipeline and `serve` for the HTTP service.
Exit codes: 0 ok, 2 configuration problem, 3 stage failure, 4 integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import metrics
from .assess import assess_corpus, grade_error_ledger, read_assessments, write_assessments
from .backend import BackendConfig, ChatClient
from .classify import (classify_resume, heuristic_classify_resume, read_classified,
                       redact, write_classified)
from .config import RunConfig, load_config
from .decide import (DecisionCriteria, decide_auto, rank_candidates,
                     record_manual_decision, take_top_k, write_decision)
from .errors import (ConfigError, IntegrityError, RetriesExhausted, StageError,
                     TransportError, ValidationError)
from .ingest import (filter_corpus, ingest_documents, load_bundled_corpus,
                     load_corpus_dir, load_corpus_jsonl, read_records, write_records)
from .prompts import load_stage_template
from .runtime import run_pipeline

log = logging.getLogger(__name__)


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "backend", None):
        if args.backend == "mock":
            cfg.backend = BackendConfig(kind="mock")
        else:
            cfg.backend = BackendConfig(kind="http_chat",
                                        base_url=cfg.backend.base_url,
                                        model_name=cfg.backend.model_name,
                                        api_key_env=cfg.backend.api_key_env,
                                        max_in_flight=cfg.backend.max_in_flight,
                                        retry=cfg.backend.retry,
                                        cache_dir=cfg.backend.cache_dir)
    return cfg


def cmd_ingest(args) -> int:
    cfg = _load_cfg(args)
    if args.bundled:
        docs = load_bundled_corpus()
    elif args.corpus:
        docs = load_corpus_dir(args.corpus)
    elif args.jsonl:
        docs = load_corpus_jsonl(args.jsonl)
    else:
        raise ConfigError("give --corpus, --jsonl, or --bundled")
    records = ingest_documents(docs, args.estimator or cfg.token_estimator)
    kept, excluded = filter_corpus(records, args.token_limit or cfg.token_limit)
    write_records(kept, args.out)
    if args.excluded_out:
        write_records(excluded, args.excluded_out)
    print(f"ingested {len(records)} resumes: kept {len(kept)}, "
          f"excluded {len(excluded)} over the token limit")
    print(f"wrote {args.out}")
    return 0


def cmd_classify(args) -> int:
    cfg = _load_cfg(args)
    records = read_records(args.records)
    template = load_stage_template("classify", cfg.templates.get("classify"))
    out = []
    if args.heuristic:
        for r in records:
            out.extend(heuristic_classify_resume(r))
    else:
        client = ChatClient(cfg.backend_for("classify"))
        for r in records:
            out.extend(classify_resume(r, client, template))
    write_classified(out, args.out)
    print(f"classified {len(out)} sentences from {len(records)} resumes")
    print(f"wrote {args.out}")
    return 0


def cmd_assess(args) -> int:
    cfg = _load_cfg(args)
    sentences = read_classified(args.classified)
    by_resume = defaultdict(list)
    for s in sentences:
        by_resume[s.resume_id].append(s)
    redacted = []
    for rid in sorted(by_resume):
        r = redact(sorted(by_resume[rid], key=lambda s: s.segment_index))
        if r.fully_redacted:
            print(f"skipping {rid}: fully redacted", file=sys.stderr)
        else:
            redacted.append(r)
    client = ChatClient(cfg.backend_for("assess"))
    template = load_stage_template("assess", cfg.templates.get("assess"))
    assessments = assess_corpus(redacted, client, template,
                                word_limit=cfg.summary_word_limit,
                                max_new_tokens=cfg.max_new_tokens,
                                sampling=cfg.sampling,
                                truncate_mode=cfg.truncate_summaries)
    write_assessments(assessments, args.out)
    ledger = grade_error_ledger(assessments)
    print(f"assessed {len(assessments)} resumes, "
          f"{ledger['total_errors']} malformed grade(s)")
    print(f"wrote {args.out}")
    return 0


def cmd_decide(args) -> int:
    cfg = _load_cfg(args)
    assessments = read_assessments(args.assessments)
    ranked = rank_candidates(assessments)
    shortlist = take_top_k(ranked, args.top)
    criteria = DecisionCriteria(hires=args.hires,
                                role_description=args.criteria or "")
    if args.mode == "auto":
        client = ChatClient(cfg.backend_for("decide"))
        template = load_stage_template("decide", cfg.templates.get("decide"))
        record = decide_auto(shortlist, criteria, client, template,
                             max_new_tokens=cfg.max_new_tokens)
    else:
        if not args.select:
            raise ConfigError("manual mode needs --select, one id per flag")
        record = record_manual_decision(shortlist, criteria, args.select,
                                        args.rationale or "",
                                        user=args.decider)
    write_decision(record, args.out)
    print(f"decision ({record.mode}): {', '.join(record.selected_ids)}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred = read_assessments(args.pred)
    gold = {a.resume_id: a for a in read_assessments(args.gold)}
    common = [a for a in pred if a.resume_id in gold]
    if not common:
        raise ConfigError("no overlapping resume ids between pred and gold")
    pairs = [(a.summary, gold[a.resume_id].summary) for a in common]
    grades = [(a.grade.numeric, gold[a.resume_id].grade.numeric) for a in common]
    report = metrics.evaluate_pairs(pairs, grades, smoothing=args.smooth_bleu)
    ranks = metrics.rank_stats([g for g, _ in grades], [g for _, g in grades],
                               [a.resume_id for a in common], k=args.top)
    payload = {"summary_metrics": report.to_json(), "rank_stats": ranks.to_json()}
    Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    print(metrics.render_scaled(report))
    print(f"wrote {args.report}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    if args.out:
        cfg.store_root = args.out
    report = run_pipeline(cfg)
    print(f"run {report.run_id}: {report.status}")
    print(f"counts: {json.dumps(report.counts)}")
    print(f"shortlist: {len(report.shortlist)} candidate(s)")
    if report.decision:
        print(f"decision ({report.decision['mode']}): "
              f"{', '.join(report.decision['selected_ids'])}")
    print(f"content hash: {report.content_hash}")
    return 0


def cmd_serve(args) -> int:
    from .api import serve

    serve(store_root=args.store, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resumepipe",
                                     description="resume screening pipeline")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON file")
        p.add_argument("--backend", choices=["mock", "http"],
                       help="override the configured backend kind")

    p = sub.add_parser("ingest", help="normalize and segment a corpus")
    common(p)
    p.add_argument("--corpus", help="directory of .txt resumes")
    p.add_argument("--jsonl", help="line-delimited {id, text} corpus file")
    p.add_argument("--bundled", action="store_true", help="use the packaged fixture")
    p.add_argument("--out", required=True, help="output records file")
    p.add_argument("--excluded-out", help="where to write over-limit records")
    p.add_argument("--token-limit", type=int, help="token budget per resume")
    p.add_argument("--estimator", choices=["chars_div_4", "whitespace"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("classify", help="label each resume sentence")
    common(p)
    p.add_argument("--records", required=True, help="records file from ingest")
    p.add_argument("--out", required=True, help="output classified file")
    p.add_argument("--heuristic", action="store_true",
                   help="use the offline rule cascade, no backend calls")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("assess", help="grade and summarize redacted resumes")
    common(p)
    p.add_argument("--classified", required=True, help="classified sentences file")
    p.add_argument("--out", required=True, help="output assessments file")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("decide", help="rank, shortlist, and pick hires")
    common(p)
    p.add_argument("--assessments", required=True)
    p.add_argument("--top", type=int, default=10, help="shortlist size")
    p.add_argument("--hires", type=int, default=1, help="how many to hire")
    p.add_argument("--criteria", help="role description text")
    p.add_argument("--mode", choices=["auto", "manual"], default="auto")
    p.add_argument("--select", action="append",
                   help="manual mode: chosen id, repeatable")
    p.add_argument("--rationale", help="manual mode: decision rationale")
    p.add_argument("--decider", default="cli-user", help="manual mode: who decided")
    p.add_argument("--out", default="decision.json")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("eval", help="score predictions against gold assessments")
    p.add_argument("--pred", required=True, help="predicted assessments file")
    p.add_argument("--gold", required=True, help="gold assessments file")
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--top", type=int, default=10, help="k for top-k overlap")
    p.add_argument("--smooth-bleu", action="store_true",
                   help="add-one smoothing on BLEU n>=2")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline")
    common(p)
    p.add_argument("--out", help="run store root (default: runs/)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default="runs", help="run store root")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (StageError, TransportError, RetriesExhausted) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 3
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
