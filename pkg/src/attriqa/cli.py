"""Command-line entry point.

Subcommands: index (build/serialize the BM25 index), run (execute a pipeline
over a question set), eval (score a run), correlate (correlation and line of
best fit between metrics), serve (start the rating service).

Backend endpoints come from ATTRIQA_BACKEND_URL_{GENERATE,ENTAIL,EMBED,RERANK}
or the matching flags; without a URL the deterministic mocks are used. Exit
codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import backends as be
from . import metrics, pipelines, rating_service, refdata
from .corpus import CorpusError, load_corpus
from .sparse_index import SparseIndexError, build_index, load_index, save_index

logger = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "seed": int,
    "jobs": int,
    "k1": float,
    "b": float,
    "k": int,
    "p": int,
    "resamples": int,
    "port": int,
    "target": int,
    "exemplar_count": int,
    "embed_dim": int,
}

_OPERATIONAL_ERRORS = (
    CorpusError,
    SparseIndexError,
    pipelines.PipelineError,
    metrics.MetricError,
    rating_service.RatingServiceError,
    be.BackendError,
    OSError,
    KeyError,
    json.JSONDecodeError,
)


def _load_config_file(path: str) -> dict:
    """Simple key=value config; flags override these values."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_KEYS[key](value)
    return values


def _env_url(name: str) -> str | None:
    return os.environ.get(f"ATTRIQA_BACKEND_URL_{name}")


def _build_backends(args) -> pipelines.Backends:
    generate_url = getattr(args, "generate_url", None) or _env_url("GENERATE")
    entail_url = getattr(args, "entail_url", None) or _env_url("ENTAIL")
    embed_url = getattr(args, "embed_url", None) or _env_url("EMBED")
    rerank_url = getattr(args, "rerank_url", None) or _env_url("RERANK")

    if generate_url:
        generator = be.HttpGenerator(generate_url)
    else:
        answers = {}
        if getattr(args, "mock_answers", None):
            with open(args.mock_answers, encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    if "url" in obj and obj["url"] is not None:
                        answers[obj["question"]] = (obj["answer"], obj["url"])
                    else:
                        answers[obj["question"]] = obj["answer"]
        generator = be.MockGenerator(answers)
    entailment = be.HttpEntailmentScorer(entail_url) if entail_url else be.MockEntailmentScorer()
    embedder = (
        be.HttpEmbedder(embed_url)
        if embed_url
        else be.MockEmbedder(dim=getattr(args, "embed_dim", 64), seed=getattr(args, "seed", 0))
    )
    reranker = be.HttpReranker(rerank_url) if rerank_url else be.MockReranker()
    return pipelines.Backends(
        generator=generator, entailment=entailment, embedder=embedder, reranker=reranker
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_index(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_index(corpus, k1=args.k1, b=args.b)
    save_index(index, args.out)
    print(f"indexed {index.doc_count} passages, {len(index.postings)} terms -> {args.out}")
    return 0


_ATTRIBUTION_FLAG = {
    "top1": pipelines.ATTR_TOP1,
    "constrained": pipelines.ATTR_CONSTRAINED,
    "autoais": pipelines.ATTR_AUTOAIS,
}
_EXEMPLAR_FLAG = {
    "random": pipelines.EXEMPLARS_RANDOM,
    "bm25": pipelines.EXEMPLARS_BM25,
}


def cmd_run(args) -> int:
    config = pipelines.PipelineConfig(
        architecture=args.arch,
        retrieval=args.retrieval,
        k=args.k,
        passages_to_generator=args.p,
        attribution=_ATTRIBUTION_FLAG[args.attribution],
        exemplar_policy=_EXEMPLAR_FLAG[args.exemplars],
        exemplar_count=args.exemplar_count,
        seed=args.seed,
        rerank=args.rerank,
        train_passages=args.t,
    )
    corpus = load_corpus(args.corpus)
    sparse = load_index(args.index) if args.index else build_index(corpus)
    questions = pipelines.load_questions(args.questions)
    train_set = pipelines.load_qa_pairs(args.train) if args.train else []
    run = pipelines.execute_run(
        args.name,
        config,
        questions,
        corpus,
        _build_backends(args),
        sparse=sparse,
        train_set=train_set,
        jobs=args.jobs,
    )
    pipelines.write_run(run, args.out)
    failures = [qid for qid, out in run.outputs.items() if out.failure is not None]
    for qid in sorted(failures):
        logger.warning("question %s failed: %s", qid, run.outputs[qid].failure)
    print(
        f"run {run.name} [{config.config_hash()}]: {len(run.outputs)} outputs,"
        f" {len(failures)} failures -> {args.out}"
    )
    if failures and len(failures) == len(run.outputs):
        print("error: every question failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    run = pipelines.read_run(args.run)
    references = metrics.load_references(args.refs)
    corpus = load_corpus(args.corpus) if args.corpus else None
    scorer = None
    if args.entail_url or _env_url("ENTAIL"):
        scorer = be.HttpEntailmentScorer(args.entail_url or _env_url("ENTAIL"))
    elif args.mock_entail:
        scorer = be.MockEntailmentScorer()
    if scorer is not None and corpus is None:
        print("error: automatic attribution scoring requires --corpus", file=sys.stderr)
        return 1
    ratings = metrics.load_ratings(args.ratings) if args.ratings else None
    report = metrics.compute_report(
        run,
        references,
        corpus=corpus,
        scorer=scorer,
        ratings=ratings,
        resamples=args.resamples,
        seed=args.seed,
    )
    print(metrics.format_report_table([report]))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        print(f"report -> {args.out}")
    return 0


def _report_metric(report: metrics.MetricReport, name: str) -> float | None:
    return {"em": report.em_pct, "autoais": report.autoais_pct, "ais": report.ais_pct}[name]


def cmd_correlate(args) -> int:
    labels: list[str] = []
    if args.fixture:
        fixture = refdata.correlation_fixture(args.fixture)
        xs, ys = refdata.fixture_series(fixture, include_fit_extras=not args.marks_only)
        points = fixture["figure_points"] + ([] if args.marks_only else fixture["fit_extra_points"])
        labels = [p["system"] for p in points]
        x_name, y_name = fixture["x_label"], fixture["y_label"]
        reported = (fixture["reported_pearson"], fixture["reported_fit"])
    elif args.level == "instance":
        if len(args.reports) != 1:
            print("error: instance-level correlation takes exactly one report", file=sys.stderr)
            return 1
        report = metrics.MetricReport.from_dict(json.loads(Path(args.reports[0]).read_text()))
        pairs = [
            (float(m.ais), float(m.autoais_score))
            for m in report.per_question.values()
            if m.ais is not None and m.autoais_score is not None
        ]
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        x_name, y_name = "ais", "autoais_score"
        reported = None
    else:
        reports = [
            metrics.MetricReport.from_dict(json.loads(Path(path).read_text()))
            for path in args.reports
        ]
        xs, ys = [], []
        for report in reports:
            x = _report_metric(report, args.x)
            y = _report_metric(report, args.y)
            if x is None or y is None:
                print(f"error: report {report.system} lacks {args.x} or {args.y}", file=sys.stderr)
                return 1
            xs.append(x)
            ys.append(y)
            labels.append(report.system)
        x_name, y_name = args.x, args.y
        reported = None

    if len(xs) < 2:
        print("error: need at least 2 data points", file=sys.stderr)
        return 1
    try:
        r = metrics.pearson(xs, ys)
        slope, intercept = metrics.linear_fit(xs, ys)
    except metrics.MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"pearson({x_name}, {y_name}) = {r:.4f} over {len(xs)} points")
    print(f"fit: {y_name} = {slope:.4f} * {x_name} + {intercept:.4f}")
    if reported:
        print(f"published: r = {reported[0]}, fit = ({reported[1]['slope']}, {reported[1]['intercept']})")
    if args.csv_out:
        rows = [f"{x_name},{y_name},label"]
        rows += [
            f"{x},{y},{label}"
            for x, y, label in zip(xs, ys, labels if labels else [""] * len(xs))
        ]
        Path(args.csv_out).write_text("\n".join(rows) + "\n", encoding="utf-8")
        print(f"points -> {args.csv_out}")
    return 0


def cmd_serve(args) -> int:
    corpus = load_corpus(args.corpus)
    run = pipelines.read_run(args.run)
    tasks, excluded = rating_service.load_tasks(run, corpus)
    for qid in excluded:
        logger.warning("excluded flagged failure %s from rating", qid)
    log_path = args.log or f"{args.run}.ratings.jsonl"
    store = rating_service.RatingStore(tasks, log_path, target_per_item=args.target)
    try:
        server = rating_service.create_server(
            store, args.port, host=args.host, static_dir=args.static
        )
    except OSError as exc:
        store.close()
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1

    def _shutdown(signum, frame):
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    print(f"rating service on http://{args.host}:{args.port} ({len(tasks)} items, log {log_path})")
    try:
        server.serve_forever()
    finally:
        server.server_close()
        store.close()
    print("rating log flushed")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser(config_defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attriqa", description=__doc__)
    parser.add_argument("--config", help="key=value config file; flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and serialize the BM25 index")
    p_index.add_argument("--corpus", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--k1", type=float, default=0.9)
    p_index.add_argument("--b", type=float, default=0.4)
    p_index.set_defaults(func=cmd_index)

    p_run = sub.add_parser("run", help="execute a pipeline over a question set")
    p_run.add_argument("--arch", required=True, choices=sorted(pipelines.ARCHITECTURES))
    p_run.add_argument("--corpus", required=True)
    p_run.add_argument("--questions", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--name", default=None)
    p_run.add_argument("--index", help="prebuilt index file (default: build in memory)")
    p_run.add_argument("--retrieval", choices=sorted(pipelines.RETRIEVAL_MODES), default="bm25")
    p_run.add_argument("--k", type=int, default=50)
    p_run.add_argument("--p", type=int, default=1, help="passages fed to the generator (rtr)")
    p_run.add_argument("--attribution", choices=sorted(_ATTRIBUTION_FLAG), default="top1")
    p_run.add_argument("--exemplars", choices=sorted(_EXEMPLAR_FLAG), default="random")
    p_run.add_argument("--exemplar-count", type=int, default=64)
    p_run.add_argument("--train", help="training question/answer pairs (posthoc)")
    p_run.add_argument("--rerank", action="store_true")
    p_run.add_argument("--t", type=int, default=None, help="recorded training-passage count")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--mock-answers", help="JSONL {question, answer, url?} for the mock generator")
    p_run.add_argument("--embed-dim", type=int, default=64)
    p_run.add_argument("--generate-url")
    p_run.add_argument("--entail-url")
    p_run.add_argument("--embed-url")
    p_run.add_argument("--rerank-url")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a run file")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--refs", required=True)
    p_eval.add_argument("--ratings")
    p_eval.add_argument("--corpus")
    p_eval.add_argument("--entail-url")
    p_eval.add_argument("--mock-entail", action="store_true")
    p_eval.add_argument("--out")
    p_eval.add_argument("--resamples", type=int, default=metrics.DEFAULT_RESAMPLES)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_corr = sub.add_parser("correlate", help="correlation between metric series")
    p_corr.add_argument("--fixture", choices=refdata.CORRELATION_FIXTURES)
    p_corr.add_argument("--marks-only", action="store_true",
                        help="fixture: use only the plotted marks, not the full fit set")
    p_corr.add_argument("--reports", nargs="*", default=[])
    p_corr.add_argument("--x", choices=["em", "autoais", "ais"], default="ais")
    p_corr.add_argument("--y", choices=["em", "autoais", "ais"], default="em")
    p_corr.add_argument("--level", choices=["system", "instance"], default="system")
    p_corr.add_argument("--csv-out")
    p_corr.set_defaults(func=cmd_correlate)

    p_serve = sub.add_parser("serve", help="start the rating service")
    p_serve.add_argument("--run", required=True)
    p_serve.add_argument("--corpus", required=True)
    p_serve.add_argument("--port", type=int, default=8350)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--log", help="append-only rating log (default: <run>.ratings.jsonl)")
    p_serve.add_argument("--static", help="directory of rating UI assets to serve")
    p_serve.add_argument("--target", type=int, default=rating_service.DEFAULT_TARGET_PER_ITEM)
    p_serve.set_defaults(func=cmd_serve)

    if config_defaults:
        # subparsers parse into their own namespace, so config-derived
        # defaults must be installed on each of them to take effect
        for p in (p_index, p_run, p_eval, p_corr, p_serve):
            p.set_defaults(**config_defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config_defaults = None
    if known.config:
        try:
            config_defaults = _load_config_file(known.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    # config values become parser defaults, so explicit flags still win
    parser = build_parser(config_defaults)
    args = parser.parse_args(argv)
    if args.command == "run" and args.name is None:
        args.name = f"{args.arch}-{args.retrieval}"
    try:
        return args.func(args)
    except _OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
