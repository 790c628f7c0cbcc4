"""Command-line entry points: corpus stats, tracking/intent/generation eval, serving."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapters import AdapterError, ingest_release
from .corpus import (
    CorpusError,
    compute_stats,
    dump_conversations,
    dump_recipes,
    load_corpus,
    state_change_histogram,
)
from .generation import BackendError, CompletionBackend, StubBackend, backend_from_config
from .intent import IntentCatalog, evaluate_intent_detection
from .metrics import diversity_report, evaluate_generation
from .service import SessionConfig, SessionStore, create_app
from .tracker import (
    EMBEDDING_THRESHOLDS,
    WORDMATCH_THRESHOLDS,
    EmbeddingScorer,
    ScorerUnavailableError,
    TrackerConfig,
    WordMatchScorer,
    track_and_evaluate,
)

logger = logging.getLogger(__name__)


def _load_backend(spec: str) -> CompletionBackend:
    """Accept "stub", "stub:TEMPLATE", or a path to a backend config JSON file."""
    if spec == "stub":
        return StubBackend()
    if spec.startswith("stub:"):
        return StubBackend(template=spec[len("stub:") :])
    path = Path(spec)
    if not path.is_file():
        raise SystemExit(f"backend config {spec!r} is not a file (or use 'stub')")
    return backend_from_config(json.loads(path.read_text("utf-8")))


def _build_tracker_config(args: argparse.Namespace) -> TrackerConfig:
    if args.scorer == "wordmatch":
        scorer = WordMatchScorer()
        defaults = WORDMATCH_THRESHOLDS
    elif args.scorer == "embedding":
        if not args.endpoint:
            raise SystemExit("--endpoint is required with --scorer embedding")
        scorer = EmbeddingScorer(endpoint=args.endpoint, auth_env=args.auth_env)
        defaults = EMBEDDING_THRESHOLDS
    else:
        raise SystemExit(f"unknown scorer {args.scorer!r}")
    alpha1 = defaults[0] if args.alpha1 is None else args.alpha1
    alpha2 = defaults[1] if args.alpha2 is None else args.alpha2
    return TrackerConfig(scorer=scorer, alpha1=alpha1, alpha2=alpha2)


def _cmd_stats(args: argparse.Namespace) -> int:
    recipes, conversations = load_corpus(args.recipes, args.conversations)
    stats = compute_stats(recipes, conversations)
    histogram = state_change_histogram(conversations)
    out: dict = {
        "n_dialogues": stats.n_dialogues,
        "utterances_per_dialogue": round(stats.utterances_per_dialogue, 2),
        "steps_per_recipe": round(stats.steps_per_recipe, 2),
        "tokens_per_recipe": round(stats.tokens_per_recipe, 2),
        "sentences_per_step": round(stats.sentences_per_step, 2),
        "tokens_per_step": round(stats.tokens_per_step, 2),
        "state_change_histogram": {str(k): v for k, v in sorted(histogram.bins.items())},
    }
    if args.table2:
        report = diversity_report(conversations, recipes)
        out["diversity"] = {
            "distinct1": round(report["distinct1"], 2),
            "distinct2": round(report["distinct2"], 2),
            "avg_length": round(report["avg_length"], 2),
        }
        out["overlap"] = {str(n): round(v, 2) for n, v in report["overlap"].items()}
        out["overlap_variants"] = {
            str(n): {k: round(v, 2) for k, v in variants.items()}
            for n, variants in report["overlap_variants"].items()
        }
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for key, value in out.items():
            print(f"{key}: {json.dumps(value) if isinstance(value, dict) else value}")
    return 0


def _cmd_track(args: argparse.Namespace) -> int:
    recipes, conversations = load_corpus(args.recipes, args.conversations)
    config = _build_tracker_config(args)
    accuracy, n_turns = track_and_evaluate(conversations, recipes, config)
    out = {
        "scorer": config.scorer.name,
        "alpha1": config.alpha1,
        "alpha2": config.alpha2,
        "accuracy": round(100.0 * accuracy, 2),
        "n_turns": n_turns,
    }
    print(json.dumps(out, indent=2) if args.json else f"accuracy: {out['accuracy']} ({n_turns} turns)")
    return 0


def _cmd_eval_intent(args: argparse.Namespace) -> int:
    recipes, conversations = load_corpus(args.recipes, args.conversations)
    del recipes
    backend = _load_backend(args.backend)
    catalog = IntentCatalog.from_file(args.catalog) if args.catalog else IntentCatalog.default()
    report = evaluate_intent_detection(
        conversations,
        backend,
        catalog,
        k_shot=args.k_shot,
        max_history_chars=args.max_history_chars,
    )
    out = {
        "micro_f1": round(100.0 * report.micro_f1, 2),
        "n_evaluated": report.n_evaluated,
        "n_parse_failures": report.n_parse_failures,
    }
    print(json.dumps(out, indent=2) if args.json else f"micro_f1: {out['micro_f1']} ({report.n_evaluated} turns, {report.n_parse_failures} parse failures)")
    return 0


def _read_lines(path: str) -> list[str]:
    return [line for line in Path(path).read_text("utf-8").splitlines() if line.strip()]


def _cmd_eval_gen(args: argparse.Namespace) -> int:
    hypotheses = _read_lines(args.hyp)
    references = _read_lines(args.ref)
    report = evaluate_generation(hypotheses, references, smooth=args.smooth)
    out = {
        "bleu4": round(report.bleu4, 2),
        "distinct1": round(report.distinct1, 2),
        "distinct2": round(report.distinct2, 2),
        "avg_length": round(report.avg_length, 2),
    }
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for key, value in out.items():
            print(f"{key}: {value}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    recipes, conversations = ingest_release(args.input)
    dump_recipes(recipes, args.recipes_out)
    dump_conversations(conversations, args.conversations_out)
    print(f"wrote {len(recipes)} recipes to {args.recipes_out}")
    print(f"wrote {len(conversations)} conversations to {args.conversations_out}")
    return 0


def _store_from_args(args: argparse.Namespace) -> SessionStore:
    recipes, _ = load_corpus(args.recipes, args.conversations) if args.conversations else (None, None)
    if recipes is None:
        from .corpus import load_recipes

        recipes = load_recipes(args.recipes)
    backend = _load_backend(args.backend)
    defaults = SessionConfig(
        tracker=_build_tracker_config(args),
        knowledge_mode=args.knowledge_mode,
        use_intent=args.use_intent,
        max_history_chars=args.max_history_chars,
    )
    return SessionStore(recipes=recipes, backend=backend, defaults=defaults)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store = _store_from_args(args)
    if args.restore:
        n = store.restore(args.restore)
        logger.info("restored %d sessions from %s", n, args.restore)
    app = create_app(store, static_dir=args.static)
    host, _, port = args.addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def _cmd_chat(args: argparse.Namespace) -> int:
    store = _store_from_args(args)
    try:
        session = store.create_session(recipe_id=args.recipe)
    except KeyError:
        known = ", ".join(r.id for r in store.recipes())
        raise SystemExit(f"unknown recipe {args.recipe!r}; known: {known}")
    print(f"chatting about {session.recipe.title!r} ({session.recipe.n_steps} steps); ctrl-d to quit")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            print()
            break
        if not text:
            continue
        try:
            response = store.post_message(session.id, text)
        except (BackendError, ScorerUnavailableError) as exc:
            print(f"[error] {exc}")
            continue
        intents = ", ".join(i["name"] for i in response.intents)
        suffix = f" [state={response.state}" + (f", intents={intents}]" if intents else "]")
        print(f"bot> {response.reply}{suffix}")
        if response.warning:
            print(f"[warning] {response.warning}")
    return 0


def _add_tracker_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scorer", choices=("wordmatch", "embedding"), default="wordmatch")
    parser.add_argument("--alpha1", type=float, default=None, help="advance threshold for the next step (scorer default if omitted)")
    parser.add_argument("--alpha2", type=float, default=None, help="jump threshold for any step (scorer default if omitted)")
    parser.add_argument("--endpoint", default=None, help="embedding endpoint URL (embedding scorer only)")
    parser.add_argument("--auth-env", default=None, help="env var holding the bearer token")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cookalong", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics and the state-change histogram")
    p.add_argument("--recipes", required=True)
    p.add_argument("--conversations", required=True)
    p.add_argument("--table2", action="store_true", help="include diversity and recipe-overlap numbers")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("track", help="instruction state tracking accuracy")
    p.add_argument("--recipes", required=True)
    p.add_argument("--conversations", required=True)
    _add_tracker_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval-intent", help="intent detection micro-F1")
    p.add_argument("--recipes", required=True)
    p.add_argument("--conversations", required=True)
    p.add_argument("--backend", required=True, help="backend config JSON path, or 'stub'/'stub:TEMPLATE'")
    p.add_argument("--catalog", default=None, help="intent catalog JSON (default: built-in)")
    p.add_argument("--k-shot", type=int, default=0)
    p.add_argument("--max-history-chars", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval_intent)

    p = sub.add_parser("eval-gen", help="BLEU-4 / distinct-n / length for generated replies")
    p.add_argument("--hyp", required=True, help="hypotheses, one per line")
    p.add_argument("--ref", required=True, help="references, one per line")
    p.add_argument("--smooth", action="store_true", help="add-1 smoothing on n>=2 precisions")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval_gen)

    p = sub.add_parser("ingest", help="normalize a released dialog dataset into native JSONL")
    p.add_argument("--input", required=True, help="release file or directory")
    p.add_argument("--recipes-out", required=True)
    p.add_argument("--conversations-out", required=True)
    p.set_defaults(func=_cmd_ingest)

    for name, fn in (("serve", _cmd_serve), ("chat", _cmd_chat)):
        p = sub.add_parser(name, help="run the HTTP service" if name == "serve" else "terminal chat loop")
        p.add_argument("--recipes", required=True)
        p.add_argument("--conversations", default=None, help="optional, only used to validate grounding")
        p.add_argument("--backend", default="stub", help="backend config JSON path, or 'stub'/'stub:TEMPLATE'")
        _add_tracker_args(p)
        p.add_argument("--knowledge-mode", choices=("full", "cutoff", "center"), default="full")
        p.add_argument("--use-intent", action="store_true")
        p.add_argument("--max-history-chars", type=int, default=None)
        if name == "serve":
            p.add_argument("--addr", default="127.0.0.1:8800", help="host:port to bind")
            p.add_argument("--static", default=None, help="directory of UI files to serve at /")
            p.add_argument("--restore", default=None, help="session snapshot to load at startup")
        else:
            p.add_argument("--recipe", required=True, help="recipe id to chat about")
        p.set_defaults(func=fn)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CorpusError, AdapterError, BackendError, ScorerUnavailableError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
