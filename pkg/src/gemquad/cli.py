"""Command-line entry point.

    gemquad generate --config F            one-time synthetic Q&A generation
    gemquad run      --config F [--resume] the round loop (or a one-shot mode)
    gemquad eval     --model M --dataset D --profile P --backend URL
    gemquad report   --run-dir R

Exit codes: 0 success, 2 config error, 3 backend error, 4 journal corruption.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .backend import RetryPolicy, make_backend
from .config import BackendConfig, load_config
from .errors import BackendError, ConfigError, GemquadError, JournalError, PlanError
from .orchestrator import PipelineRun
from .promptgen import PromptTemplate, generate_pairs, load_template, write_exclusions
from .qametrics import DEFAULT_PROFILE, evaluate, load_profile
from .report import emit_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_JOURNAL = 4


def _backend_from(config: BackendConfig):
    return make_backend(config.base_url, {
        "timeout": config.timeout,
        "retry": RetryPolicy(max_attempts=config.max_attempts),
        "auth_token": config.auth_token,
    })


def _load_exemplars(path: str, lang: str, cap: int) -> corpus.ExemplarPool:
    ds = corpus.load_dataset(path, lang=lang, name=f"exemplars-{lang}")
    records = [r for r in ds.records if r.lang == lang][:cap]
    return corpus.ExemplarPool(lang=lang, exemplars=tuple(records))


def _load_contexts(path: str, lang: str) -> list[tuple[str, str]]:
    """Context source: either a SQuAD-shaped file (unique paragraph contexts)
    or a jsonl of {id, context} rows."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{") and '"data"' in text[:2000]:
        ds = corpus.parse_squad(text, lang=lang, name=f"contexts-{lang}")
        out: list[tuple[str, str]] = []
        seen = set()
        for rec in ds.records:
            if rec.context not in seen:
                seen.add(rec.context)
                out.append((f"{lang}-ctx-{len(out)}", rec.context))
        return out
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append((str(obj.get("id", f"{lang}-ctx-{line_no}")), obj["context"]))
    return out


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    cfg.require_for_generate()
    template = load_template(cfg.template) if cfg.template else PromptTemplate()
    backend = _backend_from(cfg.generate_backend)
    for lang in cfg.languages:
        pool = _load_exemplars(cfg.exemplars[lang], lang, cfg.exemplar_cap)
        contexts = _load_contexts(cfg.contexts[lang], lang)
        result = generate_pairs(contexts, pool, backend, template,
                                master_seed=cfg.master_seed, concurrency=cfg.concurrency,
                                pairs_per_context=cfg.pairs_per_context)
        out_path = Path(cfg.synthetic[lang])
        out_path.parent.mkdir(parents=True, exist_ok=True)
        corpus.write_jsonl(out_path, result.records)
        write_exclusions(str(out_path) + ".exclusions.jsonl", result.failures)
        print(f"{lang}: {len(result.records)} pairs generated, "
              f"{len(result.failures)} failures -> {out_path}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.run_dir:
        cfg = dataclasses.replace(cfg, run_dir=str(Path(args.run_dir).resolve()))
    student = _backend_from(cfg.student_backend)
    run = PipelineRun(cfg=cfg, student=student, resume=args.resume)
    journal = run.run()
    emit_report(cfg.run_dir)
    best = journal.best_round
    print(f"run finished after {len(journal.rounds)} round(s); best round: {best}; "
          f"report: {journal.report_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    profile = DEFAULT_PROFILE if args.profile in (None, "default") else load_profile(args.profile)
    ds = corpus.load_dataset(args.dataset)
    if args.predictions:
        predictions = json.loads(Path(args.predictions).read_text(encoding="utf-8"))
        if not isinstance(predictions, dict):
            raise ConfigError("--predictions must hold a JSON object of id -> answer text")
    else:
        if not args.backend or not args.model:
            raise ConfigError("eval needs either --predictions or both --backend and --model")
        backend = make_backend(args.backend)
        items = [(r.id, r.context, r.question) for r in ds.records]
        predictions = {a.id: a.text for a in backend.predict(args.model, items)}
    languages = args.languages.split(",") if args.languages else None
    report = evaluate(predictions, ds, profile, languages=languages)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, ensure_ascii=False,
                                             indent=1) + "\n", encoding="utf-8")
    for lang in sorted(report.per_language):
        print(f"{lang}: {report.per_language[lang].as_percent()} (n={report.counts[lang]})")
    print(f"average: {report.macro.as_percent()}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = emit_report(args.run_dir)
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemquad", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate synthetic Q&A pairs (one-time step)")
    p_gen.add_argument("--config", required=True)
    p_gen.set_defaults(fn=cmd_generate)

    p_run = sub.add_parser("run", help="run the configured training mode")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--resume", action="store_true")
    p_run.add_argument("--run-dir", default=None, help="override the config's run_dir")
    p_run.set_defaults(fn=cmd_run)

    p_eval = sub.add_parser("eval", help="score a model (or a prediction file) on a dataset")
    p_eval.add_argument("--model", default=None)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--profile", default="default")
    p_eval.add_argument("--backend", default=None,
                        help="student backend base_url or mock:<script>")
    p_eval.add_argument("--predictions", default=None,
                        help="JSON file mapping qa id -> answer text (skips the backend)")
    p_eval.add_argument("--languages", default=None, help="comma-separated macro language list")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(fn=cmd_eval)

    p_rep = sub.add_parser("report", help="emit reports from a run directory")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (BackendError, PlanError) as exc:
        logger.error("backend error: %s", exc)
        return EXIT_BACKEND
    except JournalError as exc:
        logger.error("journal error: %s", exc)
        return EXIT_JOURNAL
    except GemquadError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
