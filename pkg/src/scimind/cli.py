"""Command-line interface.

Exit codes: 0 when the pipeline completed cleanly (a candidate that fails to
execute is still a completed run), 1 for invalid inputs or configuration,
2 for provider, sandbox, or internal errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import uuid
from pathlib import Path

from . import knowledge as kb_mod
from .blueprint import SubprocessRunnerSandbox
from .errors import (
    AgentError,
    FixtureMissError,
    MalformedOutputError,
    SandboxUnavailableError,
    ScimindError,
)
from .gateway import make_provider
from .pipeline import (
    PipelineConfig,
    evaluate_batch,
    load_config,
    load_problem_bundle,
    solve_problem,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_INTERNAL = 2

_INTERNAL_ERRORS = (AgentError, FixtureMissError, MalformedOutputError, SandboxUnavailableError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="scimind", description="Retrieval-grounded modeling engine")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one problem bundle")
    solve.add_argument("--problem", required=True, type=Path, help="problem bundle directory")
    solve.add_argument("--kb", required=True, type=Path, help="knowledge base directory")
    solve.add_argument("--config", required=True, type=Path, help="configuration file")
    solve.add_argument("--out", required=True, type=Path, help="output directory")
    solve.add_argument("--backend", choices=["mock", "http"], help="override the provider backend")
    solve.add_argument("--fixtures", type=Path, help="mock fixture file override")

    eval_cmd = sub.add_parser("eval", help="solve a directory of problem bundles and report CE")
    eval_cmd.add_argument("--problems", required=True, type=Path, help="directory of problem bundles")
    eval_cmd.add_argument("--kb", required=True, type=Path)
    eval_cmd.add_argument("--config", required=True, type=Path)
    eval_cmd.add_argument("--out", required=True, type=Path)
    eval_cmd.add_argument("--backend", choices=["mock", "http"])
    eval_cmd.add_argument("--fixtures", type=Path)

    kb = sub.add_parser("kb", help="manage a knowledge base directory")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)

    kb_add = kb_sub.add_parser("add", help="embed and admit one entry")
    kb_add.add_argument("--kb", required=True, type=Path)
    kb_add.add_argument("--problem", required=True, type=Path, help="file holding the problem text")
    kb_add.add_argument("--code", required=True, type=Path, help="file holding the code snippet")
    kb_add.add_argument("--paradigm", required=True, type=Path, help="file holding the paradigm descriptor")
    kb_add.add_argument("--domain", default=kb_mod.DEFAULT_DOMAIN)
    kb_add.add_argument("--id", dest="entry_id", help="entry id (generated when omitted)")
    kb_add.add_argument("--config", type=Path, help="configuration file for the embedding provider")
    kb_add.add_argument("--backend", choices=["mock", "http"])
    kb_add.add_argument("--fixtures", type=Path)

    kb_query = kb_sub.add_parser("query", help="rank entries against a query")
    kb_query.add_argument("--kb", required=True, type=Path)
    kb_query.add_argument("--query", required=True)
    kb_query.add_argument("--domain", default="")
    kb_query.add_argument("-k", type=int, default=kb_mod.DEFAULT_TOP_K)
    kb_query.add_argument("--config", type=Path)
    kb_query.add_argument("--backend", choices=["mock", "http"])
    kb_query.add_argument("--fixtures", type=Path)

    kb_stats = kb_sub.add_parser("stats", help="print knowledge base statistics")
    kb_stats.add_argument("--kb", required=True, type=Path)

    return parser


def _config_overrides(args) -> dict:
    overrides: dict = {}
    if getattr(args, "backend", None):
        overrides["backend"] = args.backend
    if getattr(args, "fixtures", None):
        overrides["fixture_path"] = args.fixtures
    return overrides


def _load_config(args) -> PipelineConfig:
    return load_config(getattr(args, "config", None), _config_overrides(args))


def _cmd_solve(args) -> int:
    cfg = _load_config(args)
    kb = kb_mod.load_knowledge_base(args.kb)
    bundle = load_problem_bundle(args.problem)
    provider = make_provider(cfg.provider)
    sandbox = SubprocessRunnerSandbox(cfg.runner_command, cfg.stdout_tail_chars)

    report = solve_problem(bundle, kb, cfg, provider, sandbox, args.out)
    if report.admitted_to_kb:
        kb_mod.save_knowledge_base(kb, args.kb)
    print(f"problem {report.problem_id}: executed={report.executed} "
          f"admitted={report.admitted_to_kb} -> {args.out}")
    for stage_error in report.errors:
        print(f"  stage {stage_error.stage} failed ({stage_error.kind}): {stage_error.message}",
              file=sys.stderr)
    return EXIT_INTERNAL if report.errors else EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    kb = kb_mod.load_knowledge_base(args.kb)
    problem_dirs = sorted(p for p in Path(args.problems).iterdir() if (p / "problem.json").is_file())
    bundles = [load_problem_bundle(p) for p in problem_dirs]
    sandbox = SubprocessRunnerSandbox(cfg.runner_command, cfg.stdout_tail_chars)

    batch = evaluate_batch(bundles, kb, cfg, lambda: make_provider(cfg.provider), sandbox, args.out)
    kb_mod.save_knowledge_base(kb, args.kb)
    for report in batch.outcomes:
        print(f"problem {report.problem_id}: executed={report.executed} "
              f"admitted={report.admitted_to_kb}")
    print(f"CE = {batch.ce:.4f} over {len(batch.outcomes)} problems")
    had_errors = any(r.errors for r in batch.outcomes)
    return EXIT_INTERNAL if had_errors else EXIT_OK


def _load_or_init_kb(path: Path, dim: int, tau: float) -> kb_mod.KnowledgeBase:
    # an existing manifest stays authoritative for its own dim and tau
    if (path / "manifest.json").is_file():
        return kb_mod.load_knowledge_base(path)
    logger.info("initializing new knowledge base at %s (dim=%d, tau=%s)", path, dim, tau)
    return kb_mod.KnowledgeBase(dim=dim, tau=tau)


def _cmd_kb_add(args) -> int:
    cfg = _load_config(args)
    provider = make_provider(cfg.provider)
    problem_text = args.problem.read_text(encoding="utf-8")
    embedding = provider.embed(problem_text)
    kb = _load_or_init_kb(args.kb, embedding.dim, cfg.tau)
    entry = kb_mod.KnowledgeEntry(
        entry_id=args.entry_id or f"kb-{uuid.uuid4().hex[:12]}",
        embedding=embedding,
        code_snippet=args.code.read_text(encoding="utf-8"),
        paradigm_descriptor=args.paradigm.read_text(encoding="utf-8"),
        domain_tag=args.domain,
    )
    admitted = kb_mod.admit_entry(kb, entry)
    kb_mod.save_knowledge_base(kb, args.kb)
    print(f"{'admitted' if admitted else 'rejected (insufficient novelty)'}: {entry.entry_id}")
    return EXIT_OK


def _cmd_kb_query(args) -> int:
    cfg = _load_config(args)
    provider = make_provider(cfg.provider)
    kb = kb_mod.load_knowledge_base(args.kb)
    augmented = kb_mod.augment_query(args.query, args.domain)
    pairs = kb_mod.retrieve_top_k(kb, provider.embed(augmented.rendered()), args.k)
    for entry, score in pairs:
        print(f"{entry.entry_id}\t{score:.6f}\t{entry.domain_tag}")
    if not pairs:
        print("(no entries)", file=sys.stderr)
    return EXIT_OK


def _cmd_kb_stats(args) -> int:
    kb = kb_mod.load_knowledge_base(args.kb)
    domains: dict[str, int] = {}
    for entry in kb.entries:
        domains[entry.domain_tag] = domains.get(entry.domain_tag, 0) + 1
    print(f"entries: {len(kb)}")
    print(f"dim: {kb.dim}")
    print(f"tau: {kb.tau}")
    for domain, count in sorted(domains.items()):
        print(f"domain {domain}: {count}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT

    handlers = {
        "solve": _cmd_solve,
        "eval": _cmd_eval,
    }
    kb_handlers = {
        "add": _cmd_kb_add,
        "query": _cmd_kb_query,
        "stats": _cmd_kb_stats,
    }
    try:
        if args.command == "kb":
            return kb_handlers[args.kb_command](args)
        return handlers[args.command](args)
    except _INTERNAL_ERRORS as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ScimindError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except Exception as exc:  # defensive: internal bug, still a clean exit code
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
