"""Command-line entry point: ingest, select, infer, eval and sweep."""
from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

from agents.triad_selector import select_triad
from config.constants import (
    DEFAULT_DELTA,
    DEFAULT_M,
    DEFAULT_MOCK_CONFIDENCE,
    DEFAULT_MOCK_RELIABILITY,
    DEFAULT_P,
    DEFAULT_PARALLEL,
    DEFAULT_SEED,
    DEFAULT_T,
    DEFAULT_TAU_DUP,
    DEFAULT_TIMEOUT_SECONDS,
    DEFAULT_TOKEN_ENV,
)
from models.reports import SweepSpec
from models.schemas import (
    ConfusionPair,
    HttpEngineConfig,
    MockConfig,
    PipelineConfig,
    Role,
    SelectionConfig,
    Thresholds,
)
from prompts import template_digests
from services.comparison_engine import ComparisonEngine
from services.mock_engine import MockEngine, MockFixture
from services.reference_bank import (
    BANK_MANIFEST_NAME,
    BANK_MATRIX_NAME,
    ReferenceBank,
    deduplicate,
    load_bank,
    save_bank,
)
from utils.caching import ResponseCache
from utils.dataset import load_dataset, load_results, write_results, write_traces
from utils.exceptions import DoubleTakeError, ValidationError
from utils.export import PERCENT_FORMAT, report_frame, report_to_dict, write_report, write_sweep
from utils.logger import configure_logging, console_log, get_logger
from utils.metrics import compute_metrics
from utils.validators import file_digest
from workflows.pair_pipeline import PairPipeline
from workflows.sweep import sweep_thresholds

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _int_pair(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI integers, got {text!r}") from None
    return lo, hi


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_bank_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bank", required=True, help="bank directory from `ingest`, or a manifest file")
    parser.add_argument("--bank-embeddings", help="embedding matrix for a manifest with row references")
    parser.add_argument("--tau-dup", type=float, default=DEFAULT_TAU_DUP)


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="confusion-pair JSON-Lines file")
    parser.add_argument("--query-embeddings", help="embedding matrix for dataset row references")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=float, default=DEFAULT_P, help="confidence floor")
    parser.add_argument("--t", type=float, default=DEFAULT_T, help="total-mass floor")
    parser.add_argument("--m", type=float, default=DEFAULT_M, help="margin floor")
    parser.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="ambiguity half-width")
    parser.add_argument("--backend", choices=("mock", "http"), default="mock")
    parser.add_argument("--cache", help="response cache (JSON-Lines)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--parallel", type=int, default=DEFAULT_PARALLEL)
    parser.add_argument("--retrieval", choices=("triad", "topk"), default="triad")
    parser.add_argument(
        "--drop-role",
        action="append",
        default=[],
        choices=[r.value for r in Role],
        help="skip this role's comparison; repeat for every role to run without references",
    )
    parser.add_argument("--no-text-adjudicator", action="store_true")
    parser.add_argument("--no-pair-adjudicator", action="store_true")
    mock = parser.add_argument_group("mock engine")
    mock.add_argument("--mock-reliability", type=float, default=DEFAULT_MOCK_RELIABILITY)
    mock.add_argument("--mock-confidence", type=_int_pair, default=DEFAULT_MOCK_CONFIDENCE, metavar="LO,HI")
    mock.add_argument("--mock-adjudicator", choices=("abstain", "fixture"), default="fixture")
    mock.add_argument("--mock-adjudicator-reliability", type=float, default=DEFAULT_MOCK_RELIABILITY)
    http = parser.add_argument_group("http engine")
    http.add_argument("--endpoint", default=HttpEngineConfig().endpoint)
    http.add_argument("--model", default=HttpEngineConfig().model)
    http.add_argument("--token-env", default=DEFAULT_TOKEN_ENV)
    http.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_SECONDS)
    http.add_argument("--image-root")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="doubletake", description="Contrastive triad selection and confidence-weighted voting")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="validate and deduplicate a reference bank")
    ingest.add_argument("--manifest", required=True)
    ingest.add_argument("--embeddings")
    ingest.add_argument("--tau-dup", type=float, default=DEFAULT_TAU_DUP)
    ingest.add_argument("--out", required=True, help="output directory")

    select = commands.add_parser("select", help="print triads for every dataset image")
    _add_bank_args(select)
    _add_dataset_args(select)
    select.add_argument("--retrieval", choices=("triad", "topk"), default="triad")

    infer = commands.add_parser("infer", help="run confusion pairs end to end")
    _add_bank_args(infer)
    _add_dataset_args(infer)
    _add_run_args(infer)
    infer.add_argument("--out", required=True, help="output directory")
    infer.add_argument("--report", choices=("json", "csv"), default="json")
    infer.add_argument("--progress", action="store_true")

    evaluate = commands.add_parser("eval", help="recompute metrics from a results file")
    evaluate.add_argument("--results", required=True)
    _add_dataset_args(evaluate)
    evaluate.add_argument("--report", choices=("json", "csv"), default="json")
    evaluate.add_argument("--out", help="report path (stdout when omitted)")

    sweep = commands.add_parser("sweep", help="replay a cached run over threshold values")
    _add_bank_args(sweep)
    _add_dataset_args(sweep)
    _add_run_args(sweep)
    sweep.add_argument("--param", required=True, choices=("p", "m", "t", "delta"))
    sweep.add_argument("--values", required=True, type=_float_list)
    sweep.add_argument("--out", required=True, help="sweep table path")
    sweep.add_argument("--report", choices=("json", "csv"), default="csv")
    return parser


def _load_bank(args: argparse.Namespace) -> ReferenceBank:
    path = Path(args.bank)
    if path.is_dir():
        bank = load_bank(path / BANK_MANIFEST_NAME, path / BANK_MATRIX_NAME)
    else:
        bank = load_bank(path, args.bank_embeddings)
    deduped, _ = deduplicate(bank, args.tau_dup)
    return deduped


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    try:
        return PipelineConfig(
            thresholds=Thresholds(p=args.p, t=args.t, m=args.m, delta=args.delta),
            selection=SelectionConfig(tau_dup=args.tau_dup),
            seed=args.seed,
            backend=args.backend,
            parallel=args.parallel,
            retrieval=args.retrieval,
            drop_roles=tuple(Role(r) for r in args.drop_role),
            use_text_adjudicator=not args.no_text_adjudicator,
            use_pair_adjudicator=not args.no_pair_adjudicator,
        )
    except ValueError as exc:
        raise ValidationError(f"invalid run configuration: {exc}") from exc


def _engine(args: argparse.Namespace, pairs: Sequence[ConfusionPair]) -> ComparisonEngine:
    if args.backend == "http":
        from services.http_engine import HttpEngine

        return HttpEngine(
            HttpEngineConfig(
                endpoint=args.endpoint,
                model=args.model,
                token_env=args.token_env,
                timeout=args.timeout,
                image_root=args.image_root,
            )
        )
    try:
        mock = MockConfig(
            reliability={role: args.mock_reliability for role in Role},
            confidence_range=args.mock_confidence,
            adjudicator=args.mock_adjudicator,
            adjudicator_reliability=args.mock_adjudicator_reliability,
        )
    except ValueError as exc:
        raise ValidationError(f"invalid mock configuration: {exc}") from exc
    return MockEngine(MockFixture.from_pairs(pairs, mock), seed=args.seed)


def _provenance(bank: ReferenceBank, dataset_path: str) -> Dict[str, Any]:
    return {
        "bank_digest": bank.provenance.digest,
        "dataset_digest": file_digest(dataset_path),
        "template_digests": template_digests(),
    }


def cmd_ingest(args: argparse.Namespace) -> int:
    bank = load_bank(args.manifest, args.embeddings)
    deduped, dropped = deduplicate(bank, args.tau_dup)
    paths = save_bank(deduped, args.out, dropped)
    info = {
        "source_digest": bank.provenance.digest,
        "entries": len(bank),
        "retained": len(deduped),
        "dropped": len(dropped),
        "dimension": bank.dimension,
        "tau_dup": args.tau_dup,
    }
    (Path(args.out) / "bank_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    console_log(f"Bank written to {paths['manifest'].parent}: {len(deduped)} of {len(bank)} entries retained")
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    bank = _load_bank(args)
    pairs = load_dataset(args.dataset, args.query_embeddings)
    selection = SelectionConfig(tau_dup=args.tau_dup)
    for pair in pairs:
        for index in (1, 2):
            triad = select_triad(bank, pair.query_context(index), selection, retrieval=args.retrieval)
            sys.stdout.write(json.dumps({"pair_id": pair.pair_id, **triad.to_record()}, sort_keys=True) + "\n")
    return EXIT_OK


async def _run_infer(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    bank = _load_bank(args)
    pairs = load_dataset(args.dataset, args.query_embeddings)
    out_dir = Path(args.out)
    cache = ResponseCache(args.cache or out_dir / "cache.jsonl")
    engine = _engine(args, pairs)
    try:
        results = await PairPipeline(bank, engine, config, cache).run_dataset(pairs, progress=args.progress)
    finally:
        await engine.close()
    report = compute_metrics(results, pairs, config=config.report_record(), provenance=_provenance(bank, args.dataset))
    write_results(out_dir / "results.jsonl", results)
    write_traces(out_dir / "trace.jsonl", results)
    report_path = write_report(report, out_dir / f"report.{args.report}", args.report)
    stats = cache.stats()
    console_log(
        f"{len(results)} pairs: set accuracy {report.set_accuracy:.2%}, abstention {report.abstention_rate:.2%}; "
        f"engine calls {engine.calls}, cache hits {stats['hits']}; report at {report_path}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pairs = load_dataset(args.dataset, args.query_embeddings)
    results = load_results(args.results)
    report = compute_metrics(results, pairs, provenance={"dataset_digest": file_digest(args.dataset)})
    if args.out:
        write_report(report, args.out, args.report)
    elif args.report == "json":
        sys.stdout.write(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    else:
        report_frame(report).to_csv(sys.stdout, index=False, float_format=PERCENT_FORMAT)
    return EXIT_OK


async def _run_sweep(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    if not args.cache:
        raise ValidationError("sweep needs --cache pointing at a completed run's response cache")
    if not Path(args.cache).exists():
        raise ValidationError("cache file does not exist", source=args.cache)
    try:
        spec = SweepSpec(parameter=args.param, values=args.values, fixed=config.thresholds)
    except ValueError as exc:
        raise ValidationError(f"invalid sweep: {exc}") from exc
    bank = _load_bank(args)
    pairs = load_dataset(args.dataset, args.query_embeddings)
    cache = ResponseCache(args.cache)
    adjudicator = _engine(args, pairs)
    try:
        rows = await sweep_thresholds(
            spec,
            bank=bank,
            pairs=pairs,
            cache=cache,
            base_config=config,
            adjudicator=adjudicator,
            provenance=_provenance(bank, args.dataset),
        )
    finally:
        await adjudicator.close()
    path = write_sweep(rows, args.out, args.report)
    console_log(f"Sweep over {args.param} ({len(rows)} values) written to {path}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "select":
            return cmd_select(args)
        if args.command == "infer":
            return asyncio.run(_run_infer(args))
        if args.command == "eval":
            return cmd_eval(args)
        return asyncio.run(_run_sweep(args))
    except ValidationError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (DoubleTakeError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
