"""Command-line interface.

Exit codes: 0 success, 1 usage error (unknown subcommand or flag, unknown
config key, bad value), 2 runtime error (missing files, corrupt inputs,
training failures).
"""

from __future__ import annotations

import argparse
import sys

from .config import AppConfig, config_echo, load_config
from .corpus import TokenizerConfig, build_vocabulary, load_corpus, read_corpus, write_corpus
from .errors import TemporaError, UsageError
from .harness import (
    evaluate_checkpoint,
    generate_synthetic,
    run_pipeline,
    spec_from_json,
    sweep_dim,
    sweep_seqlen,
    write_csv,
    write_synthetic_jsonl,
    write_truth,
)
from .metrics import write_report
from .model import load_checkpoint, forecast, save_checkpoint


class _Parser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting with code 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="tempora", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ingest",
                       help="tokenize a JSONL corpus and build its vocabulary")
    p.add_argument("corpus", help="line-delimited JSON corpus file")
    p.add_argument("--out", required=True, help="serialized corpus output path")
    p.add_argument("--config", default=None, help="flat key = value config file")

    p = sub.add_parser("train", help="fit the model on an ingested corpus")
    p.add_argument("--corpus", required=True, help="serialized corpus from ingest")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--seed", type=int, default=None, help="override the config training seed")

    p = sub.add_parser("evaluate",
                       help="compute the metrics report for a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="JSON report output path")
    p.add_argument("--csv", default=None, help="optional per-topic coherence CSV")

    p = sub.add_parser("forecast",
                       help="roll the transition forward from the last slice state")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="JSONL corpus output path")
    p.add_argument("--truth", required=True, help="ground-truth JSON output path")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")

    p = sub.add_parser("sweep-dim",
                       help="metrics as a function of embedding dimension")
    p.add_argument("--corpus", default=None, help="serialized corpus (or use --spec)")
    p.add_argument("--spec", default=None, help="synthetic spec JSON (or use --corpus)")
    p.add_argument("--config", default=None)
    p.add_argument("--values", required=True, help="comma-separated dimensions, e.g. 32,64,128")
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("sweep-seqlen",
                       help="metrics as a function of the slice count")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--values", required=True, help="comma-separated slice counts, e.g. 10,20,40")
    p.add_argument("--out", required=True, help="CSV output path")

    return parser


def _parse_values(raw: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {raw!r}") from None
    if not values:
        raise UsageError("--values must name at least one value")
    return values


def _load_cfg(path: str | None) -> AppConfig:
    return load_config(path) if path else AppConfig()


def _cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    tok = TokenizerConfig.from_files(cfg.min_token_len, cfg.stopword_file)
    corpus, report = load_corpus(args.corpus, tok)
    corpus = build_vocabulary(corpus, cfg.min_df, cfg.max_df_frac, cfg.max_vocab)
    write_corpus(corpus, args.out)
    print(
        f"ingested {report.documents_loaded} documents "
        f"({report.dropped_empty} dropped empty of {report.records_total} records), "
        f"vocabulary {len(corpus.vocabulary)} terms -> {args.out}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    corpus = read_corpus(args.corpus)
    pipe = run_pipeline(corpus, cfg)
    save_checkpoint(args.out, pipe.result.params, config_echo(cfg),
                    pipe.result.assignments.theta_slice)
    first, last = pipe.result.history[0], pipe.result.history[-1]
    print(
        f"trained k={cfg.k} for {cfg.epochs} epochs: "
        f"loss {first.total:.4f} -> {last.total:.4f} -> {args.out}"
    )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    corpus = read_corpus(args.corpus)
    params, echo, _ = load_checkpoint(args.ckpt)
    report, _, _ = evaluate_checkpoint(corpus, params, echo)
    write_report(report, args.out, args.csv)
    print(
        f"perplexity={report.perplexity:.4f} diversity={report.diversity:.4f} "
        f"coherence={report.coherence:.4f} stability={report.stability:.4f} -> {args.out}"
    )
    return 0


def _cmd_forecast(args: argparse.Namespace) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    params, _, theta_slice = load_checkpoint(args.ckpt)
    if theta_slice.shape[0] == 0:
        raise TemporaError(f"checkpoint {args.ckpt} carries no slice trajectory")
    states = forecast(theta_slice[-1], params.A, args.steps)
    header = ["step"] + [f"topic_{k}" for k in range(states.shape[1])]
    rows = [tuple([i + 1] + [float(x) for x in row]) for i, row in enumerate(states)]
    write_csv(args.out, header, rows)
    print(f"forecast {args.steps} steps of {states.shape[1]} topics -> {args.out}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = spec_from_json(args.spec)
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    corpus, truth = generate_synthetic(spec)
    write_synthetic_jsonl(corpus, args.out)
    write_truth(truth, args.truth)
    print(
        f"generated {len(corpus)} documents over {spec.num_slices} slices "
        f"-> {args.out}, truth -> {args.truth}"
    )
    return 0


def _cmd_sweep_dim(args: argparse.Namespace) -> int:
    if (args.corpus is None) == (args.spec is None):
        raise UsageError("sweep-dim needs exactly one of --corpus or --spec")
    cfg = _load_cfg(args.config)
    if args.corpus is not None:
        corpus = read_corpus(args.corpus)
    else:
        corpus, _ = generate_synthetic(spec_from_json(args.spec))
    dims = _parse_values(args.values)
    rows = sweep_dim(corpus, cfg, dims)
    write_csv(args.out, ["embed_dim", "coherence", "diversity"], rows)
    print(f"swept embed_dim over {dims} -> {args.out}")
    return 0


def _cmd_sweep_seqlen(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    spec = spec_from_json(args.spec)
    lengths = _parse_values(args.values)
    rows = sweep_seqlen(spec, cfg, lengths)
    write_csv(args.out, ["num_slices", "perplexity", "diversity", "coherence", "stability"], rows)
    print(f"swept num_slices over {lengths} -> {args.out}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "forecast": _cmd_forecast,
    "synth": _cmd_synth,
    "sweep-dim": _cmd_sweep_dim,
    "sweep-seqlen": _cmd_sweep_seqlen,
}


def cli_dispatch(argv: list[str]) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("tempora: a COMMAND is required", file=sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TemporaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
