"""Command-line entry point: ``evacs-audit <subcommand> ...``.

Exit codes: 0 ok, 1 usage or I/O error, 2 seed not found, 3 ambiguous seed,
4 TLS matrix does not conform.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import bias as bias_mod
from .config import (
    ConfigError,
    RunConfig,
    build_recovery,
    build_scenarios,
    parse_int,
    parse_range,
    read_sections,
)
from .election import (
    DatasetError,
    PollingPlaceScenario,
    ScenarioError,
    export_published,
    parse_published,
    simulate,
)
from .prng import TWO32, MtState
from .recovery import (
    AmbiguousSeed,
    RecoveryConfig,
    SeedNotFound,
    recover_seed,
    recover_segments,
    reorder_votes,
    result_from_report,
    result_report,
    scan_candidates,
)

log = logging.getLogger("evacs_audit")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_FOUND = 2
EXIT_AMBIGUOUS = 3
EXIT_NONCONFORMING = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _global_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI file with per-module sections")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--meta-seed", type=parse_int, help="seed for everything except the voting server PRNG")
    common.add_argument("--format", choices=("json", "text"), help="report format (default json)")
    common.add_argument("-v", "--verbose", action="count", help="more logging")
    return common


# ---------------------------------------------------------------------------
# helpers


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _write_out(cfg: RunConfig, name: str, text: str) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / name
    path.write_text(text)
    return path


def _recovery_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "miss_threshold": getattr(args, "miss_threshold", None),
        "seed_stride": getattr(args, "stride", None),
        "prefilter_depth": getattr(args, "depth", None),
        "prefilter_top_k": getattr(args, "top_k", None),
        "seed_range": getattr(args, "seed_range", None),
        "worker_count": getattr(args, "workers", None),
        "min_segment": getattr(args, "min_segment", None),
    }


def _add_recovery_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed-range", help="half-open seed range lo:hi (default 0:2^32)")
    p.add_argument("--miss-threshold", type=parse_int)
    p.add_argument("--stride", type=parse_int)
    p.add_argument("--depth", type=parse_int, help="prefilter depth in ballots")
    p.add_argument("--top-k", type=parse_int, help="phase-1 survivors to verify")
    p.add_argument("--workers", type=parse_int, help="parallel scan processes")
    p.add_argument("--min-segment", type=parse_int)


def _read_dataset(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    data = parse_published(text)
    for warning in data.warnings:
        log.warning("%s: %s", path, warning)
    return data


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace, cfg: RunConfig) -> int:
    meta_seed = cfg.resolve_meta_seed()
    summary = []
    for index, scenario in enumerate(cfg.scenarios):
        truth, ballots = simulate(scenario, meta_seed + index)
        data = export_published(ballots)
        csv_path = _write_out(cfg, f"{scenario.name}.csv", data.to_csv())
        entry = {
            "location": scenario.name,
            "batch": scenario.batch_id,
            "csv": str(csv_path),
            "ballots": len(ballots),
            "server_starts": len(truth.starts),
        }
        if args.with_truth:
            entry["truth"] = str(_write_out(cfg, f"{scenario.name}.truth.json", truth.to_json()))
        summary.append(entry)
    if cfg.report_format == "json":
        _emit(json.dumps({"meta_seed": meta_seed, "locations": summary}, indent=2))
    else:
        for e in summary:
            _emit(f"{e['location']}: batch {e['batch']}, {e['ballots']} ballots, "
                  f"{e['server_starts']} server starts -> {e['csv']}")
    return EXIT_OK


def cmd_recover(args: argparse.Namespace, cfg: RunConfig) -> int:
    data = _read_dataset(args.csv)
    if args.batch:
        batches = [args.batch]
        if args.batch not in data.batches():
            raise UsageError(f"batch {args.batch} not found in {args.csv}")
    else:
        batches = data.electronic_batches()
    if not batches:
        _emit(json.dumps({"batches": [], "message": "no electronic batches (batch ids ending in 000)"})
              if cfg.report_format == "json" else "no electronic batches (batch ids ending in 000)")
        return EXIT_NOT_FOUND

    reports, codes = [], []
    for batch in batches:
        pindexes = data.pindexes(batch)
        try:
            if args.segments:
                result = recover_segments(pindexes, cfg.recovery)
                report = result_report(batch, result)
                if not result.segments:
                    report["status"] = "not_found"
                codes.append(EXIT_OK if result.segments else EXIT_NOT_FOUND)
            else:
                report = result_report(batch, recover_seed(pindexes, cfg.recovery))
                codes.append(EXIT_OK)
        except SeedNotFound as exc:
            report = {"batch": batch, "status": "not_found", "message": str(exc)}
            codes.append(EXIT_NOT_FOUND)
        except AmbiguousSeed as exc:
            report = {"batch": batch, "status": "ambiguous", "seeds": [c.seed for c in exc.candidates],
                      "message": str(exc)}
            codes.append(EXIT_AMBIGUOUS)
        reports.append(report)

    doc = {"batches": reports}
    if "out" in vars(args) or cfg.sections.get("cli", {}).get("out"):
        _write_out(cfg, "recovery.json", json.dumps(doc, indent=1) + "\n")
    if cfg.report_format == "json":
        _emit(json.dumps(doc, indent=1))
    else:
        for r in reports:
            if r["status"] == "recovered":
                _emit(f"{r['batch']}: seeds {r['seeds']}, matched {r['matched']}, misses {r['misses']}")
                for seg in r["segments"]:
                    _emit(f"  seed {seg['seed']}: {' '.join(map(str, seg['order']))}")
            else:
                _emit(f"{r['batch']}: {r['status']}: {r['message']}")
    return max(codes)


def cmd_reorder(args: argparse.Namespace, cfg: RunConfig) -> int:
    data = _read_dataset(args.csv)
    try:
        doc = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read recovery report {args.report}: {exc}") from exc
    wanted = [r for r in doc.get("batches", [doc]) if r.get("status", "recovered") == "recovered"
              and (args.batch is None or r["batch"] == args.batch)]
    if not wanted:
        raise UsageError("recovery report holds no recovered batch to reorder")
    listing = []
    for report in wanted:
        result = result_from_report(report)
        try:
            listing.extend((report["batch"], b) for b in reorder_votes(result, data, report["batch"]))
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from exc

    if cfg.report_format == "json":
        _emit(json.dumps([
            {"batch": batch, "segment": b.segment, "seed": b.seed, "position": b.position, "pindex": b.pindex,
             "preferences": [[r.rank, r.party, r.candidate] for r in b.rows]}
            for batch, b in listing
        ], indent=1))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("segment", "seed", "position", "electorate", "batch", "pindex", "rank", "party", "candidate"))
        for _, b in listing:
            for r in b.rows:
                w.writerow((b.segment, b.seed, b.position, r.electorate, r.batch, r.pindex, r.rank, r.party, r.candidate))
        _emit(buf.getvalue())
    return EXIT_OK


def cmd_bias(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.sweep:
        mismatches = []
        for p in range(1, bias_mod.BYTE_VALUES + 1):
            rep = bias_mod.exact_column_distribution(p)
            brute = [sum(1 for r in range(256) if r % p == c) for c in range(p)]
            if list(rep.counts) != brute or sum(rep.counts) != 256 or (rep.bias_metric == 0) != (256 % p == 0):
                mismatches.append(p)
        result = {"checked": bias_mod.BYTE_VALUES, "mismatches": mismatches}
        _emit(json.dumps(result) if cfg.report_format == "json"
              else f"checked p=1..256, {len(mismatches)} mismatches")
        return EXIT_OK if not mismatches else EXIT_ERROR
    if args.electorates:
        try:
            configs = bias_mod.load_electorates(Path(args.electorates).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load electorates from {args.electorates}: {exc}") from exc
    elif args.columns:
        configs = [bias_mod.ElectorateConfig(f"p={p}", p) for p in args.columns]
    else:
        configs = list(bias_mod.ELECTORATES_2020)
    try:
        rows = bias_mod.report_2020(configs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(bias_mod.rows_to_json(rows) if cfg.report_format == "json" else bias_mod.format_table(rows))
    return EXIT_OK


def cmd_tls(args: argparse.Namespace, cfg: RunConfig) -> int:
    from . import tlsprobe

    section = cfg.sections.get("tls-probe", {})
    corpus_dir = args.corpus_dir or section.get("corpus_dir") or str(cfg.out_dir / "tls-corpus")
    expected_host = args.expected_host or section.get("expected_host")
    host = args.host or section.get("host", "127.0.0.1")
    as_json = cfg.report_format == "json"

    if args.tls_command == "corpus":
        corpus = tlsprobe.generate_corpus(corpus_dir, expected_host or "localhost")
        files = {"ca": str(corpus.ca_cert_path),
                 **{f.value: {"cert": str(s.cert_path), "key": str(s.key_path)} for f, s in corpus.specs.items()}}
        _emit(json.dumps(files, indent=2) if as_json else "\n".join(f"{k}: {v}" for k, v in files.items()))
        return EXIT_OK

    if args.tls_command == "lint":
        report = tlsprobe.lint_certificate(args.cert, expected_host or "localhost")
        if as_json:
            _emit(json.dumps(report.to_dict(), indent=2))
        else:
            for key in ("hostname_present", "hostname_matches", "currently_valid", "self_signed", "clean"):
                _emit(f"{key:<17} {getattr(report, key)}")
        return EXIT_OK

    anchors = args.ca if args.ca is not None else ([section["ca"]] if section.get("ca") else None)

    if args.tls_command == "probe":
        if args.port is None:
            raise UsageError("tls probe needs --port")
        modes = [args.mode or section.get("mode", "strict")]
        outcomes = []
        for mode in modes:
            trust = anchors if anchors is not None else [str(Path(corpus_dir) / "ca-cert.pem")]
            outcomes.append(tlsprobe.probe(host, args.port, expected_host or "localhost", mode, trust))
        _emit(json.dumps([o.to_dict() for o in outcomes], indent=2) if as_json else "\n".join(
            f"{o.client_mode.value}: {'accepted' if o.accepted else 'rejected (' + o.failure_reason.value + ')'}"
            for o in outcomes))
        return EXIT_OK

    if not (Path(corpus_dir) / "corpus.json").exists():
        raise UsageError(f"no certificate corpus in {corpus_dir}; run 'tls corpus' first")
    corpus = tlsprobe.load_corpus(corpus_dir)

    if args.tls_command == "serve":
        server = tlsprobe.serve(corpus[args.flaw], args.port or 0, host)
        _emit(json.dumps({"flaw": args.flaw, "host": server.host, "port": server.port}))
        sys.stdout.flush()
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
        finally:
            server.stop()
        return EXIT_OK

    modes = args.mode.split(",") if args.mode else section.get("mode", "strict,lax").split(",")
    modes = [m.strip() for m in modes if m.strip()]
    matrix = tlsprobe.run_matrix(corpus, modes, anchors, expected_host, host)
    _emit(json.dumps(matrix.to_dict(), indent=2) if as_json else matrix.format_table())
    return EXIT_OK if matrix.conforms else EXIT_NONCONFORMING


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    # window counts candidate seeds, so its value span is stride times wider
    stride = cfg.recovery.seed_stride
    window = (1 << args.window_log2) * stride
    lo = 3 * window
    scenario = PollingPlaceScenario(name="bench", votes_per_day=[args.ballots], seed_window=(lo, lo + window))
    truth, ballots = simulate(scenario, cfg.resolve_meta_seed())
    pindexes = {b.pindex for b in ballots}
    recovery = cfg.recovery
    recovery = RecoveryConfig(
        miss_threshold=recovery.miss_threshold, seed_stride=recovery.seed_stride,
        prefilter_depth=recovery.prefilter_depth, prefilter_top_k=recovery.prefilter_top_k,
        seed_range=(lo, lo + window), worker_count=recovery.worker_count,
    )
    stats = scan_candidates(pindexes, recovery)
    full_space = TWO32 // recovery.seed_stride
    found = truth.seeds[0] in {seed for _, seed in stats.candidates}
    report = {
        "workers": recovery.worker_count,
        "cpu_count": os.cpu_count(),
        "ballots": len(pindexes),
        "window": [lo, lo + window],
        "seeds_scanned": stats.seeds_scanned,
        "window_seconds": round(stats.elapsed, 6),
        "seeds_per_second": round(stats.seeds_per_second),
        "full_space_seeds": full_space,
        "extrapolated_full_scan_seconds": round(stats.elapsed * full_space / stats.seeds_scanned, 1),
        "hidden_seed_in_candidates": found,
    }
    if cfg.report_format == "json":
        _emit(json.dumps(report, indent=2))
    else:
        _emit("\n".join(f"{k:<32} {v}" for k, v in report.items()))
    return EXIT_OK


def cmd_prng_dump(args: argparse.Namespace, cfg: RunConfig) -> int:
    state = MtState.from_seed(args.seed)
    _emit("\n".join(str(v) for v in state.next_u32_many(args.count).tolist()))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = _Parser(prog="evacs-audit", parents=[common],
                     description="Reproduce PRNG shuffle reversal, column bias and TLS validation checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="simulate polling places and write published CSVs")
    g.add_argument("--location", action="append", help="polling place name (repeatable)")
    g.add_argument("--electorate")
    g.add_argument("--days", type=parse_int)
    g.add_argument("--restarts", help="server starts per day: one value or a comma list")
    g.add_argument("--votes", help="votes per day: one value or a comma list")
    g.add_argument("--miss-rate", type=float)
    g.add_argument("--seed-window", help="confine server seeds to lo:hi")
    g.add_argument("--with-truth", action="store_true", help="also write the ground-truth log (JSON)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("recover", parents=[common], help="recover seeds and cast order from a published CSV")
    r.add_argument("csv")
    r.add_argument("--batch")
    r.add_argument("--segments", action="store_true", help="allow several seeds per batch")
    _add_recovery_flags(r)
    r.set_defaults(func=cmd_recover)

    o = sub.add_parser("reorder", parents=[common], help="list ballots in recovered cast order")
    o.add_argument("csv")
    o.add_argument("report", help="JSON written by 'recover'")
    o.add_argument("--batch")
    o.set_defaults(func=cmd_reorder)

    b = sub.add_parser("bias", parents=[common], help="column-selection bias table")
    b.add_argument("--columns", type=parse_int, action="append", help="column count p (repeatable)")
    b.add_argument("--electorates", help="JSON list of {name, columns, column_labels}")
    b.add_argument("--sweep", action="store_true", help="check p = 1..256 against brute force")
    b.set_defaults(func=cmd_bias)

    t = sub.add_parser("tls", parents=[common], help="certificate corpus, probes and conformance matrix")
    t.add_argument("tls_command", choices=("corpus", "probe", "matrix", "lint", "serve"))
    t.add_argument("cert", nargs="?", help="certificate to lint")
    t.add_argument("--corpus-dir")
    t.add_argument("--host")
    t.add_argument("--port", type=parse_int)
    t.add_argument("--expected-host")
    t.add_argument("--mode", help="strict, lax, or a comma list for matrix")
    t.add_argument("--ca", action="append", help="trust anchor PEM (repeatable)")
    t.add_argument("--no-ca", dest="ca", action="store_const", const=[], help="trust nothing")
    t.add_argument("--flaw", default="valid", help="corpus leaf to serve")
    t.set_defaults(func=cmd_tls)

    n = sub.add_parser("bench", parents=[common], help="measure seed-scan throughput")
    n.add_argument("--window-log2", type=int, default=24, help="log2 of the number of seeds to scan")
    n.add_argument("--ballots", type=int, default=500)
    _add_recovery_flags(n)
    n.set_defaults(func=cmd_bench)

    d = sub.add_parser("prng-dump", parents=[common], help="print the first K raw draws for a seed")
    d.add_argument("seed", type=parse_int)
    d.add_argument("-k", "--count", type=parse_int, default=10)
    d.set_defaults(func=cmd_prng_dump)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    sections = read_sections(getattr(args, "config", None))
    cli = sections.get("cli", {})
    scenario_overrides: dict[str, Any] = {}
    if args.command == "generate":
        days = args.days
        scenario_overrides = {
            "locations": ",".join(args.location) if args.location else None,
            "electorate": args.electorate,
            "days": days,
            "restarts_per_day": args.restarts,
            "votes_per_day": args.votes,
            "miss_rate": args.miss_rate,
            "seed_window": args.seed_window,
        }
    meta = getattr(args, "meta_seed", None)
    if meta is None and cli.get("meta_seed"):
        meta = parse_int(cli["meta_seed"])
    return RunConfig(
        scenarios=build_scenarios(sections, scenario_overrides) if args.command == "generate" else [],
        recovery=build_recovery(sections, _recovery_overrides(args)),
        out_dir=Path(getattr(args, "out", None) or cli.get("out") or "."),
        meta_seed=meta,
        report_format=getattr(args, "format", None) or cli.get("format") or "json",
        sections=sections,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", 0) >= 2 else
        logging.INFO if getattr(args, "verbose", 0) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _run_config(args)
        return args.func(args, cfg)
    except (UsageError, ConfigError, ScenarioError, DatasetError, ValueError, OSError) as exc:
        from .tlsprobe import ProbeNetworkError

        kind = "network error" if isinstance(exc, ProbeNetworkError) else "error"
        print(f"evacs-audit: {kind}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
