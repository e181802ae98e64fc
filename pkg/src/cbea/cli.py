"""Command-line entry point: one subcommand per diagnostic."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from cbea.fixtures import Manifest, generate_manifest
from cbea.harness import ABLATIONS, VARIANTS, RunConfig, check_invariants, run_variant
from cbea.metrics import payload_stats, read_jsonl, shadow_recall, write_jsonl
from cbea.report import _align, cluster_rows, interval_rows, write_reports
from cbea.stats import PairedSample, WinnerTable, case_cluster_bootstrap, paired_bootstrap, reference_winner_table

log = logging.getLogger("cbea")


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in ("manifest_path", "seed", "budget", "parallelism", "output_dir", "history_factor"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    return replace(cfg, **overrides)


def _manifest(cfg: RunConfig) -> Manifest:
    if cfg.manifest_path:
        return Manifest.load(cfg.manifest_path)
    log.info("no manifest given; generating one with seed %d", cfg.seed)
    return generate_manifest(cfg.seed)


def _run(args: argparse.Namespace, names: Sequence[str]) -> int:
    cfg = _load_config(args)
    manifest = _manifest(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for name in names:
        rows = run_variant(manifest, cfg, name)
        write_jsonl(rows, out / f"{name}.jsonl")
        records += rows
        log.info("%s: %d rows", name, len(rows))
    write_reports(records, manifest, out)
    problems = check_invariants(records, manifest)
    for p in problems:
        print(f"INVARIANT FAILED: {p}", file=sys.stderr)
    print((out / "summary.txt").read_text(), end="")
    return 1 if problems else 0


def cmd_generate(args: argparse.Namespace) -> int:
    m = generate_manifest(args.seed)
    m.save(args.out)
    print(f"wrote {len(m)} fixtures to {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    names = args.variant or list(_load_config(args).variants)
    return _run(args, names)


def cmd_ablate(args: argparse.Namespace) -> int:
    names = args.ablation or list(ABLATIONS)
    return _run(args, names)


def cmd_score(args: argparse.Namespace) -> int:
    records = [r for path in args.records for r in read_jsonl(path)]
    manifest = Manifest.load(args.manifest) if args.manifest else None
    write_reports(records, manifest, args.out)
    problems = check_invariants(records, manifest) if manifest else []
    for p in problems:
        print(f"INVARIANT FAILED: {p}", file=sys.stderr)
    print((Path(args.out) / "summary.txt").read_text(), end="")
    return 1 if problems else 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    if args.paired:
        samples = []
        for line in Path(args.paired).read_text().splitlines()[1:]:
            fid, delta = line.split(",")[:2]
            samples.append(PairedSample(fid, float(delta)))
        iv = paired_bootstrap(samples, args.resamples, args.alpha, args.seed)
        print(_align(["Quantity", "Mean", "Low", "High"], interval_rows({"paired delta": iv})), end="")
        return 0
    table = WinnerTable.from_csv(args.winners) if args.winners else reference_winner_table()
    res = case_cluster_bootstrap(table, args.resamples, args.alpha, args.seed)
    print(_align(["Quantity", "Estimate", "Low", "High"], cluster_rows(res)), end="")
    return 0


def cmd_shadow(args: argparse.Namespace) -> int:
    manifest = Manifest.load(args.manifest)
    records = [r for path in args.records for r in read_jsonl(path)]
    variants = sorted({r.variant for r in records})
    out = {}
    for v in variants:
        s = shadow_recall({r.fixture_id: r.realized_text for r in records if r.variant == v}, manifest)
        out[v] = {"overall": s["overall"], "per_domain": s["per_domain"]}
    leaks = [r.fixture_id for r in records if r.privacy_ok is False]
    print(json.dumps({"recall": out, "privacy_failures": leaks}, indent=1, sort_keys=True))
    return 1 if leaks else 0


def cmd_payload(args: argparse.Namespace) -> int:
    cfg = replace(_load_config(args), history_factor=args.factor)
    manifest = _manifest(cfg)
    records = run_variant(manifest, cfg, "raw") + run_variant(manifest, cfg, "cbea_lcv")
    print(json.dumps(payload_stats(records), indent=1, sort_keys=True))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    manifest = generate_manifest(args.seed)
    cfg = RunConfig(seed=args.seed)
    records = run_variant(manifest, cfg, "cbea_lcv")
    problems = check_invariants(records, manifest)
    bad = [r.fixture_id for r in records if any(v for v in (r.oracle_eval.hard_violation, r.oracle_eval.coverage_failure, r.oracle_eval.witness_drop, r.oracle_eval.consequence_failure, r.oracle_eval.infeasible_emission))]
    bad += [r.fixture_id for r in records if r.oracle_eval.repair_match is False]
    for p in problems:
        print(f"INVARIANT FAILED: {p}")
    print(f"selftest: {len(records)} rows, {len(bad)} failing fixtures, {len(problems)} invariant breaches")
    return 1 if problems or bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbea", description="Contract-bounded evidence activation with lexicographic validation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a fixture manifest")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="manifest.json")
    g.set_defaults(func=cmd_generate)

    def run_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON run config; flags override it")
        sp.add_argument("--manifest", dest="manifest_path")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--budget", type=int)
        sp.add_argument("--parallelism", type=int)
        sp.add_argument("--out", dest="output_dir")
        sp.add_argument("--history-factor", dest="history_factor", type=float)

    r = sub.add_parser("run", help="run comparison variants")
    run_opts(r)
    r.add_argument("--variant", action="append", choices=VARIANTS)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="run targeted ablations")
    run_opts(a)
    a.add_argument("--ablation", action="append", choices=ABLATIONS)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("score", help="rebuild report tables from record files")
    s.add_argument("--records", nargs="+", required=True)
    s.add_argument("--manifest")
    s.add_argument("--out", default="report")
    s.set_defaults(func=cmd_score)

    b = sub.add_parser("bootstrap", help="case-cluster or paired bootstrap")
    b.add_argument("--winners", help="CSV with case_id,judge_id,winner (default: reference table)")
    b.add_argument("--paired", help="CSV with fixture_id,delta")
    b.add_argument("--resamples", type=int, default=10_000)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bootstrap)

    sh = sub.add_parser("shadow", help="uncompiled-fact recall and privacy check")
    sh.add_argument("--records", nargs="+", required=True)
    sh.add_argument("--manifest", required=True)
    sh.set_defaults(func=cmd_shadow)

    pl = sub.add_parser("payload", help="long-history prompt size diagnostic")
    run_opts(pl)
    pl.add_argument("--factor", type=float, default=4.0)
    pl.set_defaults(func=cmd_payload)

    st = sub.add_parser("selftest", help="zero-failure check on a fresh manifest")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
