"""Case-cluster bootstrap over a judge winner table and a paired bootstrap over per-fixture deltas."""

import argparse

from cbea.fixtures import generate_manifest
from cbea.harness import RunConfig, run_variant
from cbea.report import _align, cluster_rows, interval_rows
from cbea.stats import PairedSample, WinnerTable, case_cluster_bootstrap, paired_bootstrap, reference_winner_table


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--winners", help="CSV with case_id,judge_id,winner; reference table otherwise")
    ap.add_argument("--resamples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    table = WinnerTable.from_csv(args.winners) if args.winners else reference_winner_table()
    res = case_cluster_bootstrap(table, args.resamples, 0.05, args.seed)
    print(_align(["Quantity", "Estimate", "Low", "High"], cluster_rows(res)))

    # paired delta: hard-violation-free emission, gated runtime minus raw baseline
    manifest = generate_manifest(args.seed)
    cfg = RunConfig(seed=args.seed)
    cb = {r.fixture_id: r for r in run_variant(manifest, cfg, "cbea_lcv")}
    raw = {r.fixture_id: r for r in run_variant(manifest, cfg, "raw")}
    ok = lambda r: 0.0 if r.oracle_eval.hard_violation else 1.0
    samples = [PairedSample(fid, ok(cb[fid]) - ok(raw[fid])) for fid in sorted(cb)]
    iv = paired_bootstrap(samples, args.resamples, 0.05, args.seed)
    print(_align(["Quantity", "Mean", "Low", "High"], interval_rows({"no-violation delta (cbea - raw)": iv})))


if __name__ == "__main__":
    main()
