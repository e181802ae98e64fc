"""Targeted ablations next to the full runtime on the same manifest."""

import argparse
from pathlib import Path

from cbea.fixtures import generate_manifest
from cbea.harness import ABLATIONS, RunConfig, run_variant
from cbea.metrics import write_jsonl
from cbea.report import write_reports


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/ablations")
    args = ap.parse_args()

    manifest = generate_manifest(args.seed)
    cfg = RunConfig(seed=args.seed)
    out = Path(args.out)
    records = []
    for v in ("cbea_lcv", *ABLATIONS):
        rows = run_variant(manifest, cfg, v)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(rows, out / f"{v}.jsonl")
        records += rows
    write_reports(records, manifest, out)
    print((out / "summary.txt").read_text())
    print((out / "covered_detail.txt").read_text())


if __name__ == "__main__":
    main()
