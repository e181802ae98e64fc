"""Prompt size of the raw baseline against the gated runtime as the history grows."""

import argparse

from cbea.fixtures import generate_manifest
from cbea.harness import RunConfig, run_variant
from cbea.metrics import payload_stats
from cbea.report import _align


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--factors", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0])
    args = ap.parse_args()

    manifest = generate_manifest(args.seed)
    rows = []
    for factor in args.factors:
        cfg = RunConfig(seed=args.seed, history_factor=factor)
        p = payload_stats(run_variant(manifest, cfg, "raw") + run_variant(manifest, cfg, "cbea_lcv"))
        raw, cb = p["raw"]["median_input_tokens"], p["cbea_lcv"]["median_input_tokens"]
        rows.append([f"{factor:g}", f"{raw:.0f}", f"{cb:.0f}", f"{raw / cb:.2f}", f"{p['cbea_lcv']['reduction_vs_raw']:.3f}"])
    print(_align(["Factor", "Raw median", "CBEA median", "Ratio", "Reduction"], rows))
    print("Whitespace-token counts; provider token counts and latency are not measured.")


if __name__ == "__main__":
    main()
