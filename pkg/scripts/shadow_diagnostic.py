"""Uncompiled-fact recall per variant and the prompt privacy check for gated variants."""

import argparse

from cbea.fixtures import generate_manifest
from cbea.harness import VARIANTS, RunConfig, run_variant
from cbea.report import _align, shadow_rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    manifest = generate_manifest(args.seed)
    cfg = RunConfig(seed=args.seed)
    records = [r for v in VARIANTS for r in run_variant(manifest, cfg, v)]
    overall, domains = shadow_rows(records, manifest)
    print(_align(["Method", "Uncomp."], overall))
    print(_align(["Method", "Domain", "Uncomp."], domains))
    gated = [r for r in records if r.privacy_ok is not None]
    print(f"privacy check: {sum(r.privacy_ok for r in gated)}/{len(gated)} gated prompts clean")


if __name__ == "__main__":
    main()
