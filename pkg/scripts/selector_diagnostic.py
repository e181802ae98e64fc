"""Control-evidence recall of budgeted activation against MMR at equal budget."""

import argparse

from cbea.fixtures import generate_manifest
from cbea.harness import RunConfig, selector_diagnostic
from cbea.report import _align, selector_rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--budget", type=int, default=12)
    args = ap.parse_args()

    for seed in args.seeds:
        d = selector_diagnostic(generate_manifest(seed), RunConfig(seed=seed, budget=args.budget))
        print(f"seed {seed}, budget {args.budget}")
        print(_align(["Selector", "Avg |Z|", "Hard", "ReqW", "Tail", "Debt", "Control"], selector_rows(d)))
        print(f"control gap: {d['cbea']['control_union'] - d['mmr']['control_union']:.4f}\n")


if __name__ == "__main__":
    main()
