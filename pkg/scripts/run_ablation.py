#!/usr/bin/env python3
"""Knowledge ablation: matched models trained with stored oracle knowledge vectors
vs null providers, compared on held-out videos over several seeds."""

import argparse

from snipcap.experiments import ABLATION_SEEDS, run_ablation
from snipcap.metrics import render_ablation_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default=",".join(str(s) for s in ABLATION_SEEDS),
                        help="comma-separated training seeds")
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))

    result = run_ablation(seeds=seeds)
    rows = {}
    for seed in seeds:
        for arm in ("null", "oracle"):
            rows[f"{arm} (seed {seed})"] = result.reports[seed][arm]
    print(render_ablation_table(rows))
    print()
    print(f"mean held-out BLEU@4: oracle {result.mean_bleu4('oracle'):.4f} "
          f"vs null {result.mean_bleu4('null'):.4f}  (gap {result.mean_gap:.4f})")
    print(f"mean oracle snippet accuracy:       {result.mean_metric('oracle', 'snippet_acc'):.4f}")
    print(f"mean oracle action-object accuracy: {result.mean_metric('oracle', 'actobj_acc'):.4f}")
    print(f"wall time: {result.seconds:.0f}s")


if __name__ == "__main__":
    main()
