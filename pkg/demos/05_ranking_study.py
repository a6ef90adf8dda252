"""Ranking the four acquisition designs by detection performance.

By default this runs a reduced study (n = 16, 15 + 15 test measurements)
that finishes in a minute or two. Pass ``--desk`` for the n = 32,
25 + 25 configuration, which takes several minutes on one core.

Run:  python demos/05_ranking_study.py [--desk] [--workers K]
"""

import argparse

from sdobs.harness import StudyConfig, run_ranking_study

ap = argparse.ArgumentParser()
ap.add_argument("--desk", action="store_true")
ap.add_argument("--workers", type=int, default=1)
ap.add_argument("--out", default="demo_out/ranking")
args = ap.parse_args()

if args.desk:
    cfg = StudyConfig()
else:
    cfg = StudyConfig(n=16, n_train=30, n_pos=15, n_neg=15, outer_iters=10)

res = run_ranking_study(cfg, out_dir=args.out, workers=args.workers)
print(f"tau = {res.summary['tau']:.3f}, complex sigma = {res.summary['sigma']:.3e}\n")
for obs, rep in res.reports.items():
    print(f"{obs}")
    for kind in rep.ordering:
        e = res.summary["designs"][kind][obs]
        lo, hi = e["ci"]
        print(f"  {kind}  AUC {e['auc_empirical']:.3f}  95% CI [{lo:.3f}, {hi:.3f}]  "
              f"binormal {e['auc_binormal']:.3f}")
    pairs = rep.not_separated()
    if pairs:
        print("  not separated: " + ", ".join(f"{a}/{b}" for a, b in pairs))

# With few test measurements the intervals are wide, so an ordering is only
# meaningful where the intervals separate. Full sampling should come first
# for both observers. The summary JSON, score CSV and ROC curves are in the
# output directory; `sdobs roc --scores <dir>/scores.csv` recomputes the AUCs.
print(f"\noutputs in {res.out_dir}")
