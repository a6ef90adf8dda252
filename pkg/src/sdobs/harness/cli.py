"""Command line entry point ``sdobs``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..linops import CGNotConverged
from ..onedim import write_study
from ..rocstat import DesignAUC, ScoreSet, empirical_auc, rank_designs
from .config import ConfigError, load_config
from .phantoms import PhantomFormatError, generate_sparse_phantom, save_phantom

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _rank(args) -> int:
    from .study import run_ranking_study
    cfg = load_config(args.config)
    res = run_ranking_study(cfg, out_dir=args.out, workers=args.workers)
    for obs, rep in res.reports.items():
        print(f"{obs}: " + " > ".join(f"{k} ({rep.entries[k].auc_empirical:.3f})" for k in rep.ordering))
        for a, b in rep.not_separated():
            print(f"  {a} and {b} are not separated at 95%")
    for kind, msg in res.failures.items():
        print(f"design {kind} failed: {msg}", file=sys.stderr)
    print(f"wrote {res.out_dir}")
    return EXIT_NUMERIC if res.failures else EXIT_OK


def _recon(args) -> int:
    from .study import run_recon_study
    cfg = load_config(args.config)
    res = run_recon_study(cfg, out_dir=args.out)
    for kind, method, s, r in res.table:
        print(f"{kind:3s} {method:14s} ssim={s:.4f} rel_error={r:.4f}")
    print(f"wrote {res.out_dir}")
    return EXIT_NUMERIC if res.failures else EXIT_OK


def _onedim(args) -> int:
    path = write_study(args.out)
    with open(path) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def read_scores(path) -> dict:
    """Parse a ``design,observer,hypothesis,score`` CSV into ScoreSets."""
    groups = defaultdict(lambda: ([], []))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"design", "observer", "hypothesis", "score"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                hyp = int(row["hypothesis"])
                val = float(row["score"])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if hyp not in (0, 1):
                raise ConfigError(f"{path}:{lineno}: hypothesis must be 0 or 1")
            groups[(row["design"], row["observer"])][hyp].append(val)
    return {k: ScoreSet(pos, neg) for k, (neg, pos) in groups.items()}


def _roc(args) -> int:
    scores = read_scores(args.scores)
    by_obs = defaultdict(dict)
    out = {}
    for (kind, obs), s in sorted(scores.items()):
        emp = empirical_auc(s)
        by_obs[obs][kind] = DesignAUC.from_scores(s)
        out.setdefault(kind, {})[obs] = {"auc_empirical": emp.auc, "ci": [emp.ci_low, emp.ci_high],
                                         "n_pos": int(s.positives.size), "n_neg": int(s.negatives.size)}
        print(f"{kind:3s} {obs:3s} AUC={emp.auc:.4f} [{emp.ci_low:.4f}, {emp.ci_high:.4f}]")
    ordering = {obs: rank_designs(d).ordering for obs, d in by_obs.items()}
    for obs, order in ordering.items():
        print(f"{obs}: {' > '.join(order)}")
    if args.json:
        Path(args.json).write_text(json.dumps({"designs": out, "ordering": ordering},
                                              indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _phantom_gen(args) -> int:
    f = generate_sparse_phantom(args.n, args.seed, args.detail)
    save_phantom(args.out, f, (args.n, args.n))
    print(f"wrote {args.out} ({args.n}x{args.n})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdobs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rank", help="rank acquisition designs by observer AUC")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=_rank)

    o = sub.add_parser("onedim", help="scalar exact-vs-approximate posterior study")
    o.add_argument("--out", default="onedim_out")
    o.set_defaults(func=_onedim)

    c = sub.add_parser("recon", help="reconstruct one object per design and tabulate SSIM")
    c.add_argument("--config", required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_recon)

    a = sub.add_parser("roc", help="recompute AUCs from a saved score CSV")
    a.add_argument("--scores", required=True)
    a.add_argument("--json", default=None, help="also write the results as JSON")
    a.set_defaults(func=_roc)

    ph = sub.add_parser("phantom", help="phantom utilities")
    phsub = ph.add_subparsers(dest="phantom_command", required=True)
    gen = phsub.add_parser("gen", help="write one synthetic phantom file")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--detail", type=float, default=1.0)
    gen.set_defaults(func=_phantom_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PhantomFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, CGNotConverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
