"""Command line front end.

Verbs: ``validate`` a case file, ``run`` it, ``resume`` an interrupted
run from its newest checkpoint, ``post`` to rebuild the summary from the
final checkpoint, and ``report`` to compare a summary against reference
values.

Exit codes: 0 clean, 1 reference mismatch in ``report``, 2 invalid
configuration, 3 solution diverged or lost positivity, 4 linear solver
failure, 5 output directory refused on provenance grounds.
"""

import argparse
import sys
from pathlib import Path

import yaml

from .compressible import PositivityError
from .config import ConfigError, load_case
from .fvm.linsolve import LinSolveError
from .incompressible import BlowupError
from .runner import ProvenanceError, Runner

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_SOLVER = 4
EXIT_REFUSED = 5


def _parser():
    ap = argparse.ArgumentParser(
        prog="ghostflow",
        description="immersed-boundary flow solver driver")
    sub = ap.add_subparsers(dest="verb", required=True)

    pv = sub.add_parser("validate", help="check a case file, print the "
                                         "normalized form and its hash")
    pv.add_argument("--case", required=True)

    pr = sub.add_parser("run", help="run a case to its end time")
    pr.add_argument("--case", required=True)
    pr.add_argument("--out", default=None,
                    help="output directory (default from the case file)")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--max-steps", type=int, default=None)
    pr.add_argument("--resume", default=None, metavar="CHECKPOINT",
                    help="continue from this checkpoint file")

    ps = sub.add_parser("resume", help="continue from the newest "
                                       "checkpoint in the run directory")
    ps.add_argument("--case", required=True)
    ps.add_argument("--out", default=None)
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--max-steps", type=int, default=None)

    pp = sub.add_parser("post", help="recompute the summary from the "
                                     "final checkpoint")
    pp.add_argument("--case", required=True)
    pp.add_argument("--out", default=None)

    pt = sub.add_parser("report", help="compare a summary against "
                                       "reference values")
    pt.add_argument("--summary", required=True)
    pt.add_argument("--references", required=True)
    return ap


def _newest_checkpoint(out_dir):
    ckdir = Path(out_dir) / "checkpoints"
    steps = sorted(ckdir.glob("step_*.npz"))
    if steps:
        return steps[-1]
    final = ckdir / "final.npz"
    if final.exists():
        return final
    raise FileNotFoundError(f"no checkpoints under {ckdir}")


def _metric_value(summary, name):
    if name in ("st", "st_spectral"):
        block = summary.get("strouhal") or {}
        return block.get(name)
    if name == "nusselt":
        return summary.get("nusselt")
    return (summary.get("coefficients") or {}).get(name)


def _report(args):
    with open(args.summary, encoding="utf-8") as fh:
        summary = yaml.safe_load(fh)
    with open(args.references, encoding="utf-8") as fh:
        refs = yaml.safe_load(fh)
    case = summary.get("case")
    wanted = refs.get(case)
    if wanted is None:
        print(f"{case}: no reference entry")
        return EXIT_OK
    worst = EXIT_OK
    for metric, spec in wanted.items():
        ref = float(spec["value"])
        rtol = spec.get("rtol")
        got = _metric_value(summary, metric)
        if got is None:
            print(f"{case} {metric}: missing from summary")
            worst = EXIT_MISMATCH
            continue
        rel = abs(got - ref) / abs(ref)
        if rtol is None:
            print(f"{case} {metric}: computed={got:.6g} "
                  f"reference={ref:.6g} rel_diff={rel:.2%} (report only)")
            continue
        ok = rel <= float(rtol)
        print(f"{case} {metric}: computed={got:.6g} reference={ref:.6g} "
              f"rel_diff={rel:.2%} tol={float(rtol):.0%} "
              f"{'ok' if ok else 'OUT OF TOLERANCE'}")
        if not ok:
            worst = EXIT_MISMATCH
    return worst


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.verb == "report":
            return _report(args)
        case = load_case(args.case)
        if args.verb == "validate":
            sys.stdout.write(case.as_yaml())
            print(f"hash: {case.hash}")
            return EXIT_OK
        if args.verb == "post":
            runner = Runner(case, out_dir=args.out)
            summary = runner.postprocess()
        else:
            runner = Runner(case, out_dir=args.out, workers=args.workers,
                            max_steps=args.max_steps)
            resume = None
            if args.verb == "resume":
                resume = _newest_checkpoint(runner.out)
            elif args.resume is not None:
                resume = args.resume
            summary = runner.run(resume=resume)
        yaml.safe_dump(summary, sys.stdout, sort_keys=False)
        return EXIT_OK
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (BlowupError, PositivityError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except LinSolveError as exc:
        print(f"linear solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ProvenanceError, FileNotFoundError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
