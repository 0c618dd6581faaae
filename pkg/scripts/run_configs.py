"""Run every experiment in configs/ and write its report to results/.

    python scripts/run_configs.py [--jobs N] [--format csv|json] [names ...]
"""
import argparse
import pathlib
import time

from sere.config import load_config
from sere.harness import emit_report, run_ensemble

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    args = ap.parse_args()
    out_dir = ROOT / "results"
    out_dir.mkdir(exist_ok=True)
    paths = sorted((ROOT / "configs").glob("*.toml"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    for path in paths:
        if path.stem == "simulate":  # trajectory only, no report
            continue
        cfg = load_config(path)
        t0 = time.perf_counter()
        report = run_ensemble(cfg, jobs=args.jobs)
        target = out_dir / f"{path.stem}.{args.format}"
        emit_report(report, args.format, target)
        status = "pass" if report.passed else "FAIL"
        print(f"{path.stem:24s} {status}  {time.perf_counter() - t0:6.1f}s  -> {target.relative_to(ROOT)}")
        for name, ok in report.criteria.items():
            print(f"    {name}: {ok}")


if __name__ == "__main__":
    main()
