"""Compiled versus pure-Python row codec on the relational backend.

    python3 benchmarks/compare_kernels.py --scale 4 --repetitions 20

Prints one CSV row per (codec, operation) and a speedup column when both
codecs are available.
"""

import argparse
import csv
import sys

from metavault.bench import compare_kernels
from metavault.corpus import DEFAULT_SEED


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=4)
    ap.add_argument("--repetitions", type=int, default=20)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)

    rows = compare_kernels(args.scale, args.repetitions, args.seed)
    base = {op: us for codec, op, us in rows if codec == "python"}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["codec", "operation", "mean_us", "speedup_vs_python"])
    for codec, op, us in rows:
        w.writerow([codec, op, f"{us:.1f}", f"{base[op] / us:.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
