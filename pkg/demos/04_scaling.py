"""Wall-clock cost of one test as the sample grows.

Full KCI works with n x n matrices and pays roughly cubic time. FastKCI runs
J replicates over V blocks of about n / V samples each. Pass larger sizes on
the command line to extend the sweep, for example ``python 04_scaling.py 500
1000 2000 4000``.
"""

import sys

from fastkci import bench
from fastkci.bench import FASTKCI, KCI, MethodSpec

ns = [int(a) for a in sys.argv[1:]] or [250, 500, 1000]
methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=5, J=4)]
rec = bench.run_scale(ns, methods, threads=1, timeout=600)

for row in rec.rows:
    t = row["elapsed_seconds"]
    print(f"{row['method']:>18}  n={row['n']:<6} {'-' if t is None else f'{t:.2f} s'}")
for s in rec.summary["slopes"]:
    slope = s["loglog_slope"]
    print(f"{s['method']:>18}  log-log slope {'-' if slope is None else f'{slope:.2f}'}")
