"""What a single FastKCI replicate looks like from the inside.

Z is a three-component mixture. Each replicate draws mixture parameters from
a prior fitted to Z, assigns samples to blocks, runs the kernel test per
block and scores the partition by how well Z explains X and Y inside each
block. Better-scoring partitions get more weight in the final answer.
"""

import numpy as np

from fastkci import _rng
from fastkci.fast import FastKciConfig, importance_weights, run_partition_replicate
from fastkci.kernels import standardize
from fastkci.partition import fit_hyper
from fastkci.synth import CoverageSpec, gen_coverage

ds = gen_coverage(CoverageSpec(900, 1, 3), _rng.data_stream(3))
cfg = FastKciConfig(V=3, J=6)
hyper = fit_hyper(ds.z)
scaled = tuple(standardize(a) for a in (ds.x, ds.y, ds.z))

results = [run_partition_replicate(ds.x, ds.y, ds.z, cfg, j, hyper, scaled) for j in range(cfg.J)]
weights = importance_weights([r.log_weight for r in results])

print("prior mean of Z:", np.round(hyper.mu0, 2), " prior scale:", np.round(hyper.psi.ravel(), 2))
print(f"{'j':>2} {'sizes':<18}{'T_j':>9}{'log-lik':>12}{'weight':>9}")
for j, (r, w) in enumerate(zip(results, weights)):
    print(f"{j:>2} {str(r.cluster_sizes.tolist()):<18}{r.statistic:>9.4f}{r.log_weight:>12.1f}{w:>9.3f}")
print("weighted statistic:", round(float(weights @ [r.statistic for r in results]), 4))
