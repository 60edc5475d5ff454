"""End-to-end acceptance checks.

Each test appends a ``criterion N: PASS/FAIL`` line that is printed in the
terminal summary, then asserts. The Monte-Carlo criteria take most of the
run time (roughly 1.5 to 2 hours on one core).
"""


import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

from fastkci import _rng, bench
from fastkci.bench import FASTKCI, KCI, MethodSpec
from fastkci.fast import FastKciConfig, PartitionAssignment, fastkci_test, replicate_from_partition
from fastkci.kci import KciConfig, kci_test, null_weights, residual_kernels, spectral_null_samples
from fastkci.partition import relabel_by_first_appearance
from fastkci.synth import DIRECT_EDGE, SHARED_NOISE, CoverageSpec, gen_coverage

from conftest import ACCEPTANCE_LINES

MASTER = 42


def report(k, passed, detail):
    line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def rate(rows, method, alpha, **where):
    ps = [r["p_value"] for r in rows
          if r["method"] == method and all(r[k] == v for k, v in where.items())]
    return float(np.mean(np.array(ps) < alpha)), len(ps)


def _std(a):
    a = a - a.mean(0)
    sd = a.std(0)
    return np.where(sd > 0, a / np.where(sd > 0, sd, 1), 0.0)


def _centered_rbf(a):
    n = a.shape[0]
    if not np.any(a != a[0]):
        return np.zeros((n, n))
    sigma = np.median(pdist(a))
    d2 = ((a[:, None, :] - a[None, :, :]) ** 2).sum(-1)
    h = np.eye(n) - 1.0 / n
    return h @ np.exp(-d2 / (2 * sigma**2)) @ h


def oracle_residual_kernels(x, y, z, lam=1e-3):
    """Dense, inverse-based residual kernels written independently of the package."""
    n = x.shape[0]
    r = lam * np.linalg.inv(_centered_rbf(_std(z)) + lam * np.eye(n))
    kx = r @ _centered_rbf(np.hstack([_std(x), _std(z)])) @ r
    ky = r @ _centered_rbf(_std(y)) @ r
    return kx, ky


def test_criterion_1_degenerate_equivalence():
    worst, mismatched = 0.0, 0
    for s in range(50):
        rng = np.random.default_rng(s)
        z = rng.normal(size=(200, 2))
        x = np.sin(z[:, :1]) + 0.5 * rng.normal(size=(200, 1))
        y = z[:, 1:] ** 2 + 0.5 * rng.normal(size=(200, 1))
        inner = KciConfig(seed=_rng.derive_seed(MASTER, s))
        a = kci_test(x, y, z, inner)
        b = fastkci_test(x, y, z, FastKciConfig(V=1, J=1, inner=inner))
        worst = max(worst, abs(a.statistic - b.statistic) / abs(a.statistic))
        mismatched += a.p_value != b.p_value
    report(1, worst <= 1e-10 and mismatched == 0,
           f"max relative statistic gap {worst:.2e}, p-value mismatches {mismatched}/50")


def test_criterion_2_block_trace_identity():
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(1000 + s)
        n = 120
        z = rng.normal(size=(n, 2))
        x = np.tanh(z[:, :1]) + 0.4 * rng.normal(size=(n, 1))
        y = z[:, 1:] * z[:, :1] + 0.4 * rng.normal(size=(n, 1))
        labels = relabel_by_first_appearance(rng.permutation(np.arange(n) % 3))
        part = PartitionAssignment(labels, np.bincount(labels), 3, 3)
        res = replicate_from_partition(x, y, z, part, FastKciConfig(V=3, J=1), 0)
        impl = sum(t * size for t, size in zip(res.block_statistics, part.cluster_sizes))
        bx, by = np.zeros((n, n)), np.zeros((n, n))
        for idx in part.blocks():
            kx, ky = oracle_residual_kernels(x[idx], y[idx], z[idx])
            bx[np.ix_(idx, idx)] = kx
            by[np.ix_(idx, idx)] = ky
        naive = 0.0
        for i in range(n):
            for k in range(n):
                naive += bx[i, k] * by[k, i]
        worst = max(worst, abs(impl - naive) / abs(naive))
    report(2, worst <= 1e-9, f"max relative trace gap {worst:.2e} over 20 datasets")


def test_criterion_3_type_i_calibration():
    methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=3, J=16)]
    rec = bench.run_coverage(600, (1, 3), (1, 3), 200, methods, master_seed=MASTER)
    cells, ok = [], True
    for m in methods:
        for D in (1, 3):
            for V in (1, 3):
                r05, _ = rate(rec.rows, m.label, 0.05, D=D, V_true=V)
                r01, _ = rate(rec.rows, m.label, 0.01, D=D, V_true=V)
                good = 0.02 <= r05 <= 0.10 and 0.0 <= r01 <= 0.035
                ok &= good
                cells.append(f"{m.label} D={D} V={V}: {r05:.3f}/{r01:.3f}{'' if good else ' (out)'}")
    report(3, ok, "rejection at 0.05/0.01; " + "; ".join(cells))


def test_criterion_4_power_anchor():
    methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=3, J=16)]
    rec = bench.run_power(1200, 1, 1, mode=DIRECT_EDGE, calibrated=True, seeds=200,
                          methods=methods, master_seed=MASTER)
    p_kci, _ = rate(rec.rows, methods[0].label, 0.05)
    p_fast, _ = rate(rec.rows, methods[1].label, 0.05)
    ok = 0.83 <= p_kci <= 0.99 and abs(p_fast - p_kci) <= 0.12
    report(4, ok, f"n=1200, 200 seeds: KCI power {p_kci:.3f}, FastKCI(V=3,J=16) {p_fast:.3f}")


def test_criterion_5_power_monotone():
    s = 0.25
    grid = (0.0, s, 2 * s, 4 * s)
    methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=3, J=16)]
    rec = bench.run_power(600, 1, 1, grid, SHARED_NOISE, seeds=100, methods=methods,
                          master_seed=MASTER)
    ok, curves = True, []
    for m in methods:
        curve = [rate(rec.rows, m.label, 0.05, sigma_vio=g)[0] for g in grid]
        ok &= all(b >= a - 0.07 for a, b in zip(curve, curve[1:]))
        curves.append(f"{m.label} {[round(c, 2) for c in curve]}")
    report(5, ok, f"sigma grid {list(grid)}: " + "; ".join(curves))


def test_criterion_6_null_uniformity():
    methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=3, J=16)]
    rec = bench.run_coverage(300, (1,), (1,), 200, methods, master_seed=MASTER + 6)
    ks = {}
    for m in methods:
        ps = [r["p_value"] for r in rec.rows if r["method"] == m.label]
        ks[m.label] = stats.kstest(ps, "uniform").pvalue
    report(6, all(v > 0.01 for v in ks.values()),
           "KS p-values " + ", ".join(f"{k} {v:.3f}" for k, v in ks.items()))


def test_criterion_7_discovery_parity():
    methods = [MethodSpec(KCI), MethodSpec(FASTKCI, V=3, J=8)]
    ok, parts = True, []
    for setting in ("A", "B"):
        rec = bench.run_discover(setting, 500, 20, 0.2, methods, master_seed=MASTER)
        f1 = {m["method"]: m["f1"] for m in rec.summary["means"]}
        fk, ff = f1[methods[0].label], f1[methods[1].label]
        good = abs(fk - ff) <= 0.15 and (setting == "B" or min(fk, ff) >= 0.6)
        ok &= good
        parts.append(f"setting {setting}: F1 KCI {fk:.3f}, FastKCI {ff:.3f}")
    report(7, ok, "; ".join(parts))


def test_criterion_8_scaling():
    ns = (500, 1000, 2000, 4000)
    rec = bench.run_scale(ns, [MethodSpec(KCI)], master_seed=MASTER, threads=1)
    times = [r["elapsed_seconds"] for r in rec.rows]
    slope = rec.summary["slopes"][0]["loglog_slope"]
    ds = gen_coverage(CoverageSpec(4000, 1, 1), _rng.data_stream(MASTER, 4000))
    fast = bench.time_single_test(MethodSpec(FASTKCI, V=10, J=8), (ds.x, ds.y, ds.z),
                                  MASTER, threads=8)
    ratio = times[-1] / fast
    ok = slope is not None and 2.3 <= slope <= 3.3 and ratio >= 5
    report(8, ok, f"KCI times {[round(t, 2) for t in times]} s, slope {slope:.2f}; "
                  f"FastKCI(V=10,J=8,8 threads) at n=4000 {fast:.2f} s, speedup {ratio:.1f}x")


def test_criterion_9_spectral_null_moment():
    worst = 0.0
    cfg = KciConfig(null_samples=100000)
    for s in range(10):
        rng = np.random.default_rng(900 + s)
        z = rng.normal(size=(100, 1))
        x = z + rng.normal(size=(100, 1))
        y = np.cos(z) + rng.normal(size=(100, 1))
        kx, ky = residual_kernels(x, y, z)
        null = spectral_null_samples(kx, ky, cfg, _rng.null_stream(s))
        expected = null_weights(kx, ky).sum() / 100
        worst = max(worst, abs(null.mean() - expected) / expected)
    report(9, worst <= 0.02, f"max relative first-moment error {worst:.4f} over 10 pairs")


def test_criterion_10_determinism_and_threads():
    methods = [MethodSpec(KCI, B=500), MethodSpec(FASTKCI, V=3, J=8, B=500)]
    same = True
    runs = [
        lambda t: bench.run_coverage(300, (2,), (3,), 8, methods, MASTER, threads=t),
        lambda t: bench.run_power(300, 1, 1, (0.0, 0.5), seeds=4, methods=methods,
                                  master_seed=MASTER, threads=t),
        lambda t: bench.run_discover("B", 200, 2, 0.5, methods, master_seed=MASTER, threads=t),
    ]
    keys = ("statistic", "p_value", "precision", "recall", "f1")
    for run in runs:
        a, b = run(1), run(8)
        strip = lambda rows: [{k: r[k] for k in keys if k in r} for r in rows]
        same &= strip(a.rows) == strip(b.rows)
    for s in range(3):
        ds = gen_coverage(CoverageSpec(400, 2, 3), _rng.data_stream(MASTER, 10, s))
        outs = [fastkci_test(ds.x, ds.y, ds.z, FastKciConfig(V=3, J=8, max_parallel=t))
                for t in (1, 8)]
        same &= outs[0].statistic == outs[1].statistic and outs[0].p_value == outs[1].p_value
    report(10, same, "coverage, power, discovery and FastKCI reruns with 1 vs 8 threads "
                     + ("identical" if same else "differ"))
