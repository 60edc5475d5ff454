"""Experiment orchestration: coverage, power, causal discovery and scaling.

Each ``run_*`` function returns a :class:`ResultRecord` whose per-replicate
rows are enough to recompute every aggregate. Datasets are drawn from
streams keyed by ``(master_seed, design indices, replicate)`` and every CI
test gets a seed hashed from ``(master_seed, replicate)``, so rerunning an
echoed config reproduces the rows exactly (timings aside).
"""

import csv
import json
import multiprocessing
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import _rng
from .errors import ValidationError
from .fast import FastKciConfig, fastkci_test
from .kci import KciConfig, kci_test
from .pc import DEFAULT_MAX_COND, pc_skeleton, score_edges
from .synth import (
    DIRECT_EDGE,
    MIN_DAG_SAMPLES,
    SHARED_NOISE,
    CoverageSpec,
    PowerSpec,
    gen_coverage,
    gen_dag_setting_a,
    gen_dag_setting_b,
    gen_power,
)

KCI = "kci"
FASTKCI = "fastkci"
METHODS = (KCI, FASTKCI)
DEFAULT_SEED = 42
DEFAULT_TIMEOUT = 7200.0
ALPHAS = (0.01, 0.05)

ROW_FIELDS = {
    "test": ["method", "statistic", "p_value", "n", "elapsed_seconds"],
    "coverage": ["method", "D", "V_true", "replicate", "statistic", "p_value", "elapsed_seconds"],
    "power": [
        "method", "D", "V_true", "mode", "sigma_vio", "replicate",
        "statistic", "p_value", "elapsed_seconds",
    ],
    "discover": [
        "method", "setting", "sigma", "replicate", "precision", "recall", "f1",
        "n_tests", "elapsed_seconds",
    ],
    "scale": ["method", "V", "J", "n", "status", "elapsed_seconds"],
}


@dataclass(frozen=True)
class MethodSpec:
    """Which test to run and how; ``label`` names it in result rows."""

    method: str = KCI
    V: int = 10
    J: int = 16
    B: int = 1000
    lam: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")

    @property
    def label(self):
        return KCI if self.method == KCI else f"fastkci(V={self.V},J={self.J})"


def make_test(spec: MethodSpec, seed, threads=1):
    """Bind a method spec and seed into ``f(x, y, z) -> TestOutcome``."""
    inner = KciConfig(lam=spec.lam, null_samples=spec.B, seed=seed)
    if spec.method == KCI:
        return lambda x, y, z: kci_test(x, y, z, inner)
    cfg = FastKciConfig(V=spec.V, J=spec.J, inner=inner, max_parallel=threads)
    return lambda x, y, z: fastkci_test(x, y, z, cfg)


@dataclass
class ResultRecord:
    experiment: str
    config: Dict
    rows: List[Dict] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)
    created: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    def to_json(self):
        return {
            "experiment": self.experiment,
            "created": self.created,
            "config": self.config,
            "summary": self.summary,
            "rows": self.rows,
        }

    def write(self, out_dir):
        """Write ``<experiment>.csv`` and ``<experiment>.json`` under ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.experiment}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS[self.experiment])
            writer.writeheader()
            writer.writerows(self.rows)
        json_path = out / f"{self.experiment}.json"
        json_path.write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")
        return csv_path, json_path


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def rejection_rates(rows, keys, alphas=ALPHAS):
    """Group rows by ``keys`` and compute ``mean(p < alpha)`` per group."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r["p_value"])
    out = []
    for key, ps in groups.items():
        ps = np.asarray(ps)
        entry = dict(zip(keys, key))
        entry["replicates"] = int(ps.size)
        for a in alphas:
            entry[f"reject_{a:g}"] = float(np.mean(ps < a))
        out.append(entry)
    return out


def _ci_row(method, outcome, **extra):
    return {
        "method": method.label,
        **extra,
        "statistic": float(outcome.statistic),
        "p_value": float(outcome.p_value),
        "elapsed_seconds": float(outcome.elapsed_seconds),
    }


def run_coverage(n=600, Ds=(1,), V_trues=(1,), seeds=100, methods=(MethodSpec(),),
                 master_seed=DEFAULT_SEED, threads=1):
    """Type-I error of each method on conditionally independent data."""
    if n < 10 or seeds < 1:
        raise ValidationError("coverage needs n >= 10 and at least one seed")
    jobs = [(D, V, r) for D in Ds for V in V_trues for r in range(seeds)]

    def one(job):
        D, V, r = job
        ds = gen_coverage(CoverageSpec(n, D, V), _rng.data_stream(master_seed, D, V, r))
        seed = _rng.derive_seed(master_seed, r)
        return [
            _ci_row(m, make_test(m, seed)(ds.x, ds.y, ds.z), D=D, V_true=V, replicate=r)
            for m in methods
        ]

    rows = [row for rs in _pmap(one, jobs, threads) for row in rs]
    config = {
        "n": n, "Ds": list(Ds), "V_trues": list(V_trues), "seeds": seeds,
        "methods": [asdict(m) for m in methods], "master_seed": master_seed,
    }
    rec = ResultRecord("coverage", config, rows)
    rec.summary = {"rejection": rejection_rates(rows, ["method", "D", "V_true"])}
    return rec


def run_power(n=600, D=1, V_true=1, sigmas=(0.0, 0.5, 1.0, 2.0), mode=SHARED_NOISE,
              calibrated=False, seeds=100, methods=(MethodSpec(),),
              master_seed=DEFAULT_SEED, threads=1):
    """Rejection rates under violations of conditional independence.

    Replicate ``r`` reuses the same base dataset and violation draw across
    the ``sigmas`` grid, so the power curve is estimated with common random
    numbers.
    """
    if mode == DIRECT_EDGE and calibrated:
        sigmas = (0.0,)
    jobs = [(s, r) for s in sigmas for r in range(seeds)]

    def one(job):
        sigma, r = job
        spec = PowerSpec(CoverageSpec(n, D, V_true), sigma, mode, calibrated)
        ds = gen_power(spec, _rng.data_stream(master_seed, D, V_true, r))
        seed = _rng.derive_seed(master_seed, r)
        return [
            _ci_row(m, make_test(m, seed)(ds.x, ds.y, ds.z), D=D, V_true=V_true,
                    mode=mode, sigma_vio=float(sigma), replicate=r)
            for m in methods
        ]

    rows = [row for rs in _pmap(one, jobs, threads) for row in rs]
    config = {
        "n": n, "D": D, "V_true": V_true, "sigmas": [float(s) for s in sigmas],
        "mode": mode, "calibrated": calibrated, "seeds": seeds,
        "methods": [asdict(m) for m in methods], "master_seed": master_seed,
    }
    rec = ResultRecord("power", config, rows)
    rec.summary = {"power": rejection_rates(rows, ["method", "sigma_vio"])}
    return rec


def discovery_dataset(setting, n, sigma, master_seed, r):
    rng = _rng.data_stream(master_seed, ord(setting), r)
    if setting == "A":
        return gen_dag_setting_a(n, rng)
    return gen_dag_setting_b(n, sigma, rng)


def run_discover(setting="A", n=500, seeds=20, sigma=0.2, methods=(MethodSpec(),),
                 alpha=0.05, max_cond_size=DEFAULT_MAX_COND,
                 master_seed=DEFAULT_SEED, threads=1):
    """PC skeleton recovery with each CI test on random six-node DAGs."""
    if setting not in ("A", "B"):
        raise ValidationError(f"setting must be 'A' or 'B', got {setting!r}")
    if n < MIN_DAG_SAMPLES:
        raise ValidationError(f"discovery experiments need n >= {MIN_DAG_SAMPLES}")

    def one(r):
        ds = discovery_dataset(setting, n, sigma, master_seed, r)
        seed = _rng.derive_seed(master_seed, r)
        rows = []
        for m in methods:
            start = time.perf_counter()
            skel = pc_skeleton(ds.node_data, make_test(m, seed), alpha, max_cond_size)
            elapsed = time.perf_counter() - start
            sc = score_edges(skel, ds.truth)
            rows.append({
                "method": m.label, "setting": setting, "sigma": float(sigma), "replicate": r,
                "precision": sc.precision, "recall": sc.recall, "f1": sc.f1,
                "n_tests": skel.n_tests, "elapsed_seconds": elapsed,
            })
        return rows

    rows = [row for rs in _pmap(one, range(seeds), threads) for row in rs]
    config = {
        "setting": setting, "n": n, "seeds": seeds, "sigma": float(sigma), "alpha": alpha,
        "max_cond_size": max_cond_size, "methods": [asdict(m) for m in methods],
        "master_seed": master_seed,
    }
    rec = ResultRecord("discover", config, rows)
    means = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m.label]
        means.append({
            "method": m.label,
            **{k: float(np.mean([r[k] for r in sel]))
               for k in ("precision", "recall", "f1", "elapsed_seconds")},
        })
    rec.summary = {"means": means}
    return rec


def _timed_call(spec, seed, threads, data, conn=None):
    x, y, z = data
    test = make_test(spec, seed, threads)
    start = time.perf_counter()
    test(x, y, z)
    elapsed = time.perf_counter() - start
    if conn is not None:
        conn.send(elapsed)
        conn.close()
    return elapsed


def time_single_test(spec, data, seed=DEFAULT_SEED, threads=1, timeout=None):
    """Wall-clock seconds of one test call, or ``None`` on timeout.

    With a timeout the call runs in a forked child process that is killed
    when the limit passes.
    """
    if timeout is None:
        return _timed_call(spec, seed, threads, data)
    ctx = multiprocessing.get_context("fork")
    recv, send = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_timed_call, args=(spec, seed, threads, data, send))
    proc.start()
    send.close()
    if recv.poll(timeout):
        elapsed = recv.recv()
        proc.join()
        return elapsed
    proc.terminate()
    proc.join()
    return None


def loglog_slope(ns, times):
    """Least-squares slope of ``log(time)`` against ``log(n)``."""
    ns = np.asarray(ns, dtype=float)
    times = np.asarray(times, dtype=float)
    ok = np.isfinite(times) & (times > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(ns[ok]), np.log(times[ok]), 1)[0])


def run_scale(ns=(500, 1000, 2000, 4000), methods=(MethodSpec(),), D=1, V_true=1,
              master_seed=DEFAULT_SEED, threads=1, timeout=DEFAULT_TIMEOUT):
    """Time one CI test per method across sample sizes.

    Only the test call is timed. Cells that exceed ``timeout`` seconds are
    recorded as skipped and excluded from the slope fit.
    """
    rows = []
    for n in ns:
        ds = gen_coverage(CoverageSpec(n, D, V_true), _rng.data_stream(master_seed, n))
        for m in methods:
            if m.method == FASTKCI and n < m.V * 10:
                rows.append({"method": m.label, "V": m.V, "J": m.J, "n": n,
                             "status": "skipped", "elapsed_seconds": None})
                continue
            t = time_single_test(m, (ds.x, ds.y, ds.z), master_seed, threads, timeout)
            rows.append({
                "method": m.label, "V": m.V if m.method == FASTKCI else None,
                "J": m.J if m.method == FASTKCI else None, "n": n,
                "status": "ok" if t is not None else "timeout",
                "elapsed_seconds": t,
            })
    config = {
        "ns": list(ns), "D": D, "V_true": V_true, "methods": [asdict(m) for m in methods],
        "master_seed": master_seed, "threads": threads, "timeout": timeout,
    }
    rec = ResultRecord("scale", config, rows)
    slopes = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m.label]
        slopes.append({
            "method": m.label,
            "loglog_slope": loglog_slope([r["n"] for r in sel], [r["elapsed_seconds"] for r in sel]),
        })
    rec.summary = {"slopes": slopes}
    return rec
