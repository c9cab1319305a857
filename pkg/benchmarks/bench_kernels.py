"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--skip-chain]

Each kernel is timed on identical inputs with both backends; the end-to-end
row runs a short Gibbs chain in a subprocess per backend, selected through
``ROTAMIX_PURE_PYTHON``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rotamix import _kernels_py as py
from rotamix import rotation as rc
from rotamix.prior import build_lag_sets

try:
    from rotamix import _kernels as cy
except ImportError:
    cy = None

EPS, TOL = rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL

CHAIN_SNIPPET = """
import time
from rotamix.dataio import default_truth, simulate_panel
from rotamix.prior import PriorConfig, build_lag_sets
from rotamix.sampler import McmcConfig, run_chain
data, _ = simulate_panel(default_truth(10), 100, seed=1)
start = time.perf_counter()
run_chain(data, PriorConfig.constant(2, 10, 10), build_lag_sets(10, q=3),
          McmcConfig(iterations=300, burn_in=100, seed=1))
print(time.perf_counter() - start)
"""


def kernel_cases(rng):
    n = 20_000
    u = rng.random((n, 2))
    comp = rng.integers(0, 4, n).astype(np.int64)
    theta = rng.uniform(0.1, 10, n)
    ug, v = rng.random(n), rng.random(n)

    T, k, a_t = 20, 4, 10
    lags = build_lag_sets(T, q=3)
    ptr, idx = lags.inverse_csr()
    eta = rng.multinomial(a_t, np.full(k, 0.25), size=T).astype(np.int64)
    pooled = lags.incidence() @ eta
    log_w = np.log(rng.dirichlet(np.ones(k), size=T))
    alpha = np.full(k, 0.25)
    uni = rng.random((T, k - 1))

    def sweep(mod):
        e, s = eta.copy(), pooled.copy()
        mod.eta_sweep(e, s, log_w, alpha, ptr, idx, uni)

    return {
        f"rotated_logpdf (n={n})": lambda mod: mod.rotated_logpdf(u, comp, theta, EPS, TOL),
        f"hfunc (n={n})": lambda mod: mod.hfunc(ug, v, comp, theta, EPS, TOL),
        "cond_mean (n=2000, grid 512)": lambda mod: mod.cond_mean(ug[:2000], comp[:2000], theta[:2000],
                                                                  512, EPS, TOL),
        f"eta_sweep (T={T}, a_t={a_t})": sweep,
    }


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def chain_time(pure: bool) -> float:
    env = dict(os.environ, ROTAMIX_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", CHAIN_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-chain", action="store_true")
    args = parser.parse_args(argv)
    if cy is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    rows = []
    for name, fn in kernel_cases(np.random.default_rng(0)).items():
        t_py = best_time(lambda: fn(py), args.repeat)
        t_cy = best_time(lambda: fn(cy), args.repeat)
        rows.append((name, t_py, t_cy))
    if not args.skip_chain:
        rows.append(("Gibbs chain, 300 iterations", chain_time(True), chain_time(False)))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>11}  {'cython':>11}  {'speed-up':>8}")
    for name, t_py, t_cy in rows:
        print(f"{name:<{width}}  {t_py * 1e3:9.3f}ms  {t_cy * 1e3:9.3f}ms  {t_py / t_cy:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
