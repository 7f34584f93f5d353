"""Compare the pure-Python and compiled closed-loop simulation kernels.

Usage: python benchmarks/bench_sim.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from resilkit._sim import _fast  # noqa: F401  (import check only)
from resilkit._sim import backend_name, simulate_batch
from resilkit.model import (
    ControlSpace,
    StateSpace,
    SystemModel,
    TimeGrid,
    UncertaintyStructure,
    packed_tables,
)


def build_case(rng, n=40, nu=4, nw=3, horizon=12, n_policies=256, n_scen=200):
    dynamics = rng.integers(0, n + 1, size=(horizon, n, nu, nw), dtype=np.int32)
    constraints = rng.random((horizon, n, nu)) < 0.8
    for t in range(horizon):
        for x in range(n):
            if not constraints[t, x].any():
                constraints[t, x, rng.integers(nu)] = True
    model = SystemModel(
        TimeGrid(horizon),
        StateSpace(tuple(str(i) for i in range(n))),
        ControlSpace(tuple(str(i) for i in range(nu))),
        UncertaintyStructure(
            tuple(tuple(str(w) for w in range(nw)) for _ in range(horizon))
        ),
        dynamics,
        constraints,
    )
    policies = rng.integers(0, nu, size=(n_policies, horizon, n + 1), dtype=np.int32)
    policies[:, :, n] = 0
    scenarios = rng.integers(0, nw, size=(n_scen, horizon), dtype=np.int32)
    x0 = np.zeros(1, dtype=np.int32) + rng.integers(n)
    return model, policies, scenarios, int(x0[0])


def run(backend, dyn, ok, policies, scenarios, x0, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = simulate_batch(dyn, ok, policies, scenarios, x0, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(7)
    model, policies, scenarios, x0 = build_case(rng)
    dyn, ok = packed_tables(model)
    steps = policies.shape[0] * scenarios.shape[0] * model.horizon

    print(f"default backend: {backend_name()}")
    print(
        f"case: {policies.shape[0]} policies x {scenarios.shape[0]} scenarios"
        f" x horizon {model.horizon}  ({steps} steps)"
    )
    t_py, out_py = run("py", dyn, ok, policies, scenarios, x0, args.repeat)
    print(f"py   backend: {t_py * 1e3:8.2f} ms   {steps / t_py / 1e6:8.2f} Msteps/s")
    t_fa, out_fa = run("fast", dyn, ok, policies, scenarios, x0, args.repeat)
    print(f"fast backend: {t_fa * 1e3:8.2f} ms   {steps / t_fa / 1e6:8.2f} Msteps/s")
    same = np.array_equal(out_py[0], out_fa[0]) and np.array_equal(
        out_py[1], out_fa[1]
    )
    print(f"outputs identical: {same}")
    print(f"speedup: {t_py / t_fa:.1f}x")


if __name__ == "__main__":
    main()
