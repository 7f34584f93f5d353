import numpy as np
import pytest

import resilkit as rk
from resilkit.model import (
    ControlSpace,
    StateSpace,
    SystemModel,
    TimeGrid,
    UncertaintyStructure,
)

# Four-level reservoir, horizon 3: x' = clip(x + u - w, 0, 3), u in {0,1},
# w in {0,1} with p = 1/2 each. Acceptable operation is {2, 3}.
M1_ACCEPTABLE = frozenset({2, 3})


def build_m1(robust=None, probs=(0.5, 0.5)):
    return rk.make_model(
        horizon=3,
        state_labels=("0", "1", "2", "3"),
        control_labels=("0", "1"),
        uncertainty_sets=("0", "1"),
        dynamics_fn=lambda t, x, u, w: min(3, max(0, x + u - w)),
        probs=probs,
        robust=robust,
    )


@pytest.fixture
def m1():
    return build_m1()


@pytest.fixture
def m1_benign():
    return build_m1(robust=("0",))


def random_model(
    rng,
    max_states=5,
    max_controls=2,
    max_w=2,
    max_horizon=3,
    with_probs=False,
    with_robust=False,
    cemetery_rate=0.1,
    min_states=1,
):
    """A seeded random system. Robust subsets stay full unless asked for;
    probabilities are ratios of small integers when asked for."""
    n = int(rng.integers(min_states, max_states + 1))
    nu = int(rng.integers(1, max_controls + 1))
    horizon = int(rng.integers(1, max_horizon + 1))
    nw = [int(rng.integers(1, max_w + 1)) for _ in range(horizon)]
    nw_max = max(nw)

    dynamics = rng.integers(0, n, size=(horizon, n, nu, nw_max)).astype(np.int32)
    dead = rng.random(dynamics.shape) < cemetery_rate
    dynamics[dead] = n

    constraints = rng.random((horizon, n, nu)) < 0.75
    for t in range(horizon):
        for x in range(n):
            if not constraints[t, x].any():
                constraints[t, x, int(rng.integers(nu))] = True

    sets = tuple(tuple(str(j) for j in range(nw[t])) for t in range(horizon))
    probs = None
    if with_probs:
        probs = []
        for t in range(horizon):
            weights = rng.integers(1, 5, size=nw[t])
            probs.append(tuple(weights / weights.sum()))
        probs = tuple(probs)
    robust = None
    if with_robust:
        robust = []
        for t in range(horizon):
            mask = rng.random(nw[t]) < 0.5
            if not mask.any():
                mask[int(rng.integers(nw[t]))] = True
            robust.append(tuple(int(j) for j in np.flatnonzero(mask)))
        robust = tuple(robust)

    return SystemModel(
        TimeGrid(horizon),
        StateSpace(tuple(str(i) for i in range(n))),
        ControlSpace(tuple(str(i) for i in range(nu))),
        UncertaintyStructure(sets, probs, robust),
        dynamics,
        constraints,
    )


def random_acceptable(rng, model):
    n = model.n_states
    count = int(rng.integers(1, n + 1))
    return frozenset(int(x) for x in rng.permutation(n)[:count])


def random_strategy(rng, model, kind=rk.MARKOV, start=0):
    policies = []
    for t in range(start, model.horizon):
        if kind == rk.MARKOV:
            table = rng.integers(0, model.n_controls, size=model.n_states)
        else:
            table = rng.integers(
                0,
                model.n_controls,
                size=(model.n_states, rk.n_prefixes(model, t, start)),
            )
        policies.append(rk.Policy(t, kind, table))
    return rk.Strategy(start, tuple(policies))
