"""Exact decision procedures for resilience.

Backward dynamic programming for the viability family (robust kernel,
stochastic viability value, layered min-max recovery) and an exhaustive
strategy search for every other regime. Witness policies use the smallest
control index on ties so outputs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError, InputError
from .model import DEFAULT_SCENARIO_CAP, SystemModel, admissible_controls
from .regimes import (
    RobustRecovery,
    StochasticViability,
    Viability,
    regime_membership,
    validate_regime,
)
from .strategy import (
    DEFAULT_STRATEGY_CAP,
    MARKOV,
    Strategy,
    build_bundle,
    count_strategies,
    enumerate_strategies,
    markov_strategy,
)


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Per-time viability kernel membership with witness controls.

    member: bool (K+1, n); witness: int32 (K, n), -1 outside the kernel.
    domain records whether the one-step condition ranged over the robust
    subsets or the full uncertainty sets.
    """

    acceptable: frozenset
    member: np.ndarray
    witness: np.ndarray
    domain: str

    def member_set(self, t):
        return frozenset(np.flatnonzero(self.member[t]))


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Stochastic viability value V_t(x) with argmax witness controls."""

    acceptable: frozenset
    value: np.ndarray  # float64 (K+1, n)
    witness: np.ndarray  # int32 (K, n), -1 where V = 0

    def resilient_set(self, t, beta):
        return frozenset(np.flatnonzero(self.value[t] >= beta))


@dataclass(frozen=True, eq=False)
class RecoveryTable:
    """Layered robust-recovery structure.

    layers[k, t, x] says x can be driven into the kernel within k steps
    from time t, whatever the robust scenario. min_layer is the least such
    k (inf when none within the deadline); r_star is min_layer at time 0.
    witness[t, x] is the control of the least-layer policy.
    """

    acceptable: frozenset
    deadline: int
    layers: np.ndarray  # bool (deadline+1, K+1, n)
    min_layer: np.ndarray  # float64 (K+1, n)
    witness: np.ndarray  # int32 (K, n), -1 where no finite layer
    r_star: np.ndarray  # float64 (n,)

    def resilient_set(self, t):
        """States resilient for RobustRecovery(acceptable, deadline) at t."""
        return frozenset(
            np.flatnonzero(self.min_layer[t] <= self.deadline - t)
        )


@dataclass(frozen=True, eq=False)
class ResilientSet:
    """resilient_states result: members plus one witness strategy each."""

    start: int
    regime: object
    strategy_class: str
    members: frozenset
    witnesses: dict  # state index -> Strategy
    method: str  # kernel | value | recovery | exhaustive


def _check_acceptable(model, acceptable):
    acceptable = frozenset(acceptable)
    for x in acceptable:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < model.n_states:
            raise InputError(f"acceptable set contains invalid state {x!r}")
    return acceptable


def _uncertainty_ranges(model, domain):
    if domain == "robust":
        if model.robust_scenarios is not None:
            raise ConfigurationError(
                "explicit robust scenario lists are not a per-time product; "
                "the backward recursions need per-time robust subsets "
                "(membership and oracle paths honor the explicit list)"
            )
        return model.uncertainty.robust
    if domain != "full":
        raise InputError(f"unknown uncertainty domain {domain!r}")
    return tuple(
        tuple(range(model.uncertainty.size(t))) for t in range(model.horizon)
    )


def robust_viability_kernel(
    model: SystemModel, acceptable, domain: str = "robust"
) -> KernelTable:
    """States from which some admissible control keeps the state in
    `acceptable` at every time, whatever the uncertainty in the domain
    ("robust": the per-time robust subsets; "full": the whole sets)."""
    acceptable = _check_acceptable(model, acceptable)
    ranges = _uncertainty_ranges(model, domain)
    K, n = model.horizon, model.n_states
    member = np.zeros((K + 1, n), dtype=bool)
    witness = np.full((K, n), -1, dtype=np.int32)
    for x in acceptable:
        member[K, x] = True
    for t in range(K - 1, -1, -1):
        for x in acceptable:
            for u in admissible_controls(model, t, x):
                ok = True
                for w in ranges[t]:
                    nxt = model.dynamics[t, x, u, w]
                    if nxt == model.cemetery or not member[t + 1, nxt]:
                        ok = False
                        break
                if ok:
                    member[t, x] = True
                    witness[t, x] = u
                    break
    member.setflags(write=False)
    witness.setflags(write=False)
    return KernelTable(acceptable, member, witness, domain)


def stochastic_viability_value(model: SystemModel, acceptable) -> ValueTable:
    """Maximal probability of staying in `acceptable` with admissible
    controls, by backward recursion under per-time independent noise."""
    acceptable = _check_acceptable(model, acceptable)
    if not model.uncertainty.has_probs:
        raise ConfigurationError(
            "stochastic viability needs per-time probability vectors"
        )
    if model.scenario_probs is not None:
        raise ConfigurationError(
            "explicit joint distributions are not supported by the value "
            "recursion (it assumes independence across times); use the "
            "membership or oracle path"
        )
    K, n = model.horizon, model.n_states
    value = np.zeros((K + 1, n), dtype=np.float64)
    witness = np.full((K, n), -1, dtype=np.int32)
    for x in acceptable:
        value[K, x] = 1.0
    for t in range(K - 1, -1, -1):
        probs = model.uncertainty.probs[t]
        for x in acceptable:
            best = -1.0
            best_u = -1
            for u in admissible_controls(model, t, x):
                v = 0.0
                for w in range(model.uncertainty.size(t)):
                    nxt = model.dynamics[t, x, u, w]
                    if nxt != model.cemetery:
                        v += float(probs[w]) * value[t + 1, nxt]
                if v > best:
                    best = v
                    best_u = u
            value[t, x] = best
            witness[t, x] = best_u
    value.setflags(write=False)
    witness.setflags(write=False)
    return ValueTable(acceptable, value, witness)


def robust_recovery_table(
    model: SystemModel, acceptable, deadline: int
) -> RecoveryTable:
    """Layered reachability of the robust kernel: layer k at time t holds
    the states that can reach viability within k steps whatever the robust
    scenario. r_star is the least layer at time 0 (the min over strategies
    of the max over robust scenarios of the recovery time), +inf beyond the
    deadline."""
    acceptable = _check_acceptable(model, acceptable)
    if not 0 <= deadline <= model.horizon:
        raise InputError(
            f"deadline {deadline} outside 0..{model.horizon}"
        )
    ranges = _uncertainty_ranges(model, "robust")
    kernel = robust_viability_kernel(model, acceptable, domain="robust")
    K, n = model.horizon, model.n_states
    layers = np.zeros((deadline + 1, K + 1, n), dtype=bool)
    layers[0] = kernel.member
    layer_witness = np.full((deadline + 1, K, n), -1, dtype=np.int32)
    for k in range(1, deadline + 1):
        layers[k, K] = layers[k - 1, K]
        for t in range(K):
            for x in range(n):
                if layers[k - 1, t, x]:
                    layers[k, t, x] = True
                    continue
                for u in admissible_controls(model, t, x):
                    ok = True
                    for w in ranges[t]:
                        nxt = model.dynamics[t, x, u, w]
                        if nxt == model.cemetery or not layers[k - 1, t + 1, nxt]:
                            ok = False
                            break
                    if ok:
                        layers[k, t, x] = True
                        layer_witness[k, t, x] = u
                        break

    min_layer = np.full((K + 1, n), math.inf, dtype=np.float64)
    for k in range(deadline, -1, -1):
        min_layer[layers[k]] = k
    witness = np.full((K, n), -1, dtype=np.int32)
    for t in range(K):
        for x in range(n):
            k = min_layer[t, x]
            if k == math.inf:
                continue
            if k == 0:
                witness[t, x] = kernel.witness[t, x]
            else:
                witness[t, x] = layer_witness[int(k), t, x]
    r_star = min_layer[0].copy()
    for arr in (layers, min_layer, witness, r_star):
        arr.setflags(write=False)
    return RecoveryTable(acceptable, deadline, layers, min_layer, witness, r_star)


def fill_policy(model, picks, start):
    """Markov strategy from per-(t, x) picks; -1 entries fall back to the
    least admissible control (they are never visited by the witnesses)."""
    K, n = model.horizon, model.n_states
    tables = np.zeros((K - start, n), dtype=np.int32)
    for t in range(start, K):
        for x in range(n):
            u = picks[t, x]
            tables[t - start, x] = (
                u if u >= 0 else admissible_controls(model, t, x)[0]
            )
    return markov_strategy(model, tables, start)


def check_resilient(
    model: SystemModel,
    strategy: Strategy,
    x0: int,
    start: int,
    regime,
    cap: int = DEFAULT_SCENARIO_CAP,
) -> bool:
    """Does the strategy realize the regime from x0 at time `start`?

    Builds the closed-loop bundle over the regime's quantification domain
    (the robust subset for RobustRecovery, the full scenario set otherwise)
    and evaluates membership.
    """
    validate_regime(model, regime)
    robust_only = isinstance(regime, RobustRecovery)
    bundle = build_bundle(
        model, strategy, x0, start=start, robust_only=robust_only, cap=cap
    )
    return regime_membership(model, regime, bundle)


def resilient_states(
    model: SystemModel,
    start: int,
    regime,
    strategy_class: str = MARKOV,
    cap: int = DEFAULT_STRATEGY_CAP,
    scenario_cap: int = DEFAULT_SCENARIO_CAP,
) -> ResilientSet:
    """All states resilient at `start`, each with a witness strategy.

    Viability, RobustRecovery, and StochasticViability dispatch to the
    backward recursions (exact for both strategy classes); every other
    regime is decided by exhaustive search over the declared class.
    """
    validate_regime(model, regime)
    if not 0 <= start <= model.horizon:
        raise InputError(f"start {start} outside 0..{model.horizon}")

    if isinstance(regime, Viability):
        kernel = robust_viability_kernel(model, regime.acceptable, domain="full")
        members = kernel.member_set(start)
        strat = fill_policy(model, kernel.witness, start)
        return ResilientSet(
            start, regime, strategy_class, members,
            {x: strat for x in members}, "kernel",
        )

    if isinstance(regime, RobustRecovery):
        table = robust_recovery_table(model, regime.acceptable, regime.deadline)
        members = table.resilient_set(start)
        strat = fill_policy(model, table.witness, start)
        return ResilientSet(
            start, regime, strategy_class, members,
            {x: strat for x in members}, "recovery",
        )

    if isinstance(regime, StochasticViability):
        table = stochastic_viability_value(model, regime.acceptable)
        members = table.resilient_set(start, regime.beta)
        strat = fill_policy(model, table.witness, start)
        return ResilientSet(
            start, regime, strategy_class, members,
            {x: strat for x in members}, "value",
        )

    total = count_strategies(model, strategy_class, start)
    if total > cap:
        raise CapacityError(
            f"{total} {strategy_class} strategies exceed cap {cap}; "
            "viability-family regimes dispatch to exact recursions instead"
        )
    witnesses = {}
    pending = set(range(model.n_states))
    for strat in enumerate_strategies(model, strategy_class, start, cap=cap):
        if not pending:
            break
        for x0 in sorted(pending):
            if check_resilient(model, strat, x0, start, regime, cap=scenario_cap):
                witnesses[x0] = strat
                pending.discard(x0)
    return ResilientSet(
        start, regime, strategy_class, frozenset(witnesses), witnesses,
        "exhaustive",
    )
