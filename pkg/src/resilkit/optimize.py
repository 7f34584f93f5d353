"""Risk-minimizing selection among resilient strategies.

The certified path enumerates the whole strategy class, keeps the
lexicographically least strict minimizer, and reports exactly the value
evaluate_risk assigns to the reported strategy. A documented dynamic
programming fast path covers the one family where constrained DP is exact:
a surely-viable regime with an additive expected cost. There, controls are
first restricted at each (t, x) to the kernel-preserving ones, then a
standard cost recursion picks the cheapest.

An empty feasible set is an answer, not an error: the result carries
resilient=False and value +inf.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import check_resilient, fill_policy, robust_viability_kernel
from .errors import CapacityError, ConfigurationError, InputError
from .model import SystemModel, admissible_controls
from .regimes import StochasticViability, Viability, validate_regime
from .risk import (
    Composed,
    ControlEffort,
    Expectation,
    TabularCost,
    TerminalMiss,
    TimeOutside,
    evaluate_risk,
    validate_risk,
)
from .strategy import (
    DEFAULT_STRATEGY_CAP,
    MARKOV,
    Strategy,
    build_bundle,
    count_strategies,
    strategy_from_rank,
)

EXHAUSTIVE = "exhaustive"
DP = "dp"


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    """Outcome of minimize_risk.

    value equals evaluate_risk of the reported strategy's bundle (bit-exact
    in exhaustive mode); examined counts the resilient strategies evaluated
    (0 for the DP certificate, which never enumerates)."""

    resilient: bool
    value: float
    strategy: Strategy
    examined: int
    certificate: str
    strategy_class: str


def _additive_tables(model, cost):
    """(step_costs (K, n, nu), terminal_costs (n,)) for per-time additive
    cost kinds; None when the kind is not additive."""
    K, n, nu = model.horizon, model.n_states, model.n_controls
    step = np.zeros((K, n, nu), dtype=np.float64)
    terminal = np.zeros(n, dtype=np.float64)
    if isinstance(cost, TimeOutside):
        outside = np.array(
            [x not in cost.acceptable for x in range(n)], dtype=np.float64
        )
        step += outside[None, :, None]
        terminal += outside
    elif isinstance(cost, ControlEffort):
        if cost.rates is not None:
            rates = np.asarray(cost.rates, dtype=np.float64)
        else:
            rates = model.controls.coords[:, 0].astype(np.float64)
        step += rates[None, None, :]
    elif isinstance(cost, TerminalMiss):
        terminal += np.array(
            [x not in cost.acceptable for x in range(n)], dtype=np.float64
        )
    elif isinstance(cost, TabularCost):
        step += cost.state_costs[:K, :, None]
        step += cost.control_costs[:, None, :]
        terminal += cost.state_costs[K]
    else:
        return None
    return step, terminal


def _dp_supported(model, regime, risk, strategy_class):
    """Reason the DP fast path does not apply, or None when it does."""
    if strategy_class != MARKOV:
        return "the DP certificate is only produced for the Markov class"
    if not isinstance(risk, Composed) or not isinstance(risk.outer, Expectation):
        return "the DP fast path needs an expected composed cost"
    if _additive_tables(model, risk.cost) is None:
        return "the DP fast path needs a per-time additive cost"
    if not model.uncertainty.has_probs:
        return "expected costs need per-time probability vectors"
    if model.scenario_probs is not None:
        return "the DP fast path assumes independence across times"
    if isinstance(regime, Viability):
        return None
    if isinstance(regime, StochasticViability) and regime.beta == 1.0:
        for t in range(model.horizon):
            if any(p <= 0.0 for p in model.uncertainty.probs[t]):
                return (
                    "beta = 1 only matches sure viability when every "
                    "uncertainty value has positive probability"
                )
        return None
    return "the DP fast path covers surely-viable regimes only"


def _minimize_dp(model, x0, start, regime, risk, strategy_class):
    acceptable = regime.acceptable
    kernel = robust_viability_kernel(model, acceptable, domain="full")
    if not kernel.member[start, x0]:
        return OptimizationResult(False, math.inf, None, 0, DP, strategy_class)
    step, terminal = _additive_tables(model, risk.cost)
    K, n = model.horizon, model.n_states
    value = np.full((K + 1, n), math.inf, dtype=np.float64)
    picks = np.full((K, n), -1, dtype=np.int32)
    for x in range(n):
        if kernel.member[K, x]:
            value[K, x] = terminal[x]
    for t in range(K - 1, start - 1, -1):
        probs = model.uncertainty.probs[t]
        for x in range(n):
            if not kernel.member[t, x]:
                continue
            best = math.inf
            best_u = -1
            for u in admissible_controls(model, t, x):
                keeps = True
                for w in range(model.uncertainty.size(t)):
                    nxt = model.dynamics[t, x, u, w]
                    if nxt == model.cemetery or not kernel.member[t + 1, nxt]:
                        keeps = False
                        break
                if not keeps:
                    continue
                v = step[t, x, u]
                for w in range(model.uncertainty.size(t)):
                    v += float(probs[w]) * value[t + 1, model.dynamics[t, x, u, w]]
                if v < best:
                    best = v
                    best_u = u
            value[t, x] = best
            picks[t, x] = best_u
    strategy = fill_policy(model, picks, start)
    bundle = build_bundle(model, strategy, x0, start=start, robust_only=False)
    reported = evaluate_risk(model, risk, bundle)
    return OptimizationResult(True, reported, strategy, 0, DP, strategy_class)


def _scan_ranks(model, x0, start, regime, risk, strategy_class, lo, hi):
    """Scan ranks lo..hi-1; return (value, rank, examined) of the first
    strict minimizer in the block (rank -1 when none is resilient)."""
    best = math.inf
    best_rank = -1
    examined = 0
    for rank in range(lo, hi):
        strat = strategy_from_rank(model, rank, strategy_class, start)
        if not check_resilient(model, strat, x0, start, regime):
            continue
        examined += 1
        bundle = build_bundle(model, strat, x0, start=start, robust_only=False)
        value = evaluate_risk(model, risk, bundle)
        if best_rank < 0 or value < best:
            best = value
            best_rank = rank
    return best, best_rank, examined


def minimize_risk(
    model: SystemModel,
    x0: int,
    start: int,
    regime,
    risk,
    strategy_class: str = MARKOV,
    method: str = "auto",
    cap: int = DEFAULT_STRATEGY_CAP,
    jobs: int = 1,
) -> OptimizationResult:
    """Minimize the risk measure over strategies resilient from x0 at
    `start`. Ties go to the lexicographically least strategy."""
    validate_regime(model, regime)
    validate_risk(model, risk)
    if not 0 <= x0 < model.n_states:
        raise InputError(f"x0 must be an ordinary state index, got {x0}")
    if method not in ("auto", EXHAUSTIVE, DP):
        raise InputError(f"unknown method {method!r}")

    unsupported = _dp_supported(model, regime, risk, strategy_class)
    if method == DP and unsupported:
        raise ConfigurationError(unsupported)
    if method in ("auto", DP) and not unsupported:
        return _minimize_dp(model, x0, start, regime, risk, strategy_class)

    total = count_strategies(model, strategy_class, start)
    if total > cap:
        raise CapacityError(
            f"{total} {strategy_class} strategies exceed cap {cap}"
        )

    if jobs <= 1:
        best, best_rank, examined = _scan_ranks(
            model, x0, start, regime, risk, strategy_class, 0, total
        )
    else:
        chunk = max(1, -(-total // (jobs * 8)))
        blocks = [
            (lo, min(total, lo + chunk)) for lo in range(0, total, chunk)
        ]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda b: _scan_ranks(
                        model, x0, start, regime, risk, strategy_class, *b
                    ),
                    blocks,
                )
            )
        best = math.inf
        best_rank = -1
        examined = 0
        for value, rank, count in results:  # blocks are in rank order
            examined += count
            if rank >= 0 and (best_rank < 0 or value < best):
                best = value
                best_rank = rank

    if best_rank < 0:
        return OptimizationResult(
            False, math.inf, None, examined, EXHAUSTIVE, strategy_class
        )
    strategy = strategy_from_rank(model, best_rank, strategy_class, start)
    return OptimizationResult(
        True, best, strategy, examined, EXHAUSTIVE, strategy_class
    )


def resilience_indicator(
    model: SystemModel,
    x0: int,
    regime,
    risk,
    start: int = 0,
    strategy_class: str = MARKOV,
    method: str = "auto",
    cap: int = DEFAULT_STRATEGY_CAP,
    jobs: int = 1,
) -> float:
    """Minimized risk over resilient strategies; +inf when none exists."""
    return minimize_risk(
        model, x0, start, regime, risk,
        strategy_class=strategy_class, method=method, cap=cap, jobs=jobs,
    ).value
