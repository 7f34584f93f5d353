"""Recovery regimes: the acceptability notions a strategy can be held to.

Each regime is a predicate on a closed-loop trajectory bundle. Worst-case
regimes quantify over the bundle's scenarios (RobustRecovery restricts to
the robust subset); probabilistic regimes weight scenarios with the model's
distribution and need a full-domain bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .model import SystemModel, in_robust_set, scenario_weight
from .strategy import Trajectory, TrajectoryBundle


@dataclass(frozen=True)
class Viability:
    """Stay in `acceptable` with admissible controls at every time, for
    every scenario."""

    acceptable: frozenset

    def __post_init__(self):
        object.__setattr__(self, "acceptable", frozenset(self.acceptable))


@dataclass(frozen=True)
class RobustRecovery:
    """Recover into `acceptable` (states + admissible controls from the
    recovery time onward) no later than `deadline`, for every robust
    scenario."""

    acceptable: frozenset
    deadline: int

    def __post_init__(self):
        object.__setattr__(self, "acceptable", frozenset(self.acceptable))


@dataclass(frozen=True)
class StochasticViability:
    """Stay viable (states + admissible controls) with probability >= beta."""

    acceptable: frozenset
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "acceptable", frozenset(self.acceptable))


@dataclass(frozen=True)
class Bounded:
    """States never leave `region`, for every scenario. States only."""

    region: frozenset

    def __post_init__(self):
        object.__setattr__(self, "region", frozenset(self.region))


@dataclass(frozen=True)
class ProbExcursion:
    """Probability that states ever leave `region` is at most beta."""

    region: frozenset
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "region", frozenset(self.region))


@dataclass(frozen=True)
class AtMostKExits:
    """At most `max_exits` times outside `region`, for every scenario of
    positive probability (every scenario when no probabilities are
    declared). States only."""

    region: frozenset
    max_exits: int

    def __post_init__(self):
        object.__setattr__(self, "region", frozenset(self.region))


@dataclass(frozen=True)
class Stabilize:
    """End within Euclidean `radius` of state `target` over the last
    `window` times, for every scenario (finite-horizon convergence proxy)."""

    target: int
    radius: float
    window: int


@dataclass(frozen=True)
class ControlEvent:
    """Some control from `controls` is eventually used, for every scenario."""

    controls: frozenset

    def __post_init__(self):
        object.__setattr__(self, "controls", frozenset(self.controls))


@dataclass(frozen=True)
class RiskContainment:
    """A risk measure stays at or below `level`."""

    measure: object
    level: float


# regimes whose membership quantifies over the robust scenario subset
ROBUST_REGIMES = (RobustRecovery,)


def _check_state_set(model, states, what):
    for x in states:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < model.n_states:
            raise InputError(f"{what} contains invalid state index {x!r}")


def validate_regime(model: SystemModel, regime) -> None:
    """Check the regime's parameters against the model."""
    if isinstance(regime, (Viability, StochasticViability, RobustRecovery)):
        _check_state_set(model, regime.acceptable, "acceptable set")
    if isinstance(regime, (Bounded, ProbExcursion, AtMostKExits)):
        _check_state_set(model, regime.region, "region")
    if isinstance(regime, (StochasticViability, ProbExcursion)):
        if not 0.0 <= regime.beta <= 1.0:
            raise InputError(f"beta {regime.beta!r} outside [0, 1]")
        if not model.uncertainty.has_probs and model.scenario_probs is None:
            raise ConfigurationError(
                "probabilistic regime needs declared probabilities"
            )
    if isinstance(regime, RobustRecovery):
        if not 0 <= regime.deadline <= model.horizon:
            raise InputError(
                f"deadline {regime.deadline} outside 0..{model.horizon}"
            )
    if isinstance(regime, AtMostKExits) and regime.max_exits < 0:
        raise InputError("max_exits must be >= 0")
    if isinstance(regime, Stabilize):
        if not 0 <= regime.target < model.n_states:
            raise InputError(f"target {regime.target!r} is not a state index")
        if regime.radius < 0:
            raise InputError("radius must be >= 0")
        if regime.window < 0:
            raise InputError("window must be >= 0")
    if isinstance(regime, ControlEvent):
        for u in regime.controls:
            if not isinstance(u, (int, np.integer)) or not 0 <= u < model.n_controls:
                raise InputError(f"controls contains invalid index {u!r}")
    if isinstance(regime, RiskContainment):
        from .risk import validate_risk

        validate_risk(model, regime.measure)


def exit_times(
    model: SystemModel,
    trajectory: Trajectory,
    acceptable,
    use_constraints: bool = False,
) -> tuple:
    """Times s with x_s outside `acceptable`, plus (when use_constraints)
    times s < K where the applied control is inadmissible at x_s."""
    acceptable = frozenset(acceptable)
    K = model.horizon
    out = []
    for s in range(trajectory.start, K + 1):
        x = trajectory.state(s)
        bad = x not in acceptable
        if not bad and use_constraints and s < K and x != model.cemetery:
            bad = not model.constraints[s, x, trajectory.control(s)]
        if bad:
            out.append(s)
    return tuple(out)


def recovery_time(model: SystemModel, trajectory: Trajectory, acceptable):
    """Least time r such that from r onward states stay in `acceptable` and
    applied controls are admissible; math.inf when there is none."""
    acceptable = frozenset(acceptable)
    K = model.horizon
    r = math.inf
    for s in range(K, trajectory.start - 1, -1):
        x = trajectory.state(s)
        good = x in acceptable
        if good and s < K:
            good = x != model.cemetery and bool(
                model.constraints[s, x, trajectory.control(s)]
            )
        if not good:
            break
        r = s
    return r


def _viable(model, traj, acceptable):
    return recovery_time(model, traj, acceptable) == traj.start


def _weights(model, bundle):
    if bundle.robust:
        raise InputError(
            "probabilistic membership needs a full-domain bundle"
        )
    return [scenario_weight(model, s) for s in bundle.scenarios]


def regime_membership(
    model: SystemModel, regime, bundle: TrajectoryBundle
) -> bool:
    """Does the bundle's strategy meet the regime from the bundle's start?"""
    validate_regime(model, regime)

    if isinstance(regime, Viability):
        return all(_viable(model, tr, regime.acceptable) for tr in bundle)

    if isinstance(regime, RobustRecovery):
        for scen, tr in zip(bundle.scenarios, bundle.trajectories):
            if not bundle.robust and not in_robust_set(model, scen):
                continue
            if recovery_time(model, tr, regime.acceptable) > regime.deadline:
                return False
        return True

    if isinstance(regime, StochasticViability):
        weights = _weights(model, bundle)
        p = 0.0
        for w, tr in zip(weights, bundle.trajectories):
            if _viable(model, tr, regime.acceptable):
                p += w
        return p >= regime.beta

    if isinstance(regime, Bounded):
        return all(
            not exit_times(model, tr, regime.region) for tr in bundle
        )

    if isinstance(regime, ProbExcursion):
        weights = _weights(model, bundle)
        p = 0.0
        for w, tr in zip(weights, bundle.trajectories):
            if exit_times(model, tr, regime.region):
                p += w
        return p <= regime.beta

    if isinstance(regime, AtMostKExits):
        have_probs = (
            model.uncertainty.has_probs or model.scenario_probs is not None
        )
        for scen, tr in zip(bundle.scenarios, bundle.trajectories):
            if have_probs and scenario_weight(model, scen) <= 0.0:
                continue
            if len(exit_times(model, tr, regime.region)) > regime.max_exits:
                return False
        return True

    if isinstance(regime, Stabilize):
        center = model.states.coords[regime.target]
        first = max(bundle.start, model.horizon - regime.window)
        for tr in bundle:
            for s in range(first, model.horizon + 1):
                x = tr.state(s)
                if x == model.cemetery:
                    return False
                d = float(np.linalg.norm(model.states.coords[x] - center))
                if d > regime.radius:
                    return False
        return True

    if isinstance(regime, ControlEvent):
        return all(
            any(u in regime.controls for u in tr.controls) for tr in bundle
        )

    if isinstance(regime, RiskContainment):
        from .risk import evaluate_risk

        return evaluate_risk(model, regime.measure, bundle) <= regime.level

    raise InputError(f"unknown regime {regime!r}")
