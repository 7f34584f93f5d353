"""Feedback strategies and closed-loop trajectories.

A strategy assigns one policy per decision time from its start time onward.
Policies are either Markov (state -> control) or adapted (state + observed
uncertainty prefix -> control). The prefix observed at time t is
(w_b, ..., w_{t-1}) where b is the strategy's start time, ranked densely in
lexicographic order, so an adapted table has one column per prefix. At the
cemetery every policy takes control 0 by convention.

Changing w_s for s >= r never changes the state or control at times <= r:
the time-r control reads only states reached from w_{<r} and the prefix
w_{<r} itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InputError, ModelFormatError
from .model import (
    DEFAULT_SCENARIO_CAP,
    SystemModel,
    enumerate_scenarios,
    step,
)

# enumerate_strategies refuses to yield more than this many strategies
DEFAULT_STRATEGY_CAP = 10**6

MARKOV = "markov"
ADAPTED = "adapted"


@dataclass(frozen=True, eq=False)
class Policy:
    """One decision rule at a fixed time.

    Markov tables have shape (n,); adapted tables (n, #prefixes), columns
    indexed by the dense lexicographic rank of the observed prefix.
    """

    t: int
    kind: str
    table: np.ndarray

    def __post_init__(self):
        if self.kind not in (MARKOV, ADAPTED):
            raise InputError(f"unknown policy kind {self.kind!r}")
        want = 1 if self.kind == MARKOV else 2
        arr = np.asarray(self.table, dtype=np.int32)
        if arr.ndim != want:
            raise InputError(
                f"{self.kind} policy table must be {want}-d, got {arr.ndim}-d"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True, eq=False)
class Strategy:
    """Policies for every decision time start..K-1, in order."""

    start: int
    policies: tuple

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        for i, pol in enumerate(self.policies):
            if pol.t != self.start + i:
                raise InputError(
                    f"policy {i} is for time {pol.t}, expected {self.start + i}"
                )

    @property
    def kind(self):
        if all(p.kind == MARKOV for p in self.policies):
            return MARKOV
        return ADAPTED

    def policy(self, t):
        if not self.start <= t < self.start + len(self.policies):
            raise InputError(f"no policy at time {t}")
        return self.policies[t - self.start]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One closed-loop path: states at start..K, controls at start..K-1,
    under one full scenario."""

    start: int
    states: tuple
    controls: tuple
    scenario: tuple

    def state(self, s):
        """State at absolute time s."""
        if not 0 <= s - self.start < len(self.states):
            raise InputError(f"no state at time {s}; trajectory starts at "
                             f"{self.start}")
        return self.states[s - self.start]

    def control(self, s):
        """Control at absolute time s."""
        if not 0 <= s - self.start < len(self.controls):
            raise InputError(f"no control at time {s}; trajectory starts at "
                             f"{self.start}")
        return self.controls[s - self.start]


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    """Closed-loop trajectories over an enumerated scenario set."""

    start: int
    x0: int
    robust: bool
    scenarios: tuple
    trajectories: tuple

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def trajectory_for(self, scenario):
        try:
            i = self.scenarios.index(tuple(scenario))
        except ValueError:
            raise InputError(f"scenario {scenario} not in bundle") from None
        return self.trajectories[i]


def n_prefixes(model: SystemModel, t: int, base: int = 0) -> int:
    """Number of uncertainty prefixes (w_base..w_{t-1})."""
    return math.prod(model.uncertainty.size(q) for q in range(base, t))


def prefix_rank(model: SystemModel, t: int, scenario, base: int = 0) -> int:
    """Dense lexicographic rank of scenario's prefix (w_base..w_{t-1})."""
    rank = 0
    for q in range(base, t):
        rank = rank * model.uncertainty.size(q) + int(scenario[q])
    return rank


def validate_strategy(model: SystemModel, strategy: Strategy) -> None:
    """Check times, table shapes, and control ranges against the model."""
    K, n, nu = model.horizon, model.n_states, model.n_controls
    if not 0 <= strategy.start <= K:
        raise InputError(f"strategy start {strategy.start} out of range 0..{K}")
    if strategy.start + len(strategy.policies) != K:
        raise InputError(
            f"strategy covers {len(strategy.policies)} times from "
            f"{strategy.start}, expected {K - strategy.start}"
        )
    for pol in strategy.policies:
        if pol.kind == MARKOV:
            want = (n,)
        else:
            want = (n, n_prefixes(model, pol.t, strategy.start))
        if pol.table.shape != want:
            raise InputError(
                f"policy at time {pol.t} has table shape {pol.table.shape}, "
                f"expected {want}"
            )
        if pol.table.size and (pol.table.min() < 0 or pol.table.max() >= nu):
            raise InputError(f"policy at time {pol.t} uses an unknown control")


def policy_control(
    model: SystemModel, strategy: Strategy, t: int, x: int, scenario
) -> int:
    """Control the strategy takes at (t, x) under the given scenario."""
    if x == model.cemetery:
        return 0
    pol = strategy.policy(t)
    if pol.kind == MARKOV:
        return int(pol.table[x])
    return int(pol.table[x, prefix_rank(model, t, scenario, strategy.start)])


def is_admissible(model: SystemModel, strategy: Strategy) -> bool:
    """True when every table entry at every ordinary state is admissible."""
    validate_strategy(model, strategy)
    for pol in strategy.policies:
        con = model.constraints[pol.t]
        if pol.kind == MARKOV:
            picks = pol.table[:, None]
        else:
            picks = pol.table
        rows = np.arange(model.n_states)[:, None]
        if not con[rows, picks].all():
            return False
    return True


def simulate_closed_loop(
    model: SystemModel, strategy: Strategy, x0: int, scenario, start: int = None
) -> Trajectory:
    """Run the strategy from x0 at `start` (default: the strategy's start)
    under one full scenario."""
    validate_strategy(model, strategy)
    scenario = tuple(int(w) for w in scenario)
    model._check_scenario(scenario)
    if start is None:
        start = strategy.start
    if start < strategy.start:
        raise InputError(
            f"cannot simulate from {start}: strategy starts at {strategy.start}"
        )
    if not 0 <= x0 < model.n_states:
        raise InputError(f"x0 must be an ordinary state index, got {x0}")
    states = [x0]
    controls = []
    for t in range(start, model.horizon):
        u = policy_control(model, strategy, t, states[-1], scenario)
        controls.append(u)
        states.append(step(model, t, states[-1], u, scenario[t]))
    return Trajectory(start, tuple(states), tuple(controls), scenario)


def build_bundle(
    model: SystemModel,
    strategy: Strategy,
    x0: int,
    start: int = None,
    robust_only: bool = False,
    cap: int = DEFAULT_SCENARIO_CAP,
) -> TrajectoryBundle:
    """Simulate the strategy against every scenario in the (robust or full)
    scenario set, in canonical order."""
    scenarios = enumerate_scenarios(model, robust_only=robust_only, cap=cap)
    trajectories = tuple(
        simulate_closed_loop(model, strategy, x0, s, start) for s in scenarios
    )
    if start is None:
        start = strategy.start
    return TrajectoryBundle(
        start, x0, robust_only, tuple(scenarios), trajectories
    )


def markov_strategy(model: SystemModel, tables, start: int = 0) -> Strategy:
    """Markov strategy from an array of shape (K - start, n)."""
    tables = np.asarray(tables, dtype=np.int32)
    policies = tuple(
        Policy(start + i, MARKOV, tables[i]) for i in range(tables.shape[0])
    )
    out = Strategy(start, policies)
    validate_strategy(model, out)
    return out


def constant_strategy(model: SystemModel, u: int, start: int = 0) -> Strategy:
    """Markov strategy playing control u everywhere."""
    L = model.horizon - start
    return markov_strategy(
        model, np.full((L, model.n_states), u, dtype=np.int32), start
    )


def strategies_equal(a: Strategy, b: Strategy) -> bool:
    if a.start != b.start or len(a.policies) != len(b.policies):
        return False
    return all(
        pa.kind == pb.kind and np.array_equal(pa.table, pb.table)
        for pa, pb in zip(a.policies, b.policies)
    )


def _slot_shapes(model, kind, start):
    """Table shape per decision time, in time order."""
    n = model.n_states
    if kind == MARKOV:
        return [(n,) for _ in range(start, model.horizon)]
    return [
        (n, n_prefixes(model, t, start)) for t in range(start, model.horizon)
    ]


def count_strategies(model: SystemModel, kind: str = MARKOV, start: int = 0) -> int:
    """Size of the full strategy class for this model."""
    if kind not in (MARKOV, ADAPTED):
        raise InputError(f"unknown strategy kind {kind!r}")
    slots = sum(math.prod(s) for s in _slot_shapes(model, kind, start))
    return model.n_controls**slots


def _strategy_from_digits(model, kind, start, digits):
    policies = []
    pos = 0
    for i, shape in enumerate(_slot_shapes(model, kind, start)):
        size = math.prod(shape)
        table = np.array(digits[pos : pos + size], dtype=np.int32).reshape(shape)
        policies.append(Policy(start + i, kind, table))
        pos += size
    return Strategy(start, tuple(policies))


def strategy_from_rank(
    model: SystemModel, rank: int, kind: str = MARKOV, start: int = 0
) -> Strategy:
    """Strategy at a given lexicographic rank (slot order: time ascending,
    state ascending, prefix rank ascending; last slot varies fastest)."""
    total = count_strategies(model, kind, start)
    if not 0 <= rank < total:
        raise InputError(f"strategy rank {rank} out of range 0..{total - 1}")
    slots = sum(math.prod(s) for s in _slot_shapes(model, kind, start))
    nu = model.n_controls
    digits = []
    for _ in range(slots):
        rank, d = divmod(rank, nu)
        digits.append(d)
    digits.reverse()
    return _strategy_from_digits(model, kind, start, digits)


def enumerate_strategies(
    model: SystemModel,
    kind: str = MARKOV,
    start: int = 0,
    cap: int = DEFAULT_STRATEGY_CAP,
):
    """Every strategy of the class in lexicographic rank order. The cap is
    checked eagerly, before any strategy is produced."""
    total = count_strategies(model, kind, start)
    if total > cap:
        raise CapacityError(f"{total} strategies exceed cap {cap}")
    slots = sum(math.prod(s) for s in _slot_shapes(model, kind, start))

    def _generate():
        for digits in itertools.product(range(model.n_controls), repeat=slots):
            yield _strategy_from_digits(model, kind, start, digits)

    return _generate()


def markov_policy_array(model: SystemModel, strategy: Strategy) -> np.ndarray:
    """Pack a Markov strategy as int32 (K, n+1) for the batched kernel
    (cemetery column 0, times before the start zero-filled)."""
    validate_strategy(model, strategy)
    if strategy.kind != MARKOV:
        raise InputError("only Markov strategies pack into policy arrays")
    out = np.zeros((model.horizon, model.n_states + 1), dtype=np.int32)
    for pol in strategy.policies:
        out[pol.t, : model.n_states] = pol.table
    return out


def strategy_to_text(model: SystemModel, strategy: Strategy) -> str:
    """Serialize a strategy with model labels; see strategy_from_text."""
    validate_strategy(model, strategy)
    lines = [f"start = {strategy.start}"]
    for pol in strategy.policies:
        lines.append(f"[policy {pol.t}]")
        lines.append(f"kind = {pol.kind}")
        for x in range(model.n_states):
            lab = model.states.label(x)
            if pol.kind == MARKOV:
                lines.append(f"{lab} -> {model.controls.label(pol.table[x])}")
            else:
                for r in range(pol.table.shape[1]):
                    ws = _prefix_labels(model, pol.t, strategy.start, r)
                    lines.append(
                        f"{lab} ({' '.join(ws)}) -> "
                        f"{model.controls.label(pol.table[x, r])}"
                    )
    return "\n".join(lines) + "\n"


def _prefix_labels(model, t, base, rank):
    labels = []
    for q in reversed(range(base, t)):
        size = model.uncertainty.size(q)
        rank, w = divmod(rank, size)
        labels.append(model.uncertainty.sets[q][w])
    return list(reversed(labels))


def strategy_from_text(model: SystemModel, text: str) -> Strategy:
    """Parse the strategy serialization format.

    Lines: optional `start = t`; then `[policy t]` sections, each with
    `kind = markov|adapted` and one row per state (Markov: `state -> control`)
    or per state and prefix (adapted: `state (w ... w) -> control`).
    '#' starts a comment.
    """
    start = 0
    sections = []  # (t, kind, rows); rows = {(state, prefix_rank): control}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            inner = line[1:-1].split()
            if len(inner) != 2 or inner[0] != "policy":
                raise ModelFormatError(f"unknown section {line!r}", lineno)
            try:
                t = int(inner[1])
            except ValueError:
                raise ModelFormatError(f"bad policy time {inner[1]!r}", lineno)
            current = {"t": t, "kind": None, "rows": {}, "line": lineno}
            sections.append(current)
            continue
        if current is None:
            key, _, value = line.partition("=")
            if key.strip() == "start" and value:
                try:
                    start = int(value.strip())
                except ValueError:
                    raise ModelFormatError(f"bad start {value.strip()!r}", lineno)
                continue
            raise ModelFormatError(f"expected [policy t] before {line!r}", lineno)
        if current["kind"] is None:
            key, _, value = line.partition("=")
            if key.strip() != "kind" or not value:
                raise ModelFormatError("expected `kind = markov|adapted`", lineno)
            kind = value.strip()
            if kind not in (MARKOV, ADAPTED):
                raise ModelFormatError(f"unknown policy kind {kind!r}", lineno)
            current["kind"] = kind
            continue
        head, arrow, ctrl = line.rpartition("->")
        if not arrow:
            raise ModelFormatError(f"expected `... -> control` in {line!r}", lineno)
        try:
            u = model.controls.index(ctrl.strip())
            if current["kind"] == MARKOV:
                x = model.states.index(head.strip())
                key = (x, 0)
            else:
                state_part, paren, prefix_part = head.partition("(")
                if not paren or not prefix_part.rstrip().endswith(")"):
                    raise ModelFormatError(
                        f"adapted rows need a (prefix), got {line!r}", lineno
                    )
                x = model.states.index(state_part.strip())
                ws = prefix_part.rstrip().rstrip(")").split()
                t = current["t"]
                if len(ws) != t - start:
                    raise ModelFormatError(
                        f"prefix length {len(ws)}, expected {t - start}", lineno
                    )
                scen = [0] * model.horizon
                for q, wlab in zip(range(start, t), ws):
                    scen[q] = model.uncertainty.index(q, wlab)
                key = (x, prefix_rank(model, t, scen, start))
        except InputError as exc:
            raise ModelFormatError(str(exc), lineno) from None
        if x == model.cemetery:
            raise ModelFormatError("no policy rows at the cemetery", lineno)
        if key in current["rows"]:
            raise ModelFormatError(f"duplicate row for {line!r}", lineno)
        current["rows"][key] = u

    if not sections:
        raise ModelFormatError("no [policy t] sections found")
    policies = []
    for sec in sections:
        t, kind, rows = sec["t"], sec["kind"], sec["rows"]
        if kind is None:
            raise ModelFormatError("missing `kind =` line", sec["line"])
        n = model.n_states
        width = 1 if kind == MARKOV else n_prefixes(model, t, start)
        table = np.zeros((n, width), dtype=np.int32)
        for x in range(n):
            for r in range(width):
                if (x, r) not in rows:
                    raise ModelFormatError(
                        f"policy at time {t} missing a row for state "
                        f"{model.states.label(x)}",
                        sec["line"],
                    )
                table[x, r] = rows[(x, r)]
        policies.append(
            Policy(t, kind, table[:, 0] if kind == MARKOV else table)
        )
    policies.sort(key=lambda p: p.t)
    out = Strategy(start, tuple(policies))
    try:
        validate_strategy(model, out)
    except InputError as exc:
        raise ModelFormatError(str(exc)) from None
    return out
