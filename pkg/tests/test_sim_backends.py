"""The compiled simulation kernel and the numpy reference must be
interchangeable: identical arrays on the same inputs, same dispatch rules."""

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import resilkit as rk
from resilkit import _sim
from resilkit.model import packed_tables
from conftest import build_m1, random_model

pytestmark = pytest.mark.skipif(
    _sim._fast is None, reason="compiled kernel not built"
)

MODELS = Path(__file__).resolve().parent.parent / "models"


def batch_inputs(rng, model, n_policies, start=0):
    dyn, ok = packed_tables(model)
    K, n = model.horizon, model.n_states
    policies = np.zeros((n_policies, K, n + 1), dtype=np.int32)
    policies[:, :, :n] = rng.integers(
        0, model.n_controls, size=(n_policies, K, n)
    )
    scen = np.array(
        rk.enumerate_scenarios(model), dtype=np.int32
    ).reshape(-1, K)
    return dyn, ok, policies, scen


def test_backends_agree_randomized():
    rng = np.random.default_rng(1205)
    for _ in range(40):
        model = random_model(rng, cemetery_rate=0.3)
        start = int(rng.integers(0, model.horizon))
        x0 = int(rng.integers(0, model.n_states))
        dyn, ok, policies, scen = batch_inputs(rng, model, 6, start)
        py = _sim.pyref.simulate_batch(dyn, ok, policies, scen, x0, start)
        fast = _sim._fast.simulate_batch(dyn, ok, policies, scen, x0, start)
        for a, b in zip(py, fast):
            assert a.dtype == b.dtype == np.int32
            assert a.shape == b.shape
            assert (a == b).all()


def test_batch_matches_bundle_trajectories():
    rng = np.random.default_rng(88)
    for _ in range(10):
        model = random_model(rng, cemetery_rate=0.3)
        strategy = rk.markov_strategy(
            model,
            rng.integers(0, model.n_controls,
                         size=(model.horizon, model.n_states)).tolist(),
        )
        x0 = int(rng.integers(0, model.n_states))
        bundle = rk.build_bundle(model, strategy, x0)
        dyn, ok = packed_tables(model)
        pol = rk.markov_policy_array(model, strategy)[None, :, :]
        scen = np.array(
            rk.enumerate_scenarios(model), dtype=np.int32
        ).reshape(-1, model.horizon)
        states, controls = rk.simulate_batch(dyn, ok, pol, scen, x0)
        for m, traj in enumerate(bundle):
            assert states[0, m].tolist() == list(traj.states)
            assert controls[0, m].tolist() == list(traj.controls)


def test_shapes_with_later_start():
    model = build_m1()
    rng = np.random.default_rng(3)
    dyn, ok, policies, scen = batch_inputs(rng, model, 4)
    states, controls = rk.simulate_batch(dyn, ok, policies, scen, 2, start=2)
    assert states.shape == (4, 8, 2)
    assert controls.shape == (4, 8, 1)
    assert (states[:, :, 0] == 2).all()


def test_cemetery_absorbs_in_batch():
    # one state, one control; everything dies at t=0
    model = rk.make_model(
        horizon=3,
        state_labels=("a",),
        control_labels=("u",),
        uncertainty_sets=(("0",),) * 3,
        dynamics_fn=lambda t, x, u, w: None if t == 0 else 0,
    )
    dyn, ok = packed_tables(model)
    pol = np.zeros((1, 3, 2), dtype=np.int32)
    scen = np.zeros((1, 3), dtype=np.int32)
    for backend in ("py", "fast"):
        states, _ = rk.simulate_batch(dyn, ok, pol, scen, 0, backend=backend)
        assert states[0, 0].tolist() == [0, 1, 1, 1]


def test_inadmissible_control_routes_to_cemetery():
    model = rk.make_model(
        horizon=2,
        state_labels=("a", "b"),
        control_labels=("u", "v"),
        uncertainty_sets=(("0",),) * 2,
        dynamics_fn=lambda t, x, u, w: x,
        constraints_fn=lambda t, x: (0,),
    )
    dyn, ok = packed_tables(model)
    pol = np.full((1, 2, 3), 1, dtype=np.int32)  # always pick forbidden v
    pol[:, :, 2] = 0
    scen = np.zeros((1, 2), dtype=np.int32)
    for backend in ("py", "fast"):
        states, controls = rk.simulate_batch(
            dyn, ok, pol, scen, 0, backend=backend
        )
        assert states[0, 0].tolist() == [0, 2, 2]
        assert controls[0, 0].tolist() == [1, 0]


def test_default_backend_is_fast_here(monkeypatch):
    monkeypatch.delenv("RESILKIT_BACKEND", raising=False)
    assert rk.backend_name() == "fast"


def test_env_var_selects_backend(monkeypatch):
    monkeypatch.setenv("RESILKIT_BACKEND", "py")
    assert rk.backend_name() == "py"
    monkeypatch.setenv("RESILKIT_BACKEND", "fast")
    assert rk.backend_name() == "fast"
    monkeypatch.setenv("RESILKIT_BACKEND", "")
    assert rk.backend_name() == "fast"
    monkeypatch.setenv("RESILKIT_BACKEND", "turbo")
    with pytest.raises(rk.ConfigurationError, match="unknown RESILKIT_BACKEND"):
        rk.backend_name()


def test_explicit_backend_argument():
    model = build_m1()
    rng = np.random.default_rng(9)
    dyn, ok, policies, scen = batch_inputs(rng, model, 3)
    py = rk.simulate_batch(dyn, ok, policies, scen, 2, backend="py")
    fast = rk.simulate_batch(dyn, ok, policies, scen, 2, backend="fast")
    assert (py[0] == fast[0]).all() and (py[1] == fast[1]).all()
    with pytest.raises(rk.ConfigurationError, match="unknown backend"):
        rk.simulate_batch(dyn, ok, policies, scen, 2, backend="turbo")


def test_cli_identical_across_backends(tmp_path):
    """The whole pipeline gives byte-identical files whichever kernel runs."""
    outs = {}
    for backend in ("py", "fast"):
        env = dict(os.environ, RESILKIT_BACKEND=backend)
        out = tmp_path / backend
        proc = subprocess.run(
            [sys.executable, "-m", "resilkit", "oracle", "min-risk",
             "--model", str(MODELS / "m1_effort.model"),
             "--x0", "2", "--out", str(out)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        outs[backend] = out
    for name in ("oracle_min_risk.json", "oracle_witness.strategy"):
        assert (outs["py"] / name).read_bytes() == \
            (outs["fast"] / name).read_bytes()
    doc = json.loads((outs["py"] / "oracle_min_risk.json").read_text())
    assert doc["value"] == 2


def test_cli_rejects_unknown_backend(tmp_path):
    env = dict(os.environ, RESILKIT_BACKEND="turbo")
    proc = subprocess.run(
        [sys.executable, "-m", "resilkit", "oracle", "value",
         "--model", str(MODELS / "m1.model")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 2
    assert "unknown RESILKIT_BACKEND 'turbo'" in proc.stderr
