from types import SimpleNamespace

import numpy as np
import pytest
import torch

from advection_ode.dynamics import (ODEState, SolverConfig, finite_difference_velocity_baseline,
                                    forecast, integrate, state_tendency)
from advection_ode.errors import ConfigError, DomainError, IntegrationError
from advection_ode.grid import GridSpec
from advection_ode.models import ModelBundle
from conftest import tiny_bundle_config
from oracles import semidiscrete_advection

G = GridSpec.regular(8, 16, lat_boundary="periodic")


def _bump(h=8, w=16):
    y, x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.exp(-((x - w / 2) ** 2 + (y - h / 2) ** 2) / (2 * 2.0 ** 2))


def _uniform_v(cx, cy, h=8, w=16):
    return torch.tensor([cx, cy], dtype=torch.float64)[None, :, None, None].expand(1, 2, h, w).clone()


def _final_error(scheme, dt, T=4.0, cx=0.8, cy=0.3):
    u0 = _bump()
    solver = SolverConfig(scheme, dt=dt, substeps=int(round(T / dt)))
    traj = integrate(torch.as_tensor(u0)[None, None], _uniform_v(cx, cy), None, G, solver, 1)
    exact = semidiscrete_advection(u0, cx, cy, T)
    return np.abs(traj.u[0, -1, 0].numpy() - exact).max()


def test_euler_is_first_order():
    e = [_final_error("euler", dt) for dt in (0.5, 0.25, 0.125, 0.0625)]
    assert all(1.7 <= e[i] / e[i + 1] <= 2.3 for i in range(3)), e


def test_rk4_is_fourth_order():
    e = [_final_error("rk4", dt) for dt in (1.0, 0.5, 0.25)]
    assert all(13.0 <= e[i] / e[i + 1] <= 19.0 for i in range(2)), e


def test_frozen_velocity_and_zero_flow_keep_state():
    u0 = torch.randn(2, 2, 8, 16, dtype=torch.float64)
    traj = integrate(u0, torch.zeros(2, 4, 8, 16, dtype=torch.float64), None, G, SolverConfig(), 3)
    assert torch.equal(traj.u[:, -1], u0) and traj.times.tolist() == [1.0, 2.0, 3.0]


def test_substeps_set_output_times():
    u0 = torch.randn(1, 1, 8, 16, dtype=torch.float64)
    traj = integrate(u0, _uniform_v(0.1, 0.0), None, G, SolverConfig("rk4", dt=0.5, substeps=4), 3)
    assert traj.times.tolist() == [2.0, 4.0, 6.0] and traj.u.shape == (1, 3, 1, 8, 16)


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(scheme="midpoint")
    with pytest.raises(ConfigError):
        SolverConfig(nan_policy="ignore")
    with pytest.raises(DomainError):
        integrate(torch.zeros(1, 1, 8, 16), torch.zeros(1, 2, 8, 16), None, G, SolverConfig(), 0)


def _blowup_run(policy):
    u0 = torch.randn(1, 1, 8, 16, dtype=torch.float64)
    v0 = _uniform_v(0.2, 0.0)
    steps = iter(range(100))

    def adv(u, grad, v, emb):
        return torch.full_like(v, float("nan")) if next(steps) >= 2 else torch.zeros_like(v)

    # stand-in bundle whose velocity tendency turns non-finite on the third call
    stub = SimpleNamespace(advection=adv)
    return integrate(u0, v0, stub, G, SolverConfig(nan_policy=policy), 4)


def test_nan_abort_carries_step_and_last_state():
    with pytest.raises(IntegrationError) as ei:
        _blowup_run("abort")
    e = ei.value
    assert e.step == 3 and e.index is not None and torch.isfinite(e.last_state.u).all()


def test_nan_report_fills_remaining_steps():
    traj = _blowup_run("report")
    assert traj.nan_step == 3
    assert torch.isfinite(traj.u[:, :2]).all() and torch.isnan(traj.u[:, 2:]).all()


def test_state_tendency_without_bundle_freezes_velocity():
    s = ODEState(torch.randn(1, 1, 8, 16), torch.randn(1, 2, 8, 16), 0.0)
    du, dv = state_tendency(s, None, G)
    assert torch.equal(dv, torch.zeros_like(s.v)) and du.shape == s.u.shape


def test_forecast_pipeline_adds_source_after_rollout():
    b = ModelBundle(tiny_bundle_config(G)).eval()
    u0 = torch.randn(2, 2, 8, 16)
    with torch.no_grad():
        fc = forecast(b, G, u0, 3, t0_days=torch.tensor([1.0, 2.0]))
    assert fc.u.shape == (2, 3, 2, 8, 16) and fc.v.shape == (2, 3, 4, 8, 16)
    assert torch.allclose(fc.u, fc.u_adv + fc.source)
    b2 = ModelBundle(tiny_bundle_config(G, source="none")).eval()
    with torch.no_grad():
        fc2 = forecast(b2, G, u0, 3)
    assert torch.equal(fc2.u, fc2.u_adv)


def test_forecast_dt_plan_requires_history():
    b = ModelBundle(tiny_bundle_config(G, plan="dt"))
    with pytest.raises(ConfigError):
        forecast(b, G, torch.randn(1, 2, 8, 16), 2)
    fc = forecast(b, G, torch.randn(1, 2, 8, 16), 2, history=torch.randn(1, 2, 8, 16), history_dt=1.0)
    assert fc.u.shape == (1, 2, 2, 8, 16)


def test_forecast_is_deterministic_in_eval_mode():
    b = ModelBundle(tiny_bundle_config(G, velocity="vit", source="dit")).eval()
    u0 = torch.randn(1, 2, 8, 16)
    with torch.no_grad():
        assert torch.equal(forecast(b, G, u0, 2).u, forecast(b, G, u0, 2).u)


def test_backward_difference_baseline():
    assert finite_difference_velocity_baseline(5.0, 3.0, 2.0) == 1.0
    with pytest.raises(DomainError):
        finite_difference_velocity_baseline(1.0, 0.0, 0.0)
