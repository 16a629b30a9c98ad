"""Joint (u, v) time stepping with learned velocity tendency.

    u(t+dt) = u(t) - dt * div(u v)
    v(t+dt) = v(t) + dt * f_adv(u, grad u, v, embedding(t))

The source correction is added after the rollout, never inside it.
Gradients flow through the unrolled steps (discretize-then-optimize).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .embeddings import spatial_encoding, spatiotemporal_embedding
from .errors import ConfigError, DomainError, IntegrationError
from .grid import GridSpec, advection_tendency, first_nonfinite, spatial_gradient

SCHEMES = ("euler", "rk4")


@dataclass
class SolverConfig:
    scheme: str = "euler"
    dt: float = 1.0          # hours per internal step
    substeps: int = 1        # internal steps per output step
    nan_policy: str = "abort"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", "solver.scheme")
        if self.nan_policy not in ("abort", "report"):
            raise ConfigError("nan_policy must be abort or report", "solver.nan_policy")
        if self.substeps < 0:
            raise ConfigError("substeps must be >= 0", "solver.substeps")
        if self.substeps and self.dt <= 0:
            raise ConfigError("dt must be positive", "solver.dt")

    @property
    def output_interval(self):
        return self.dt * self.substeps


@dataclass
class ODEState:
    u: torch.Tensor  # (B, K, H, W)
    v: torch.Tensor  # (B, 2K, H, W)
    t: float         # hours since t0


@dataclass
class Trajectory:
    u: torch.Tensor      # (B, N, K, H, W)
    v: torch.Tensor      # (B, N, 2K, H, W)
    times: torch.Tensor  # (N,) hours since t0
    nan_step: int | None = None

    @property
    def lead(self):
        return self.u.shape[1]


class EmbeddingProvider:
    """Spatiotemporal embeddings for a fixed grid, spatial part cached."""

    def __init__(self, grid: GridSpec, dtype=torch.float32):
        self.grid = grid
        self.dtype = dtype
        self.phi_s = spatial_encoding(grid, dtype)

    def __call__(self, t0_days, t_hours):
        t = torch.as_tensor(t0_days, dtype=torch.float64) + t_hours / 24.0
        return spatiotemporal_embedding(self.grid, t, torch.float64,
                                        spatial=self.phi_s.double()).to(self.dtype)


def state_tendency(state: ODEState, bundle, grid: GridSpec, embed=None, t0_days=None):
    """(u_dot, v_dot). ``bundle=None`` freezes the velocity (v_dot = 0)."""
    u_dot = advection_tendency(state.u, state.v, grid)
    if bundle is None:
        return u_dot, torch.zeros_like(state.v)
    if embed is None:
        embed = EmbeddingProvider(grid, state.u.dtype)
    if t0_days is None:
        t0_days = torch.zeros(state.u.shape[0], dtype=torch.float64)
    emb = embed(t0_days, state.t)
    v_dot = bundle.advection(state.u, spatial_gradient(state.u, grid), state.v, emb)
    return u_dot, v_dot


def _step(state, f, dt, scheme):
    if scheme == "euler":
        du, dv = f(state)
        return ODEState(state.u + dt * du, state.v + dt * dv, state.t + dt)
    k1 = f(state)
    s2 = ODEState(state.u + 0.5 * dt * k1[0], state.v + 0.5 * dt * k1[1], state.t + 0.5 * dt)
    k2 = f(s2)
    s3 = ODEState(state.u + 0.5 * dt * k2[0], state.v + 0.5 * dt * k2[1], state.t + 0.5 * dt)
    k3 = f(s3)
    s4 = ODEState(state.u + dt * k3[0], state.v + dt * k3[1], state.t + dt)
    k4 = f(s4)
    du = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
    dv = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    return ODEState(state.u + dt * du, state.v + dt * dv, state.t + dt)


def integrate(u0, v0, bundle, grid: GridSpec, solver: SolverConfig, lead: int, t0_days=None):
    """Roll (u0, v0) forward ``lead`` output steps; returns all of them.

    Under ``nan_policy="abort"`` a non-finite state raises IntegrationError
    carrying the step and the last finite state. Under ``report`` the
    remaining steps are filled with NaN and ``nan_step`` is set.
    """
    if lead < 1:
        raise DomainError("lead must be >= 1")
    embed = EmbeddingProvider(grid, u0.dtype) if bundle is not None else None

    def f(s):
        try:
            return state_tendency(s, bundle, grid, embed, t0_days)
        except IntegrationError as e:
            raise IntegrationError(str(e), step=step_no, index=e.index, last_state=state) from None

    state = ODEState(u0, v0, 0.0)
    us, vs, times = [], [], []
    nan_step = None
    step_no = 0
    for n in range(1, lead + 1):
        for _ in range(solver.substeps):
            step_no += 1
            try:
                new = _step(state, f, solver.dt, solver.scheme)
                idx = first_nonfinite(new.u) or first_nonfinite(new.v)
            except IntegrationError as e:
                if solver.nan_policy == "abort":
                    raise
                idx, new = e.index, None
            if idx is not None:
                if solver.nan_policy == "abort":
                    raise IntegrationError(f"non-finite state after internal step {step_no} "
                                           f"(output step {n}) at index {idx}",
                                           step=step_no, index=idx, last_state=state)
                nan_step = n
                break
            state = new
        if nan_step is not None:
            break
        us.append(state.u)
        vs.append(state.v)
        times.append(n * solver.output_interval)
    if nan_step is not None:
        nan_u = torch.full_like(u0, float("nan"))
        nan_v = torch.full_like(v0, float("nan"))
        while len(us) < lead:
            us.append(nan_u)
            vs.append(nan_v)
            times.append(len(times) + 1.0)
    return Trajectory(torch.stack(us, 1), torch.stack(vs, 1),
                      torch.tensor(times, dtype=torch.float64), nan_step)


def apply_source(traj: Trajectory, bundle, u0, v0, phi_s, t0_days):
    """u(t_n) + s(t_n) for every step; v is left untouched. Returns (u, s)."""
    B = u0.shape[0]
    t0 = torch.as_tensor(t0_days, dtype=torch.float64).reshape(B)
    times = t0[:, None] + traj.times[None, :] / 24.0
    s = bundle.source(traj.u, u0, v0, phi_s, times, t0)
    return traj.u + s, s


def finite_difference_velocity_baseline(u_now, u_prev, dt):
    """Backward difference (u(t) - u(t - dt)) / dt."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    return (u_now - u_prev) / dt


@dataclass
class Forecast:
    u: torch.Tensor        # corrected (B, N, K, H, W)
    u_adv: torch.Tensor    # advection-only rollout
    source: torch.Tensor
    v: torch.Tensor        # (B, N, 2K, H, W)
    v0: torch.Tensor
    nan_step: int | None = None


def forecast(bundle, grid: GridSpec, u0, lead, solver: SolverConfig | None = None,
             t0_days=None, history=None, history_dt=None):
    """Full pipeline on normalized fields: velocity -> rollout -> source."""
    solver = solver or SolverConfig()
    B = u0.shape[0]
    if t0_days is None:
        t0_days = torch.zeros(B, dtype=torch.float64)
    t0_days = torch.as_tensor(t0_days, dtype=torch.float64).reshape(B)
    dudt = None
    if bundle.velocity.cfg.uses_dt:
        if history is None or history_dt is None:
            raise ConfigError("velocity plan needs a history state and history_dt", "model.velocity.plan")
        dudt = finite_difference_velocity_baseline(u0, history, history_dt)
    v0 = bundle.velocity(u0, spatial_gradient(u0, grid), dudt)
    traj = integrate(u0, v0, bundle, grid, solver, lead, t0_days)
    phi_s = spatial_encoding(grid, u0.dtype)
    if traj.nan_step is not None:
        return Forecast(traj.u, traj.u, torch.zeros_like(traj.u), traj.v, v0, traj.nan_step)
    u, s = apply_source(traj, bundle, u0, v0, phi_s, t0_days)
    return Forecast(u, traj.u, s, traj.v, v0)
