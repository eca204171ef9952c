"""Coupled replicator equations with entropic mutation for two agents.

Each agent's density obeys

    dp/dt = p * [(r - <r>) - T (ln p - <ln p>)],   T = 1 / beta,

with time measured in units of alpha * t. Integration is done on the
log-density, which keeps positive nodes positive for any step size that
is stable at all.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from boltzrep.core import (
    LOG_FLOOR,
    DimensionError,
    Density,
    Grid,
    LearningParams,
    free_energy,
    normalize,
)
from boltzrep.games import PayoffKernel

logger = logging.getLogger(__name__)

INITS = ("uniform", "left-tilt", "right-tilt", "asymmetric")


class IntegrationError(RuntimeError):
    """Time stepping became unstable."""


@dataclass(frozen=True)
class ReplicatorState:
    t: float
    p1: Density
    p2: Density

    def __post_init__(self):
        if self.p1.grid != self.p2.grid:
            raise DimensionError("both agents must live on the same grid")

    @property
    def grid(self) -> Grid:
        return self.p1.grid


@dataclass
class TrajectoryRecord:
    """Sampled states of one :func:`evolve` run."""

    grid: Grid
    times: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    free_energy1: np.ndarray
    free_energy2: np.ndarray
    residual: np.ndarray
    converged: bool = False
    steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> ReplicatorState:
        return ReplicatorState(
            float(self.times[-1]),
            normalize(self.p1[-1], self.grid),
            normalize(self.p2[-1], self.grid),
        )

    @property
    def final_residual(self) -> float:
        return float(self.residual[-1])

    def write_csv(self, summary_path, agent_paths) -> None:
        """Write ``t,x,p`` per agent and a ``t,free_energy_1,free_energy_2,residual`` summary."""
        x = self.grid.nodes
        for path, snaps in zip(agent_paths, (self.p1, self.p2)):
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "x", "p"])
                for t, p in zip(self.times, snaps):
                    for xi, pi in zip(x, p):
                        writer.writerow([repr(float(t)), repr(float(xi)), repr(float(pi))])
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "free_energy_1", "free_energy_2", "residual"])
            for row in zip(self.times, self.free_energy1, self.free_energy2, self.residual):
                writer.writerow([repr(float(v)) for v in row])


def average_reward(kernel: PayoffKernel, opponent, agent_index: int) -> np.ndarray:
    """Reward of each pure action of one agent, averaged over the opponent's density."""
    if isinstance(opponent, Density):
        if opponent.grid != kernel.grid:
            raise DimensionError("opponent density and payoff kernel use different grids")
        q = opponent.values
    else:
        q = np.asarray(opponent, dtype=float)
        if q.shape != (kernel.grid.m,):
            raise DimensionError(f"opponent vector has shape {q.shape}, grid has {kernel.grid.m} nodes")
    wq = kernel.grid.weights * q
    if agent_index == 1:
        return kernel.k1 @ wq
    if agent_index == 2:
        return kernel.k2.T @ wq
    raise ValueError(f"agent_index must be 1 or 2, got {agent_index!r}")


def _log_rate(u, p, alive, r, w, temperature):
    # d(ln p)/dt on alive nodes; mean terms use p-weighted quadrature
    mean_r = w @ (r * p)
    mean_u = w[alive] @ (u[alive] * p[alive])
    out = np.zeros_like(u)
    out[alive] = (r[alive] - mean_r) - temperature * (u[alive] - mean_u)
    return out


def replicator_rhs(state: ReplicatorState, kernel: PayoffKernel, beta: float):
    """Time derivative of both densities; zero-density nodes have zero derivative."""
    if state.grid != kernel.grid:
        raise DimensionError("state and kernel use different grids")
    w = kernel.grid.weights
    temperature = 1.0 / beta
    out = []
    for p, opp, idx in ((state.p1.values, state.p2.values, 1), (state.p2.values, state.p1.values, 2)):
        alive = p > 0
        u = np.zeros_like(p)
        u[alive] = np.log(p[alive])
        r = average_reward(kernel, opp, idx)
        out.append(p * _log_rate(u, p, alive, r, w, temperature))
    return out[0], out[1]


def _to_log(p):
    alive = p > 0
    u = np.full(p.shape, LOG_FLOOR)
    u[alive] = np.maximum(np.log(p[alive]), LOG_FLOOR)
    return u, alive


def _from_log(u, alive, w):
    p = np.zeros_like(u)
    p[alive] = np.exp(u[alive] - u[alive].max())
    return p / (w @ p)


def default_dt(beta: float) -> float:
    return 0.1


def default_t_max(beta: float) -> float:
    return max(200.0, 40.0 * beta)


def evolve(
    init: ReplicatorState,
    kernel: PayoffKernel,
    params: LearningParams,
    *,
    record_every: float | None = None,
    frozen: int | None = None,
) -> TrajectoryRecord:
    """Integrate the coupled replicator equations with classical RK4 on ``ln p``.

    Stops at ``params.t_max`` or once the sup-norm of the density time
    derivative drops below ``params.tol``. Both agents are advanced from
    the same snapshot. Pass ``frozen=1`` or ``frozen=2`` to hold one agent's
    density fixed.

    Raises
    ------
    IntegrationError
        If the step blows up the log-density; retry with a smaller ``dt``.
    """
    grid = kernel.grid
    if init.grid != grid:
        raise DimensionError("initial state and kernel use different grids")
    if frozen not in (None, 1, 2):
        raise ValueError(f"frozen must be None, 1 or 2, got {frozen!r}")
    beta = params.beta
    temperature = 1.0 / beta
    dt = params.dt if params.dt is not None else default_dt(beta)
    t_max = params.t_max if params.t_max is not None else default_t_max(beta)
    every = record_every if record_every is not None else max(dt, t_max / 200)
    w = grid.weights

    u1, alive1 = _to_log(init.p1.values)
    u2, alive2 = _to_log(init.p2.values)
    move1, move2 = frozen != 1, frozen != 2

    span = float(kernel.k1.max() - kernel.k1.min()) + float(kernel.k2.max() - kernel.k2.min())
    spread0 = max(np.ptp(u1[alive1]), np.ptp(u2[alive2]))
    spread_limit = 2.0 * max(spread0, beta * span) + 50.0

    def rates(u1, u2):
        q1, q2 = _from_log(u1, alive1, w), _from_log(u2, alive2, w)
        r1 = kernel.k1 @ (w * q2)
        r2 = kernel.k2.T @ (w * q1)
        d1 = _log_rate(u1, q1, alive1, r1, w, temperature) if move1 else np.zeros_like(u1)
        d2 = _log_rate(u2, q2, alive2, r2, w, temperature) if move2 else np.zeros_like(u2)
        return d1, d2, q1, q2, r1, r2

    times, s1, s2, fe1, fe2, res = [], [], [], [], [], []

    def record(t, q1, q2, r1, r2, resid):
        times.append(t)
        s1.append(q1.copy())
        s2.append(q2.copy())
        fe1.append(free_energy(q1, r1, beta, grid))
        fe2.append(free_energy(q2, r2, beta, grid))
        res.append(resid)

    t = float(init.t)
    t_end = t + t_max
    next_record = t
    steps = 0
    converged = False
    while True:
        k1a, k1b, q1, q2, r1, r2 = rates(u1, u2)
        resid = float(max(np.max(np.abs(q1 * k1a)), np.max(np.abs(q2 * k1b))))
        if resid <= params.tol:
            converged = True
        if t >= next_record - 1e-12 or converged or t >= t_end - 1e-12:
            record(t, q1, q2, r1, r2, resid)
            next_record = t + every
        if converged or t >= t_end - 1e-12:
            break
        h = min(dt, t_end - t)
        k2a, k2b, *_ = rates(u1 + 0.5 * h * k1a, u2 + 0.5 * h * k1b)
        k3a, k3b, *_ = rates(u1 + 0.5 * h * k2a, u2 + 0.5 * h * k2b)
        k4a, k4b, *_ = rates(u1 + h * k3a, u2 + h * k3b)
        u1 = u1 + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        u2 = u2 + h / 6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        # renormalize: shift so the largest node sits at log-density 0
        u1[alive1] -= u1[alive1].max()
        u2[alive2] -= u2[alive2].max()
        u1[alive1] = np.maximum(u1[alive1], LOG_FLOOR)
        u2[alive2] = np.maximum(u2[alive2], LOG_FLOOR)
        t += h
        steps += 1
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise IntegrationError(f"non-finite log-density at t={t:.6g}; reduce dt (currently {dt:g})")
        spread = max(np.ptp(u1[alive1]), np.ptp(u2[alive2]))
        if spread > spread_limit:
            raise IntegrationError(
                f"log-density spread {spread:.3g} exceeds {spread_limit:.3g} at t={t:.6g}; "
                f"step size dt={dt:g} is unstable, reduce dt"
            )

    logger.debug("evolve: %d steps, t=%g, residual=%.3g, converged=%s", steps, t, res[-1], converged)
    return TrajectoryRecord(
        grid=grid,
        times=np.array(times),
        p1=np.array(s1),
        p2=np.array(s2),
        free_energy1=np.array(fe1),
        free_energy2=np.array(fe2),
        residual=np.array(res),
        converged=converged,
        steps=steps,
        meta={"dt": dt, "t_max": t_max, "beta": beta, "frozen": frozen},
    )


def initial_state(grid: Grid, name: str = "uniform", tilt: float = 3.0) -> ReplicatorState:
    """Named initial density pair.

    ``left-tilt``/``right-tilt`` give both agents ``exp(-+tilt * x)``;
    ``asymmetric`` tilts agent 1 left and agent 2 right.
    """
    x = grid.nodes
    left = normalize(np.exp(-tilt * x), grid)
    right = normalize(np.exp(tilt * (x - 1)), grid)
    if name == "uniform":
        u = Density.uniform(grid)
        return ReplicatorState(0.0, u, u)
    if name == "left-tilt":
        return ReplicatorState(0.0, left, left)
    if name == "right-tilt":
        return ReplicatorState(0.0, right, right)
    if name == "asymmetric":
        return ReplicatorState(0.0, left, right)
    raise ValueError(f"unknown initializer {name!r}, expected one of {INITS}")
