"""Monte Carlo Q-learning with Boltzmann action selection on grid actions."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from boltzrep.core import Density, Grid, gibbs, ks_distance
from boltzrep.games import GameSpec, tabulate

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


@dataclass
class QTable:
    grid: Grid
    q: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        if self.q.shape != (self.grid.m,):
            raise ValueError(f"Q table has shape {self.q.shape}, grid has {self.grid.m} nodes")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("Q values must be finite")


@dataclass(frozen=True)
class SimConfig:
    beta: float
    alpha: float = 0.1
    batch: int = 1000
    updates: int = 2000
    seed: int = 0
    init_q: float | tuple = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ValueError(f"batch must be an integer >= 1, got {self.batch!r}")
        if int(self.updates) != self.updates or self.updates < 0:
            raise ValueError(f"updates must be a nonnegative integer, got {self.updates!r}")


def boltzmann_density(q: QTable, beta: float) -> Density:
    return gibbs(q.q, beta, q.grid)


def action_probabilities(d: Density) -> np.ndarray:
    """Probability of each node: quadrature weight times density."""
    p = d.grid.weights * d.values
    return p / p.sum()


def sample_action(d: Density, rng: np.random.Generator, size=None):
    """Draw node indices with probability proportional to ``w_k p_k``."""
    return rng.choice(d.grid.m, size=size, p=action_probabilities(d))


def q_update(q: QTable, rewards, alpha: float) -> QTable:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    r = np.asarray(rewards, dtype=float)
    if alpha == 1:
        # q + (r - q) can differ from r in the last bit
        return QTable(q.grid, r)
    return QTable(q.grid, q.q + alpha * (r - q.q))


@dataclass
class SimulationResult:
    p1: Density
    p2: Density
    ks1: np.ndarray
    ks2: np.ndarray
    config: SimConfig
    meta: dict = field(default_factory=dict)

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["update", "ks1", "ks2"])
            for k, (a, b) in enumerate(zip(self.ks1, self.ks2), start=1):
                writer.writerow([k, repr(float(a)), repr(float(b))])

    def metadata_line(self) -> str:
        cfg = asdict(self.config)
        cfg["init_q"] = np.asarray(cfg["init_q"], dtype=float).tolist()
        return json.dumps({**cfg, "rng": RNG_ALGORITHM, **self.meta}, sort_keys=True)


def run_simulation(
    game: GameSpec,
    cfg: SimConfig,
    grid: Grid | None = None,
    reference: tuple[Density, Density] | None = None,
) -> SimulationResult:
    """Alternate batches of play with Q updates for both agents.

    Each update both agents draw ``cfg.batch`` actions from their current
    Boltzmann densities. Every node's Q value then moves toward its payoff
    averaged over the opponent's batch, not just the sampled ones. The
    trace holds the KS distance of each agent's density to ``reference``
    after every update (NaN when no reference is given).
    """
    grid = grid if grid is not None else Grid()
    kernel = tabulate(game, grid)
    rng = np.random.default_rng(cfg.seed)
    m = grid.m
    q0 = np.broadcast_to(np.asarray(cfg.init_q, dtype=float), (m,))
    q1 = QTable(grid, q0)
    q2 = QTable(grid, q0)
    ks1 = np.full(cfg.updates, np.nan)
    ks2 = np.full(cfg.updates, np.nan)
    for k in range(cfg.updates):
        d1, d2 = boltzmann_density(q1, cfg.beta), boltzmann_density(q2, cfg.beta)
        a1 = sample_action(d1, rng, cfg.batch)
        a2 = sample_action(d2, rng, cfg.batch)
        freq1 = np.bincount(a1, minlength=m) / cfg.batch
        freq2 = np.bincount(a2, minlength=m) / cfg.batch
        q1 = q_update(q1, kernel.k1 @ freq2, cfg.alpha)
        q2 = q_update(q2, kernel.k2.T @ freq1, cfg.alpha)
        if reference is not None:
            ks1[k] = ks_distance(boltzmann_density(q1, cfg.beta), reference[0])
            ks2[k] = ks_distance(boltzmann_density(q2, cfg.beta), reference[1])
    return SimulationResult(
        p1=boltzmann_density(q1, cfg.beta),
        p2=boltzmann_density(q2, cfg.beta),
        ks1=ks1,
        ks2=ks2,
        config=cfg,
        meta={"grid_size": m, "rule": grid.rule},
    )
