"""Grid densities on [0, 1]: quadrature, normalization, entropy, free energy."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RULES = ("simpson", "trapezoid")

# exp(-745) is the smallest positive double; log-densities are floored here
LOG_FLOOR = -745.0


class DimensionError(ValueError):
    """Vector length does not match the grid."""


class DegenerateDensityError(ValueError):
    """Density with zero or negative total mass."""


def _quadrature_weights(m: int, rule: str) -> np.ndarray:
    h = 1.0 / (m - 1)
    if rule == "trapezoid":
        w = np.full(m, h)
        w[0] = w[-1] = h / 2
        return w
    # composite Simpson; an even point count closes with a 3/8 panel
    w = np.zeros(m)
    n_simpson = m if m % 2 == 1 else m - 3
    if n_simpson >= 3:
        w[:n_simpson:2] += 2 * h / 3
        w[1:n_simpson:2] += 4 * h / 3
        w[0] -= h / 3
        w[n_simpson - 1] -= h / 3
    if m % 2 == 0:
        s = n_simpson - 1
        w[s : s + 4] += np.array([1.0, 3.0, 3.0, 1.0]) * 3 * h / 8
    return w


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``m`` nodes on [0, 1] with fixed quadrature weights.

    Parameters
    ----------
    m : int
        Number of nodes, at least 3.
    rule : {"simpson", "trapezoid"}
        Composite quadrature rule used by :func:`integrate`.
    """

    m: int = 201
    rule: str = "simpson"
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"grid size m must be an integer >= 3, got {self.m}")
        if self.rule not in RULES:
            raise ValueError(f"unknown quadrature rule {self.rule!r}, expected one of {RULES}")
        object.__setattr__(self, "m", int(self.m))
        nodes = np.linspace(0.0, 1.0, self.m)
        weights = _quadrature_weights(self.m, self.rule)
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def h(self) -> float:
        return 1.0 / (self.m - 1)

    def cell_edges(self) -> np.ndarray:
        """Right edge of the quadrature cell owned by each node (cumulative weight)."""
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class Density:
    """Normalized, nonnegative node values of a density on ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.m,):
            raise DimensionError(f"density has shape {v.shape}, grid has {self.grid.m} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        mass = float(self.grid.weights @ v)
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"density integrates to {mass!r}, expected 1 (use normalize)")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, grid: Grid) -> Density:
        return normalize(np.ones(grid.m), grid)

    def mean(self) -> float:
        return integrate(self.grid.nodes * self.values, self.grid)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.grid.weights * self.values)


def _values(d, grid: Grid | None) -> tuple[np.ndarray, Grid]:
    if isinstance(d, Density):
        if grid is not None and grid != d.grid:
            raise DimensionError("density lives on a different grid")
        return d.values, d.grid
    if grid is None:
        raise TypeError("a Grid is required for raw node vectors")
    v = np.asarray(d, dtype=float)
    if v.shape != (grid.m,):
        raise DimensionError(f"vector has shape {v.shape}, grid has {grid.m} nodes")
    return v, grid


def integrate(d, grid: Grid | None = None) -> float:
    """Quadrature of node values ``d`` over [0, 1]."""
    v, g = _values(d, grid)
    return float(g.weights @ v)


def normalize(d, grid: Grid | None = None) -> Density:
    """Scale ``d`` by one positive constant so that it integrates to 1."""
    v, g = _values(d, grid)
    if np.any(v < 0):
        raise DegenerateDensityError("density has negative node values")
    mass = float(g.weights @ v)
    if not mass > 0 or not np.isfinite(mass):
        raise DegenerateDensityError(f"cannot normalize a density of mass {mass!r}")
    out = v / mass
    # one correction pass brings the quadrature to 1 within a couple of ulps
    out = out / float(g.weights @ out)
    return Density(g, out)


def entropy(d, grid: Grid | None = None) -> float:
    """Differential entropy ``-int p ln p`` with ``0 ln 0 = 0``."""
    v, g = _values(d, grid)
    plogp = np.zeros_like(v)
    pos = v > 0
    plogp[pos] = v[pos] * np.log(v[pos])
    return -float(g.weights @ plogp)


def free_energy(d, r, beta: float, grid: Grid | None = None) -> float:
    """Expected reward plus temperature times entropy.

    The Gibbs density proportional to ``exp(beta * r)`` is the unique
    maximizer of this functional over normalized densities on the grid.
    """
    v, g = _values(d, grid)
    r = np.asarray(r, dtype=float)
    if r.shape != v.shape:
        raise DimensionError("reward vector and density have different lengths")
    return float(g.weights @ (r * v)) + entropy(v, g) / beta


def gibbs(r, beta: float, grid: Grid) -> Density:
    """Density proportional to ``exp(beta * r)``, max-shifted before exponentiation."""
    r = np.asarray(r, dtype=float)
    if r.shape != (grid.m,):
        raise DimensionError(f"reward has shape {r.shape}, grid has {grid.m} nodes")
    if not np.all(np.isfinite(r)):
        raise ValueError("reward vector contains non-finite values")
    u = beta * r
    return normalize(np.exp(u - u.max()), grid)


def ks_distance(p, q, grid: Grid | None = None) -> float:
    """Sup-norm distance between the cumulative distributions of two grid densities."""
    pv, g = _values(p, grid)
    qv, _ = _values(q, g)
    return float(np.max(np.abs(np.cumsum(g.weights * (pv - qv)))))


@dataclass(frozen=True)
class LearningParams:
    """Inverse temperature and integration controls.

    ``dt`` and ``t_max`` default to values that depend on ``beta``; see
    :func:`boltzrep.dynamics.evolve`.
    """

    beta: float
    alpha: float = 1.0
    dt: float | None = None
    t_max: float | None = None
    tol: float = 1e-8

    def __post_init__(self):
        for name in ("beta", "alpha", "tol"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max!r}")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta


def write_density_csv(path, d: Density) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "p"])
        for x, p in zip(d.grid.nodes, d.values):
            writer.writerow([repr(float(x)), repr(float(p))])


def read_density_csv(path, rule: str = "simpson") -> Density:
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "p"]:
            raise ValueError(f"{path}: expected header x,p, got {reader.fieldnames}")
        rows = [(float(r["x"]), float(r["p"])) for r in reader]
    grid = Grid(len(rows), rule)
    x = np.array([r[0] for r in rows])
    if not np.allclose(x, grid.nodes, atol=1e-12):
        raise ValueError(f"{path}: x column is not a uniform grid on [0, 1]")
    return Density(grid, np.array([r[1] for r in rows]))
