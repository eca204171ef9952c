"""Two-player continuous-action payoffs and their grid tabulation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from boltzrep.core import DimensionError, Grid


def payoff_bilinear(x, y, a1, b1, a2, b2):
    return a1 * x * y + b1 * x, a2 * x * y + b2 * y


def payoff_quadratic(x, y, a1, a2):
    s = x + y
    return -((s - 2 * a1) ** 2), -((s - 2 * a2) ** 2)


def payoff_polad(x, y):
    """Political advertisement: vote share minus expenditure.

    The share is undefined at ``x = y = 0``; it is taken as 1/2 there.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    total = x + y
    tie = total == 0
    safe = np.where(tie, 1.0, total)
    share1 = np.where(tie, 0.5, x / safe)
    share2 = np.where(tie, 0.5, y / safe)
    f1, f2 = share1 - x, share2 - y
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


def payoff_investment(x, y):
    """Winner-takes-the-market investment game; ties split the unit prize."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    win1 = np.where(x > y, 1.0, np.where(x < y, 0.0, 0.5))
    f1, f2 = win1 - x, (1.0 - win1) - y
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


@dataclass(frozen=True)
class Bilinear:
    a1: float
    b1: float
    a2: float
    b2: float

    kind = "bilinear"

    def payoff(self, x, y):
        return payoff_bilinear(x, y, self.a1, self.b1, self.a2, self.b2)

    @property
    def symmetric(self) -> bool:
        return self.a1 == self.a2 and self.b1 == self.b2


@dataclass(frozen=True)
class Quadratic:
    a1: float
    a2: float

    kind = "quadratic"

    def __post_init__(self):
        for name in ("a1", "a2"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"quadratic game requires 0 < {name} < 1, got {value!r}")

    def payoff(self, x, y):
        return payoff_quadratic(x, y, self.a1, self.a2)

    @property
    def symmetric(self) -> bool:
        return self.a1 == self.a2


@dataclass(frozen=True)
class PoliticalAd:
    kind = "polad"
    symmetric = True

    def payoff(self, x, y):
        return payoff_polad(x, y)


@dataclass(frozen=True)
class Investment:
    kind = "investment"
    symmetric = True

    def payoff(self, x, y):
        return payoff_investment(x, y)


@dataclass(frozen=True)
class Tabulated:
    """Payoffs given directly on the nodes: ``f1[i, j] = f1(x_i, y_j)``."""

    f1: np.ndarray = field(compare=False)
    f2: np.ndarray = field(compare=False)
    name: str = "tabulated"

    kind = "tabulated"
    symmetric = False

    def __post_init__(self):
        f1 = np.array(self.f1, dtype=float)
        f2 = np.array(self.f2, dtype=float)
        if f1.ndim != 2 or f1.shape[0] != f1.shape[1] or f1.shape != f2.shape:
            raise DimensionError(f"payoff tables must be equal square matrices, got {f1.shape} and {f2.shape}")
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", f2)


GameSpec = Union[Bilinear, Quadratic, PoliticalAd, Investment, Tabulated]


def game_label(game: GameSpec) -> str:
    return game.name if isinstance(game, Tabulated) else game.kind


@dataclass(frozen=True)
class PayoffKernel:
    """Payoff tables on a grid: ``k1[i, j] = f1(x_i, y_j)``, ``k2[i, j] = f2(x_i, y_j)``."""

    grid: Grid
    k1: np.ndarray = field(repr=False)
    k2: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = self.grid.m
        for name in ("k1", "k2"):
            k = np.array(getattr(self, name), dtype=float)
            if k.shape != (m, m):
                raise DimensionError(f"{name} has shape {k.shape}, grid needs ({m}, {m})")
            if not np.all(np.isfinite(k)):
                raise ValueError(f"{name} contains non-finite payoffs")
            k.flags.writeable = False
            object.__setattr__(self, name, k)


def tabulate(game: GameSpec, grid: Grid) -> PayoffKernel:
    """Evaluate ``game`` at every node pair of ``grid``.

    Investment ties on the diagonal take the split-prize branch at interior
    nodes. At the two endpoint nodes the opponent's quadrature cell lies
    entirely on one side of the tie, so the corner entries use the win/loss
    value instead; this makes the grid reward against a uniform opponent
    vanish identically, as it does in the continuum.
    """
    if isinstance(game, Tabulated):
        if game.f1.shape != (grid.m, grid.m):
            raise DimensionError(f"tabulated payoffs are {game.f1.shape}, grid has {grid.m} nodes")
        return PayoffKernel(grid, game.f1, game.f2)
    x = grid.nodes[:, None]
    y = grid.nodes[None, :]
    k1, k2 = game.payoff(x, y)
    k1 = np.array(np.broadcast_to(k1, (grid.m, grid.m)), dtype=float)
    k2 = np.array(np.broadcast_to(k2, (grid.m, grid.m)), dtype=float)
    if isinstance(game, Investment):
        # at (0, 0) the owner of the node loses (-0); at (1, 1) it wins (1 - 1)
        k1[0, 0] = k2[0, 0] = 0.0
        k1[-1, -1] = k2[-1, -1] = 0.0
    return PayoffKernel(grid, k1, k2)


def read_payoff_csv(path, grid: Grid, name: str = "tabulated") -> Tabulated:
    """Read ``i,j,f1,f2`` rows into a :class:`Tabulated` game on ``grid``."""
    m = grid.m
    f1 = np.full((m, m), np.nan)
    f2 = np.full((m, m), np.nan)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["i", "j", "f1", "f2"]:
            raise ValueError(f"{path}: expected header i,j,f1,f2, got {reader.fieldnames}")
        for row in reader:
            i, j = int(row["i"]), int(row["j"])
            if not (0 <= i < m and 0 <= j < m):
                raise DimensionError(f"{path}: node index ({i}, {j}) outside a {m}-node grid")
            f1[i, j] = float(row["f1"])
            f2[i, j] = float(row["f2"])
    if np.isnan(f1).any() or np.isnan(f2).any():
        raise ValueError(f"{path}: payoff table does not cover all {m}x{m} node pairs")
    return Tabulated(f1, f2, name)


def write_payoff_csv(path, kernel: PayoffKernel) -> None:
    m = kernel.grid.m
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "f1", "f2"])
        for i in range(m):
            for j in range(m):
                writer.writerow([i, j, repr(float(kernel.k1[i, j])), repr(float(kernel.k2[i, j]))])
