"""Steady states as fixed points of the coupled Gibbs map."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from boltzrep.core import DimensionError, Density, gibbs
from boltzrep.dynamics import average_reward
from boltzrep.games import Bilinear, PayoffKernel, Quadratic

logger = logging.getLogger(__name__)


class KernelError(ValueError):
    """Reward evaluation produced non-finite values."""


@dataclass
class SteadyStateResult:
    p1: Density
    p2: Density
    residual: float
    iterations: int
    converged: bool
    damping: float
    fit: dict = field(default_factory=dict)

    def metadata(self, **extra) -> dict:
        meta = {
            "damping": self.damping,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }
        meta.update(self.fit)
        meta.update(extra)
        return meta

    def metadata_line(self, **extra) -> str:
        return json.dumps(self.metadata(**extra), sort_keys=True)


def gibbs_map(p1, p2, kernel: PayoffKernel, beta: float) -> tuple[Density, Density]:
    """Best Boltzmann response of each agent to the other's density."""
    r1 = average_reward(kernel, p2, 1)
    r2 = average_reward(kernel, p1, 2)
    if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
        raise KernelError("average reward is not finite; check the payoff kernel")
    g = kernel.grid
    return gibbs(r1, beta, g), gibbs(r2, beta, g)


def solve_steady(
    kernel: PayoffKernel,
    beta: float,
    init: tuple[Density, Density],
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    adaptive: bool = True,
) -> SteadyStateResult:
    """Damped Picard iteration ``p <- (1 - d) p + d G(p)`` for both agents at once.

    Stops when the sup-norm of ``G(p) - p`` is at most ``tol``. With
    ``adaptive`` the damping is halved whenever that residual grows over a
    short window, which tames the oscillation of the two-agent coupling.
    Exhausting ``max_iter`` returns ``converged=False`` with the last
    iterate.
    """
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping!r}")
    p1, p2 = init
    g = kernel.grid
    if p1.grid != g or p2.grid != g:
        raise DimensionError("initial densities and kernel use different grids")
    w = g.weights
    x1, x2 = p1.values.copy(), p2.values.copy()
    d = damping
    best = np.inf
    since_best = 0
    patience = 20
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        q1, q2 = gibbs_map(x1, x2, kernel, beta)
        diff1 = q1.values - x1
        diff2 = q2.values - x2
        residual = float(max(np.max(np.abs(diff1)), np.max(np.abs(diff2))))
        if residual <= tol:
            x1, x2 = q1.values.copy(), q2.values.copy()
            break
        if adaptive:
            if residual < best:
                best, since_best = residual, 0
            else:
                since_best += 1
                if since_best >= patience and d > 1e-6:
                    d *= 0.5
                    best, since_best = residual, 0
                    logger.debug("solve_steady: damping reduced to %g at iteration %d", d, it)
        x1 = x1 + d * diff1
        x2 = x2 + d * diff2
        # convex combination keeps mass 1 up to rounding; re-pin it
        x1 /= w @ x1
        x2 /= w @ x2
    converged = residual <= tol
    if not converged:
        logger.warning("solve_steady: not converged after %d iterations (residual %.3g)", it, residual)
    return SteadyStateResult(
        p1=Density(g, x1),
        p2=Density(g, x2),
        residual=residual,
        iterations=it,
        converged=converged,
        damping=d,
    )


def parametric_fit(result: SteadyStateResult, game, beta: float) -> dict:
    """Least-squares fit of the closed-form steady-state family to ``ln p``.

    Bilinear games give tilts ``gamma1, gamma2``; quadratic games give
    Gaussian centers ``x0, y0``. Other games return an empty dict.
    """
    x = result.p1.grid.nodes
    logs = [np.log(np.maximum(p.values, 1e-300)) for p in (result.p1, result.p2)]
    if isinstance(game, Bilinear):
        g1, g2 = (float(np.polyfit(x, lp, 1)[0]) for lp in logs)
        return {"gamma1": g1, "gamma2": g2}
    if isinstance(game, Quadratic):
        centers = []
        for lp in logs:
            quad, lin, _ = np.polyfit(x, lp, 2)
            centers.append(float(-lin / (2 * quad)))
        return {"x0": centers[0], "y0": centers[1]}
    return {}
