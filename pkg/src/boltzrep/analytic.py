"""Scalar self-consistency equations for bilinear and quadratic games.

Bilinear payoffs give exponential-family steady states ``P(x) ~ exp(gamma x)``
whose tilts solve ``gamma1 = beta g(gamma2)``, ``gamma2 = beta g(gamma1)``.
Quadratic payoffs give truncated Gaussians ``c(x0) exp(-beta (x - x0)^2)``
whose centers solve ``x0 = 2 a1 - mu(y0)``, ``y0 = 2 a2 - mu(x0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfcx

from boltzrep.core import Grid, normalize
from boltzrep.games import Bilinear, Quadratic

SCAN_PANELS = 4096

# |gamma| below this uses the Taylor series of g
SERIES_CUTOFF = 1e-1


# ---------------------------------------------------------------------------
# bilinear games


def g(gamma, a: float, b: float):
    """Mean action under ``P ~ exp(gamma x)`` scaled by ``a``, plus ``b``.

    ``g(gamma) = b + a [1 / (1 - exp(-gamma)) - 1 / gamma]``, continuous
    through ``gamma = 0`` where it equals ``b + a / 2``.
    """
    gm = np.asarray(gamma, dtype=float)
    out = np.empty_like(gm)
    small = np.abs(gm) < SERIES_CUTOFF
    s = gm[small]
    s2 = s * s
    out[small] = 0.5 + s * (1 / 12 - s2 * (1 / 720 - s2 * (1 / 30240 - s2 * (1 / 1209600 - s2 / 47900160))))
    pos = ~small & (gm > 0)
    neg = ~small & (gm < 0)
    with np.errstate(over="ignore"):
        out[pos] = 1.0 / -np.expm1(-gm[pos]) - 1.0 / gm[pos]
        out[neg] = np.exp(gm[neg]) / np.expm1(gm[neg]) - 1.0 / gm[neg]
    out = b + a * out
    return float(out) if out.ndim == 0 else out


def g_prime(gamma, a: float):
    """Derivative of :func:`g` in ``gamma``: ``a [1/gamma^2 - 1/(4 sinh^2(gamma/2))]``."""
    gm = np.asarray(gamma, dtype=float)
    out = np.empty_like(gm)
    small = np.abs(gm) < SERIES_CUTOFF
    s2 = gm[small] ** 2
    out[small] = 1 / 12 - s2 * (1 / 240 - s2 * (1 / 6048 - s2 * (1 / 172800 - s2 / 5322240)))
    big = ~small
    with np.errstate(over="ignore"):
        out[big] = 1.0 / gm[big] ** 2 - 0.25 / np.sinh(0.5 * gm[big]) ** 2
    out = a * out
    return float(out) if out.ndim == 0 else out


def _bisect(f, lo: float, hi: float, flo: float) -> float:
    # run to adjacent floats; f(lo) and f(hi) have opposite signs
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def scan_roots(f, lo: float, hi: float, panels: int = SCAN_PANELS) -> list[float]:
    """All sign changes of a vectorized ``f`` on ``[lo, hi]``, refined by bisection."""
    xs = np.linspace(lo, hi, panels + 1)
    fs = np.asarray(f(xs), dtype=float)
    roots = [float(x) for x in xs[fs == 0.0]]
    scalar = lambda v: float(f(np.asarray(v)))  # noqa: E731
    for i in np.nonzero(fs[:-1] * fs[1:] < 0)[0]:
        roots.append(_bisect(scalar, float(xs[i]), float(xs[i + 1]), float(fs[i])))
    return sorted(roots)


def solve_symmetric_gamma(a: float, b: float, beta: float, panels: int = SCAN_PANELS) -> list[float]:
    """All roots of ``gamma / beta = g(gamma)`` on ``|gamma| <= beta (|a| + |b| + 1)``."""
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    gmax = beta * (abs(a) + abs(b) + 1.0)
    return scan_roots(lambda z: z / beta - g(z, a, b), -gmax, gmax, panels)


def symmetric_residual(gamma: float, a: float, b: float, beta: float) -> float:
    return abs(gamma / beta - g(gamma, a, b))


def period2_residual(gamma1: float, gamma2: float, a: float, b: float, beta: float) -> float:
    return max(abs(gamma1 - beta * g(gamma2, a, b)), abs(gamma2 - beta * g(gamma1, a, b)))


def iterate_map(z0, a: float, b: float, beta: float, steps: int):
    """``steps`` iterations of ``z -> beta g(z)`` from each start in ``z0``."""
    z = np.array(z0, dtype=float)
    for _ in range(steps):
        z = beta * g(z, a, b)
    return z


def find_period2(a: float, b: float, beta: float, panels: int = SCAN_PANELS) -> tuple[float, float] | None:
    """Period-2 attractor ``(gamma1 < gamma2)`` of ``z -> beta g(z)``, or None.

    Period-2 points are the fixed points of the twice-composed map other
    than the symmetric root. For ``a < 0`` the map is decreasing, its square
    is increasing, and every orbit of the square started below the
    symmetric root climbs monotonically to the lowest such point; it is
    located by a sign scan on that side and kept only if attracting.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    if a >= 0:
        return None
    (z_sym,) = solve_symmetric_gamma(a, b, beta, panels)
    lo = beta * min(b, a + b)
    edge = z_sym - 1e-9 * max(1.0, abs(z_sym))
    if not lo < edge:
        return None

    def excess(z):
        return beta * g(beta * g(z, a, b), a, b) - z

    roots = scan_roots(excess, lo, edge, panels)
    for z1 in reversed(roots):
        z2 = beta * g(z1, a, b)
        if abs(z2 - z1) <= 1e-8:
            continue
        multiplier = beta**2 * g_prime(z1, a) * g_prime(z2, a)
        if abs(multiplier) <= 1.0:
            return (min(z1, z2), max(z1, z2))
    return None


def _bisect_beta(predicate, lo: float, hi: float, tol: float) -> float:
    if predicate(lo) or not predicate(hi):
        raise ValueError(f"no transition in beta between {lo} and {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def critical_beta_period2(
    a: float, b: float, lo: float = 1e-3, hi: float = 1e3, tol: float = 1e-4, panels: int = SCAN_PANELS
) -> float:
    """Smallest beta at which :func:`find_period2` returns a pair (bisection in beta)."""
    return _bisect_beta(lambda bt: find_period2(a, b, bt, panels) is not None, lo, hi, tol)


def critical_beta_symmetric(
    a: float, b: float, lo: float = 1e-3, hi: float = 1e3, tol: float = 1e-4, panels: int = SCAN_PANELS
) -> float:
    """Smallest beta at which the symmetric equation has three roots."""
    return _bisect_beta(lambda bt: len(solve_symmetric_gamma(a, b, bt, panels)) >= 3, lo, hi, tol)


@dataclass(frozen=True)
class ExponentialFamilyFit:
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma1) and math.isfinite(self.gamma2)):
            raise ValueError("tilts must be finite")

    def densities(self, grid: Grid):
        """Both tilted densities on ``grid``, normalized with the grid's quadrature."""
        x = grid.nodes
        out = []
        for gm in (self.gamma1, self.gamma2):
            out.append(normalize(np.exp(gm * x - max(gm, 0.0)), grid))
        return tuple(out)


# ---------------------------------------------------------------------------
# quadratic games


def _erf_sum(z, beta):
    # erf(sqrt(b) z) + erf(sqrt(b) (1 - z)); arguments outside [0, 1] go through erfcx
    z = np.asarray(z, dtype=float)
    sb = math.sqrt(beta)
    zz = np.where(z > 1.0, 1.0 - z, z)
    out = np.empty_like(zz)
    inside = zz >= 0
    out[inside] = erf(sb * zz[inside]) + erf(sb * (1.0 - zz[inside]))
    u = -sb * zz[~inside]
    v = sb * (1.0 - zz[~inside])
    out[~inside] = np.exp(-u * u) * (erfcx(u) - np.exp(u * u - v * v) * erfcx(v))
    return out


def c_norm(z, beta: float):
    """Normalizer of ``exp(-beta (x - z)^2)`` on [0, 1]."""
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    out = 2.0 * math.sqrt(beta / math.pi) / _erf_sum(z, beta)
    return float(out) if out.ndim == 0 else out


def mean_shift(z, beta: float):
    """``mu(z) - z``: how far truncation to [0, 1] moves the Gaussian mean.

    Evaluated without forming ``mu`` first, so it keeps full relative
    precision when it is tiny (large beta, ``z`` away from the edges).
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    z = np.asarray(z, dtype=float)
    flip = z > 0.5
    zz = np.where(flip, 1.0 - z, z)
    out = np.empty_like(zz)
    spb = math.sqrt(math.pi * beta)
    inside = zz >= 0
    zi = zz[inside]
    # exp(-b z^2) - exp(-b (1 - z)^2) for z <= 1/2
    num = np.exp(-beta * zi * zi) * -np.expm1(-beta * (1.0 - 2.0 * zi))
    out[inside] = num / (spb * _erf_sum(zi, beta))
    zo = zz[~inside]
    sb = math.sqrt(beta)
    u, v = -sb * zo, sb * (1.0 - zo)
    ratio = np.exp(u * u - v * v)
    out[~inside] = -np.expm1(u * u - v * v) / (spb * (erfcx(u) - ratio * erfcx(v)))
    out = np.where(flip, -out, out)
    return float(out) if out.ndim == 0 else out


def mu(z, beta: float):
    """Mean of ``c(z) exp(-beta (x - z)^2)`` restricted to [0, 1]."""
    out = np.asarray(z, dtype=float) + mean_shift(z, beta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TruncatedGaussianFit:
    x0: float
    y0: float
    beta: float

    @property
    def c_x0(self) -> float:
        return c_norm(self.x0, self.beta)

    @property
    def c_y0(self) -> float:
        return c_norm(self.y0, self.beta)

    def densities(self, grid: Grid, exact_norm: bool = False):
        """Both truncated Gaussians on ``grid``.

        By default they are renormalized with the grid's quadrature; with
        ``exact_norm`` the closed-form normalizers are used as-is.
        """
        x = grid.nodes
        out = []
        for z, c in ((self.x0, self.c_x0), (self.y0, self.c_y0)):
            vals = c * np.exp(-self.beta * (x - z) ** 2)
            out.append(vals if exact_norm else normalize(vals, grid))
        return tuple(out)


def centers_residual(x0: float, y0: float, a1: float, a2: float, beta: float) -> float:
    return max(abs(x0 - (2 * a1 - mu(y0, beta))), abs(y0 - (2 * a2 - mu(x0, beta))))


def _check_a(*values):
    for name, value in values:
        if not 0 < value < 1:
            raise ValueError(f"{name} must satisfy 0 < {name} < 1, got {value!r}")


def solve_quadratic_centers(
    a1: float, a2: float, beta: float, panels: int = SCAN_PANELS
) -> list[tuple[float, float]]:
    """All center pairs of the quadratic game's truncated-Gaussian steady states.

    Eliminating ``y0`` leaves the scalar equation
    ``2 (a1 - a2) + d(x0) - d(2 a2 - x0 - d(x0)) = 0`` with ``d = mu - id``,
    which is scanned over ``x0 in [2 a1 - 1, 2 a1]`` (the range of
    ``2 a1 - mu``). Writing it through ``d`` removes the O(1) cancellation
    that otherwise swamps the equation at large beta.
    """
    _check_a(("a1", a1), ("a2", a2))
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")

    def excess(x0):
        d0 = mean_shift(x0, beta)
        return 2.0 * (a1 - a2) + d0 - mean_shift(2.0 * a2 - x0 - d0, beta)

    out = []
    for x0 in scan_roots(excess, 2 * a1 - 1.0, 2 * a1, panels):
        y0 = 2 * a2 - mu(x0, beta)
        if out and abs(x0 - out[-1][0]) < 1e-12:
            continue
        out.append((x0, y0))
    return out


@dataclass
class ConstraintFamily:
    """Roots of ``x0 = 2a - mu(2a - x0)`` and the near-root plateau around them."""

    a: float
    beta: float
    roots: list[float]
    band: float
    plateau: tuple[float, float] | None

    @property
    def plateau_width(self) -> float:
        return 0.0 if self.plateau is None else self.plateau[1] - self.plateau[0]


def solve_constraint_family(
    a: float, beta: float, band: float = 1e-3, panels: int = SCAN_PANELS
) -> ConstraintFamily:
    """Solutions with ``x0 + y0 = 2a`` and the width of the ``|lhs - rhs| < band`` plateau.

    The equation reduces to ``mu(y0) = y0``, whose only root is ``y0 = 1/2``;
    at large beta ``mu`` is within ``band`` of the identity over a wide
    interval, which is the metastable plateau.
    """
    _check_a(("a", a))
    lo, hi = max(0.0, 2 * a - 1.0), min(1.0, 2 * a)

    def excess(x0):
        return mean_shift(2.0 * a - x0, beta)

    roots = scan_roots(excess, lo, hi, panels)
    xs = np.linspace(lo, hi, panels + 1)
    near = np.abs(excess(xs)) < band
    plateau = None
    if roots and near.any():
        # connected run of near-root nodes containing the first root
        k = int(np.clip(np.searchsorted(xs, roots[0]), 0, panels))
        if not near[k] and k > 0 and near[k - 1]:
            k -= 1
        if near[k]:
            i = k
            while i > 0 and near[i - 1]:
                i -= 1
            j = k
            while j < panels and near[j + 1]:
                j += 1
            plateau = (float(xs[i]), float(xs[j]))
    return ConstraintFamily(a, beta, roots, band, plateau)


# ---------------------------------------------------------------------------
# bifurcation scans


@dataclass(frozen=True)
class BranchPoint:
    beta: float
    branch: str
    value1: float
    value2: float
    residual: float


@dataclass
class BifurcationDiagram:
    betas: list[float]
    points: list[BranchPoint] = field(default_factory=list)

    def at(self, beta: float) -> list[BranchPoint]:
        return [p for p in self.points if p.beta == beta]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["beta", "branch", "value1", "value2", "residual"])
            for p in self.points:
                writer.writerow([repr(p.beta), p.branch, repr(p.value1), repr(p.value2), repr(p.residual)])


SYMMETRIC_LABELS = {1: ["symmetric"], 3: ["symmetric-lower", "symmetric", "symmetric-upper"]}


def bilinear_points(a: float, b: float, beta: float, panels: int = SCAN_PANELS) -> list[BranchPoint]:
    roots = solve_symmetric_gamma(a, b, beta, panels)
    labels = SYMMETRIC_LABELS.get(len(roots), [f"symmetric-{i}" for i in range(len(roots))])
    pts = [BranchPoint(beta, lab, r, r, symmetric_residual(r, a, b, beta)) for lab, r in zip(labels, roots)]
    pair = find_period2(a, b, beta, panels)
    if pair is not None:
        g1, g2 = pair
        res = period2_residual(g1, g2, a, b, beta)
        pts.append(BranchPoint(beta, "asymmetric-lower", g1, g2, res))
        pts.append(BranchPoint(beta, "asymmetric-upper", g2, g1, res))
    return pts


def quadratic_points(a1: float, a2: float, beta: float, panels: int = SCAN_PANELS) -> list[BranchPoint]:
    pts = []
    for x0, y0 in solve_quadratic_centers(a1, a2, beta, panels):
        if abs(x0 - y0) <= 1e-10:
            label = "symmetric"
        else:
            label = "asymmetric-lower" if x0 < y0 else "asymmetric-upper"
        pts.append(BranchPoint(beta, label, x0, y0, centers_residual(x0, y0, a1, a2, beta)))
    return pts


def scan_bifurcation(game, beta_grid, panels: int = SCAN_PANELS) -> BifurcationDiagram:
    """Every analytic solution at each beta of a monotone grid.

    Bilinear games (symmetric parameters only) report tilts ``gamma``;
    quadratic games report centers ``(x0, y0)``.
    """
    betas = [float(bt) for bt in beta_grid]
    if any(bt <= 0 for bt in betas):
        raise ValueError("beta values must be positive")
    steps = np.diff(betas)
    if len(betas) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("beta grid must be strictly monotone")
    diagram = BifurcationDiagram(betas)
    for bt in betas:
        diagram.points.extend(points_at(game, bt, panels))
    return diagram


def points_at(game, beta: float, panels: int = SCAN_PANELS) -> list[BranchPoint]:
    if isinstance(game, Bilinear):
        if not game.symmetric:
            raise ValueError("analytic bilinear reduction needs a1 == a2 and b1 == b2")
        return bilinear_points(game.a1, game.b1, beta, panels)
    if isinstance(game, Quadratic):
        return quadratic_points(game.a1, game.a2, beta, panels)
    raise ValueError(f"no analytic reduction for {type(game).__name__} games")
