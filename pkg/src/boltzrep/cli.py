"""Command-line driver: ``boltzrep <command> [options]``.

Every run writes CSV / JSON-lines data files named
``<command>_<game>_<beta>...`` into the output directory together with a
``manifest.json`` holding the full configuration. Passing that manifest
back through ``--config`` reproduces the run.

Exit codes: 0 converged, 2 finished without converging, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from boltzrep import __version__
from boltzrep import analytic
from boltzrep.core import Grid, LearningParams, write_density_csv
from boltzrep.dynamics import INITS, IntegrationError, evolve, initial_state
from boltzrep.games import (
    Bilinear,
    Investment,
    PoliticalAd,
    Quadratic,
    game_label,
    read_payoff_csv,
    tabulate,
)
from boltzrep.simulate import RNG_ALGORITHM, SimConfig, run_simulation
from boltzrep.steady import parametric_fit, solve_steady

logger = logging.getLogger("boltzrep")

COMMANDS = ("evolve", "steady", "analytic-bilinear", "analytic-quadratic", "simulate", "scan")

GAME_PARAMS = {
    "bilinear": ("a1", "b1", "a2", "b2"),
    "quadratic": ("a1", "a2"),
    "polad": (),
    "investment": (),
    "tabulated": ("path",),
}

DEFAULTS = {
    "beta": 10.0,
    "grid_size": 201,
    "rule": "simpson",
    "init": ["uniform"],
    "tilt": 3.0,
    "output": "out",
    "seed": 0,
    "jobs": 1,
    "alpha": None,
    "dt": None,
    "t_max": None,
    "tol": None,
    "record_every": None,
    "damping": 0.5,
    "max_iter": 100_000,
    "batch": 1000,
    "updates": 2000,
    "beta_min": 1.0,
    "beta_max": 60.0,
    "beta_step": 1.0,
    "critical": False,
    "band": 1e-3,
}

# keys holding floats that must be strictly positive when set
POSITIVE = ("beta", "tilt", "dt", "t_max", "tol", "record_every", "beta_min", "beta_max", "beta_step", "band")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    command: str
    game: object
    grid: Grid
    settings: dict
    raw: dict = field(repr=False)

    @property
    def output(self) -> Path:
        return Path(self.settings["output"])

    @property
    def beta(self) -> float:
        return self.settings["beta"]

    def learning_params(self) -> LearningParams:
        s = self.settings
        return LearningParams(
            beta=s["beta"],
            alpha=s["alpha"] if s["alpha"] is not None else 1.0,
            dt=s["dt"],
            t_max=s["t_max"],
            tol=s["tol"] if s["tol"] is not None else 1e-8,
        )

    def sim_config(self) -> SimConfig:
        s = self.settings
        return SimConfig(
            beta=s["beta"],
            alpha=s["alpha"] if s["alpha"] is not None else 0.1,
            batch=s["batch"],
            updates=s["updates"],
            seed=s["seed"],
        )

    def beta_grid(self) -> list[float]:
        s = self.settings
        n = int(np.floor((s["beta_max"] - s["beta_min"]) / s["beta_step"] + 1e-9)) + 1
        return [float(s["beta_min"] + k * s["beta_step"]) for k in range(n)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boltzrep", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a previous manifest.json)")
    common.add_argument("--game", choices=sorted(GAME_PARAMS))
    common.add_argument(
        "--param", action="append", default=None, metavar="KEY=VALUE", help="game parameter, e.g. a1=0.45"
    )
    common.add_argument("--payoff-csv", help="i,j,f1,f2 table for --game tabulated")
    common.add_argument("--beta", type=float)
    common.add_argument("--grid-size", type=int)
    common.add_argument("--rule", choices=("simpson", "trapezoid"))
    common.add_argument("--output")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)

    p = sub.add_parser("evolve", parents=[common], help="integrate the replicator equations")
    p.add_argument("--init", action="append", choices=INITS)
    p.add_argument("--tilt", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--record-every", type=float)

    p = sub.add_parser("steady", parents=[common], help="solve the Gibbs fixed-point equations")
    p.add_argument("--init", action="append", choices=(*INITS, "all"))
    p.add_argument("--tilt", type=float)
    p.add_argument("--damping", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)

    p = sub.add_parser("analytic-bilinear", parents=[common], help="tilts of bilinear-game steady states")
    p.add_argument("--critical", action="store_true", default=None, help="also locate critical beta")

    p = sub.add_parser("analytic-quadratic", parents=[common], help="centers of quadratic-game steady states")
    p.add_argument("--band", type=float, help="plateau band for the constraint family")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo Q-learning")
    p.add_argument("--alpha", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--updates", type=int)

    p = sub.add_parser("scan", parents=[common], help="analytic bifurcation scan over beta")
    p.add_argument("--beta-min", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--beta-step", type=float)
    return parser


def _load_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must hold a JSON object")
    # a manifest carries the effective config under "config"
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return dict(data)


def _parse_value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _merge(args: argparse.Namespace) -> dict:
    raw = _load_file(args.config) if args.config else {}
    if "game" in raw and not isinstance(raw["game"], dict):
        raise ConfigError("game: must be an object with a 'kind' field")
    game = dict(raw.get("game") or {})
    if args.game is not None:
        if game.get("kind") not in (None, args.game):
            game = {}
        game["kind"] = args.game
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"param: expected KEY=VALUE, got {item!r}")
        game[key.strip()] = _parse_value(value.strip())
    if args.payoff_csv is not None:
        game["path"] = args.payoff_csv
    if game:
        raw["game"] = game
    raw["command"] = args.command
    skip = {"config", "game", "param", "payoff_csv", "command", "verbose"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            raw[key] = value
    return raw


def _number(raw, key, kind=float):
    value = raw[key]
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _build_game(spec: dict, grid: Grid):
    kind = spec.get("kind")
    if kind not in GAME_PARAMS:
        raise ConfigError(f"game.kind: unknown game kind {kind!r}, expected one of {sorted(GAME_PARAMS)}")
    allowed = set(GAME_PARAMS[kind]) | {"kind"}
    extra = sorted(set(spec) - allowed)
    if extra:
        raise ConfigError(f"game: unexpected parameter(s) {extra} for {kind} game")
    missing = [k for k in GAME_PARAMS[kind] if k not in spec]
    if missing:
        raise ConfigError(f"game.{missing[0]}: required for {kind} game")
    if kind == "tabulated":
        try:
            return read_payoff_csv(spec["path"], grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"game.path: {exc}") from None
    params = {}
    for key in GAME_PARAMS[kind]:
        value = spec[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            raise ConfigError(f"game.{key}: expected a finite number, got {value!r}")
        params[key] = float(value)
    if kind == "quadratic":
        for key in ("a1", "a2"):
            if not 0 < params[key] < 1:
                raise ConfigError(f"game.{key}: quadratic game requires 0 < {key} < 1, got {params[key]!r}")
    return {"bilinear": Bilinear, "quadratic": Quadratic, "polad": PoliticalAd, "investment": Investment}[kind](
        **params
    )


def parse_config(argv=None) -> RunConfig:
    """Merge an optional JSON config with command-line flags (flags win) and validate."""
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.DEBUG)
    return config_from_dict(_merge(args))


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}, expected one of {COMMANDS}")
    unknown = sorted(set(raw) - set(DEFAULTS) - {"command", "game"})
    if unknown:
        raise ConfigError(f"config: unknown field(s) {unknown}")
    settings = {**DEFAULTS, **{k: v for k, v in raw.items() if k in DEFAULTS}}

    for key in ("grid_size", "seed", "jobs", "max_iter", "batch", "updates"):
        settings[key] = _number(settings, key, int)
    for key in ("beta", "tilt", "dt", "t_max", "tol", "record_every", "damping", "alpha",
                "beta_min", "beta_max", "beta_step", "band"):
        settings[key] = _number(settings, key)
    for key in POSITIVE:
        if settings[key] is not None and not settings[key] > 0:
            raise ConfigError(f"{key}: must be > 0, got {settings[key]!r}")
    if settings["grid_size"] < 3:
        raise ConfigError(f"grid_size: must be >= 3, got {settings['grid_size']}")
    if settings["jobs"] < 1:
        raise ConfigError(f"jobs: must be >= 1, got {settings['jobs']}")
    if settings["max_iter"] < 1:
        raise ConfigError(f"max_iter: must be >= 1, got {settings['max_iter']}")
    if not 0 < settings["damping"] <= 1:
        raise ConfigError(f"damping: must lie in (0, 1], got {settings['damping']!r}")
    if settings["alpha"] is not None and not 0 < settings["alpha"] <= 1:
        raise ConfigError(f"alpha: must lie in (0, 1], got {settings['alpha']!r}")
    if settings["batch"] < 1:
        raise ConfigError(f"batch: must be >= 1, got {settings['batch']}")
    if settings["updates"] < 1:
        raise ConfigError(f"updates: must be >= 1, got {settings['updates']}")
    if settings["beta_max"] < settings["beta_min"]:
        raise ConfigError("beta_max: must not be smaller than beta_min")
    if settings["rule"] not in ("simpson", "trapezoid"):
        raise ConfigError(f"rule: expected 'simpson' or 'trapezoid', got {settings['rule']!r}")
    if not isinstance(settings["critical"], bool):
        raise ConfigError(f"critical: expected true or false, got {settings['critical']!r}")
    init = settings["init"]
    if isinstance(init, str):
        init = [init]
    if not isinstance(init, list) or not init:
        raise ConfigError("init: expected an initializer name or a non-empty list of names")
    if "all" in init:
        init = list(INITS)
    for name in init:
        if name not in INITS:
            raise ConfigError(f"init: unknown initializer {name!r}, expected one of {INITS}")
    settings["init"] = init

    if "game" not in raw:
        raise ConfigError("game.kind: no game given (use --game or a 'game' object in the config)")
    grid = Grid(settings["grid_size"], settings["rule"])
    game = _build_game(raw["game"], grid)
    if command in ("analytic-bilinear",) and not (isinstance(game, Bilinear) and game.symmetric):
        raise ConfigError("game: analytic-bilinear needs a bilinear game with a1 == a2 and b1 == b2")
    if command == "analytic-quadratic" and not isinstance(game, Quadratic):
        raise ConfigError("game: analytic-quadratic needs a quadratic game")
    if command == "scan" and not (isinstance(game, Quadratic) or (isinstance(game, Bilinear) and game.symmetric)):
        raise ConfigError("game: scan supports symmetric bilinear and quadratic games")

    effective = {"command": command, "game": dict(raw["game"]), **settings}
    cfg = RunConfig(command, game, grid, settings, effective)
    try:
        if command == "simulate":
            cfg.sim_config()
        else:
            cfg.learning_params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# ---------------------------------------------------------------------------
# running


def _fmt_beta(beta: float) -> str:
    return f"{beta:g}"


def _atomic(path: Path, write) -> str:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)
    return path.name


def _write_text(path: Path, text: str) -> str:
    return _atomic(path, lambda p: Path(p).write_text(text))


def _run_steady(cfg: RunConfig, stem: str, out: Path):
    kernel = tabulate(cfg.game, cfg.grid)
    s = cfg.settings
    files, records = [], []
    for name in s["init"]:
        init = initial_state(cfg.grid, name, s["tilt"])
        res = solve_steady(
            kernel,
            cfg.beta,
            (init.p1, init.p2),
            damping=s["damping"],
            tol=s["tol"] if s["tol"] is not None else 1e-10,
            max_iter=s["max_iter"],
        )
        res.fit = parametric_fit(res, cfg.game, cfg.beta)
        for agent, dens in ((1, res.p1), (2, res.p2)):
            files.append(_atomic(out / f"{stem}_{name}_p{agent}.csv", lambda p, d=dens: write_density_csv(p, d)))
        records.append(res.metadata(beta=cfg.beta, init=name))
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    files.append(_write_text(out / f"{stem}.jsonl", text))
    converged = all(r["converged"] for r in records)
    return files, {"runs": records}, converged


def _run_evolve(cfg: RunConfig, stem: str, out: Path):
    kernel = tabulate(cfg.game, cfg.grid)
    s = cfg.settings
    init = initial_state(cfg.grid, s["init"][0], s["tilt"])
    rec = evolve(init, kernel, cfg.learning_params(), record_every=s["record_every"])
    paths = [out / f"{stem}_p1.csv", out / f"{stem}_p2.csv"]
    tmps = [p.with_name(p.name + ".tmp") for p in paths]
    summary = out / f"{stem}.csv"
    summary_tmp = summary.with_name(summary.name + ".tmp")
    rec.write_csv(summary_tmp, tmps)
    for tmp, final in zip([summary_tmp, *tmps], [summary, *paths]):
        os.replace(tmp, final)
    results = {
        "init": s["init"][0],
        "t_final": float(rec.times[-1]),
        "steps": rec.steps,
        "residual": rec.final_residual,
        "converged": rec.converged,
        **rec.meta,
    }
    return [summary.name, *(p.name for p in paths)], results, rec.converged


def _run_analytic_bilinear(cfg: RunConfig, stem: str, out: Path):
    game = cfg.game
    points = analytic.bilinear_points(game.a1, game.b1, cfg.beta)
    diagram = analytic.BifurcationDiagram([cfg.beta], points)
    files = [_atomic(out / f"{stem}.csv", diagram.write_csv)]
    results = {"points": [p.__dict__ for p in points]}
    if cfg.settings["critical"]:
        try:
            if game.a1 < 0:
                results["critical_beta_period2"] = analytic.critical_beta_period2(game.a1, game.b1)
            else:
                results["critical_beta_symmetric"] = analytic.critical_beta_symmetric(game.a1, game.b1)
        except ValueError as exc:
            results["critical_beta"] = None
            results["critical_beta_note"] = str(exc)
    return files, results, True


def _run_analytic_quadratic(cfg: RunConfig, stem: str, out: Path):
    game = cfg.game
    points = analytic.quadratic_points(game.a1, game.a2, cfg.beta)
    diagram = analytic.BifurcationDiagram([cfg.beta], points)
    files = [_atomic(out / f"{stem}.csv", diagram.write_csv)]
    results = {"points": [p.__dict__ for p in points]}
    if game.a1 == game.a2:
        fam = analytic.solve_constraint_family(game.a1, cfg.beta, band=cfg.settings["band"])
        results["constraint_family"] = {
            "roots": fam.roots,
            "band": fam.band,
            "plateau": list(fam.plateau) if fam.plateau else None,
            "plateau_width": fam.plateau_width,
        }
    return files, results, True


def _run_simulate(cfg: RunConfig, stem: str, out: Path):
    kernel = tabulate(cfg.game, cfg.grid)
    u = initial_state(cfg.grid, "uniform")
    ref = solve_steady(kernel, cfg.beta, (u.p1, u.p2))
    sim_cfg = cfg.sim_config()
    res = run_simulation(cfg.game, sim_cfg, cfg.grid, reference=(ref.p1, ref.p2))
    files = []
    for agent, dens in ((1, res.p1), (2, res.p2)):
        files.append(_atomic(out / f"{stem}_p{agent}.csv", lambda p, d=dens: write_density_csv(p, d)))
    files.append(_atomic(out / f"{stem}_trace.csv", res.write_trace_csv))
    files.append(_write_text(out / f"{stem}.jsonl", res.metadata_line() + "\n"))
    results = {
        "ks1": float(res.ks1[-1]),
        "ks2": float(res.ks2[-1]),
        "reference_converged": ref.converged,
        "reference_residual": ref.residual,
    }
    return files, results, ref.converged


def _scan_points(args):
    game, beta = args
    return analytic.points_at(game, beta)


def _run_scan(cfg: RunConfig, stem: str, out: Path):
    betas = cfg.beta_grid()
    jobs = cfg.settings["jobs"]
    tasks = [(cfg.game, bt) for bt in betas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_scan_points, tasks))
    else:
        chunks = [_scan_points(t) for t in tasks]
    diagram = analytic.BifurcationDiagram(betas, [p for chunk in chunks for p in chunk])
    files = [_atomic(out / f"{stem}.csv", diagram.write_csv)]
    counts = [len(c) for c in chunks]
    split = next((bt for bt, c0, c1 in zip(betas[1:], counts, counts[1:]) if c1 > c0), None)
    results = {"betas": len(betas), "points": len(diagram.points), "first_split_beta": split}
    return files, results, True


RUNNERS = {
    "steady": _run_steady,
    "evolve": _run_evolve,
    "analytic-bilinear": _run_analytic_bilinear,
    "analytic-quadratic": _run_analytic_quadratic,
    "simulate": _run_simulate,
    "scan": _run_scan,
}

MODULE_OF = {
    "steady": "steady",
    "evolve": "dynamics",
    "analytic-bilinear": "analytic",
    "analytic-quadratic": "analytic",
    "simulate": "simulate",
    "scan": "analytic",
}


def output_stem(cfg: RunConfig) -> str:
    label = game_label(cfg.game)
    if cfg.command == "scan":
        betas = cfg.beta_grid()
        return f"scan_{label}_{_fmt_beta(betas[0])}-{_fmt_beta(betas[-1])}"
    return f"{cfg.command}_{label}_{_fmt_beta(cfg.beta)}"


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the process exit code."""
    out = cfg.output
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cli: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 1
    stem = output_stem(cfg)
    try:
        files, results, converged = RUNNERS[cfg.command](cfg, stem, out)
    except IntegrationError as exc:
        print(f"dynamics: integration error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"{MODULE_OF[cfg.command]}: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "tool": "boltzrep",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "rng": RNG_ALGORITHM,
        "seed": cfg.settings["seed"],
        "grid": {"m": cfg.grid.m, "rule": cfg.grid.rule},
        "config": cfg.raw,
        "converged": converged,
        "results": results,
        "outputs": files,
    }
    _write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    if not converged:
        print(f"{MODULE_OF[cfg.command]}: finished without converging; outputs written to {out}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
