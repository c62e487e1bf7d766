"""Command-line entry point.

Exit codes: 0 success, 1 a requested check failed, 2 invalid input,
3 integration failure (partial artifacts are kept).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as eio
from .analysis import (
    AnalysisError,
    basin_fraction,
    boundary_certificate,
    characteristic_matrix,
    elimination_status,
    hofbauer_certificate,
    lyapunov_values,
    vertex_inequality_check,
)
from .dynamics import BEST_RESPONSE, DynamicsError, DynamicsSpec
from .equilibria import ce_mass_bounds, max_marginal, nash_report
from .game import ExtendedGame, Game, GameError, RPS4Params, build_g0, build_rps4, extend_with_mixed, game_from_dict, vertex
from .integrate import HypothesisError, IntegrationError, integrate_br, integrate_smooth
from .lp import LPError
from .verify import ACCEPTANCE_SUITES, EXTRAS, SUITES, Context, junit_xml, run_suites, suite_extension, summary

EXIT_OK, EXIT_CHECKS, EXIT_INVALID, EXIT_INTEGRATION = 0, 1, 2, 3

DEFAULTS = {
    "game": "rps4:eps=0.1,alpha=0.1",
    "dyn": "replicator",
    "f": "identity",
    "p": 1.0,
    "lam": 1.0,
    "x0": None,
    "t": None,
    "tol": 1e-9,
    "stride": 0.1,
    "method": "dopri5",
    "precision": None,
    "seed": 0,
    "count": 200,
    "filter": None,
    "threshold": 1e-8,
    "extra": [],
    "suite": "all",
    "jobs": 1,
    "out": None,
    "timings": False,
}


class UsageError(ValueError):
    pass


# --- parsing ----------------------------------------------------------------


def parse_game(spec) -> Game | ExtendedGame:
    """``rps4:eps=..,alpha=..``, ``g0:eps=..``, a JSON game file path, or a dict."""
    if isinstance(spec, dict):
        if "rps4" in spec:
            p = spec["rps4"]
            return build_rps4(float(p["epsilon"] if "epsilon" in p else p["eps"]), float(p["alpha"]))
        return game_from_dict(spec)
    text = str(spec)
    kind, _, rest = text.partition(":")
    if kind == "rps4":
        return build_rps4(RPS4Params.parse(rest))
    if kind == "g0":
        eps = dict(part.split("=") for part in rest.split(",") if part)
        return build_g0(float(eps.get("eps", eps.get("epsilon", "nan"))))
    path = Path(rest if kind == "file" else text)
    if not path.is_file():
        raise UsageError(f"cannot read game {text!r}: expected rps4:eps=..,alpha=.., g0:eps=.. or a JSON file")
    return game_from_dict(json.loads(path.read_text()))


def parse_vector(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.array(text, dtype=float)
    try:
        return np.array([float(v) for v in str(text).split(",")])
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None


def parse_dynamics(cfg) -> DynamicsSpec:
    return DynamicsSpec.from_dict({"kind": cfg["dyn"], "f": cfg["f"], "p": cfg["p"], "lambda": cfg["lam"]})


def resolve_config(args) -> dict:
    """Defaults, then the JSON config file, then ``EVOELIM_SEED``, then flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from None
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys {unknown}")
        cfg.update(loaded)
    env = os.environ.get("EVOELIM_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise UsageError(f"EVOELIM_SEED must be an integer, got {env!r}") from None
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val != []:
            cfg[key] = val
    if int(cfg["jobs"]) < 1:
        raise UsageError("--jobs must be at least 1")
    return cfg


# --- output -----------------------------------------------------------------


def _emit(cfg, name, payload):
    text = eio.canonical_json(payload)
    if cfg["out"]:
        eio.write_text(Path(cfg["out"]) / name, text)
    else:
        sys.stdout.write(text)


def _out_dir(cfg) -> Path:
    d = Path(cfg["out"] or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


# --- subcommands ------------------------------------------------------------


def cmd_game(cfg) -> int:
    _emit(cfg, "game.json", parse_game(cfg["game"]).to_dict())
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    g = parse_game(cfg["game"])
    spec = parse_dynamics(cfg)
    if cfg["x0"] is None:
        raise UsageError("simulate needs --x0")
    x0 = parse_vector(cfg["x0"])
    horizon = float(cfg["t"] if cfg["t"] is not None else 10.0)
    out = _out_dir(cfg)
    report = {"game": g.to_dict(), "dynamics": spec.to_dict(), "x0": x0, "horizon": horizon}
    status = EXIT_OK
    if spec.kind == BEST_RESPONSE:
        br = integrate_br(g, x0, horizon, precision=cfg["precision"])
        traj = br.to_trajectory(float(cfg["stride"]))
        eio.write_text(out / "events.csv", eio.events_csv(br.events))
        report["switches"] = len(br.events)
    else:
        try:
            traj = integrate_smooth(
                spec, g, x0, horizon, float(cfg["tol"]), stride=float(cfg["stride"]), method=cfg["method"]
            )
        except IntegrationError as exc:
            traj, status = exc.partial, EXIT_INTEGRATION
            report["error"] = str(exc)
        report["stats"] = traj.stats
    eio.write_text(out / "trajectory.csv", eio.trajectory_csv(traj.t, traj.x))
    report["final"] = traj.x[-1]
    u = g.u
    if u.shape[0] == 4 and isinstance(g, Game) and "epsilon" in g.meta:
        report["lyapunov_final"] = lyapunov_values(u, build_g0(g.meta["epsilon"]), traj.x[-1]).to_dict()
    if len(traj) >= 10 and u.shape[0] >= 4:
        report["elimination_4"] = elimination_status(traj, 3, float(cfg["threshold"])).to_dict()
    eio.write_text(out / "report.json", eio.canonical_json(report))
    return status


def cmd_equilibria(cfg) -> int:
    g = parse_game(cfg["game"])
    n = g.n
    marg = max_marginal(g)
    nash = []
    for i in range(n):
        r = nash_report(g, vertex(i, n))
        if r.residual <= 1e-12:
            nash.append({"strategy": i + 1, **r.to_dict()})
    payload = {
        "mass_bounds": ce_mass_bounds(g),
        "max_marginal": marg,
        "used": [i + 1 for i in range(n) if marg[i] > 1e-7],
        "nash": nash,
    }
    _emit(cfg, "equilibria.json", payload)
    return EXIT_OK


def cmd_stability(cfg) -> int:
    g = parse_game(cfg["game"])
    spec = parse_dynamics(cfg)
    c = characteristic_matrix(spec, g)
    cert = hofbauer_certificate(c)
    ineq = vertex_inequality_check(spec, g)
    boundary = boundary_certificate(c)
    payload = {
        "dynamics": spec.to_dict(),
        "char_matrix": c.c,
        "certificate": cert.to_dict(),
        "boundary_c_hat_p_hat": boundary,
        "vertex_inequalities": ineq,
    }
    _emit(cfg, "stability.json", payload)
    return EXIT_OK if cert.exists and ineq else EXIT_CHECKS


def cmd_basin(cfg) -> int:
    g = parse_game(cfg["game"])
    spec = parse_dynamics(cfg)
    res = basin_fraction(
        spec,
        g,
        int(cfg["seed"]),
        int(cfg["count"]),
        cfg["filter"],
        threshold=float(cfg["threshold"]),
        horizon=None if cfg["t"] is None else float(cfg["t"]),
        tol=float(cfg["tol"]),
        jobs=int(cfg["jobs"]),
    )
    payload = {"dynamics": spec.to_dict(), "seed": int(cfg["seed"]), "count": int(cfg["count"]),
               "filter": cfg["filter"], **res.to_dict()}
    _emit(cfg, "basin.json", payload)
    return EXIT_OK


def cmd_extend(cfg) -> int:
    g = parse_game(cfg["game"])
    if not isinstance(g, Game):
        raise UsageError("extend needs a base game, not an extended one")
    extras = [parse_vector(e) for e in cfg["extra"]] or None
    ctx = Context(g, int(cfg["seed"]), int(cfg["jobs"]))
    results = suite_extension(ctx, extras=extras)
    ext = extend_with_mixed(g, extras if extras is not None else EXTRAS)
    _emit(cfg, "extend.json", {"game": ext.to_dict(), "checks": summary(results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS


def cmd_verify(cfg) -> int:
    g = parse_game(cfg["game"])
    if not isinstance(g, Game) or g.n != 4:
        raise UsageError("verify needs a four-strategy game")
    names = [s.strip() for s in str(cfg["suite"]).split(",") if s.strip()]
    if names == ["acceptance"]:
        names = list(ACCEPTANCE_SUITES)
    results = run_suites(names, Context(g, int(cfg["seed"]), int(cfg["jobs"])))
    timings = bool(cfg["timings"])
    sm = eio.canonical_json(summary(results, timings))
    xml = junit_xml(results, timings=timings)
    if cfg["out"]:
        out = _out_dir(cfg)
        eio.write_text(out / "summary.json", sm)
        eio.write_text(out / "junit.xml", xml)
    else:
        sys.stdout.write(sm)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} {r.name}: measured={r.measured:.6g} bound={r.bound:.6g} {r.detail}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS


COMMANDS = {
    "game": cmd_game,
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "stability": cmd_stability,
    "basin": cmd_basin,
    "extend": cmd_extend,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; flags override it")
    common.add_argument("--game", help="rps4:eps=E,alpha=A | g0:eps=E | path to a JSON game")
    common.add_argument("--seed", type=int, help="sampling seed (EVOELIM_SEED overrides the config file)")
    common.add_argument("--jobs", type=int, help="worker processes for trajectory sweeps")
    common.add_argument("--out", help="output directory (JSON goes to stdout when omitted)")

    dyn = argparse.ArgumentParser(add_help=False)
    dyn.add_argument("--dyn", help="br | replicator | bnn | monotonic_exp")
    dyn.add_argument("--f", choices=["identity", "power", "sqrt"], help="BNN response function")
    dyn.add_argument("--p", type=float, help="exponent for --f power")
    dyn.add_argument("--lam", type=float, help="lambda for monotonic_exp")
    dyn.add_argument("--t", type=float, help="horizon")
    dyn.add_argument("--tol", type=float, help="integrator tolerance")
    dyn.add_argument("--threshold", type=float, help="elimination threshold")

    p = argparse.ArgumentParser(prog="evoelim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("game", parents=[common], help="emit the payoff matrix as JSON")
    s = sub.add_parser("simulate", parents=[common, dyn], help="integrate one trajectory to CSV")
    s.add_argument("--x0", help="initial state, comma separated")
    s.add_argument("--stride", type=float, help="sampling stride")
    s.add_argument("--method", choices=["dopri5", "bs32"])
    s.add_argument("--precision", type=int, help="decimal digits for exact BR arithmetic")
    sub.add_parser("equilibria", parents=[common], help="CE mass bounds, used strategies, pure Nash")
    sub.add_parser("stability", parents=[common, dyn], help="characteristic matrix and certificate")
    b = sub.add_parser("basin", parents=[common, dyn], help="sampled elimination fraction")
    b.add_argument("--count", type=int)
    b.add_argument("--filter", help="br_singleton_not4 | x4>V | x4<=V")
    e = sub.add_parser("extend", parents=[common], help="add mixed strategies and run the extension checks")
    e.add_argument("--extra", action="append", help="mixed strategy to add, comma separated (repeatable)")
    v = sub.add_parser("verify", parents=[common], help="run check suites, write JUnit XML and a JSON summary")
    v.add_argument("--suite", help="comma list of " + ", ".join(SUITES) + "; or all / acceptance")
    v.add_argument("--timings", action="store_true", default=None, help="include wall-clock times")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except IntegrationError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (UsageError, GameError, DynamicsError, HypothesisError, AnalysisError, LPError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
