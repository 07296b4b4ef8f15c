"""Command-line front end: ``rydcrit <subcommand> ...``.

Exit codes: 0 ok, 2 configuration/input error, 3 solver non-convergence,
4 zero-probability sector, 5 fit failure.  Failures print a one-line JSON
error object on stderr (and write ``error.json`` for ``run``).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .basis import (HARD, OPEN, PENALTY, PERIODIC, CapacityError, ChainGeometry, ConstraintError,
                    enumerate_basis, expected_dimension)
from .config import ConfigError, RunConfig
from .dmrg import dmrg_ground_state
from .hamiltonian import HamiltonianParams, build_hamiltonian, build_mpo, critical_preset
from .measurement import (PatternError, ZeroProbabilityError, classify_sector,
                          conditional_probabilities, expand_pattern, generalized_measure,
                          parse_pattern, project, sector_probability, weak_measure)
from .mps import MatrixProductState
from .observables import (CorrelatorSeries, ObservableError, bond_observables, build_epsilon_n,
                          build_epsilon_z2, build_sigma_n, connected_correlator,
                          half_chain_entropy, one_point_profile)
from .sampling import (SamplingError, ShotSet, estimate_connected, filter_sector, sample_shots)
from .scaling import (CrossingError, FitError, ED_MAX_DIMENSION, fit_obc_derivative,
                      fit_obc_sine, fit_power_law, fit_probability_decay, find_curve_crossing,
                      scan_detuning, sweep_theta, to_chord, two_cell_average)
from .solvers import (ConvergenceError, DenseState, SolverError, ground_state_dense,
                      ground_state_lanczos, load_state, save_state)

log = logging.getLogger("rydcrit")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ZERO_PROB, EXIT_FIT = 0, 2, 3, 4, 5

_EXIT_FOR = [
    (ZeroProbabilityError, EXIT_ZERO_PROB),
    (FitError, EXIT_FIT),
    (CrossingError, EXIT_FIT),
    (SolverError, EXIT_SOLVER),
    (ConfigError, EXIT_CONFIG),
    (PatternError, EXIT_CONFIG),
    (ConstraintError, EXIT_CONFIG),
    (CapacityError, EXIT_CONFIG),
    (ObservableError, EXIT_CONFIG),
    (SamplingError, EXIT_CONFIG),
    (FileNotFoundError, EXIT_CONFIG),
    (ValueError, EXIT_CONFIG),
]


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.exc = exc


def exit_code_for(exc: BaseException) -> int:
    for cls, code in _EXIT_FOR:
        if isinstance(exc, cls):
            return code
    return 1


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _versions() -> dict:
    return {"rydcrit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# -- pipeline pieces ---------------------------------------------------------------

def solve(params: HamiltonianParams, geometry: ChainGeometry, backend: str = "auto",
          seed: int = 0, tol: float = 1e-10, dmrg_config=None):
    """Ground state with the requested backend; returns (state, energy, info)."""
    if backend == "auto":
        dim = expected_dimension(geometry)
        backend = "dense" if dim <= 400 else "lanczos" if dim <= ED_MAX_DIMENSION else "dmrg"
    if backend == "dmrg":
        from .dmrg import DmrgConfig
        res = dmrg_ground_state(build_mpo(params, geometry), geometry, dmrg_config or DmrgConfig(),
                                seed)
        if not res.converged:
            log.warning("DMRG stopped after %d sweeps without meeting tolerances "
                        "(dE=%.2e, dS=%.2e)", res.sweeps, res.delta_energy, res.delta_entropy)
        info = {"backend": "dmrg", "sweeps": res.sweeps, "converged": res.converged,
                "delta_energy": res.delta_energy, "delta_entropy": res.delta_entropy,
                "max_truncation": res.max_truncation, "bond_dims": res.mps.bond_dims}
        return res.mps, res.energy, info
    basis = enumerate_basis(geometry)
    H = build_hamiltonian(params, geometry, basis)
    if backend == "dense":
        state, energy = ground_state_dense(H, basis, cap=max(4096, basis.dimension))
    else:
        state, energy = ground_state_lanczos(H, basis, tol=tol, seed=seed)
    return state, energy, {"backend": backend, "dimension": basis.dimension, **state.meta}


def apply_measurement(state, kind: str, pattern: str | None, beta=None, theta=None):
    """Returns (post-measurement state, sector or None, report dict)."""
    g = state.geometry
    report: dict = {"kind": kind, "L": g.length, "boundary": g.boundary}
    sector = None
    if pattern is not None:
        sector = expand_pattern(parse_pattern(pattern), g)
        label = classify_sector(sector)
        report.update(pattern=sector.pattern_text, K=sector.K, p=sector.period,
                      sigma_allowed=label == "sigma_allowed", classification=label,
                      density=sector.density, minimal_period=sector.minimal_period,
                      probability=sector_probability(state, sector),
                      conditionals=conditional_probabilities(state, sector))
    if kind in ("projective", "weak") and sector is None:
        raise ConfigError(f"{kind} measurement needs a pattern")
    if kind == "projective":
        post, prob = project(state, sector)
    elif kind == "weak":
        post = weak_measure(state, sector, float(beta))
        report["beta"] = float(beta)
    elif kind == "generalized":
        post = generalized_measure(state, float(beta), float(theta))
        report.update(beta=float(beta), theta=float(theta))
    else:
        post = state
    return post, sector, report


def observables_for(geometry: ChainGeometry, sector, kind: str, operator: str):
    """Post-measurement dictionary for projective sectors, bond operators otherwise."""
    if kind == "projective" and sector is not None:
        if operator == "sigma":
            return build_sigma_n(sector)
        if operator == "epsilon":
            return build_epsilon_n(sector)
        return build_epsilon_z2(sector)
    if operator == "epsilon_z2":
        raise ObservableError("epsilon_z2 needs a projective n[3j]=0,n[3j+1]=0 sector")
    return bond_observables(operator, geometry)


def correlate(state, obs) -> CorrelatorSeries:
    if state.geometry.periodic:
        return connected_correlator(state, obs)
    return one_point_profile(state, obs)


def fit_series(series: CorrelatorSeries, geometry: ChainGeometry, form: str = "auto",
               window: float = 0.8, min_points: int = 4, average: bool = False):
    if form == "none":
        return None
    if form == "auto":
        form = "power-law" if geometry.periodic else "obc-sine"
    if form == "power-law":
        if not geometry.periodic:
            raise ConfigError("power-law fits of two-point functions need a periodic chain")
        s = to_chord(series, geometry.length)
        if average:
            s = two_cell_average(s)
        return fit_power_law(s, window, min_points)
    if geometry.periodic:
        raise ConfigError(f"{form} fits need an open chain")
    if form == "obc-sine":
        return fit_obc_sine(series, geometry.length, window, min_points)
    if form == "obc-derivative":
        return fit_obc_derivative(series, geometry.length, window, min_points)
    raise ConfigError(f"unknown fit form {form!r}")


def run_pipeline(config: RunConfig) -> dict:
    """ground -> measure -> correlate -> fit, writing every artifact under ``output``."""
    out = Path(config["output"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    files = {}
    g = config.geometry()
    params = config.params()
    solver = config["solver"]
    m = dict(config["measurement"], kind=config.measurement_kind)
    a = config["analysis"]

    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:
            raise StageError(name, exc) from exc

    state, energy, info = stage("ground", solve, params, g, solver["backend"], config["seed"],
                                solver["tol"], config.dmrg())
    ckpt = out / "ground.bin"
    save_state(state, ckpt)
    files["checkpoint"] = ckpt.name
    ground = {"energy": energy, "params": params.to_dict(), "geometry": g.__dict__,
              "half_chain_entropy": half_chain_entropy(state), **info}
    _dump(ground, out / "ground.json")
    files["ground"] = "ground.json"

    post, sector, report = stage("measure", apply_measurement, state, m["kind"], m["pattern"],
                                 m["beta"], m["theta"])
    if sector is not None or m["kind"] != "none":
        report["half_chain_entropy"] = half_chain_entropy(post)
        _dump(report, out / "sector.json")
        files["sector"] = "sector.json"

    obs = stage("observables", observables_for, g, sector, m["kind"], a["operator"])
    series = stage("correlate", correlate, post, obs)
    name = f"{a['operator']}_{'correlator' if g.periodic else 'profile'}.csv"
    series.meta.update(model=config["model"], pattern=m["pattern"], kind=m["kind"])
    series.write(out / name)
    files["series"] = name

    fit = stage("fit", fit_series, series, g, a["fit"], float(a["window"]), int(a["min_points"]),
                bool(a["two_cell_average"]))
    if fit is not None:
        _dump(fit.report(), out / "fit.json")
        files["fit"] = "fit.json"

    manifest = {"config": config.data, "config_sha256": config.digest(), "seed": config["seed"],
                "versions": _versions(), "wall_time_s": round(time.time() - t0, 3), "files": files}
    _dump(manifest, out / "manifest.json")
    (out / "config.yaml").write_text(config.to_yaml())
    return manifest


# -- subcommands ------------------------------------------------------------------

def _geometry_args(p, length=True):
    if length:
        p.add_argument("--length", "-L", type=int, required=True)
    p.add_argument("--boundary", choices=[PERIODIC, OPEN], default=PERIODIC)
    p.add_argument("--mode", choices=[HARD, PENALTY], default=HARD, help="constraint mode")


def _model_args(p):
    p.add_argument("--model", choices=["ising", "tci", "custom"], default="ising")
    for name in ("Omega", "Delta", "V1", "V2"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--edge-shift", action="store_true", help="Delta -> Delta - V2 on open-chain ends")


def _params(args) -> HamiltonianParams:
    over = {k: getattr(args, k) for k in ("Omega", "Delta", "V1", "V2") if getattr(args, k) is not None}
    if args.edge_shift:
        over["edge_detuning_shift"] = True
    if args.model == "custom":
        from dataclasses import replace
        return replace(HamiltonianParams(), **over)
    return critical_preset(args.model, **over)


def _grid(triple: list[float]) -> np.ndarray:
    start, stop, num = triple
    return np.linspace(start, stop, int(num))


def cmd_basis(args) -> int:
    g = ChainGeometry(args.length, args.boundary, args.mode)
    basis = enumerate_basis(g)
    print(json.dumps({"L": g.length, "boundary": g.boundary, "constraint_mode": g.constraint_mode,
                      "dimension": basis.dimension, "expected": expected_dimension(g)}))
    if args.list:
        sys.stdout.write(basis.dump())
    return EXIT_OK


def cmd_ground(args) -> int:
    g = ChainGeometry(args.length, args.boundary, args.mode)
    from .dmrg import DmrgConfig
    state, energy, info = solve(_params(args), g, args.backend, args.seed,
                                dmrg_config=DmrgConfig(chi_max=args.chi))
    save_state(state, args.out)
    report = {"energy": energy, "half_chain_entropy": half_chain_entropy(state), **info}
    _dump(report, Path(str(args.out) + ".json"))
    print(json.dumps(report, default=_jsonable))
    return EXIT_OK


def cmd_critical_point(args) -> int:
    template = _params(args)
    grid = _grid(args.grid)
    family = scan_detuning(args.sizes, grid, template, args.mode, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan.csv").write_text(family.to_csv())
    crossing = find_curve_crossing(family)
    _dump(crossing.report(), out / "crossing.json")
    print(json.dumps(crossing.report()))
    return EXIT_OK


def cmd_measure(args) -> int:
    state = load_state(args.state)
    post, sector, report = apply_measurement(state, args.kind, args.pattern, args.beta, args.theta)
    save_state(post, args.out)
    _dump(report, Path(str(args.out) + ".json"))
    print(json.dumps(report, default=_jsonable))
    return EXIT_OK


def cmd_prob(args) -> int:
    template = _params(args)
    rows, points = [], []
    for L in args.sizes:
        g = ChainGeometry(L, args.boundary, args.mode)
        state, _, _ = solve(template, g, "auto", args.seed)
        sector = expand_pattern(parse_pattern(args.pattern), g)
        P = sector_probability(state, sector)
        conds = conditional_probabilities(state, sector)
        rows.append({"L": L, "probability": P, "conditionals": conds})
        points.append((L, P))
        log.info("L=%d P=%.6g", L, P)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["L,probability"] + [f"{r['L']},{r['probability']!r}" for r in rows]
    (out / "probabilities.csv").write_text("\n".join(lines) + "\n")
    _dump(rows, out / "conditionals.json")
    summary = {"pattern": args.pattern, "sizes": list(args.sizes)}
    if len(points) >= 4:
        density = expand_pattern(parse_pattern(args.pattern), ChainGeometry(args.sizes[-1],
                                 args.boundary, args.mode)).density
        fit = fit_probability_decay(points, density)
        summary["decay"] = fit.report()
        summary["decay_rate"] = fit.exponent
        if args.extrapolate:
            summary["extrapolated"] = {str(L): float(np.exp(fit.intercept + fit.slope * L))
                                       for L in args.extrapolate}
    _dump(summary, out / "decay.json")
    print(json.dumps(summary, default=_jsonable))
    return EXIT_OK


def cmd_correlate(args) -> int:
    state = load_state(args.state)
    sector = expand_pattern(parse_pattern(args.pattern), state.geometry) if args.pattern else None
    kind = "projective" if sector is not None else "none"
    obs = observables_for(state.geometry, sector, kind, args.operator)
    series = correlate(state, obs)
    series.meta.update(operator=args.operator, pattern=args.pattern)
    series.write(args.out)
    sys.stdout.write(series.to_csv())
    return EXIT_OK


def cmd_fit(args) -> int:
    series = CorrelatorSeries.read(args.input)
    L = args.length or series.meta.get("L")
    boundary = args.boundary or series.meta.get("boundary", PERIODIC)
    if L is None:
        raise ConfigError("chain length unknown: pass --length or keep the JSON sidecar")
    g = ChainGeometry(int(L), boundary)
    fit = fit_series(series, g, args.form, args.window, args.min_points, args.average)
    report = fit.report()
    if args.out:
        _dump(report, Path(args.out))
    print(json.dumps(report, default=_jsonable))
    return EXIT_OK


def cmd_sweep_theta(args) -> int:
    template = _params(args)
    states = {}
    for L in args.sizes:
        states[L], _, _ = solve(template, ChainGeometry(L, PERIODIC, args.mode), "auto", args.seed)
    grid = _grid(args.grid) * math.pi
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for beta in args.beta:
        family, crossing = sweep_theta(states, beta, grid)
        tag = f"beta{beta:g}"
        (out / f"theta_{tag}.csv").write_text(family.to_csv())
        rep = crossing.report()
        rep["value_over_pi"] = crossing.value / math.pi
        summary[tag] = rep
        _dump(rep, out / f"crossing_{tag}.json")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_sample(args) -> int:
    state = load_state(args.state)
    shots = sample_shots(state, args.shots, args.seed)
    shots.meta["source"] = str(args.state)
    shots.write(args.out)
    print(json.dumps({"shots": len(shots), "seed": args.seed, "out": str(args.out)}))
    return EXIT_OK


def cmd_estimate(args) -> int:
    shots = ShotSet.read(args.shots)
    g = shots.geometry
    sector = None
    if args.pattern:
        sector = expand_pattern(parse_pattern(args.pattern), g)
        shots = filter_sector(shots, sector)
    obs = observables_for(g, sector, "projective" if sector else "none", args.operator)
    series = estimate_connected(shots, obs, min_shots=args.min_shots)
    series.meta.update(retention=shots.meta.get("retention", 1.0), operator=args.operator)
    series.write(args.out)
    sys.stdout.write(series.to_csv())
    return EXIT_OK


def cmd_run(args) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if not _:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        config = config.override(key.strip(), yaml.safe_load(raw), validate=False)
    if args.output:
        config = config.override("output", args.output, validate=False)
    config = RunConfig.from_dict(config.data)
    try:
        manifest = run_pipeline(config)
    except StageError as err:
        out = Path(config["output"])
        out.mkdir(parents=True, exist_ok=True)
        _dump({"stage": err.stage, "error": type(err.exc).__name__, "message": str(err.exc),
               "exit_code": exit_code_for(err.exc)}, out / "error.json")
        raise err.exc
    print(json.dumps({"output": config["output"], "files": manifest["files"],
                      "config_sha256": manifest["config_sha256"]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydcrit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"rydcrit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="blockaded basis dimension (and optionally its listing)")
    _geometry_args(p)
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("ground", help="solve for the ground state and write a checkpoint")
    _geometry_args(p)
    _model_args(p)
    p.add_argument("--backend", choices=["auto", "dense", "lanczos", "dmrg"], default="auto")
    p.add_argument("--chi", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("critical-point", help="detuning scan on odd open chains + curve crossing")
    _model_args(p)
    p.add_argument("--sizes", type=int, nargs="+", default=[11, 15, 19, 23])
    p.add_argument("--grid", type=float, nargs=3, default=[0.60, 0.72, 25],
                   metavar=("START", "STOP", "NUM"))
    p.add_argument("--mode", choices=[HARD, PENALTY], default=HARD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_critical_point)

    p = sub.add_parser("measure", help="apply a projective, weak or generalized measurement")
    p.add_argument("--state", required=True)
    p.add_argument("--kind", choices=["projective", "weak", "generalized"], default="projective")
    p.add_argument("--pattern")
    p.add_argument("--beta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("prob", help="post-selection probabilities over sizes + decay fit")
    _geometry_args(p, length=False)
    _model_args(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--sizes", type=int, nargs="+", default=list(range(8, 29, 4)))
    p.add_argument("--extrapolate", type=int, nargs="*", default=[100])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("correlate", help="connected correlator (ring) or one-point profile (open)")
    p.add_argument("--state", required=True)
    p.add_argument("--pattern", help="use the post-measurement dictionary for this sector")
    p.add_argument("--operator", choices=["sigma", "epsilon", "epsilon_z2"], default="sigma")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="extract a scaling dimension from a series CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--form", choices=["auto", "power-law", "obc-sine", "obc-derivative"],
                   default="auto")
    p.add_argument("--window", type=float, default=0.8)
    p.add_argument("--min-points", type=int, default=4)
    p.add_argument("--average", action="store_true", help="two-cell average before fitting")
    p.add_argument("--length", type=int)
    p.add_argument("--boundary", choices=[PERIODIC, OPEN])
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep-theta", help="generalized-measurement sweep and theta_c crossing")
    _model_args(p)
    p.set_defaults(model="tci")
    p.add_argument("--beta", type=float, nargs="+", default=[1.0])
    p.add_argument("--sizes", type=int, nargs="+", default=[12, 16, 20, 24])
    p.add_argument("--grid", type=float, nargs=3, default=[0.0, 0.5, 51],
                   metavar=("START", "STOP", "NUM"), help="theta grid in units of pi")
    p.add_argument("--mode", choices=[HARD, PENALTY], default=HARD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_theta)

    p = sub.add_parser("sample", help="draw Born-rule shots from a checkpoint")
    p.add_argument("--state", required=True)
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="restricted-average connected correlators from shots")
    p.add_argument("--shots", required=True)
    p.add_argument("--pattern")
    p.add_argument("--operator", choices=["sigma", "epsilon", "epsilon_z2"], default="sigma")
    p.add_argument("--min-shots", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("run", help="full pipeline from a YAML config")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. geometry.length=20")
    p.add_argument("--output")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == 1:
            raise
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        if isinstance(exc, PatternError):
            err["offset"] = exc.offset
        if isinstance(exc, ConvergenceError):
            err["residual"] = exc.residual
        print(json.dumps(err), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
