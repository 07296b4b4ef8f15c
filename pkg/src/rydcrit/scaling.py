"""Scaling-dimension fits and finite-size curve crossings.

Conventions: two-point functions decay as ``d^(-2 Delta)``; open-chain
one-point profiles as ``[sin x]^(-Delta)``; the derivative trick reports
``Delta = -nu - 1`` for a log-log slope ``nu``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .basis import ChainGeometry, enumerate_basis
from .hamiltonian import HamiltonianParams, build_hamiltonian, build_mpo
from .measurement import generalized_measure
from .observables import CorrelatorSeries, profile_coordinate, sigma_bond
from .solvers import ground_state

DEFAULT_WINDOW = 0.8
CONVERGENCE_WINDOW = 0.9
TCI_EPSILON_WINDOW = 2 / 3
ED_MAX_DIMENSION = 2_000_000
SYMMETRIC_ZERO = 1e-10


class FitError(ValueError):
    pass


class CrossingError(ValueError):
    def __init__(self, message, crossings=()):
        super().__init__(message)
        self.crossings = list(crossings)


@dataclass
class FitResult:
    exponent: float
    stderr: float
    window: float
    n_points: int
    convention: str
    slope: float
    intercept: float
    rms_residual: float
    extra: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return self.exponent

    def report(self) -> dict:
        return {"delta": self.exponent, "stderr": self.stderr, "window": self.window,
                "convention": self.convention, "n_points": self.n_points, **self.extra}

    def predict(self, x) -> np.ndarray:
        """Evaluate the fitted line in its own (log) coordinates."""
        return self.intercept + self.slope * np.asarray(x, float)


def _linfit(x, y) -> tuple[float, float, float, float]:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    stderr = float(res.stderr) if len(x) > 2 else float("nan")
    return float(res.slope), stderr, float(res.intercept), float(np.sqrt(np.mean(resid**2)))


def _n_keep(n: int, window: float) -> int:
    if not 0 < window <= 1:
        raise FitError(f"window fraction must lie in (0, 1], got {window}")
    return min(n, math.ceil(window * n - 1e-9))


def chord_distance(l1, l2, length: int) -> float:
    """``(L/pi) sin(pi |l1 - l2| / L)`` with the separation folded into [0, L/2]."""
    d = abs(float(l1) - float(l2)) % length
    d = min(d, length - d)
    return length / math.pi * math.sin(math.pi * d / length)


def to_chord(series: CorrelatorSeries, length: int) -> CorrelatorSeries:
    seps = np.array([chord_distance(0.0, d, length) for d in series.separations])
    meta = dict(series.meta, separation="chord")
    order = np.argsort(seps, kind="stable")
    return CorrelatorSeries(seps[order], series.values[order],
                            None if series.stderr is None else series.stderr[order], meta)


def _signed_log(values, what: str):
    values = np.asarray(values, float)
    if np.any(values == 0):
        raise FitError(f"{what}: zero values cannot be fitted on a log scale")
    signs = np.sign(values)
    if np.any(signs != signs[0]):
        raise FitError(f"{what}: values change sign; average adjacent unit cells first "
                       "(two_cell_average)")
    return np.log(np.abs(values)), bool(signs[0] < 0)


def fit_power_law(series: CorrelatorSeries, window: float = DEFAULT_WINDOW,
                  min_points: int = 4) -> FitResult:
    """Least squares of ``log|C|`` against ``log d`` over the longest-range window."""
    n = len(series)
    keep = _n_keep(n, window)
    if keep < min_points:
        raise FitError(f"power-law fit needs >= {min_points} points after windowing, have {keep}")
    d = series.separations[n - keep:]
    if np.any(d <= 0):
        raise FitError("separations must be positive")
    logy, negative = _signed_log(series.values[n - keep:], "power-law fit")
    slope, se, icpt, rms = _linfit(np.log(d), logy)
    return FitResult(-slope / 2, se / 2, window, keep, "two-point ~ d^(-2 Delta)", slope, icpt, rms,
                     {"negative": negative})


def _distance_to_edge(x):
    x = np.asarray(x, float)
    return np.minimum(x, math.pi - x)


def fit_obc_sine(profile: CorrelatorSeries, length: int, window: float = DEFAULT_WINDOW,
                 min_points: int = 4) -> FitResult:
    """Fit ``log <O_l>`` against ``log sin x_l`` on the points furthest from the edges."""
    x = np.array([profile_coordinate(l, length) for l in profile.separations])
    keep = _n_keep(len(x), window)
    if keep < min_points:
        raise FitError(f"sine fit needs >= {min_points} points, have {keep}")
    idx = np.sort(np.argsort(-_distance_to_edge(x), kind="stable")[:keep])
    vals = profile.values[idx]
    if np.any(vals <= 0):
        raise FitError("open-chain sine fit needs a positive profile inside the window")
    slope, se, icpt, rms = _linfit(np.log(np.sin(x[idx])), np.log(vals))
    return FitResult(-slope, se, window, keep, "one-point ~ [sin x]^(-Delta)", slope, icpt, rms)


def fit_obc_derivative(profile: CorrelatorSeries, length: int | None = None,
                       window: float = DEFAULT_WINDOW, min_points: int = 4,
                       coordinates: np.ndarray | None = None) -> FitResult:
    """Derivative trick for profiles with a finite bulk value.

    ``d<O>/dx`` is taken by central differences on the (non-uniform) grid of
    ``x_l`` restricted to the left half ``x < pi/2``; the slope ``nu`` of
    ``log|d<O>/dx|`` against ``log x`` over the points furthest from the
    edge gives ``Delta = -nu - 1``.
    """
    if coordinates is None:
        if length is None:
            raise ValueError("need the chain length or explicit coordinates")
        x = np.array([profile_coordinate(l, length) for l in profile.separations])
    else:
        x = np.asarray(coordinates, float)
    y = profile.values
    left = x < math.pi / 2
    x, y = x[left], y[left]
    if len(x) < 3:
        raise FitError("too few points for a derivative")
    dy = np.gradient(y, x, edge_order=2)
    keep = _n_keep(len(x), window)
    if keep < min_points:
        raise FitError(f"derivative fit needs >= {min_points} points, have {keep}")
    sel = slice(len(x) - keep, None)
    logd, _ = _signed_log(dy[sel], "derivative fit")
    slope, se, icpt, rms = _linfit(np.log(x[sel]), logd)
    return FitResult(-slope - 1, se, window, keep, "derivative ~ x^nu, Delta = -nu - 1", slope,
                     icpt, rms)


def two_cell_average(series: CorrelatorSeries) -> CorrelatorSeries:
    """Average adjacent pairs of points (separations and values)."""
    n = len(series) // 2 * 2
    if n < 2:
        raise ValueError("two_cell_average needs at least two points")
    seps = 0.5 * (series.separations[0:n:2] + series.separations[1:n:2])
    vals = 0.5 * (series.values[0:n:2] + series.values[1:n:2])
    err = None
    if series.stderr is not None:
        err = 0.5 * np.sqrt(series.stderr[0:n:2] ** 2 + series.stderr[1:n:2] ** 2)
    return CorrelatorSeries(seps, vals, err, dict(series.meta, averaged="two-cell"))


def fit_probability_decay(points: Sequence[tuple[int, float]], density: float | None = None,
                          min_points: int = 4) -> FitResult:
    """Least squares of ``log P`` against ``L``; the exponent is the decay rate."""
    if len(points) < min_points:
        raise FitError(f"need >= {min_points} sizes, have {len(points)}")
    L = np.array([p[0] for p in points], float)
    P = np.array([p[1] for p in points], float)
    if np.any(P <= 0):
        raise FitError("probabilities must be positive")
    slope, se, icpt, rms = _linfit(L, np.log(P))
    extra = {}
    if density:
        extra["xi"] = density / -slope if slope < 0 else float("inf")
    return FitResult(-slope, se, 1.0, len(L), "P ~ exp(-rate L), rate = k/xi", slope, icpt, rms, extra)


def extrapolate_probability(fit: FitResult, length: float) -> float:
    return float(np.exp(fit.intercept + fit.slope * length))


# -- curve crossings -------------------------------------------------------------

@dataclass
class CurveFamily:
    grid: np.ndarray
    sizes: list[int]
    values: np.ndarray  # rows = grid points, columns = sizes
    label: str = ""

    def to_csv(self) -> str:
        head = ",".join([self.label or "x"] + [f"L={L}" for L in self.sizes])
        lines = [head]
        for g, row in zip(self.grid, self.values):
            lines.append(",".join([repr(float(g))] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


@dataclass
class CrossingResult:
    value: float
    pair_crossings: list[tuple[int, int, float]]
    spread: float

    def report(self) -> dict:
        return {"value": self.value, "spread": self.spread,
                "pairs": [{"L1": a, "L2": b, "crossing": c} for a, b, c in self.pair_crossings]}


def _roots(x, y) -> list[float]:
    roots = []
    for k in range(len(x) - 1):
        y0, y1 = y[k], y[k + 1]
        if y0 == 0:
            roots.append(float(x[k]))
        elif y0 * y1 < 0:
            roots.append(float(x[k] - y0 * (x[k + 1] - x[k]) / (y1 - y0)))
    if len(y) and y[-1] == 0:
        roots.append(float(x[-1]))
    return roots


def find_curve_crossing(curves: CurveFamily) -> CrossingResult:
    """Crossings of consecutive-size curves by piecewise-linear interpolation."""
    if len(curves.sizes) < 2:
        raise CrossingError("need at least two curves")
    order = np.argsort(curves.sizes)
    pairs = []
    for a, b in zip(order[:-1], order[1:]):
        diff = curves.values[:, b] - curves.values[:, a]
        roots = _roots(curves.grid, diff)
        La, Lb = curves.sizes[a], curves.sizes[b]
        if not roots:
            raise CrossingError(f"curves L={La} and L={Lb} do not cross inside the grid")
        if len(roots) > 1:
            raise CrossingError(f"curves L={La} and L={Lb} cross {len(roots)} times", roots)
        pairs.append((La, Lb, roots[0]))
    vals = [c for _, _, c in pairs]
    return CrossingResult(pairs[-1][2], pairs, float(max(vals) - min(vals)))


def mid_chain_sigma_scaled(state, length: int) -> float:
    """``<sigma_mid> sin(pi/(L+2))^(-1/8)`` on the bond ((L-1)/2, (L+1)/2)."""
    return sigma_bond(state, (length - 1) // 2) * math.sin(math.pi / (length + 2)) ** (-1 / 8)


def solve_ground_state(params: HamiltonianParams, geometry: ChainGeometry, seed: int = 0,
                       dmrg_config=None):
    """Exact diagonalisation when the basis fits, DMRG otherwise."""
    from .basis import expected_dimension
    if expected_dimension(geometry) <= ED_MAX_DIMENSION:
        basis = enumerate_basis(geometry)
        return ground_state(build_hamiltonian(params, geometry, basis), basis, seed=seed)
    from .dmrg import DmrgConfig, dmrg_ground_state
    res = dmrg_ground_state(build_mpo(params, geometry), geometry, dmrg_config or DmrgConfig(), seed)
    return res.mps, res.energy


def scan_detuning(sizes: Sequence[int], grid: Sequence[float], template: HamiltonianParams,
                  constraint_mode: str = "hard-blockade", seed: int = 0,
                  progress: Callable | None = None) -> CurveFamily:
    """Rescaled mid-chain order parameter on open odd-length chains over a detuning grid."""
    from dataclasses import replace
    sizes = list(sizes)
    for L in sizes:
        if L % 2 == 0:
            raise ValueError(f"detuning scan uses odd open chains, got L={L}")
    values = np.empty((len(grid), len(sizes)))
    for c, L in enumerate(sizes):
        geometry = ChainGeometry(L, "open", constraint_mode)
        for r, delta in enumerate(grid):
            try:
                state, _ = solve_ground_state(replace(template, Delta=float(delta)), geometry, seed)
            except Exception as exc:
                raise RuntimeError(f"solver failed at L={L}, Delta={delta}: {exc}") from exc
            values[r, c] = mid_chain_sigma_scaled(state, L)
            if progress:
                progress(L, delta, values[r, c])
    return CurveFamily(np.asarray(grid, float), sizes, values, "Delta")


def sigma_half(state) -> float:
    return sigma_bond(state, 0)


def sweep_theta(states: dict, beta: float, grid: Sequence[float]) -> tuple[CurveFamily, CrossingResult]:
    """``<sigma_1/2>`` of ``exp(-beta/2 H(theta))|psi>`` for each size; locate the crossing.

    ``states`` maps even periodic lengths to their ground states.
    """
    sizes = sorted(states)
    values = np.empty((len(grid), len(sizes)))
    for c, L in enumerate(sizes):
        for r, theta in enumerate(grid):
            values[r, c] = sigma_half(generalized_measure(states[L], beta, float(theta)))
    family = CurveFamily(np.asarray(grid, float), sizes, values, "theta")
    # theta = 0 keeps the symmetry, so every curve vanishes there; not a crossing
    live = np.max(np.abs(values), axis=1) > SYMMETRIC_ZERO
    search = CurveFamily(family.grid[live], sizes, values[live], family.label)
    return family, find_curve_crossing(search)
