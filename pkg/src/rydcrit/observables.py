"""Occupation-diagonal observables, correlators, one-point profiles, entropy.

Every observable used here is linear in the occupations ``n_k``, so all
expectations and two-point functions follow from ``<n_i>`` and ``<n_i n_j>``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .basis import ChainGeometry
from .measurement import OutcomeSector, _bond_reflection_centres
from .mps import MatrixProductState
from .solvers import DenseState


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class DiagonalObservable:
    terms: tuple[tuple[int, float], ...]
    label: str
    center: Fraction

    @property
    def sites(self) -> frozenset[int]:
        return frozenset(s for s, c in self.terms if c != 0)

    def vector(self, length: int) -> np.ndarray:
        v = np.zeros(length)
        for s, c in self.terms:
            if not 0 <= s < length:
                raise ObservableError(f"site {s} outside chain of length {length}")
            v[s] += c
        return v

    def evaluate(self, occupations: np.ndarray) -> np.ndarray:
        """Eigenvalue on each row of an occupation array."""
        out = np.zeros(occupations.shape[0])
        for s, c in self.terms:
            out += c * occupations[:, s]
        return out


@dataclass
class CorrelatorSeries:
    separations: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.separations = np.asarray(self.separations, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
        if len(self.separations) > 1 and np.any(np.diff(self.separations) <= 0):
            raise ValueError("separations must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["separation", "value", "stderr"])
        err = self.stderr if self.stderr is not None else [None] * len(self)
        for d, v, e in zip(self.separations, self.values, err):
            w.writerow([repr(float(d)), repr(float(v)), "" if e is None else repr(float(e))])
        return buf.getvalue()

    def write(self, path) -> None:
        """CSV plus a ``.json`` metadata sidecar."""
        path = Path(path)
        path.write_text(self.to_csv())
        path.with_suffix(".json").write_text(json.dumps(self.meta, indent=2, sort_keys=True, default=str) + "\n")

    @classmethod
    def read(cls, path) -> "CorrelatorSeries":
        path = Path(path)
        rows = list(csv.DictReader(path.read_text().splitlines()))
        sep = [float(r["separation"]) for r in rows]
        val = [float(r["value"]) for r in rows]
        err = [float(r["stderr"]) if r["stderr"] else np.nan for r in rows]
        meta_path = path.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        stderr = None if all(np.isnan(err)) else np.array(err)
        return cls(np.array(sep), np.array(val), stderr, meta)


# -- lattice operators ---------------------------------------------------------

def _wrap(site: int, geometry: ChainGeometry) -> int:
    L = geometry.length
    if geometry.periodic:
        return site % L
    if not 0 <= site < L:
        raise ObservableError(f"site {site} outside open chain of length {L}")
    return site


def sigma_bond_observable(j: int, geometry: ChainGeometry) -> DiagonalObservable:
    """``(-1)^j (n_j - n_{j+1}) / 2`` centred on bond ``j + 1/2``."""
    a, b = _wrap(j, geometry), _wrap(j + 1, geometry)
    sgn = -1.0 if j % 2 else 1.0
    return DiagonalObservable(((a, sgn / 2), (b, -sgn / 2)), f"sigma_{j}+1/2", Fraction(2 * j + 1, 2))


def epsilon_bond_observable(j: int, geometry: ChainGeometry) -> DiagonalObservable:
    a, b = _wrap(j, geometry), _wrap(j + 1, geometry)
    return DiagonalObservable(((a, 0.5), (b, 0.5)), f"epsilon_{j}+1/2", Fraction(2 * j + 1, 2))


def bond_observables(kind: str, geometry: ChainGeometry) -> list[DiagonalObservable]:
    L = geometry.length
    nbonds = L if geometry.periodic else L - 1
    build = {"sigma": sigma_bond_observable, "epsilon": epsilon_bond_observable}[kind]
    return [build(j, geometry) for j in range(nbonds)]


# -- post-measurement dictionary -----------------------------------------------

@dataclass(frozen=True)
class CellLayout:
    start: int                 # residue opening each cell
    unmeasured: tuple[int, ...]  # offsets (from start) of unmeasured sites in a cell
    extended: bool             # pair adjacent cells to cancel the staggered epsilon part


def cell_layout(sector: OutcomeSector) -> CellLayout:
    p = sector.period
    outmap = dict(sector.residues)
    free = [r for r in range(p) if r not in outmap]
    if not free:
        raise ObservableError("every site of the unit cell is measured")
    starts = [r for r in free if (r - 1) % p in outmap]
    start = starts[0]
    offsets = tuple(t for t in range(p) if (start + t) % p not in outmap)
    extended = False
    centres = _bond_reflection_centres(outmap, p)
    if centres:
        lam = [start + t for t in offsets]
        total = lam[0] + lam[-1]
        mirrored = sorted(total - k for k in lam)
        self_mapped = total % 2 == 1 and mirrored == lam and ((total + 1) // 2) % p in centres
        if not self_mapped:
            if p % 2 == 0:
                raise ObservableError("no reflection-odd cell choice for this even-period pattern")
            extended = True
    return CellLayout(start, offsets, extended)


def _cells(sector: OutcomeSector) -> list[list[int]]:
    """Absolute (unwrapped) unmeasured sites of each complete unit cell."""
    g = sector.geometry
    L, p = g.length, sector.period
    lay = cell_layout(sector)
    cells = []
    if g.periodic:
        for j in range(L // p):
            cells.append([lay.start + j * p + t for t in lay.unmeasured])
    else:
        base = lay.start - p
        while base + lay.unmeasured[0] < L:
            sites = [base + t for t in lay.unmeasured]
            if sites[0] >= 0 and sites[-1] < L:
                cells.append(sites)
            base += p
    return cells


def _dictionary(sector: OutcomeSector, signed: bool, label: str) -> list[DiagonalObservable]:
    g = sector.geometry
    lay = cell_layout(sector)
    cells = _cells(sector)

    def plain(sites):
        c = 1.0 / len(sites)
        return [(k, (-c if k % 2 else c) if signed else c) for k in sites]

    groups = []
    if lay.extended:
        n = len(cells)
        pairs = [(cells[j], cells[(j + 1) % n]) for j in range(n)] if g.periodic else \
            [(cells[j], cells[j + 1]) for j in range(n - 1)]
        for a, b in pairs:
            if g.periodic and b[0] < a[0]:
                b = [k + g.length for k in b]
            terms = [(k, 0.5 * c) for k, c in plain(a) + plain(b)]
            groups.append((terms, Fraction(sum(a) + sum(b), len(a) + len(b))))
    else:
        for sites in cells:
            groups.append((plain(sites), Fraction(sum(sites), len(sites))))
    out = []
    for terms, centre in groups:
        # sign uses the unwrapped site; on periodic chains L is even whenever it matters
        wrapped = tuple((_wrap(k, g), c) for k, c in terms)
        if g.periodic:
            centre = centre % g.length
        out.append(DiagonalObservable(wrapped, f"{label}[{centre}]", centre))
    out.sort(key=lambda o: o.center)
    return out


def build_sigma_n(sector: OutcomeSector) -> list[DiagonalObservable]:
    """Order-parameter proxy averaged over each cell's unmeasured sites."""
    return _dictionary(sector, signed=True, label="sigma_n")


def build_epsilon_n(sector: OutcomeSector) -> list[DiagonalObservable]:
    if not sector.preserves_bond_reflection:
        raise ObservableError("epsilon dictionary requires a bond-reflection symmetric sector")
    return _dictionary(sector, signed=False, label="epsilon_n")


def build_epsilon_z2(sector: OutcomeSector) -> list[DiagonalObservable]:
    """``(n_{l-3} + 2 n_l + n_{l+3}) / 4`` on the free sites ``l = 3j+2``."""
    if sector.period != 3 or dict(sector.residues) != {0: 0, 1: 0}:
        raise ObservableError("epsilon_z2 is defined only for the n[3j]=0,n[3j+1]=0 sector")
    g = sector.geometry
    L = g.length
    out = []
    for l in range(2, L, 3):
        if not g.periodic and (l - 3 < 0 or l + 3 >= L):
            continue
        terms = ((_wrap(l - 3, g), 0.25), (_wrap(l, g), 0.5), (_wrap(l + 3, g), 0.25))
        out.append(DiagonalObservable(terms, f"epsilon_z2[{l}]", Fraction(l)))
    return out


# -- evaluation ----------------------------------------------------------------

def occupation_moments(state) -> tuple[np.ndarray, np.ndarray]:
    """``<n_i>`` and ``<n_i n_j>``, cached on the state object."""
    cached = state.__dict__.get("_moments")
    if cached is not None:
        return cached
    if isinstance(state, DenseState):
        occ = state.basis.occupations.astype(np.float64)
        w = state.probabilities / np.sum(state.probabilities)
        mean = occ.T @ w
        C = occ.T @ (occ * w[:, None])
    elif isinstance(state, MatrixProductState):
        mean, C = state.occupation_moments()
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    state.__dict__["_moments"] = (mean, C)
    return mean, C


def expectation(state, obs: DiagonalObservable) -> float:
    mean, _ = occupation_moments(state)
    return float(obs.vector(len(mean)) @ mean)


def sigma_bond(state, j: int) -> float:
    return expectation(state, sigma_bond_observable(j, state.geometry))


def epsilon_bond(state, j: int) -> float:
    return expectation(state, epsilon_bond_observable(j, state.geometry))


def separation(a: DiagonalObservable, b: DiagonalObservable, geometry: ChainGeometry) -> Fraction:
    d = abs(a.center - b.center)
    if geometry.periodic:
        d = d % geometry.length
        d = min(d, geometry.length - d)
    return d


def default_pairs(obs_list, geometry: ChainGeometry) -> list[tuple[int, int]]:
    """Reference observable 0 against all others (translation-reduced on rings)."""
    return [(0, k) for k in range(1, len(obs_list))]


def aggregate_pairs(values, seps, errs=None, meta=None) -> CorrelatorSeries:
    """Average points sharing a separation; sort by separation."""
    groups: dict[Fraction, list[int]] = {}
    for k, d in enumerate(seps):
        groups.setdefault(d, []).append(k)
    keys = sorted(groups)
    vals = np.array([np.mean([values[k] for k in groups[d]]) for d in keys])
    stderr = None
    if errs is not None:
        stderr = np.array([np.sqrt(np.sum(np.square([errs[k] for k in groups[d]]))) / len(groups[d])
                           for d in keys])
    return CorrelatorSeries(np.array([float(d) for d in keys]), vals, stderr, dict(meta or {}))


def connected_correlator(state, obs_list, pairs=None, label: str = "") -> CorrelatorSeries:
    """``<AB> - <A><B>`` per pair; pairs with overlapping support are dropped.

    Separations are raw centre distances (minimum image on rings).
    """
    g = state.geometry
    L = g.length
    mean, C = occupation_moments(state)
    pairs = default_pairs(obs_list, g) if pairs is None else pairs
    vecs = {}
    vals, seps = [], []
    for i, j in pairs:
        A, B = obs_list[i], obs_list[j]
        if A.sites & B.sites:
            continue
        a = vecs.setdefault(i, A.vector(L))
        b = vecs.setdefault(j, B.vector(L))
        vals.append(float(a @ C @ b - (a @ mean) * (b @ mean)))
        seps.append(separation(A, B, g))
    meta = {"label": label or (obs_list[0].label.split("[")[0] if obs_list else ""),
            "L": L, "boundary": g.boundary, "sector": state.meta.get("sector", "")}
    return aggregate_pairs(vals, seps, meta=meta)


def profile_coordinate(center, length: int) -> float:
    """``x_l = pi (l + 1/2) / (L + 2)``."""
    return math.pi * (float(center) + 0.5) / (length + 2)


def one_point_profile(state, obs_list) -> CorrelatorSeries:
    """``<O_l>`` against position ``l`` on an open chain."""
    g = state.geometry
    if g.periodic:
        raise ObservableError("one-point profiles need an open chain; on a ring they vanish by "
                              "symmetry, use connected_correlator instead")
    mean, _ = occupation_moments(state)
    obs_list = sorted(obs_list, key=lambda o: o.center)
    pos = np.array([float(o.center) for o in obs_list])
    vals = np.array([o.vector(g.length) @ mean for o in obs_list])
    meta = {"L": g.length, "boundary": g.boundary, "kind": "profile",
            "sector": state.meta.get("sector", "")}
    return CorrelatorSeries(pos, vals, None, meta)


def _entropy_from_schmidt(s: np.ndarray) -> float:
    p = s**2
    p = p[p > 1e-300] / p.sum()
    return float(-np.sum(p * np.log(p)))


def half_chain_entropy(state, cut: int | None = None) -> float:
    """Von Neumann entropy (natural log) of sites ``0..cut-1``."""
    L = state.length
    cut = L // 2 if cut is None else cut
    if not 0 < cut < L:
        return 0.0
    if isinstance(state, MatrixProductState):
        return _entropy_from_schmidt(state.copy().singular_values(cut))
    masks = state.basis.masks
    left = masks & ((1 << cut) - 1)
    right = masks >> cut
    lu, li = np.unique(left, return_inverse=True)
    ru, ri = np.unique(right, return_inverse=True)
    M = np.zeros((len(lu), len(ru)))
    M[li, ri] = state.amplitudes
    s = np.linalg.svd(M, compute_uv=False)
    return _entropy_from_schmidt(s)
