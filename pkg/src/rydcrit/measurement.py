"""Measurement patterns, post-selection sectors and Born-rule bookkeeping.

Pattern grammar (0-based sites)::

    pattern := clause ("," clause)*
    clause  := "n[" INT "j" ("+" INT)? "]=" ("0" | "1")

``n[3j]=0,n[3j+1]=0`` measures sites 0, 1, 3, 4, ... with outcome 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .basis import ChainGeometry
from .mps import MatrixProductState
from .solvers import DenseState

ZERO_PROBABILITY = 1e-14
MAX_ENUMERATED_SITES = 20


class PatternError(ValueError):
    """Malformed or inconsistent measurement pattern."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} at byte {offset}")


class ZeroProbabilityError(ArithmeticError):
    def __init__(self, probability: float):
        super().__init__(f"post-selection probability {probability:.3e} below {ZERO_PROBABILITY:g}")
        self.probability = probability


@dataclass(frozen=True)
class Clause:
    stride: int
    offset: int
    outcome: int

    def text(self) -> str:
        tail = f"+{self.offset}" if self.offset else ""
        return f"n[{self.stride}j{tail}]={self.outcome}"


@dataclass(frozen=True)
class MeasurementPattern:
    clauses: tuple[Clause, ...]
    text: str

    @property
    def period(self) -> int:
        return reduce(math.lcm, (c.stride for c in self.clauses))

    def outcome_map(self) -> dict[int, int]:
        """Measured residue (mod period) -> outcome."""
        p = self.period
        out: dict[int, int] = {}
        for c in self.clauses:
            for r in range(c.offset, p, c.stride):
                out[r] = c.outcome
        return out

    def canonical_text(self) -> str:
        return ",".join(c.text() for c in self.clauses)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.raw = text.encode()
        self.pos = 0

    def error(self, message):
        raise PatternError(message, self.pos)

    def expect(self, literal: str):
        lit = literal.encode()
        if self.raw[self.pos:self.pos + len(lit)] != lit:
            found = self.raw[self.pos:self.pos + 1].decode(errors="replace") or "end of input"
            self.error(f"expected {literal!r}, found {found!r}")
        self.pos += len(lit)

    def integer(self) -> int:
        start = self.pos
        while self.pos < len(self.raw) and 48 <= self.raw[self.pos] <= 57:
            self.pos += 1
        if self.pos == start:
            self.error("expected integer")
        return int(self.raw[start:self.pos])

    def clause(self) -> Clause:
        start = self.pos
        self.expect("n[")
        stride = self.integer()
        if stride < 1:
            self.pos = start + 2
            self.error("stride must be positive")
        self.expect("j")
        offset = 0
        if self.raw[self.pos:self.pos + 1] == b"+":
            self.pos += 1
            at = self.pos
            offset = self.integer()
            if offset >= stride:
                self.pos = at
                self.error(f"offset {offset} must be smaller than stride {stride}")
        self.expect("]=")
        ch = self.raw[self.pos:self.pos + 1]
        if ch not in (b"0", b"1"):
            self.error("outcome must be 0 or 1")
        self.pos += 1
        return Clause(stride, offset, int(ch))

    def parse(self) -> MeasurementPattern:
        clauses = [self.clause()]
        while self.pos < len(self.raw):
            self.expect(",")
            clauses.append(self.clause())
        return MeasurementPattern(tuple(clauses), self.text)


def parse_pattern(text: str) -> MeasurementPattern:
    pattern = _Parser(text).parse()
    p = pattern.period
    seen: dict[int, int] = {}
    for c in pattern.clauses:
        for r in range(c.offset, p, c.stride):
            if seen.get(r, c.outcome) != c.outcome:
                raise PatternError(f"conflicting outcomes for sites = {r} (mod {p})")
            seen[r] = c.outcome
    return pattern


@dataclass(frozen=True)
class OutcomeSector:
    geometry: ChainGeometry
    measured_sites: tuple[int, ...]
    outcomes: tuple[int, ...]
    period: int
    residues: tuple[tuple[int, int], ...]  # (residue mod period, outcome)
    minimal_period: int
    preserves_bond_reflection: bool
    pattern_text: str = ""

    @property
    def K(self) -> int:
        return len(self.measured_sites)

    @property
    def density(self) -> float:
        return self.K / self.geometry.length

    @property
    def sigma_allowed(self) -> bool:
        return classify_sector(self) == "sigma_allowed"

    @property
    def site_mask(self) -> int:
        return sum(1 << i for i in self.measured_sites)

    @property
    def value_mask(self) -> int:
        return sum(o << i for i, o in zip(self.measured_sites, self.outcomes))

    def outcome_of(self, site: int) -> int | None:
        d = dict(zip(self.measured_sites, self.outcomes))
        return d.get(site)

    def translated(self, shift: int) -> "OutcomeSector":
        if not self.geometry.periodic:
            raise ValueError("translation only defined on periodic chains")
        L = self.geometry.length
        pairs = sorted(((i + shift) % L, o) for i, o in zip(self.measured_sites, self.outcomes))
        residues = tuple(sorted(((r + shift) % self.period, o) for r, o in self.residues))
        return OutcomeSector(self.geometry, tuple(i for i, _ in pairs), tuple(o for _, o in pairs),
                             self.period, residues, self.minimal_period,
                             self.preserves_bond_reflection, self.pattern_text)


def _minimal_period(outmap: dict[int, int], p: int) -> int:
    f = [outmap.get(r) for r in range(p)]
    for t in range(1, p + 1):
        if p % t == 0 and all(f[r] == f[(r + t) % p] for r in range(p)):
            return t
    return p


def _bond_reflection_centres(outmap: dict[int, int], p: int) -> list[int]:
    """Bond centres ``c`` (between sites c-1 and c) with j -> 2c-1-j a symmetry."""
    f = [outmap.get(r) for r in range(p)]
    return [c for c in range(p) if all(f[r] == f[(2 * c - 1 - r) % p] for r in range(p))]


def expand_pattern(pattern: MeasurementPattern, geometry: ChainGeometry) -> OutcomeSector:
    L = geometry.length
    p = pattern.period
    if geometry.periodic and L % p:
        raise PatternError(f"pattern period {p} does not divide periodic length {L}")
    outmap = pattern.outcome_map()
    sites = [j for j in range(L) if (j % p) in outmap]
    outcomes = [outmap[j % p] for j in sites]
    ones = {j for j, o in zip(sites, outcomes) if o == 1}
    for j in ones:
        nb = (j + 1) % L if geometry.periodic else j + 1
        if nb in ones and nb != j:
            raise PatternError(f"outcomes force adjacent excitations on sites {j} and {nb}")
    return OutcomeSector(
        geometry=geometry,
        measured_sites=tuple(sites),
        outcomes=tuple(outcomes),
        period=p,
        residues=tuple(sorted(outmap.items())),
        minimal_period=_minimal_period(outmap, p),
        preserves_bond_reflection=bool(_bond_reflection_centres(outmap, p)),
        pattern_text=pattern.text,
    )


def sector_from_sites(geometry: ChainGeometry, sites, outcomes) -> OutcomeSector:
    """Sector for an explicit (not necessarily periodic) site list."""
    sites = tuple(int(s) for s in sites)
    outcomes = tuple(int(o) for o in outcomes)
    L = geometry.length
    outmap = dict(zip(sites, outcomes))
    refl = any(all(outmap.get(r) == outmap.get((2 * c - 1 - r) % L) for r in range(L))
               for c in range(L)) if geometry.periodic else False
    return OutcomeSector(geometry, sites, outcomes, L, tuple(sorted(outmap.items())),
                         _minimal_period(outmap, L) if geometry.periodic else L, refl)


def classify_sector(sector: OutcomeSector) -> str:
    """``sigma_forbidden`` when the outcomes keep an odd translation period or
    a bond reflection; otherwise ``sigma_allowed``."""
    if sector.minimal_period % 2 == 1 or sector.preserves_bond_reflection:
        return "sigma_forbidden"
    return "sigma_allowed"


# -- state operations --------------------------------------------------------

def _dense_match(state: DenseState, sector: OutcomeSector) -> np.ndarray:
    return (state.basis.masks & sector.site_mask) == sector.value_mask


def _check_geometry(state, sector):
    g = state.geometry
    if g.length != sector.geometry.length or g.boundary != sector.geometry.boundary:
        raise ValueError(f"sector built for {sector.geometry}, state lives on {g}")


def sector_probability(state, sector: OutcomeSector) -> float:
    _check_geometry(state, sector)
    if isinstance(state, DenseState):
        return float(np.sum(state.probabilities[_dense_match(state, sector)]))
    mps = state.copy()
    base = mps.canonicalize(0) ** 2
    for i, o in zip(sector.measured_sites, sector.outcomes):
        mps.apply_site_weights(i, (1.0, 0.0) if o == 0 else (0.0, 1.0))
    return mps.norm() ** 2 if base else 0.0


def project(state, sector: OutcomeSector):
    """Renormalised projection onto ``sector`` and its Born probability."""
    _check_geometry(state, sector)
    if isinstance(state, DenseState):
        match = _dense_match(state, sector)
        prob = float(np.sum(state.probabilities[match]))
        if prob < ZERO_PROBABILITY:
            raise ZeroProbabilityError(prob)
        amps = np.where(match, state.amplitudes, 0.0) / math.sqrt(prob)
        meta = dict(state.meta, sector=sector.pattern_text, probability=prob)
        return DenseState(state.basis, amps, meta), prob
    mps = state.copy()
    mps.canonicalize(0)
    for i, o in zip(sector.measured_sites, sector.outcomes):
        mps.apply_site_weights(i, (1.0, 0.0) if o == 0 else (0.0, 1.0))
    prob = mps.norm() ** 2
    if prob < ZERO_PROBABILITY:
        raise ZeroProbabilityError(prob)
    mps.canonicalize(0)
    mps.meta.update(sector=sector.pattern_text, probability=prob)
    return mps, prob


def _reweight(state, log_weights_dense, site_weights):
    if isinstance(state, DenseState):
        lw = log_weights_dense
        lw = lw - lw.max()
        amps = state.amplitudes * np.exp(lw)
        norm = np.linalg.norm(amps)
        if not norm > 0 or not np.isfinite(norm):
            raise ZeroProbabilityError(0.0)
        return DenseState(state.basis, amps / norm, dict(state.meta))
    mps = state.copy()
    for site, w in site_weights:
        mps.apply_site_weights(site, w)
    try:
        mps.canonicalize(0)
    except ZeroDivisionError:
        raise ZeroProbabilityError(0.0) from None
    return mps


def _site_weight(exponent: float) -> tuple[float, float]:
    """Weights for n=0,1 proportional to (1, exp(exponent)), max entry 1."""
    if exponent <= 0:
        return (1.0, math.exp(exponent))
    return (math.exp(-exponent), 1.0)


def weak_measure(state, sector: OutcomeSector, beta: float):
    """Apply ``exp(-beta/2 sum_a (-1)^{n_a} n_{i_a})`` and renormalise."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    _check_geometry(state, sector)
    signs = np.array([1.0 if o == 0 else -1.0 for o in sector.outcomes])
    sites = list(sector.measured_sites)
    dense_lw = None
    if isinstance(state, DenseState):
        occ = state.basis.occupations[:, sites].astype(np.float64)
        dense_lw = -0.5 * beta * (occ @ signs)
    weights = [(i, _site_weight(-0.5 * beta * s)) for i, s in zip(sites, signs)]
    return _reweight(state, dense_lw, weights)


def generalized_coefficients(length: int, theta: float) -> np.ndarray:
    j = np.arange(length)
    return np.where(j % 2 == 0, 1.0, -1.0) * math.sin(theta) + math.cos(theta)


def generalized_measure(state, beta: float, theta: float):
    """Apply ``exp(-beta/2 sum_j [(-1)^j sin(theta) + cos(theta)] n_j)``."""
    g = state.geometry
    if not g.periodic or g.length % 2:
        raise ValueError("generalized measurement is defined on even-length periodic chains only")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    h = generalized_coefficients(g.length, theta)
    dense_lw = None
    if isinstance(state, DenseState):
        dense_lw = -0.5 * beta * (state.basis.occupations.astype(np.float64) @ h)
    weights = [(j, _site_weight(-0.5 * beta * h[j])) for j in range(g.length)]
    return _reweight(state, dense_lw, weights)


def conditional_probabilities(state, sector: OutcomeSector) -> list:
    """P(outcome at i_k | outcomes at i_1..i_{k-1}) in ascending site order.

    If a prefix has zero probability the list ends with ``None``.
    """
    _check_geometry(state, sector)
    order = np.argsort(sector.measured_sites)
    sites = [sector.measured_sites[k] for k in order]
    outs = [sector.outcomes[k] for k in order]
    prefix = _prefix_probabilities(state, sites, outs)
    conds = []
    prev = 1.0
    for P in prefix:
        if prev < ZERO_PROBABILITY:
            conds.append(None)
            break
        conds.append(P / prev)
        prev = P
    return conds


def _prefix_probabilities(state, sites, outs) -> list[float]:
    if isinstance(state, DenseState):
        probs = state.probabilities
        masks = state.basis.masks
        out = []
        alive = np.ones(len(masks), bool)
        for i, o in zip(sites, outs):
            alive &= ((masks >> i) & 1) == o
            out.append(float(np.sum(probs[alive])))
        return out
    mps = state.copy()
    mps.canonicalize(0)
    # right-canonical beyond the left edge: right environments are identities
    env = np.ones((1, 1))
    targets = dict(zip(sites, outs))
    out = []
    for s, A in enumerate(mps.tensors):
        if s in targets:
            B = A[:, targets[s], :]
            env = B.T @ env @ B
            out.append(float(np.trace(env)))
        else:
            env = np.einsum("ab,asc,bsd->cd", env, A, A, optimize=True)
        if s >= max(sites):
            break
    return out


def enumerate_sector_probabilities(state, measured_sites) -> dict[str, float]:
    """Born weight of every outcome string on ``measured_sites``.

    Keys list outcomes in ascending site order.
    """
    sites = sorted(int(s) for s in measured_sites)
    K = len(sites)
    if K > MAX_ENUMERATED_SITES:
        raise ValueError(f"at most {MAX_ENUMERATED_SITES} measured sites, got {K}")
    if isinstance(state, DenseState):
        masks = state.basis.masks
        code = np.zeros(len(masks), dtype=np.int64)
        for a, i in enumerate(sites):
            code |= ((masks >> i) & 1) << (K - 1 - a)
        counts = np.bincount(code, weights=state.probabilities, minlength=1 << K)
    else:
        counts = np.zeros(1 << K)
        mps = state.copy()
        mps.canonicalize(0)
        pos = {s: a for a, s in enumerate(sites)}
        branches = [(0, np.ones((1, 1)))]
        for s, A in enumerate(mps.tensors):
            if s in pos:
                new = []
                for code, env in branches:
                    for b in (0, 1):
                        B = A[:, b, :]
                        e = B.T @ env @ B
                        if np.trace(e) > 0:
                            new.append(((code << 1) | b, e))
                branches = new
            else:
                branches = [(c, np.einsum("ab,asc,bsd->cd", e, A, A, optimize=True)) for c, e in branches]
            if s >= max(sites):
                break
        for code, env in branches:
            counts[code] = np.trace(env)
    return {format(k, f"0{K}b") if K else "": float(v) for k, v in enumerate(counts)}
