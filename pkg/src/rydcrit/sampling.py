"""Born-rule shot sampling and restricted-average estimators.

Each shot ``s`` draws its uniforms from a Philox stream keyed by the seed,
starting at counter block ``s * ceil(L/4)``; results therefore do not depend
on how shots are chunked.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import ChainGeometry, blockade_ok
from .measurement import OutcomeSector
from .mps import MatrixProductState
from .observables import (CorrelatorSeries, DiagonalObservable, aggregate_pairs, default_pairs,
                          separation)
from .solvers import DenseState

CHUNK = 65536
MIN_CONNECTED_SHOTS = 100


class SamplingError(ValueError):
    pass


@dataclass
class ShotSet:
    geometry: ChainGeometry
    occupations: np.ndarray  # (n_shots, L) uint8
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.occupations.shape[0]

    @property
    def length(self) -> int:
        return self.geometry.length

    def strings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.occupations]

    def masks(self) -> np.ndarray:
        weights = np.left_shift(np.int64(1), np.arange(self.length, dtype=np.int64))
        return self.occupations.astype(np.int64) @ weights

    def write(self, path) -> None:
        """One 0/1 string per line plus a ``.json`` sidecar."""
        path = Path(path)
        rows = (self.occupations + ord("0")).astype(np.uint8)
        with open(path, "wb") as fh:
            for row in rows:
                fh.write(row.tobytes() + b"\n")
        side = {"L": self.length, "boundary": self.geometry.boundary,
                "constraint_mode": self.geometry.constraint_mode, "seed": self.seed,
                "n_shots": len(self), **self.meta}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, default=str))

    @classmethod
    def read(cls, path) -> "ShotSet":
        path = Path(path)
        side_path = path.with_suffix(path.suffix + ".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {}
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
        L = side.get("L", len(lines[0]) if lines else 0)
        if any(len(ln) != L or set(ln) - {"0", "1"} for ln in lines):
            raise SamplingError(f"{path}: every shot must be a {L}-character 0/1 string")
        occ = (np.frombuffer("".join(lines).encode(), dtype=np.uint8) - ord("0")).reshape(-1, L)
        geometry = ChainGeometry(L, side.get("boundary", "periodic"),
                                 side.get("constraint_mode", "hard-blockade"))
        meta = {k: v for k, v in side.items()
                if k not in ("L", "boundary", "constraint_mode", "seed", "n_shots")}
        return cls(geometry, occ.copy(), side.get("seed"), meta)


def _uniforms(seed: int, start: int, count: int, length: int) -> np.ndarray:
    """Uniforms in [0, 1) for shots ``start .. start+count``; row = shot, column = site."""
    blocks = math.ceil(length / 4)
    bitgen = np.random.Philox(key=seed)
    bitgen.advance(start * blocks)
    raw = bitgen.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :length]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _sample_dense(state: DenseState, u: np.ndarray) -> np.ndarray:
    # basis is sorted by the string-lex key, so a fixed prefix is a contiguous range
    keys = state.basis.keys
    L = state.length
    cum = np.concatenate([[0.0], np.cumsum(state.probabilities)])
    n = u.shape[0]
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, keys.size, dtype=np.int64)
    prefix = np.zeros(n, dtype=np.int64)
    occ = np.zeros((n, L), dtype=np.uint8)
    for j in range(L):
        bit = np.int64(1) << np.int64(L - 1 - j)
        split = np.searchsorted(keys, prefix | bit)
        split = np.clip(split, lo, hi)
        w0 = cum[split] - cum[lo]
        tot = cum[hi] - cum[lo]
        one = u[:, j] * tot >= w0
        # guard against rounding picking an empty branch
        one &= split < hi
        one |= split == lo
        occ[:, j] = one
        prefix = np.where(one, prefix | bit, prefix)
        lo = np.where(one, split, lo)
        hi = np.where(one, hi, split)
    return occ


def _sample_mps(mps: MatrixProductState, u: np.ndarray) -> np.ndarray:
    mps = mps.copy()
    mps.canonicalize(0)
    n = u.shape[0]
    env = np.ones((n, 1))
    occ = np.zeros((n, mps.length), dtype=np.uint8)
    for j, A in enumerate(mps.tensors):
        v = np.einsum("sa,adb->sdb", env, A)
        p = np.sum(v * v, axis=2)
        p0 = p[:, 0] / p.sum(axis=1)
        one = u[:, j] >= p0
        occ[:, j] = one
        env = v[np.arange(n), one.astype(int)]
        env /= np.linalg.norm(env, axis=1, keepdims=True)
    return occ


def sample_shots(state, n_shots: int, seed: int, chunk: int = CHUNK) -> ShotSet:
    """Draw ``n_shots`` full-chain projective outcomes from ``|amplitude|^2``."""
    if n_shots < 0:
        raise ValueError("n_shots must be non-negative")
    if isinstance(state, DenseState):
        if not math.isclose(state.norm(), 1.0, rel_tol=1e-8):
            state = state.normalized()
        draw = lambda u: _sample_dense(state, u)
    elif isinstance(state, MatrixProductState):
        draw = lambda u: _sample_mps(state, u)
    else:
        raise TypeError(f"cannot sample from {type(state).__name__}")
    L = state.geometry.length
    parts = []
    for start in range(0, n_shots, chunk):
        count = min(chunk, n_shots - start)
        parts.append(draw(_uniforms(seed, start, count, L)))
    occ = np.concatenate(parts) if parts else np.zeros((0, L), dtype=np.uint8)
    meta = {"source": state.meta.get("id", state.meta.get("backend", ""))}
    return ShotSet(state.geometry, occ, seed, meta)


def filter_sector(shots: ShotSet, sector: OutcomeSector) -> ShotSet:
    """Keep shots whose measured bits match the sector outcomes."""
    if (sector.geometry.length, sector.geometry.boundary) != (shots.length, shots.geometry.boundary):
        raise SamplingError("sector and shots describe different chains")
    masks = shots.masks()
    keep = (masks & sector.site_mask) == sector.value_mask
    n_in = int(keep.sum())
    meta = dict(shots.meta, sector=sector.pattern_text, parent_shots=len(shots),
                retained=n_in, retention=n_in / len(shots) if len(shots) else 0.0,
                empty=n_in == 0)
    return ShotSet(shots.geometry, shots.occupations[keep], shots.seed, meta)


def retention_fraction(shots: ShotSet) -> float:
    return float(shots.meta.get("retention", 1.0))


def estimate_observable(shots: ShotSet, obs: DiagonalObservable) -> tuple[float, float]:
    """Sample mean and standard error of a diagonal observable."""
    n = len(shots)
    if n == 0:
        raise SamplingError("no shots to average")
    x = shots.occupations @ obs.vector(shots.length)
    err = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return float(x.mean()), err


def _jackknife_connected(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    n = x.size
    Sx, Sy, Sxy = x.sum(), y.sum(), (x * y).sum()
    full = Sxy / n - Sx * Sy / n**2
    loo = (Sxy - x * y) / (n - 1) - (Sx - x) * (Sy - y) / (n - 1) ** 2
    return float(full), loo


def estimate_connected(shots: ShotSet, obs_list, pairs=None,
                       min_shots: int = MIN_CONNECTED_SHOTS) -> CorrelatorSeries:
    """Connected correlators from shot moments with delete-one jackknife errors.

    Pairs sharing a separation are averaged before the jackknife so the
    quoted error covers the averaged point.
    """
    n = len(shots)
    if n < min_shots:
        raise SamplingError(f"only {n} shots retained, need at least {min_shots}")
    L = shots.length
    g = shots.geometry
    pairs = default_pairs(obs_list, g) if pairs is None else pairs
    X = shots.occupations @ np.column_stack([o.vector(L) for o in obs_list])
    groups: dict = {}
    for i, j in pairs:
        if obs_list[i].sites & obs_list[j].sites:
            continue
        groups.setdefault(separation(obs_list[i], obs_list[j], g), []).append((i, j))
    seps, vals, errs = [], [], []
    for d in sorted(groups):
        full, loo = 0.0, np.zeros(n)
        for i, j in groups[d]:
            f, l = _jackknife_connected(X[:, i], X[:, j])
            full += f
            loo += l
        m = len(groups[d])
        full, loo = full / m, loo / m
        var = (n - 1) / n * np.sum((loo - loo.mean()) ** 2)
        seps.append(d)
        vals.append(full)
        errs.append(math.sqrt(var))
    meta = {"label": "shots", "L": L, "boundary": g.boundary, "n_shots": n,
            "sector": shots.meta.get("sector", "")}
    return aggregate_pairs(vals, seps, [e for e in errs], meta)


def check_blockade(shots: ShotSet) -> bool:
    return bool(np.all(blockade_ok(shots.masks(), shots.geometry.with_mode("hard-blockade"))))
