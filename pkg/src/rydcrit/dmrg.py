"""Two-site DMRG ground-state search."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .basis import ChainGeometry
from .mps import MatrixProductOperator, MatrixProductState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DmrgConfig:
    chi_max: int = 250
    entropy_tol: float = 1e-5
    energy_tol: float = 1e-7
    max_sweeps: int = 30
    min_sweeps: int = 2
    truncation_cutoff: float = 1e-10
    chi_init: int = 8
    local_tol: float = 1e-12


@dataclass
class DmrgResult:
    mps: MatrixProductState
    energy: float
    converged: bool
    sweeps: int
    delta_energy: float
    delta_entropy: float
    energies: list = field(default_factory=list)
    entropies: list = field(default_factory=list)
    max_truncation: float = 0.0


def _contract_left(Lenv, A, W):
    # Lenv (a, w, a'), A (a', s', c'), W (w, v, s, s') -> (c, v, c')
    T = np.tensordot(Lenv, A, axes=(2, 0))             # a w s' c'
    T = np.tensordot(T, W, axes=([1, 2], [0, 3]))      # a c' v s
    T = np.tensordot(A, T, axes=([0, 1], [0, 3]))      # c c' v
    return T.transpose(0, 2, 1)


def _contract_right(Renv, B, W):
    # Renv (c, u, c'), B (a', s', c'), W (v, u, s, s') -> (a, v, a')
    T = np.tensordot(B, Renv, axes=(2, 2))             # a' s' c u
    T = np.tensordot(T, W, axes=([1, 3], [3, 1]))      # a' c v s
    T = np.tensordot(B, T, axes=([1, 2], [3, 1]))      # a a' v
    return T.transpose(0, 2, 1)


def _two_site_matvec(Lenv, W1, W2, Renv, shape):
    def matvec(x):
        theta = x.reshape(shape)                                   # a' s1' s2' c'
        T = np.tensordot(Lenv, theta, axes=(2, 0))                 # a w s1' s2' c'
        T = np.tensordot(T, W1, axes=([1, 2], [0, 3]))             # a s2' c' v s1
        T = np.tensordot(T, W2, axes=([1, 3], [3, 0]))             # a c' s1 u s2
        T = np.tensordot(T, Renv, axes=([1, 3], [2, 1]))           # a s1 s2 c
        return T.reshape(-1)
    return matvec


def _entropy(s):
    p = s[s > 0] ** 2
    p = p / p.sum()
    return float(-np.sum(p * np.log(p)))


def _local_ground(matvec, v0, tol):
    n = v0.size
    if n <= 256:
        M = np.column_stack([matvec(e) for e in np.eye(n)])
        M = 0.5 * (M + M.T)
        w, v = np.linalg.eigh(M)
        return float(w[0]), v[:, 0]
    op = spla.LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    w, v = spla.eigsh(op, k=1, which="SA", v0=v0, tol=tol, ncv=min(n, 30))
    return float(w[0]), v[:, 0]


def dmrg_ground_state(mpo: MatrixProductOperator, geometry: ChainGeometry,
                      config: DmrgConfig = DmrgConfig(), seed: int = 0,
                      initial: MatrixProductState | None = None) -> DmrgResult:
    """Sweep until successive-sweep energy and mid-chain entropy changes fall
    below tolerance, or ``max_sweeps`` is reached (not an error)."""
    L = geometry.length
    if mpo.length != L:
        raise ValueError("MPO length does not match geometry")
    rng = np.random.default_rng(seed)
    mps = initial.copy() if initial is not None else MatrixProductState.random(
        geometry, min(config.chi_init, config.chi_max), rng)
    mps.canonicalize(0)
    W = mpo.tensors

    # environments: left[s] is everything left of site s, right[s] right of site s
    left = [None] * (L + 1)
    right = [None] * (L + 1)
    left[0] = np.ones((1, 1, 1))
    right[L] = np.ones((1, 1, 1))
    for s in range(L - 1, 0, -1):
        right[s] = _contract_right(right[s + 1], mps.tensors[s], W[s])

    mid = L // 2
    energies, entropies = [], []
    prev_E = prev_S = None
    converged = False
    dE = dS = np.inf
    max_trunc = 0.0
    sweep = 0

    def update(i, direction):
        nonlocal max_trunc
        A, B = mps.tensors[i], mps.tensors[i + 1]
        theta = np.tensordot(A, B, axes=(2, 0))
        shape = theta.shape
        mv = _two_site_matvec(left[i], W[i], W[i + 1], right[i + 2], shape)
        E, vec = _local_ground(mv, theta.reshape(-1), config.local_tol)
        theta = vec.reshape(shape)
        Dl, d1, d2, Dr = shape
        U, s, Vt = np.linalg.svd(theta.reshape(Dl * d1, d2 * Dr), full_matrices=False)
        keep = max(1, min(config.chi_max, int(np.sum(s > config.truncation_cutoff * s[0]))))
        max_trunc = max(max_trunc, float(np.sum(s[keep:] ** 2)))
        U, s, Vt = U[:, :keep], s[:keep], Vt[:keep]
        s = s / np.linalg.norm(s)
        if direction > 0:
            mps.tensors[i] = U.reshape(Dl, d1, keep)
            mps.tensors[i + 1] = (s[:, None] * Vt).reshape(keep, d2, Dr)
            left[i + 1] = _contract_left(left[i], mps.tensors[i], W[i])
        else:
            mps.tensors[i] = (U * s[None, :]).reshape(Dl, d1, keep)
            mps.tensors[i + 1] = Vt.reshape(keep, d2, Dr)
            right[i + 1] = _contract_right(right[i + 2], mps.tensors[i + 1], W[i + 1])
        return E, s

    while sweep < config.max_sweeps:
        sweep += 1
        S_mid = 0.0
        for i in range(L - 1):
            E, s = update(i, +1)
            if i + 1 == mid:
                S_mid = _entropy(s)
        for i in range(L - 2, -1, -1):
            E, s = update(i, -1)
            if i + 1 == mid:
                S_mid = _entropy(s)
        energies.append(E)
        entropies.append(S_mid)
        if prev_E is not None:
            dE, dS = abs(E - prev_E), abs(S_mid - prev_S)
        log.debug("sweep %d E=%.12f S=%.8f dE=%.2e dS=%.2e chi=%d", sweep, E, S_mid, dE, dS,
                  max(mps.bond_dims))
        prev_E, prev_S = E, S_mid
        if sweep >= config.min_sweeps and dE < config.energy_tol and dS < config.entropy_tol:
            converged = True
            break
    mps.center = 0
    mps.meta.update({"backend": "dmrg", "chi_max": config.chi_max, "sweeps": sweep})
    return DmrgResult(mps, float(energies[-1]), converged, sweep, float(dE), float(dS),
                      energies, entropies, max_trunc)
