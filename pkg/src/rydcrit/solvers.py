"""Exact ground-state backends and the dense wavefunction type."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import (HARD, OPEN, PENALTY, PERIODIC, BlockadedBasis, ChainGeometry,
                    enumerate_basis)
from .mps import MatrixProductState

DENSE_CAP = 4096
DEGENERACY_GAP = 1e-8


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual


class DegenerateGroundStateError(SolverError):
    def __init__(self, energies):
        super().__init__(f"ground state not unique: lowest energies {list(energies)}")
        self.energies = tuple(energies)


@dataclass
class DenseState:
    basis: BlockadedBasis
    amplitudes: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def geometry(self) -> ChainGeometry:
        return self.basis.geometry

    @property
    def length(self) -> int:
        return self.basis.length

    @property
    def probabilities(self) -> np.ndarray:
        return self.amplitudes**2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "DenseState":
        return DenseState(self.basis, self.amplitudes / self.norm(), dict(self.meta))

    def overlap(self, other: "DenseState") -> float:
        if other.basis is not self.basis and not np.array_equal(other.basis.masks, self.basis.masks):
            raise ValueError("states live on different bases")
        return float(self.amplitudes @ other.amplitudes)

    @classmethod
    def product(cls, basis: BlockadedBasis, config) -> "DenseState":
        amps = np.zeros(basis.dimension)
        amps[basis.index_of(config)] = 1.0
        return cls(basis, amps)


def fix_sign(vector: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry positive."""
    k = int(np.argmax(np.abs(vector)))
    return vector if vector[k] >= 0 else -vector


def _check_gap(energies):
    if len(energies) > 1 and energies[1] - energies[0] < DEGENERACY_GAP:
        raise DegenerateGroundStateError(energies[:2])


def ground_state_dense(H, basis: BlockadedBasis, cap: int = DENSE_CAP,
                       check_degeneracy: bool = True) -> tuple[DenseState, float]:
    dim = H.shape[0]
    if dim > cap:
        raise SolverError(f"dense diagonalisation capped at dimension {cap}, got {dim}")
    M = H.toarray() if sp.issparse(H) else np.asarray(H)
    w, v = np.linalg.eigh(M)
    if check_degeneracy:
        _check_gap(w)
    amps = fix_sign(v[:, 0])
    return DenseState(basis, amps / np.linalg.norm(amps), {"backend": "dense"}), float(w[0])


def ground_state_lanczos(H, basis: BlockadedBasis, tol: float = 1e-10, seed: int = 0,
                         maxiter: int | None = None, check_degeneracy: bool = True
                         ) -> tuple[DenseState, float]:
    """Lowest eigenpair via implicitly restarted Lanczos with a seeded start vector."""
    dim = H.shape[0]
    if dim <= 2:
        return ground_state_dense(H, basis, check_degeneracy=check_degeneracy)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim)
    k = 2 if dim > 3 else 1
    try:
        w, v = spla.eigsh(H, k=k, which="SA", v0=v0, tol=0.0, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        best = np.inf
        if len(exc.eigenvalues):
            x = exc.eigenvectors[:, 0]
            best = float(np.linalg.norm(H @ x - exc.eigenvalues[0] * x))
        raise ConvergenceError("Lanczos did not converge", best) from exc
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    if check_degeneracy:
        _check_gap(w)
    x = fix_sign(v[:, 0] / np.linalg.norm(v[:, 0]))
    energy = float(x @ (H @ x))
    residual = float(np.linalg.norm(H @ x - energy * x))
    if residual > tol * max(1.0, abs(energy)):
        raise ConvergenceError("Lanczos residual above tolerance", residual)
    return DenseState(basis, x, {"backend": "lanczos", "residual": residual, "seed": seed}), energy


def ground_state(H, basis: BlockadedBasis, seed: int = 0, tol: float = 1e-10,
                 check_degeneracy: bool = True) -> tuple[DenseState, float]:
    if H.shape[0] <= 400:
        return ground_state_dense(H, basis, check_degeneracy=check_degeneracy)
    return ground_state_lanczos(H, basis, tol=tol, seed=seed, check_degeneracy=check_degeneracy)


def mps_to_dense(mps: MatrixProductState, basis: BlockadedBasis, cap: int = 1 << 22,
                 leak_tol: float = 1e-6) -> DenseState:
    """Amplitudes of ``mps`` on every basis configuration.

    Weight outside a hard-blockade basis (from a penalty-mode MPS) must stay
    below ``leak_tol``; it is projected out before renormalising.
    """
    if basis.dimension > cap:
        raise SolverError(f"dense bridge capped at dimension {cap}, got {basis.dimension}")
    norm = mps.norm()
    amps = mps.amplitudes(basis.masks) / norm
    kept = float(amps @ amps)
    leak = 1.0 - kept
    if leak > leak_tol:
        raise SolverError(f"MPS weight {leak:.3e} outside the basis exceeds {leak_tol:.1e}")
    amps = fix_sign(amps / np.sqrt(kept))
    return DenseState(basis, amps, {"backend": "mps", "leak": leak})


# -- checkpoints -------------------------------------------------------------

DENSE_MAGIC = b"RYDW"
MPS_MAGIC = b"RYDM"
CHECKPOINT_VERSION = 1
_BOUNDARY = {PERIODIC: 0, OPEN: 1}
_MODE = {HARD: 0, PENALTY: 1}


def _header(magic, geometry: ChainGeometry, count: int) -> bytes:
    return magic + struct.pack("<IIBBQ", CHECKPOINT_VERSION, geometry.length,
                               _BOUNDARY[geometry.boundary], _MODE[geometry.constraint_mode], count)


def _read_header(buf: bytes, magic: bytes):
    if buf[:4] != magic:
        raise ValueError(f"bad checkpoint magic {buf[:4]!r}, expected {magic!r}")
    version, L, bnd, mode, count = struct.unpack_from("<IIBBQ", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    inv_b = {v: k for k, v in _BOUNDARY.items()}
    inv_m = {v: k for k, v in _MODE.items()}
    return ChainGeometry(L, inv_b[bnd], inv_m[mode]), count, 4 + struct.calcsize("<IIBBQ")


def save_state(state, path) -> None:
    """Write a dense or MPS checkpoint.

    Dense: magic ``RYDW``, u32 version, u32 L, u8 boundary, u8 mode,
    u64 dimension, then little-endian float64 amplitudes in basis order.
    MPS: magic ``RYDM``, same header with the site count, then per site
    three u32 shape entries followed by row-major float64 data.
    """
    path = Path(path)
    if isinstance(state, DenseState):
        payload = _header(DENSE_MAGIC, state.geometry, state.basis.dimension)
        payload += np.asarray(state.amplitudes, dtype="<f8").tobytes()
    elif isinstance(state, MatrixProductState):
        payload = _header(MPS_MAGIC, state.geometry, state.length)
        for A in state.tensors:
            payload += struct.pack("<III", *A.shape)
            payload += np.ascontiguousarray(A, dtype="<f8").tobytes()
    else:
        raise TypeError(f"cannot checkpoint {type(state).__name__}")
    path.write_bytes(payload)


def load_state(path):
    buf = Path(path).read_bytes()
    if buf[:4] == DENSE_MAGIC:
        geometry, dim, off = _read_header(buf, DENSE_MAGIC)
        basis = enumerate_basis(geometry)
        if basis.dimension != dim:
            raise ValueError(f"checkpoint dimension {dim} != basis dimension {basis.dimension}")
        amps = np.frombuffer(buf, dtype="<f8", count=dim, offset=off).astype(np.float64)
        return DenseState(basis, amps)
    if buf[:4] == MPS_MAGIC:
        geometry, L, off = _read_header(buf, MPS_MAGIC)
        tensors = []
        for _ in range(L):
            shape = struct.unpack_from("<III", buf, off)
            off += 12
            n = int(np.prod(shape))
            tensors.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).copy())
            off += 8 * n
        return MatrixProductState(tensors, geometry)
    raise ValueError(f"unrecognised checkpoint magic {buf[:4]!r}")
