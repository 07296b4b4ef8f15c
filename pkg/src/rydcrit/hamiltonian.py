"""Rydberg chain Hamiltonian on the blockaded basis and as an MPO.

    H = sum_j [ Omega/2 (b_j + b_j^dag) - Delta n_j + V1 n_j n_{j+1} + V2 n_j n_{j+2} ]

Pair terms are summed once per site ``j`` (wrapping on periodic chains).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.sparse as sp

from .basis import BlockadedBasis, ChainGeometry, _blockade_mask
from .mps import MatrixProductOperator

ISING_DETUNING = 0.66445
ISING_V1 = 100.0
TCI_V1 = 1000.0
GOLDEN = (1 + math.sqrt(5)) / 2

# penalty placed on adjacent pairs when the MPO emulates the hard constraint;
# the P X P flip never couples the constrained space to its complement
HARD_MPO_PENALTY = 100.0


@dataclass(frozen=True)
class HamiltonianParams:
    Omega: float = 1.0
    Delta: float = 0.0
    V1: float = 0.0
    V2: float = 0.0
    edge_detuning_shift: bool = False

    def __post_init__(self):
        if not self.Omega >= 0:
            raise ValueError("Omega must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def detunings(self, geometry: ChainGeometry) -> np.ndarray:
        """Per-site detuning, with ``Delta - V2`` on open-chain edges if requested."""
        d = np.full(geometry.length, float(self.Delta))
        if self.edge_detuning_shift and not geometry.periodic:
            d[0] -= self.V2
            d[-1] -= self.V2
        return d


def critical_preset(model: str, **overrides) -> HamiltonianParams:
    """Hamiltonian parameters at the Ising (V2=0) or tricritical Ising point.

    V1 carries the penalty value used for unconstrained simulations; it is
    inert on a hard-blockade basis.
    """
    model = model.lower()
    if model == "ising":
        params = HamiltonianParams(Omega=1.0, Delta=ISING_DETUNING, V1=ISING_V1, V2=0.0)
    elif model == "tci":
        params = HamiltonianParams(
            Omega=1.0,
            Delta=-0.5 * (5 * math.sqrt(5) - 2),
            V1=TCI_V1,
            V2=-0.5 * GOLDEN**2.5,
        )
    else:
        raise ValueError(f"unknown model {model!r}; expected 'ising' or 'tci'")
    return replace(params, **overrides) if overrides else params


def diagonal_energies(params: HamiltonianParams, basis: BlockadedBasis) -> np.ndarray:
    geometry = basis.geometry
    occ = basis.occupations.astype(np.float64)
    diag = -(occ @ params.detunings(geometry))
    if params.V2:
        for i, j in geometry.bonds(2):
            diag += params.V2 * occ[:, i] * occ[:, j]
    if not geometry.hard and params.V1:
        for i, j in geometry.bonds(1):
            diag += params.V1 * occ[:, i] * occ[:, j]
    return diag


def build_hamiltonian(params: HamiltonianParams, geometry: ChainGeometry,
                      basis: BlockadedBasis) -> sp.csr_matrix:
    """Sparse real-symmetric Hamiltonian in the basis order of ``basis``."""
    if basis.geometry != geometry:
        raise ValueError(f"basis built for {basis.geometry}, not {geometry}")
    dim = basis.dimension
    masks = basis.masks
    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [diagonal_energies(params, basis)]
    if params.Omega:
        for j in range(geometry.length):
            flipped = masks ^ (1 << j)
            ok = _blockade_mask(flipped, geometry) if geometry.hard else np.ones(dim, bool)
            src = np.nonzero(ok)[0]
            dst = basis.indices_of(flipped[src])
            assert (dst >= 0).all()
            rows.append(src)
            cols.append(dst)
            vals.append(np.full(len(src), params.Omega / 2))
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


def coordinate_triples(H: sp.spmatrix) -> str:
    """Debug export: ``row col value`` per stored entry, row-major."""
    coo = sp.coo_matrix(H)
    order = np.lexsort((coo.col, coo.row))
    return "".join(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n" for k in order)


_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_N = np.array([[0.0, 0.0], [0.0, 1.0]])
_P = np.array([[1.0, 0.0], [0.0, 0.0]])


def hamiltonian_terms(params: HamiltonianParams, geometry: ChainGeometry,
                      hard_penalty: float = HARD_MPO_PENALTY) -> list:
    """Operator-string terms ``(coefficient, [(site, 2x2 op), ...])``.

    In hard-blockade mode flips carry projectors onto empty neighbours, so the
    constrained subspace is invariant and a large ``n n`` penalty pushes the
    complement above it.
    """
    L = geometry.length
    terms = []
    for j, dj in enumerate(params.detunings(geometry)):
        if dj:
            terms.append((-dj, [(j, _N)]))
    if params.Omega:
        for j in range(L):
            ops = [(j, _X)]
            if geometry.hard:
                for nb in (j - 1, j + 1):
                    if geometry.periodic:
                        ops.append((nb % L, _P))
                    elif 0 <= nb < L:
                        ops.append((nb, _P))
            terms.append((params.Omega / 2, ops))
    v1 = hard_penalty if geometry.hard else params.V1
    for k, v in ((1, v1), (2, params.V2)):
        if v:
            for i, j in geometry.bonds(k):
                terms.append((v, [(i, _N), (j, _N)]))
    return terms


def build_mpo(params: HamiltonianParams, geometry: ChainGeometry,
              hard_penalty: float = HARD_MPO_PENALTY) -> MatrixProductOperator:
    """MPO over the full local space (d=2), periodic wrap terms included."""
    return MatrixProductOperator.from_terms(geometry.length, hamiltonian_terms(params, geometry, hard_penalty))
