"""Finite matrix-product states and operators with local dimension 2.

MPS tensors have shape ``(Dl, d, Dr)``; MPO tensors ``(Dl, Dr, d_out, d_in)``.
Periodic chains are represented as open MPS carrying long-range MPO terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import ChainGeometry


class MatrixProductOperator:
    def __init__(self, tensors: list[np.ndarray]):
        self.tensors = [np.asarray(W, dtype=np.float64) for W in tensors]

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [W.shape[1] for W in self.tensors[:-1]]

    @classmethod
    def from_terms(cls, length: int, terms, d: int = 2) -> "MatrixProductOperator":
        """Build a sum of operator strings, sharing channels with equal tails.

        ``terms`` is a list of ``(coefficient, [(site, op), ...])``.  At every
        bond a channel is labelled by what remains to be applied to its right,
        so strings with identical tails collapse onto one channel.
        """
        eye = np.eye(d)
        opbank: dict[bytes, np.ndarray] = {}

        def key(op):
            k = op.tobytes()
            opbank.setdefault(k, op)
            return k

        START, DONE = "start", "done"
        # transitions[s] maps (left_channel, right_channel) -> operator
        transitions = [dict() for _ in range(length)]
        for coeff, ops in terms:
            merged: dict[int, np.ndarray] = {}
            for site, op in ops:
                merged[site] = merged[site] @ op if site in merged else np.asarray(op, float)
            sites = sorted(merged)
            seq = tuple((s, key(merged[s])) for s in sites)
            first, last = sites[0], sites[-1]
            for s in range(first, last + 1):
                left = START if s == first else tuple(x for x in seq if x[0] >= s)
                right = DONE if s == last else tuple(x for x in seq if x[0] > s)
                tr = transitions[s]
                if s in merged:
                    op = merged[s]
                    if s == first:
                        tr[(left, right)] = tr.get((left, right), 0) + coeff * op
                    else:
                        tr[(left, right)] = op
                else:
                    tr[(left, right)] = eye

        tensors = []
        left_channels = [START]
        for s in range(length):
            if s == length - 1:
                right_channels = [DONE]
            else:
                right_channels = [START, DONE] + sorted(
                    {r for (_, r) in transitions[s] if r not in (START, DONE)}, key=repr)
            li = {c: i for i, c in enumerate(left_channels)}
            ri = {c: i for i, c in enumerate(right_channels)}
            W = np.zeros((len(left_channels), len(right_channels), d, d))
            if START in li and START in ri:
                W[li[START], ri[START]] = eye
            if DONE in li and DONE in ri:
                W[li[DONE], ri[DONE]] = eye
            for (l, r), op in transitions[s].items():
                W[li[l], ri[r]] += op
            tensors.append(W)
            left_channels = right_channels
        return cls(tensors)

    def to_dense(self) -> np.ndarray:
        """Full ``2^L x 2^L`` matrix, site 0 most significant (small L only)."""
        W = self.tensors[0][0]  # (Dr, d, d)
        M = W
        for W in self.tensors[1:]:
            # M: (D, n, n) ; W: (D, D', d, d)
            M = np.einsum("aij,abst->bisjt", M, W)
            D, n1, d1, n2, d2 = M.shape
            M = M.reshape(D, n1 * d1, n2 * d2)
        return M[0]


@dataclass
class MatrixProductState:
    tensors: list[np.ndarray]
    geometry: ChainGeometry
    center: int | None = None  # orthogonality centre, None if unknown
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [A.shape[2] for A in self.tensors[:-1]]

    def copy(self) -> "MatrixProductState":
        return MatrixProductState([A.copy() for A in self.tensors], self.geometry, self.center, dict(self.meta))

    @classmethod
    def product(cls, bits, geometry: ChainGeometry) -> "MatrixProductState":
        tensors = []
        for b in bits:
            A = np.zeros((1, 2, 1))
            A[0, int(b), 0] = 1.0
            tensors.append(A)
        return cls(tensors, geometry, center=0)

    @classmethod
    def random(cls, geometry: ChainGeometry, chi: int, rng: np.random.Generator) -> "MatrixProductState":
        L = geometry.length
        dims = [1] + [min(chi, 2 ** min(b, L - b)) for b in range(1, L)] + [1]
        tensors = [rng.standard_normal((dims[s], 2, dims[s + 1])) for s in range(L)]
        mps = cls(tensors, geometry)
        mps.canonicalize(0)
        return mps

    # -- canonical forms ---------------------------------------------------
    def canonicalize(self, center: int = 0) -> float:
        """Bring to mixed canonical form about ``center``; normalise; return old norm."""
        L = self.length
        for s in range(0, center):
            A = self.tensors[s]
            Dl, d, Dr = A.shape
            Q, R = np.linalg.qr(A.reshape(Dl * d, Dr))
            self.tensors[s] = Q.reshape(Dl, d, Q.shape[1])
            self.tensors[s + 1] = np.tensordot(R, self.tensors[s + 1], axes=(1, 0))
        for s in range(L - 1, center, -1):
            A = self.tensors[s]
            Dl, d, Dr = A.shape
            Q, R = np.linalg.qr(A.reshape(Dl, d * Dr).T)
            self.tensors[s] = Q.T.reshape(Q.shape[1], d, Dr)
            self.tensors[s - 1] = np.tensordot(self.tensors[s - 1], R.T, axes=(2, 0))
        norm = float(np.linalg.norm(self.tensors[center]))
        if norm == 0.0:
            raise ZeroDivisionError("MPS has zero norm")
        self.tensors[center] = self.tensors[center] / norm
        self.center = center
        return norm

    def norm(self) -> float:
        E = np.ones((1, 1))
        for A in self.tensors:
            E = np.einsum("ab,asc,bsd->cd", E, A, A, optimize=True)
        return float(np.sqrt(max(E[0, 0], 0.0)))

    def is_left_isometry(self, s: int, atol: float = 1e-10) -> bool:
        A = self.tensors[s]
        M = np.einsum("asc,asd->cd", A, A)
        return np.allclose(M, np.eye(M.shape[0]), atol=atol)

    def is_right_isometry(self, s: int, atol: float = 1e-10) -> bool:
        A = self.tensors[s]
        M = np.einsum("asc,bsc->ab", A, A)
        return np.allclose(M, np.eye(M.shape[0]), atol=atol)

    # -- contraction -------------------------------------------------------
    def amplitudes(self, masks: np.ndarray) -> np.ndarray:
        """MPS amplitude for every bitmask (site j on bit j)."""
        masks = np.asarray(masks, dtype=np.int64)
        v = np.ones((len(masks), 1))
        for s, A in enumerate(self.tensors):
            bit = (masks >> s) & 1
            out = np.empty((len(masks), A.shape[2]))
            for b in (0, 1):
                sel = bit == b
                out[sel] = v[sel] @ A[:, b, :]
            v = out
        return v[:, 0]

    def to_full(self) -> np.ndarray:
        """Dense ``2^L`` vector, site 0 most significant (small L only)."""
        v = self.tensors[0].reshape(2, -1)
        for A in self.tensors[1:]:
            v = np.tensordot(v, A, axes=(1, 0)).reshape(-1, A.shape[2])
        return v[:, 0]

    # -- measurement support -------------------------------------------------
    def apply_site_weights(self, site: int, weights) -> None:
        """Multiply the ``n`` component at ``site`` by ``weights[n]`` (in place)."""
        A = self.tensors[site]
        self.tensors[site] = A * np.asarray(weights, float)[None, :, None]
        self.center = None

    def occupation_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """``<n_i>`` and the matrix ``<n_i n_j>`` (diagonal holds ``<n_i>``)."""
        L = self.length
        n = np.diag([0.0, 1.0])
        # left environments without insertions
        lefts = [np.ones((1, 1))]
        for A in self.tensors:
            lefts.append(np.einsum("ab,asc,bsd->cd", lefts[-1], A, A, optimize=True))
        rights = [np.ones((1, 1))]
        for A in reversed(self.tensors):
            rights.append(np.einsum("asc,bsd,cd->ab", A, A, rights[-1], optimize=True))
        rights = rights[::-1]
        norm2 = float(lefts[-1][0, 0])
        C = np.zeros((L, L))
        for i in range(L):
            A = self.tensors[i]
            An = np.einsum("st,atc->asc", n, A)
            E = np.einsum("ab,asc,bsd->cd", lefts[i], An, A, optimize=True)
            C[i, i] = np.sum(E * rights[i + 1])
            for j in range(i + 1, L):
                B = self.tensors[j]
                Bn = B[:, 1:2, :]
                val = np.einsum("ab,asc,bsd,cd->", E, Bn, B[:, 1:2, :], rights[j + 1], optimize=True)
                C[i, j] = C[j, i] = val
                E = np.einsum("ab,asc,bsd->cd", E, B, B, optimize=True)
        C /= norm2
        return np.diag(C).copy(), C

    def singular_values(self, bond: int) -> np.ndarray:
        """Schmidt values across the bond between sites ``bond-1`` and ``bond``."""
        self.canonicalize(bond - 1)
        A = self.tensors[bond - 1]
        Dl, d, Dr = A.shape
        s = np.linalg.svd(A.reshape(Dl * d, Dr), compute_uv=False)
        return s / np.linalg.norm(s)
