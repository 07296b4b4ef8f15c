"""Cached ground states shared by the test modules."""
from functools import lru_cache

from rydcrit import (HARD, PERIODIC, ChainGeometry, build_hamiltonian, critical_preset,
                     enumerate_basis, ground_state)


@lru_cache(maxsize=None)
def basis(L, boundary=PERIODIC, mode=HARD):
    return enumerate_basis(ChainGeometry(L, boundary, mode))


@lru_cache(maxsize=None)
def ground(model, L, boundary=PERIODIC, mode=HARD):
    b = basis(L, boundary, mode)
    H = build_hamiltonian(critical_preset(model), b.geometry, b)
    return ground_state(H, b)


def state(model, L, boundary=PERIODIC, mode=HARD):
    return ground(model, L, boundary, mode)[0]
