import numpy as np
import pytest

from rydcrit.basis import ChainGeometry, enumerate_basis
from rydcrit.hamiltonian import HamiltonianParams, build_hamiltonian, build_mpo, critical_preset
from rydcrit.mps import MatrixProductState
from rydcrit.solvers import (DegenerateGroundStateError, DenseState, SolverError, ground_state,
                             ground_state_dense, ground_state_lanczos, load_state, mps_to_dense,
                             save_state)


def _problem(L, boundary="periodic", params=None):
    g = ChainGeometry(L, boundary)
    b = enumerate_basis(g)
    return build_hamiltonian(params or critical_preset("ising"), g, b), b


def test_two_site_ground_energy():
    H, b = _problem(2, "open", HamiltonianParams(Omega=1.0))
    st, E = ground_state_dense(H, b)
    assert E == pytest.approx(-np.sqrt(2) / 2, abs=1e-14)
    np.testing.assert_allclose(st.amplitudes, [1 / np.sqrt(2), -0.5, -0.5], atol=1e-14)


def test_no_drive_gives_vacuum():
    H, b = _problem(8, "open", HamiltonianParams(Omega=0.0, Delta=-1.0))
    st, E = ground_state_dense(H, b)
    assert E == 0.0
    assert st.amplitudes[0] == 1.0


def test_dense_matches_lanczos():
    H, b = _problem(14)
    d, Ed = ground_state_dense(H, b)
    l, El = ground_state_lanczos(H, b, seed=3)
    assert El == pytest.approx(Ed, abs=1e-10)
    # both fix the sign, so the overlap is +1 not -1
    assert d.overlap(l) == pytest.approx(1.0, abs=1e-9)


def test_lanczos_is_seed_independent():
    H, b = _problem(16)
    a, Ea = ground_state_lanczos(H, b, seed=0)
    c, Ec = ground_state_lanczos(H, b, seed=11)
    assert Ea == pytest.approx(Ec, abs=1e-10)
    np.testing.assert_allclose(a.amplitudes, c.amplitudes, atol=1e-8)


def test_auto_backend_choice():
    H, b = _problem(10)
    assert ground_state(H, b)[0].meta["backend"] == "dense"
    H, b = _problem(18)
    assert ground_state(H, b)[0].meta["backend"] == "lanczos"


def test_residual_reported():
    H, b = _problem(20)
    st, E = ground_state_lanczos(H, b)
    r = np.linalg.norm(H @ st.amplitudes - E * st.amplitudes)
    assert r < 1e-8 and st.meta["residual"] == pytest.approx(r, abs=1e-12)


def test_degeneracy_guard():
    H, b = _problem(4, "periodic", HamiltonianParams(Omega=0.0, Delta=1.0))
    with pytest.raises(DegenerateGroundStateError):
        ground_state_dense(H, b)
    st, E = ground_state_dense(H, b, check_degeneracy=False)
    assert E == -2.0


def test_dense_cap():
    H, b = _problem(10)
    with pytest.raises(SolverError):
        ground_state_dense(H, b, cap=10)


def test_dense_checkpoint_round_trip(tmp_path):
    H, b = _problem(12)
    st, _ = ground_state(H, b)
    save_state(st, tmp_path / "g.bin")
    back = load_state(tmp_path / "g.bin")
    assert back.geometry == st.geometry
    assert np.array_equal(back.amplitudes, st.amplitudes)


def test_mps_checkpoint_round_trip(tmp_path):
    g = ChainGeometry(6, "open")
    mps = MatrixProductState.random(g, 4, np.random.default_rng(1))
    save_state(mps, tmp_path / "m.bin")
    back = load_state(tmp_path / "m.bin")
    for a, c in zip(mps.tensors, back.tensors):
        assert np.array_equal(a, c)


def test_bad_checkpoint(tmp_path):
    (tmp_path / "x").write_bytes(b"JUNKJUNKJUNK")
    with pytest.raises(ValueError):
        load_state(tmp_path / "x")


def test_mps_to_dense_product_state():
    g = ChainGeometry(6, "open")
    b = enumerate_basis(g)
    st = mps_to_dense(MatrixProductState.product([1, 0, 1, 0, 0, 1], g), b)
    ref = DenseState.product(b, "101001")
    assert st.overlap(ref) == pytest.approx(1.0)


def test_mps_to_dense_rejects_leak():
    g = ChainGeometry(4, "open", "penalty")
    b = enumerate_basis(ChainGeometry(4, "open"))
    with pytest.raises(SolverError):
        mps_to_dense(MatrixProductState.product([1, 1, 0, 0], g), b)


def test_mpo_energy_matches_dense():
    p = critical_preset("ising")
    g = ChainGeometry(8, "periodic")
    b = enumerate_basis(g)
    st, E = ground_state(build_hamiltonian(p, g, b), b)
    M = build_mpo(p, g).to_dense()
    full = np.zeros(M.shape[0])
    full[b.masks] = st.amplitudes
    assert full @ M @ full == pytest.approx(E, abs=1e-10)
