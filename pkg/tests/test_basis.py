import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydcrit.basis import (CapacityError, ChainGeometry, ConstraintError, as_mask,
                           blockade_ok, brute_force_configs, enumerate_basis, expected_dimension,
                           fibonacci, is_blockaded, lucas, to_string)


def test_small_open_chain_dimension():
    assert enumerate_basis(ChainGeometry(4, "open")).dimension == 8


def test_small_ring_configs():
    b = enumerate_basis(ChainGeometry(4, "periodic"))
    assert b.dimension == 7
    assert set(b.dump().split()) == {"0000", "1000", "0100", "0010", "0001", "1010", "0101"}


def test_l28_ring_dimension():
    assert enumerate_basis(ChainGeometry(28, "periodic")).dimension == 710647


@pytest.mark.parametrize("L", range(2, 21))
@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_dimension_matches_brute_force(L, boundary):
    g = ChainGeometry(L, boundary)
    b = enumerate_basis(g)
    brute = brute_force_configs(g)
    assert b.dimension == brute.size == expected_dimension(g)
    assert np.array_equal(np.sort(b.masks), np.sort(brute))
    assert expected_dimension(g) == (fibonacci(L + 2) if boundary == "open" else lucas(L))


def test_sequences():
    assert [fibonacci(n) for n in range(1, 9)] == [1, 1, 2, 3, 5, 8, 13, 21]
    assert [lucas(n) for n in range(1, 8)] == [1, 3, 4, 7, 11, 18, 29]


def test_lexicographic_order_and_vacuum_first():
    b = enumerate_basis(ChainGeometry(2, "open"))
    assert [b.string_of(i) for i in range(3)] == ["00", "01", "10"]
    assert b.index_of("10") == 2
    assert b.config_of(0) == 0
    assert b.string_of(1) == "01"
    b = enumerate_basis(ChainGeometry(9, "periodic"))
    strings = [b.string_of(i) for i in range(b.dimension)]
    assert strings == sorted(strings)


def test_every_config_blockaded():
    g = ChainGeometry(14, "periodic")
    b = enumerate_basis(g)
    assert blockade_ok(b.masks, g).all()
    assert all(is_blockaded(int(m), g) for m in b.masks[:200])


def test_round_trip_l10():
    b = enumerate_basis(ChainGeometry(10, "open"))
    for i in range(b.dimension):
        assert b.index_of(b.config_of(i)) == i
        assert b.index_of(b.string_of(i)) == i


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_random_round_trip_l16(data):
    b = enumerate_basis(ChainGeometry(16, "periodic"))
    i = data.draw(st.integers(0, b.dimension - 1))
    assert b.index_of(b.config_of(i)) == i


def test_index_errors():
    b = enumerate_basis(ChainGeometry(6, "periodic"))
    with pytest.raises(ConstraintError):
        b.index_of("110000")
    with pytest.raises(ConstraintError):
        b.index_of("100001")  # wrap-around bond
    with pytest.raises(IndexError):
        b.config_of(b.dimension)


def test_indices_of_vectorised():
    b = enumerate_basis(ChainGeometry(8, "open"))
    idx = b.indices_of(np.array([0, as_mask("11000000", 8), b.config_of(5)]))
    assert list(idx) == [0, -1, 5]


def test_penalty_mode_full_space_and_guard():
    assert enumerate_basis(ChainGeometry(6, "open", "penalty")).dimension == 64
    with pytest.raises(CapacityError):
        enumerate_basis(ChainGeometry(21, "open", "penalty"))


def test_capacity_error():
    with pytest.raises(CapacityError):
        enumerate_basis(ChainGeometry(40, "periodic"), max_dimension=10_000)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ChainGeometry(1)
    with pytest.raises(ValueError):
        ChainGeometry(8, "twisted")


def test_string_helpers():
    assert to_string(as_mask("0101", 4), 4) == "0101"
    assert as_mask([1, 0, 0], 3) == 1


def test_enumeration_is_deterministic():
    g = ChainGeometry(12, "periodic")
    assert enumerate_basis(g).dump() == enumerate_basis(g).dump()
