import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrfdrbm.errors import CapacityError
from lrfdrbm.spinspace import (PauliString, SpinConfig, apply_pauli, circ_distance,
                               enumerate_basis, pauli_action)


def dense_pauli(B: PauliString) -> np.ndarray:
    """Kronecker product in the basis ordering used by SpinConfig.

    Index bit j-1 is spin j and bit value 1 means up, so the single-site
    basis is (down, up) and site 1 is the least significant factor.
    """
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, 1j], [-1j, 0]], dtype=complex)  # rows/cols (down, up)
    z = np.diag([-1, 1]).astype(complex)
    mats = {0: np.eye(2, dtype=complex), 1: x, 2: y, 3: z}
    out = np.array([[1.0 + 0j]])
    for m in B.labels:
        out = np.kron(mats[m], out)
    return out


class TestSpinConfig:
    def test_bit_convention(self):
        s = SpinConfig.from_spins([1, -1, 1])
        assert s.bits == 0b101
        assert [s.spin(j) for j in (1, 2, 3)] == [1, -1, 1]

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SpinConfig(8, 3)
        with pytest.raises(ValueError):
            SpinConfig(0, 31)
        with pytest.raises(IndexError):
            SpinConfig(0, 3).spin(4)

    def test_shift_moves_spin_forward(self):
        s = SpinConfig.from_spins([1, -1, -1, -1])
        assert s.shift(1).spins().tolist() == [-1, 1, -1, -1]
        assert s.shift(4) == s

    @given(st.integers(1, 12).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, (1 << L) - 1))))
    def test_flip_twice_is_identity(self, args):
        L, bits = args
        s = SpinConfig(bits, L)
        assert s.flip(1).flip(1) == s


class TestCircDistance:
    def test_examples(self):
        assert circ_distance(1, 1, 11) == 0
        assert circ_distance(1, 11, 11) == 1
        assert circ_distance(3, 9, 11) == 5

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            circ_distance(0, 1, 5)

    @given(st.integers(1, 40).flatmap(lambda L: st.tuples(st.just(L), st.integers(1, L), st.integers(1, L))))
    def test_symmetric_and_bounded(self, args):
        L, j, jc = args
        d = circ_distance(j, jc, L)
        assert d == circ_distance(jc, j, L)
        assert d <= L // 2
        if L % 2:
            assert d <= (L - 1) // 2


class TestPauli:
    def test_identity(self):
        s = SpinConfig(5, 4)
        assert apply_pauli(PauliString.parse("IIII"), s) == (s, 1)

    def test_z_eigenvalue(self):
        s = SpinConfig.from_spins([-1, 1])
        assert apply_pauli(PauliString.parse("ZI"), s) == (s, -1)

    def test_xx_on_all_up(self):
        s2, ph = apply_pauli(PauliString.parse("XX"), SpinConfig.from_spins([1, 1]))
        assert s2.spins().tolist() == [-1, -1] and ph == 1

    def test_y_convention(self):
        # <-1|sigma^y|+1> = i
        s2, ph = apply_pauli(PauliString.parse("Y"), SpinConfig.from_spins([1]))
        assert s2.spin(1) == -1 and ph == 1j
        _, ph = apply_pauli(PauliString.parse("Y"), SpinConfig.from_spins([-1]))
        assert ph == -1j

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            apply_pauli(PauliString.parse("XX"), SpinConfig(0, 3))

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=6))
    def test_matches_dense_kronecker_product(self, labels):
        B = PauliString(tuple(labels))
        L = len(labels)
        M = dense_pauli(B)
        idx = np.arange(1 << L)
        target, phase = pauli_action(B, idx)
        dense = np.zeros((1 << L, 1 << L), dtype=complex)
        dense[target, idx] = phase
        assert np.allclose(dense, M)

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=10), st.data())
    def test_involution(self, labels, data):
        B = PauliString(tuple(labels))
        s = SpinConfig(data.draw(st.integers(0, (1 << len(labels)) - 1)), len(labels))
        s1, p1 = apply_pauli(B, s)
        s2, p2 = apply_pauli(B, s1)
        assert s2 == s and abs(p1 * p2 - 1) < 1e-15


class TestEnumerate:
    def test_small(self):
        assert [s.spins().tolist() for s in enumerate_basis(1)] == [[-1], [1]]
        assert len({s.bits for s in enumerate_basis(3)}) == 8
        assert sum(1 for _ in enumerate_basis(11)) == 2048

    def test_capacity(self):
        with pytest.raises(CapacityError):
            next(enumerate_basis(31))
