import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wirtflow import BranchRecord, LoadRecord, build_grid
from wirtflow.wirtinger import (
    ShortCircuitError,
    assemble_jacobian_cp,
    assemble_jacobian_zip,
    nodal_currents,
    power_mismatch,
    wirtinger_fd,
    wirtinger_fd_jacobian,
    zip_residual,
)

from conftest import interior_states

FD_STEP = 1e-7
FD_RTOL = 1e-6


def raw_currents(grid, V):
    return grid.Y_N0 * grid.v0 + grid.Y_NN.toarray() @ V


def raw_cp(grid):
    """conj(v_k) i_k, the computed conjugate power."""
    return lambda V: np.conj(V) * raw_currents(grid, V)


def raw_zip(grid):
    return lambda V: np.conj(V) * raw_currents(grid, V) - np.conj(grid.S_N) * (V * np.conj(V)).real ** (grid.alpha / 2)


def block_relative_error(fd, analytic):
    return np.max(np.abs(fd - analytic)) / np.max(np.abs(analytic))


def check_blocks(grid, V, residual, blocks):
    """Compare normalised blocks (times conj(v_k)) with finite differences."""
    Jz, Jc = wirtinger_fd_jacobian(residual, V, FD_STEP)
    A = np.conj(V)[:, None] * blocks.A.toarray()
    B = np.diag(np.conj(V) * blocks.B_diag)
    return block_relative_error(Jz, A), block_relative_error(Jc, B)


class TestCurrentsAndMismatch:
    def test_two_bus_flat(self, two_bus):
        assert nodal_currents(two_bus, [1.0])[0] == 0

    def test_two_bus_ohm(self, two_bus):
        np.testing.assert_allclose(nodal_currents(two_bus, [0.9]), [1j], atol=1e-14)

    def test_ieee69_flat_start_zero_current(self, ieee69):
        I = nodal_currents(ieee69, np.ones(ieee69.n))
        assert np.all(I == 0)
        # the textbook form agrees to roundoff
        assert np.max(np.abs(raw_currents(ieee69, np.ones(ieee69.n)))) < 1e-9

    def test_currents_match_textbook_form(self, ieee69):
        V = interior_states(ieee69, 0)[0]
        np.testing.assert_allclose(nodal_currents(ieee69, V), raw_currents(ieee69, V), rtol=0, atol=1e-9)

    def test_dimension_mismatch(self, ieee69):
        with pytest.raises(ValueError):
            nodal_currents(ieee69, np.ones(3))
        with pytest.raises(ValueError):
            power_mismatch([1, 2], [1], [1, 2])

    def test_mismatch_zero_load(self):
        np.testing.assert_array_equal(power_mismatch([0, 0], [1, 0.9], [0, 0]), [0, 0])

    def test_mismatch_flat(self):
        np.testing.assert_array_equal(power_mismatch([0.1 + 0.05j], [1], [0]), [0.1 + 0.05j])

    def test_ieee69_flat_mismatch_is_load(self, ieee69):
        V = np.ones(ieee69.n, dtype=complex)
        dS = power_mismatch(ieee69.S_N, V, nodal_currents(ieee69, V))
        assert np.linalg.norm(dS) == np.linalg.norm(ieee69.S_N)


class TestZipResidual:
    def test_alpha_zero_identity(self, ieee69):
        for V in interior_states(ieee69, 1):
            I = nodal_currents(ieee69, V)
            np.testing.assert_array_equal(zip_residual(ieee69, V, I), -np.conj(power_mismatch(ieee69.S_N, V, I)))

    def test_constant_impedance_balanced(self):
        g = build_grid([BranchRecord(0, 1, 1.0)], [LoadRecord(1, -0.5, 2.0)])
        assert zip_residual(g, [1.0], [0.5])[0] == 0

    def test_split_real_arithmetic(self):
        s_load = 0.07 + 0.03j
        g = build_grid([BranchRecord(0, 1, 0.02 + 0.05j)], [LoadRecord(1, s_load, 1.0)])
        v, i = 0.95 + 0.01j, 0.06 - 0.035j
        f = zip_residual(g, [v], [i])[0]
        # f = conj(v) i + conj(load) |v|
        vr, vi, ir, ii = v.real, v.imag, i.real, i.imag
        mag = (vr * vr + vi * vi) ** 0.5
        re = vr * ir + vi * ii + s_load.real * mag
        im = vr * ii - vi * ir - s_load.imag * mag
        assert abs(f - complex(re, im)) < 1e-15

    def test_zero_voltage_guard(self, two_bus):
        with pytest.raises(ShortCircuitError):
            zip_residual(two_bus, [0.0], [0.0])

    def test_zero_voltage_allowed_for_impedance_load(self):
        g = build_grid([BranchRecord(0, 1, 1.0)], [LoadRecord(1, 0.5, 2.0)])
        assert zip_residual(g, [0.0], [0.0])[0] == 0


class TestJacobianExamples:
    def test_cp_flat_start(self, ieee69):
        V = np.ones(ieee69.n, dtype=complex)
        I = nodal_currents(ieee69, V)
        dS = power_mismatch(ieee69.S_N, V, I)
        blk = assemble_jacobian_cp(ieee69, V, I, dS)
        assert (blk.A != ieee69.Y_NN).nnz == 0
        assert np.all(blk.B_diag == 0)
        np.testing.assert_array_equal(blk.rhs, np.conj(dS))

    def test_cp_scalar(self, two_bus):
        blk = assemble_jacobian_cp(two_bus, [0.9], [1j], [0.05])
        np.testing.assert_allclose(blk.A.toarray(), [[-10j]])
        np.testing.assert_allclose(blk.B_diag, [1j / 0.9])
        np.testing.assert_allclose(blk.rhs, [np.conj(0.05 / 0.9)])

    def test_zip_scalar_impedance(self):
        g = build_grid([BranchRecord(0, 1, 1.0)], [LoadRecord(1, -0.5, 2.0)])
        blk = assemble_jacobian_zip(g, [1.0], [0.5], [0.0])
        np.testing.assert_allclose(blk.A.toarray(), [[0.5]])
        np.testing.assert_allclose(blk.B_diag, [0.0])

    def test_zip_alpha_zero_reduces_to_cp(self, ieee69):
        for V in interior_states(ieee69, 2):
            I = nodal_currents(ieee69, V)
            dS = power_mismatch(ieee69.S_N, V, I)
            F = zip_residual(ieee69, V, I)
            cp = assemble_jacobian_cp(ieee69, V, I, dS)
            zp = assemble_jacobian_zip(ieee69, V, I, F)
            assert (cp.A != zp.A).nnz == 0
            np.testing.assert_array_equal(cp.B_diag, zp.B_diag)
            # the zip step is solved against the residual, so its rhs is negated
            np.testing.assert_array_equal(zp.rhs, -cp.rhs)

    def test_short_circuit_guard(self, two_bus):
        with pytest.raises(ShortCircuitError):
            assemble_jacobian_cp(two_bus, [1e-10], [0], [0])
        with pytest.raises(ShortCircuitError):
            assemble_jacobian_zip(two_bus, [1e-10j], [0], [0])

    def test_structure(self, ieee69_zip):
        V = interior_states(ieee69_zip, 3)[0]
        I = nodal_currents(ieee69_zip, V)
        blk = assemble_jacobian_zip(ieee69_zip, V, I, zip_residual(ieee69_zip, V, I))
        B = blk.B.toarray()
        assert np.count_nonzero(B - np.diag(np.diag(B))) == 0
        A = blk.A.tocoo()
        pattern = {(i, j) for i, j in zip(A.row, A.col) if i != j}
        Y = ieee69_zip.Y_NN.tocoo()
        assert pattern <= {(i, j) for i, j in zip(Y.row, Y.col)}


class TestJacobianFiniteDifferences:
    def test_cp_random_grids(self, random_cp_grids):
        worst = 0.0
        for seed, g in enumerate(random_cp_grids[:10]):
            for V in interior_states(g, seed):
                I = nodal_currents(g, V)
                blk = assemble_jacobian_cp(g, V, I, power_mismatch(g.S_N, V, I))
                worst = max(worst, *check_blocks(g, V, raw_cp(g), blk))
        assert worst < FD_RTOL

    def test_zip_random_grids(self, random_zip_grids):
        worst = 0.0
        for seed, g in enumerate(random_zip_grids[:10]):
            for V in interior_states(g, seed):
                I = nodal_currents(g, V)
                blk = assemble_jacobian_zip(g, V, I, zip_residual(g, V, I))
                worst = max(worst, *check_blocks(g, V, raw_zip(g), blk))
        assert worst < FD_RTOL

    def test_compact_phase_form_disagrees(self, random_zip_grids):
        # V**(alpha-2) in place of |V|**(alpha-2) is not the derivative
        g = random_zip_grids[0]
        V = interior_states(g, 0)[0]
        I = nodal_currents(g, V)
        Jz, _ = wirtinger_fd_jacobian(raw_zip(g), V, FD_STEP)
        h = (g.alpha / 2) * np.conj(g.S_N) * V ** (g.alpha - 2)
        wrong = np.conj(V)[:, None] * (g.Y_NN.toarray() - np.diag(h))
        blk = assemble_jacobian_zip(g, V, I, zip_residual(g, V, I))
        right, _ = check_blocks(g, V, raw_zip(g), blk)
        assert block_relative_error(Jz, wrong) > max(FD_RTOL, 1000 * right)


class TestWirtingerFD:
    def test_modulus_squared(self):
        z = 1 + 2j
        d = wirtinger_fd(lambda w: w * np.conj(w), z)
        assert abs(d.d_z - (1 - 2j)) < 1e-6
        assert abs(d.d_zconj - (1 + 2j)) < 1e-6

    def test_conjugate(self):
        d = wirtinger_fd(np.conj, 0.3 - 0.7j)
        assert abs(d.d_z) < 1e-6 and abs(d.d_zconj - 1) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(
        re=st.floats(-2, 2), im=st.floats(-2, 2),
        coeffs=st.lists(st.complex_numbers(max_magnitude=3), min_size=1, max_size=5),
    )
    def test_analytic_polynomials(self, re, im, coeffs):
        z = complex(re, im)
        p = np.polynomial.Polynomial(coeffs)
        d = wirtinger_fd(p, z)
        assert abs(d.d_zconj) < 1e-6 * (1 + abs(d.d_z))
        assert abs(d.d_z - p.deriv()(z)) < 1e-6 * (1 + abs(d.d_z))

    def test_square(self):
        for z in (0.5 + 0.5j, -1.2 + 0.1j, 3j):
            d = wirtinger_fd(lambda w: w * w, z)
            assert abs(d.d_zconj) < 1e-6
            assert abs(d.d_z - 2 * z) < 1e-6

    def test_bad_step(self):
        with pytest.raises(ValueError):
            wirtinger_fd(np.conj, 1.0, 0.0)

    def test_non_finite(self):
        with pytest.raises(FloatingPointError):
            wirtinger_fd(lambda w: complex("nan") if w.real > 0 else w, 0.0)
