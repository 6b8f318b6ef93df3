import dataclasses
import itertools
import math

import numpy as np
import pytest

from dissipode.block_encoding import (
    EncodedOracle,
    add_operator,
    dilate,
    euler_block_encoding,
    extract_top_left,
    oracle_OA,
    prep_unitary,
    trapezoidal_block_encoding,
)
from dissipode.block_system import assemble
from dissipode.errors import DimensionGuardExceeded, NormExceedsAlpha, ShapeMismatch
from dissipode.random_problems import random_dissipative_problem
from dissipode.schemes import SchemeKind

from conftest import scalar_problem


def _flag0_clock(oracle, C, N, t_out, t_in):
    """Block ``<0, t_out| U |0, t_in>`` on the system register (register order flag, clock, system)."""
    U = oracle.unitary.reshape(2, C, N, 2, C, N)
    return U[0, t_out, :, 0, t_in, :]


def test_dilate_zero_and_identity():
    z = dilate(np.zeros((2, 2)), 1.0)
    assert np.allclose(z.unitary[:2, :2], 0)
    assert np.allclose(z.unitary[:2, 2:], np.eye(2)) and np.allclose(z.unitary[2:, :2], np.eye(2))
    assert np.allclose(dilate(3 * np.eye(2), 3.0).unitary[:2, :2], np.eye(2))


def test_dilate_scalar():
    d = dilate([[-1.0]], 2.0)
    assert d.unitary[0, 0] == pytest.approx(-0.5)
    assert abs(d.unitary[1, 0]) == pytest.approx(math.sqrt(0.75))
    assert extract_top_left(d)[0, 0] == pytest.approx(-1.0)
    assert d.unitarity_residual() <= 1e-12
    assert d.ancilla_dims == (2,) and d.data_dim == 1


def test_dilate_random_unitary():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    d = dilate(B, np.linalg.norm(B, 2))
    assert d.unitarity_residual() <= 1e-10
    assert np.allclose(extract_top_left(d), B)


def test_dilate_errors():
    with pytest.raises(NormExceedsAlpha):
        dilate([[2.0]], 1.0)
    with pytest.raises(ShapeMismatch):
        dilate(np.ones((2, 3)), 5.0)


def test_extract_identity_oracle():
    e = EncodedOracle(np.eye(4, dtype=complex), (2, 2), 1)
    assert np.array_equal(extract_top_left(e), np.eye(2))
    assert extract_top_left(e, rows=[1], cols=[0, 1]).shape == (1, 2)
    with pytest.raises(ShapeMismatch):
        extract_top_left(e, rows=[2])
    with pytest.raises(ShapeMismatch):
        EncodedOracle(np.eye(3, dtype=complex), (2, 2), 1)


def test_oracle_OA_readout():
    o = oracle_OA(scalar_problem(T=1.0), 0.5, 2, 2)
    assert o.unitarity_residual() <= 1e-10
    vals = [_flag0_clock(o, 4, 1, t, t)[0, 0] for t in range(4)]
    assert np.allclose(vals, [-1, -1, 0, 0])
    assert np.allclose(_flag0_clock(o, 4, 1, 1, 0), 0)
    assert o.queries == {"O_A": 1}


def test_oracle_OA_squared():
    # two applications with the flag projected to zero in between encode A(t)^2 / alpha^2
    p = random_dissipative_problem(np.random.default_rng(1), N=2, T=1.0)
    M, Mp, h = 3, 1, 1 / 3
    o = oracle_OA(p, h, M, Mp)
    P0 = np.kron(np.diag([1, 0]), np.eye(4 * 2))
    U = (P0 @ o.unitary @ P0 @ o.unitary @ P0).reshape(2, 4, 2, 2, 4, 2)
    for t in range(M):
        A = p.A_at(t * h) / p.alpha_A
        assert np.allclose(U[0, t, :, 0, t, :], A @ A, atol=1e-12)
    assert np.allclose(U[0, 3, :, 0, 3, :], 0)


def test_oracle_guard():
    with pytest.raises(DimensionGuardExceeded):
        oracle_OA(scalar_problem(T=1.0), 1 / 4096, 4096, 4097)


def test_add_operator_default_modulus():
    add = add_operator(2, 2)  # M + Mp - 1 = 3
    P = add.unitary.real
    cyc = P[:3, :3]
    assert np.array_equal(cyc, np.roll(np.eye(3), 1, axis=0))
    assert P[3, 3] == 1
    assert np.allclose(np.linalg.matrix_power(P, 3), np.eye(4))


def test_add_cycles_full_register():
    add = add_operator(3, 2, modulus=5)
    assert np.allclose(np.linalg.matrix_power(add.unitary, 5), np.eye(5))
    assert not np.allclose(np.linalg.matrix_power(add.unitary, 4), np.eye(5))
    with pytest.raises(ValueError):
        add_operator(2, 2, modulus=7)


def test_add_after_OA_places_subdiagonal():
    p = random_dissipative_problem(np.random.default_rng(2), N=2, T=1.0)
    M, Mp, h = 3, 1, 1 / 3
    C, N = M + Mp, 2
    o = oracle_OA(p, h, M, Mp)
    add = np.kron(np.eye(2), np.kron(add_operator(M, Mp, C).unitary, np.eye(N)))
    prod = EncodedOracle(add @ o.unitary, o.register_dims, 1)
    for t in range(M):
        assert np.allclose(_flag0_clock(prod, C, N, t + 1, t), p.A_at(t * h) / p.alpha_A)


def test_prep_unitary_first_column():
    c = np.array([1, 1j, 1j * math.sqrt(0.5), 0]) / math.sqrt(2.5)
    P = prep_unitary(c)
    assert np.allclose(P[:, 0], c)
    assert np.allclose(P.conj().T @ P, np.eye(4))
    assert np.allclose(prep_unitary([0, 1])[:, 0], [0, 1])
    with pytest.raises(ValueError):
        prep_unitary([1, 1])


def test_euler_example():
    p = scalar_problem(T=1.0)
    enc = euler_block_encoding(p, 0.5, 2, 2)
    dense = assemble(p, SchemeKind.euler(), 2, 2, 0.5).dense()
    assert enc.factor == 2.5
    assert np.allclose(extract_top_left(enc), dense, atol=1e-10)
    assert enc.queries == {"ADD": 2, "CX": 1, "O_A": 1}


def test_trapezoid_example():
    p = scalar_problem(T=1.0)
    enc = trapezoidal_block_encoding(p, 0.5, 2, 1)
    dense = assemble(p, SchemeKind.trapezoidal(), 2, 1, 0.5).dense()
    assert enc.factor == 2.5
    assert np.allclose(extract_top_left(enc), dense, atol=1e-10)
    assert enc.queries["O_A"] == 2 and enc.queries["ADD"] == 2


@pytest.mark.parametrize("builder,scheme", [(euler_block_encoding, SchemeKind.euler()),
                                            (trapezoidal_block_encoding, SchemeKind.trapezoidal())])
def test_short_modulus_breaks_reconstruction(builder, scheme):
    p = scalar_problem(T=1.0)
    enc = builder(p, 0.5, 2, 1, add_modulus=2)
    dense = assemble(p, scheme, 2, 1, 0.5).dense()
    assert np.linalg.norm(extract_top_left(enc) - dense, 2) > 0.5


def test_reconstruction_grid_time_dependent():
    rng = np.random.default_rng(4)
    for N, M, Mp in itertools.product((1, 2), (1, 2, 3), (1, 2)):
        p = random_dissipative_problem(rng, N=N)
        for ha in (0.25, 0.5):
            h = ha / p.alpha_A
            prob = dataclasses.replace(p, T=M * h)
            for builder, scheme in ((euler_block_encoding, SchemeKind.euler()),
                                    (trapezoidal_block_encoding, SchemeKind.trapezoidal())):
                enc = builder(prob, h, M, Mp)
                dense = assemble(prob, scheme, M, Mp, h).dense()
                assert np.linalg.norm(extract_top_left(enc) - dense, 2) <= 1e-9
                assert enc.unitarity_residual() <= 1e-10
                assert enc.factor == pytest.approx(2 + ha)


def test_step_too_large():
    with pytest.raises(ValueError):
        euler_block_encoding(scalar_problem(a=-4.0, T=1.0), 0.5, 2, 1)
