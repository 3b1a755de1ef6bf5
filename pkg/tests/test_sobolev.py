from fractions import Fraction

import numpy as np
import pytest

from mopnl.dirac import DeltaSpec, delta_on_P0
from mopnl.markov import perturbed_markov
from mopnl.sobolev import (
    GramBreakdown,
    lebesgue_moments,
    packed_vectors,
    sobolev_monic,
    sobolev_pack,
    vector_orthogonality,
)

from oracles import legendre_monic, monic_legendre_recurrence


def gram_monic(moments, lam, n):
    """Monic q_n from the float Gram matrix of the Sobolev product."""
    G = np.array([[float(moments[i + j]) for j in range(n + 1)] for i in range(n + 1)])
    if n >= 1:
        G[1, 1] += lam
    c = np.linalg.solve(G[:n, :n], -G[:n, n]) if n else np.array([])
    return np.concatenate([c, [1.0]])


def test_lebesgue_moments():
    assert lebesgue_moments(5) == [2, 0, Fraction(2, 3), 0, Fraction(2, 5)]


def test_monic_matches_gram_solve():
    mom = lebesgue_moments(30)
    qs, norms = sobolev_monic(mom, 1, 8)
    for n in range(9):
        assert np.allclose([float(c) for c in qs[n]], gram_monic(mom, 1.0, n), atol=1e-10)
    assert all(n > 0 for n in norms)


def test_lambda_zero_gives_legendre():
    qs, _ = sobolev_monic(lebesgue_moments(30), 0, 8)
    for n in range(9):
        assert np.allclose([float(c) for c in qs[n]], legendre_monic(n), atol=1e-14)


def test_lambda_zero_five_term_from_three_term():
    pack = sobolev_pack(lebesgue_moments(40), 0, 8)
    b = lambda n: np.sqrt(monic_legendre_recurrence(n)) if n > 0 else 0.0
    for n in range(9):
        assert pack.five_term[(n, 0)] == pytest.approx(b(n + 1) ** 2 + b(n) ** 2, abs=1e-12)
        assert pack.five_term[(n, -2)] == pytest.approx(b(n + 1) * b(n + 2), abs=1e-12)
        assert abs(pack.five_term[(n, -1)]) < 1e-12
        if n >= 1:
            assert abs(pack.five_term[(n, 1)]) < 1e-12
        if n >= 2:
            assert pack.five_term[(n, 2)] == pytest.approx(b(n) * b(n - 1), abs=1e-12)


def test_orthonormality_by_construction():
    mom = lebesgue_moments(40)
    pack = sobolev_pack(mom, 1, 8)
    p1 = pack.p[1]
    x = np.zeros_like(p1)
    x[1] = 1
    one = np.zeros_like(p1)
    one[0] = 1

    def ip(f, g):
        k = np.arange(f.size)
        G = np.array([float(m) for m in mom])[k[:, None] + k[None, :]]
        return f @ G @ g + f[1] * g[1]

    assert abs(ip(p1, one)) < 1e-14
    assert abs(ip(p1, x)) > 0.1
    for i in range(6):
        for j in range(6):
            assert ip(pack.p[i], pack.p[j]) == pytest.approx(float(i == j), abs=1e-12)


def test_packing_report_lebesgue():
    mom = lebesgue_moments(40)
    pack = sobolev_pack(mom, 1, 9)
    assert pack.report["max_residual"] < 1e-9
    assert pack.report["max_symmetry_defect"] < 1e-12
    for m in range(1, 5):
        assert vector_orthogonality(mom, 1.0, pack, m) < 1e-9
    for A in pack.A_blocks:
        assert A[0, 1] == 0


def test_packed_vectors_are_consecutive():
    pack = sobolev_pack(lebesgue_moments(40), 1, 9)
    p, q = packed_vectors(pack, 2)
    assert np.array_equal(p, pack.p[4]) and np.array_equal(q, pack.p[5])


def test_vector_orthogonality_fails_for_wrong_lambda():
    mom = lebesgue_moments(40)
    pack = sobolev_pack(mom, 1, 9)
    assert vector_orthogonality(mom, 0.5, pack, 2) > 1e-3


def test_gram_breakdown_reported():
    # lam = -2/3 cancels the norm of x exactly
    with pytest.raises(GramBreakdown, match="n=1"):
        sobolev_monic(lebesgue_moments(10), Fraction(-2, 3), 3)


def test_too_few_moments():
    with pytest.raises(ValueError):
        sobolev_pack(lebesgue_moments(10), 1, 8)


def test_sobolev_delta_in_markov_function():
    D = delta_on_P0(DeltaSpec([(0, 1)])) @ np.diag([0.0, -1.0]).T
    F = np.array([[0.3, 0.0], [0.1, 0.2]])
    assert np.allclose(perturbed_markov(F, delta_on_P0(DeltaSpec([(0, 1)])), np.diag([0.0, -1.0]), 2),
                       F + [[0, 0], [0, 0.5]])
    assert np.allclose(D, [[0, 0], [0, 1]])
