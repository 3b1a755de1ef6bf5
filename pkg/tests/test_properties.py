import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mopnl.dirac import cd_residual
from mopnl.families import random_nonconstant_family
from mopnl.polymat import MatrixPolynomial, det_and_adjugate, eval_poly
from mopnl.recurrence import liouville_residual
from mopnl.spectral import match_multisets

small = st.integers(-3, 3)
points = st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False)


@st.composite
def integer_polys(draw):
    n = draw(st.integers(1, 3))
    d = draw(st.integers(0, 3))
    c = draw(st.lists(small, min_size=(d + 1) * n * n, max_size=(d + 1) * n * n))
    return MatrixPolynomial(np.array(c, dtype=complex).reshape(d + 1, n, n))


@settings(max_examples=40, deadline=None)
@given(integer_polys(), points)
def test_adjugate_identity(p, w):
    det, adj = det_and_adjugate(p)
    P = eval_poly(p, w)
    n = p.dim
    Adj = np.array([[adj[i][j](w) for j in range(n)] for i in range(n)])
    assert np.allclose(det(w), np.linalg.det(P), atol=1e-8 * (1 + abs(det(w))))
    assert np.allclose(P @ Adj, det(w) * np.eye(n), atol=1e-8 * (1 + np.abs(P).max() * np.abs(Adj).max()))


@settings(max_examples=40, deadline=None)
@given(integer_polys(), points, points)
def test_evaluation_is_linear(p, a, b):
    q = MatrixPolynomial(2 * p.coeffs)
    assert np.allclose(eval_poly(q, a), 2 * eval_poly(p, a))
    if p.degree == 0:
        assert np.allclose(eval_poly(p, a), eval_poly(p, b))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), points)
def test_liouville_random_families(seed, n, z):
    fam = random_nonconstant_family(n, np.random.default_rng(seed), length=20)
    for m in (0, 5, 12):
        assert liouville_residual(fam, m, z) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), points, points)
def test_christoffel_darboux_random_families(seed, x, z):
    fam = random_nonconstant_family(2, np.random.default_rng(seed), length=20)
    for m in (0, 4, 10):
        assert cd_residual(fam, m, x, z) < 1e-10


@given(st.lists(points, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_multiset_matching_is_permutation_invariant(a, rnd):
    b = list(a)
    rnd.shuffle(b)
    worst, ok = match_multisets(a, b, 1e-12)
    assert ok and worst == 0
