import numpy as np
import pytest

from mopnl.families import example1, nevai_perturbation, random_family, scalar_chebyshev
from mopnl.markov import (
    ContourSpec,
    ConvergenceFailure,
    MarkovEvaluator,
    approximant_F,
    approximant_F_direct,
    biorthogonality_table,
    continuation,
    contour_moments,
    derivative_F,
    example1_closed_forms,
    example1_true_offdiagonal,
    fixed_point_F,
    markov_on_contour,
    perturbed_markov,
    reconcile_example1,
    second_kind_values,
)
from mopnl.recurrence import V_values

from oracles import example1_entries, jacobi_moments, scalar_markov, scalar_markov_derivatives


def test_scalar_fixed_point_matches_closed_form():
    ev = MarkovEvaluator.from_family(scalar_chebyshev())
    for z in (3, -2.5, 1 + 2j, 10j, 0.3 - 0.4j):
        assert abs(fixed_point_F(ev, z)[0, 0] - scalar_markov(z)) < 1e-12


def test_shifted_scalar_fixed_point():
    ev = MarkovEvaluator.from_family(scalar_chebyshev(a=1.5, b=3))
    for z in (8, -1 + 1j):
        assert abs(fixed_point_F(ev, z)[0, 0] - scalar_markov(z, 1.5, 3)) < 1e-12


def test_scalar_derivatives():
    ev = MarkovEvaluator.from_family(scalar_chebyshev())
    F, dF, d2F = scalar_markov_derivatives(3)
    assert derivative_F(ev, 3, 1)[0, 0] == pytest.approx(-0.17082, abs=1e-5)
    assert derivative_F(ev, 3, 2)[0, 0] == pytest.approx(0.17889, abs=1e-5)
    for z in (3, 2.5 + 1j, -4j):
        F, dF, d2F = scalar_markov_derivatives(z)
        assert abs(derivative_F(ev, z, 1)[0, 0] - dF) < 1e-10
        assert abs(derivative_F(ev, z, 2)[0, 0] - d2F) < 1e-9
    with pytest.raises(ValueError):
        derivative_F(ev, 3, 3)


def test_example1_entries():
    ev = MarkovEvaluator.from_family(example1())
    for z in (1, 3, 5, 2 + 2j):
        F = fixed_point_F(ev, z)
        a, d, c, _ = example1_entries(z)
        assert abs(F[0, 0] - a) < 1e-10
        assert abs(F[1, 1] - d) < 1e-10
        assert abs(F[1, 0] - c) < 1e-10
        assert abs(F[0, 1]) < 1e-12
        assert abs(example1_true_offdiagonal(z) - c) < 1e-12
    assert fixed_point_F(ev, 1)[1, 0].real == pytest.approx(0.29289, abs=1e-5)


def test_example1_displayed_offdiagonal_is_inconsistent():
    printed = example1_closed_forms(0, 1)["F"]
    assert printed[1, 0].real == pytest.approx(0.48528, abs=1e-5)
    _, _, c, c_swapped = example1_entries(1)
    assert abs(printed[1, 0] - c) > 0.1 and abs(printed[1, 0] - c_swapped) > 0.1
    F = fixed_point_F(MarkovEvaluator.from_family(example1()), 1)
    assert np.allclose(np.diag(printed), np.diag(F), atol=1e-12)


def test_closed_form_reconciliation():
    found = reconcile_example1(example1(), [0.7 + 0.3j, 2.2 - 1j])
    assert found["V"][(0, 0)] == 1 and found["V"][(1, 1)] == 1
    assert found["V"][(0, 1)] is not None
    assert found["V"][(1, 0)] is None


def test_ratio_limit_is_swapped_fraction():
    fam = example1()
    ev = MarkovEvaluator.ratio_limit_from_family(fam)
    for z in (5, 0.5 + 3j):
        Y = fixed_point_F(ev, z)
        a, d, _, c_swapped = example1_entries(z)
        assert abs(Y[1, 0] - c_swapped) < 1e-10
        assert abs(Y[0, 0] - a) < 1e-10 and abs(Y[1, 1] - d) < 1e-10
        V = V_values(fam, z, 60)[0]
        ratio = V[59] @ np.linalg.inv(V[60])
        assert np.linalg.norm(ratio - Y) < 1e-10


def test_scalar_ratio_limit_equals_markov():
    fam = scalar_chebyshev(a=0.8, b=0.2)
    z = 2 + 1j
    F = fixed_point_F(MarkovEvaluator.from_family(fam), z)
    Y = fixed_point_F(MarkovEvaluator.ratio_limit_from_family(fam), z)
    assert np.allclose(F, Y, atol=1e-13)


def test_g0_factor():
    G0 = np.array([[2.0, 1.0], [0.0, 1.0]])
    F0 = fixed_point_F(MarkovEvaluator.from_family(example1()), 4)
    F1 = fixed_point_F(MarkovEvaluator.from_family(example1(G0=G0)), 4)
    assert np.allclose(F1, F0 @ np.linalg.inv(G0), atol=1e-12)


def test_branch_point_refinement():
    ev = MarkovEvaluator.from_family(scalar_chebyshev())
    F, info = fixed_point_F(ev, 2 + 1e-12, return_info=True)
    assert info.refined == "mpmath"
    assert abs(F[0, 0] - scalar_markov(2 + 1e-12)) < 1e-10


def test_fixed_point_failure_is_reported():
    ev = MarkovEvaluator(np.eye(1), np.zeros((1, 1)), np.eye(1), max_iter=3)
    with pytest.raises(ConvergenceFailure):
        fixed_point_F(ev, 0.5)


def test_approximants_converge_geometrically():
    fam = scalar_chebyshev()
    z = 3.0
    F = scalar_markov(z)
    rho = ((3 - np.sqrt(5)) / 2) ** 2
    errs = [abs(approximant_F(fam, m, z)[0, 0] - F) for m in range(1, 16)]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] / errs[-2] == pytest.approx(rho, rel=1e-3)


def test_approximant_routes_agree():
    fam = nevai_perturbation(example1())
    for m in (1, 4, 9):
        assert np.allclose(approximant_F(fam, m, 6 + 1j), approximant_F_direct(fam, m, 6 + 1j), atol=1e-12)


def test_approximants_converge_for_random_family():
    fam = random_family(2, np.random.default_rng(3))
    ev = MarkovEvaluator.from_family(fam)
    z = 3 * ev.bound() + 1j
    assert np.linalg.norm(approximant_F(fam, 80, z) - fixed_point_F(ev, z)) < 1e-10


def test_contour_spec_validation():
    with pytest.raises(ValueError):
        ContourSpec(3.0, 63)
    with pytest.raises(ValueError):
        ContourSpec(3.0, 65)
    with pytest.raises(ValueError):
        ContourSpec(-1.0)
    with pytest.raises(ValueError):
        markov_on_contour(example1(), ContourSpec(3.0))
    assert ContourSpec(3.0).doubled().n_quad == 256


def test_contour_moments_match_jacobi_powers():
    fam = example1()
    A, B, C = fam.limits
    mu = contour_moments(fam, ContourSpec(5.0, 128), 6)
    ref = jacobi_moments(A, B, C, 7)
    for k in range(7):
        assert np.abs(mu[k] - ref[k]).max() < 1e-10 * max(1, np.abs(ref[k]).max())


def test_second_kind_values_are_recessive():
    fam = scalar_chebyshev()
    Q, R = second_kind_values(fam, 3.0, 20)
    F = scalar_markov(3.0)
    assert np.allclose(Q[:, 0, 0], F ** (np.arange(21) + 1), rtol=1e-12)
    assert np.allclose(R[:, 0, 0], Q[:, 0, 0], rtol=1e-12)


@pytest.mark.parametrize("builder,R", [(scalar_chebyshev, 3.0), (example1, 5.0)])
def test_biorthogonality(builder, R):
    fam = builder()
    spec = ContourSpec(R, 128)
    P = biorthogonality_table(fam, 8, spec)
    P2 = biorthogonality_table(fam, 8, spec.doubled())
    for m in range(9):
        assert abs(np.linalg.det(P[m, m])) > 1e-6
        for k in range(9):
            if m != k:
                assert np.abs(P[m, k]).max() < 1e-8
    assert np.abs(P - P2).max() < 1e-10
    if fam.dim == 1:
        assert np.allclose(P[np.arange(9), np.arange(9), 0, 0], 1, atol=1e-10)


def test_biorthogonality_nonconstant_family():
    fam = nevai_perturbation(example1())
    P = biorthogonality_table(fam, 6, ContourSpec(6.0, 128))
    off = max(np.abs(P[m, k]).max() for m in range(7) for k in range(7) if m != k)
    assert off < 1e-8


def test_continuation_reaches_inner_points():
    ev = MarkovEvaluator.from_family(scalar_chebyshev())
    for z in (1 + 1j, -0.5 - 0.2j, 0.1j):
        F, path = continuation(ev, z, spectrum=np.linspace(-2, 2, 101))
        assert abs(F[0, 0] - scalar_markov(z)) < 1e-10
        assert abs(path[-1] - z) < 1e-12


def test_perturbed_markov():
    F = np.eye(2)
    d = np.array([[1.0, 0.0], [0.0, 2.0]])
    L = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(perturbed_markov(F, d, L, 2.0), F + d @ L.T / 2)
    assert np.allclose(perturbed_markov(lambda z: z * F, d, L, 1.0), F + d @ L.T)
    with pytest.raises(ValueError):
        perturbed_markov(F, d, L, 0)
