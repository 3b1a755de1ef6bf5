"""Block Jacobi truncations, zeros of V_m and the associated quadrature rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.optimize import linear_sum_assignment

from .polymat import (
    DEFAULT_CLUSTER_TOL,
    MatrixPolynomial,
    aberth_refine,
    cluster_roots,
    derivative,
    det_and_adjugate,
    eval_poly,
)
from .recurrence import (
    RecurrenceFamily,
    VerificationError,
    V_values,
    W_values,
    generate_V,
    log_det_derivative,
)


def truncated_jacobi(fam: RecurrenceFamily, m: int):
    """mN x mN block tridiagonal J_m; block row k is (C_k, B_k, A_k)."""
    if m < 1:
        raise ValueError("truncation order must be >= 1")
    n = fam.dim
    J = np.zeros((m * n, m * n), dtype=complex)
    for k in range(m):
        A, B, C = fam.coeffs(k)
        s = slice(k * n, (k + 1) * n)
        J[s, s] = B
        if k + 1 < m:
            J[s, (k + 1) * n : (k + 2) * n] = A
        if k > 0:
            J[s, (k - 1) * n : k * n] = C
    return J


def match_multisets(a, b, tol=1e-6):
    """Optimal pairing of two point sets; returns (max distance, ok)."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.size != b.size:
        return np.inf, False
    if a.size == 0:
        return 0.0, True
    d = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(d)
    worst = d[i, j]
    ok = bool(np.all(worst <= tol * (1.0 + np.abs(a[i]))))
    return float(worst.max()), ok


def det_roots(fam: RecurrenceFamily, m: int, V=None):
    """Roots of det V_m (with repetition), polished by Aberth iteration.

    Companion roots of the interpolated determinant seed an Aberth
    iteration driven by the exact log-derivative of det V_m computed from
    the Riccati ratios V_{k+1} V_k^{-1}.
    """
    if V is None:
        V = generate_V(fam, m)[m]
    det, _ = det_and_adjugate(V)
    seeds = np.polynomial.polynomial.polyroots(det.coeffs)
    if seeds.size != m * fam.dim:
        raise VerificationError("determinant of V_m has deficient degree")
    return aberth_refine(seeds, lambda z: log_det_derivative(fam, m, z))


def zeros_of_V(fam: RecurrenceFamily, m: int, tol=DEFAULT_CLUSTER_TOL, check=True, match_tol=1e-6):
    """Zeros of det V_m as clustered eigenvalues of J_m, [(x, multiplicity)].

    With `check`, the eigenvalues are matched as a multiset against the
    roots of det V_m; a mismatch raises VerificationError listing both.
    """
    eig = np.linalg.eigvals(truncated_jacobi(fam, m))
    if check:
        roots = det_roots(fam, m)
        worst, ok = match_multisets(eig, roots, match_tol)
        if not ok:
            raise VerificationError(
                f"eigenvalues {np.sort_complex(eig)} and det roots {np.sort_complex(roots)} "
                f"differ by {worst:.3e}"
            )
    return cluster_roots(eig, tol)


def gershgorin_bound(fam: RecurrenceFamily, m_horizon=200):
    """Radius containing the spectra of J_1..J_{m_horizon} and of the limit operator."""
    M = 0.0
    n_rows = m_horizon if fam.length is None else min(m_horizon, fam.length)
    for k in range(n_rows):
        A, B, C = fam.coeffs(k)
        row = np.abs(B).sum(axis=1) + np.abs(A).sum(axis=1)
        if k > 0:
            row = row + np.abs(C).sum(axis=1)
        M = max(M, float(row.max()))
    if fam.limits is not None:
        A, B, C = fam.limits
        M = max(M, float((np.abs(A) + np.abs(B) + np.abs(C)).sum(axis=1).max()))
    return M


@dataclass(frozen=True)
class QuadratureRule:
    nodes: list  # [(x, multiplicity)]
    weights: list  # ComplexMatrix per node
    # nodes where dim ker V_m(x) < multiplicity
    defective: tuple = ()
    # node index -> [Gamma^(1), ..., Gamma^(l-1)], weights of p^(j)(x) at defective nodes
    derivative_weights: dict = field(default_factory=dict)

    @property
    def total_multiplicity(self):
        return sum(l for _, l in self.nodes)


def _residue_weight(V, dV, W, l):
    """R (L^H V'(x) R)^{-1} L^H W(x): residue of V(z)^{-1} W(z) at a semisimple zero."""
    U, _, Vh = np.linalg.svd(V)
    R = Vh[-l:].conj().T
    Lh = U[:, -l:].conj().T
    return R @ np.linalg.solve(Lh @ dV @ R, Lh @ W)


def _laurent_weights(fam, m, x, l, radius, n_quad=64):
    """(1/j!) (1/2 pi i) closed integral of (z-x)^j V_m(z)^{-1} B^(1)_{m-1}(z), j < l, on |z-x| = radius."""
    t = radius * np.exp(2j * np.pi * np.arange(n_quad) / n_quad)
    vals = []
    for u in t:
        z = x + u
        vals.append(np.linalg.solve(V_values(fam, z, m)[0, m], W_values(fam, z, m)[0, m]))
    vals = np.array(vals)
    return [np.tensordot(t ** (j + 1), vals, axes=(0, 0)) / n_quad / factorial(j) for j in range(l)]


def quadrature_weights(fam: RecurrenceFamily, m: int, tol=DEFAULT_CLUSTER_TOL, nodes=None, method="residue"):
    """Weights Gamma_{m,k} of the quadrature rule at the zeros of det V_m, times G0^{-1}.

    method="adjugate" uses l (Adj V_m)^{(l-1)}(x) B^(1)_{m-1}(x) / (det V_m)^{(l)}(x)
    on the expanded coefficients of det V_m and Adj V_m. method="residue"
    (default) computes the same matrix as R (L^H V_m'(x) R)^{-1} L^H B^(1)_{m-1}(x)
    with R, L spanning the right and left kernels of V_m(x) and all values
    taken from the recurrences; it avoids the cancellation of the monomial
    expansion. At defective nodes (dim ker V_m(x) < l) V_m^{-1} has a
    higher-order pole and no point weight alone reproduces the moments;
    there the Laurent coefficients of V_m^{-1} B^(1)_{m-1} are taken on a
    small circle and stored as weights of p^(j)(x) in `derivative_weights`.
    """
    if method not in ("residue", "adjugate"):
        raise ValueError(f"unknown method {method!r}")
    if nodes is None:
        nodes = zeros_of_V(fam, m, tol=tol)
    g0inv = np.linalg.inv(fam.G0)
    n = fam.dim
    adj_data = None
    weights = []
    defective = []
    deriv_w = {}
    xs = np.array([x for x, _ in nodes], dtype=complex)
    for idx, (x, l) in enumerate(nodes):
        vals = V_values(fam, x, m, deriv=1)
        Vx, dVx = vals[0, m], vals[1, m]
        Wx = W_values(fam, x, m)[0, m]
        nullity = l
        if l > 1:
            sv = np.linalg.svd(Vx, compute_uv=False)
            nullity = int(np.sum(sv <= np.sqrt(tol) * max(sv[0], 1.0)))
            if nullity < l:
                defective.append(x)
                gaps = np.abs(np.delete(xs, idx) - x)
                radius = 0.4 * gaps.min() if gaps.size else 0.5
                laurent = _laurent_weights(fam, m, x, l, radius)
                deriv_w[idx] = [g @ g0inv for g in laurent[1:]]
                if method == "residue":
                    weights.append(laurent[0] @ g0inv)
                    continue
        if method == "residue" and nullity >= l:
            weights.append(_residue_weight(Vx, dVx, Wx, l) @ g0inv)
            continue
        if adj_data is None:
            adj_data = det_and_adjugate(generate_V(fam, m)[m])
        det, adj = adj_data
        dd = det.derivative(l)(x)
        if abs(dd) < 1e-300:
            raise VerificationError(f"vanishing det derivative at node {x} (multiplicity {l})")
        adj_val = np.array([[adj[i][j].derivative(l - 1)(x) for j in range(n)] for i in range(n)])
        weights.append(l * adj_val @ Wx @ g0inv / dd)
    return QuadratureRule(list(nodes), weights, tuple(defective), deriv_w)


def quadrature_apply(rule: QuadratureRule, p: MatrixPolynomial, point_only=False):
    """sum_k p(x_k) Gamma_k, plus sum_j p^(j)(x_k) Gamma_k^(j) at defective nodes
    unless `point_only`."""
    total = sum(eval_poly(p, x) @ w for (x, _), w in zip(rule.nodes, rule.weights))
    if not point_only:
        for idx, ws in rule.derivative_weights.items():
            x = rule.nodes[idx][0]
            for j, w in enumerate(ws, start=1):
                total = total + eval_poly(derivative(p, j), x) @ w
    return total
