"""Dirac-delta perturbations of the vector functional.

The perturbation adds Lam * delta to the functional, where delta collects
delta_{c_j}, delta'_{c_j}, ..., delta^{(M_j)}_{c_j}. In the h-variable every
c_j sits at 0, so the perturbed Markov function is F(z) + D/z with
D = delta(P_0) Lam^T, and the perturbed pairing is
<P, Q>~ = <P, Q> + P(0) D Q(0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np

from .markov import ContourSpec, contour_integral, markov_on_contour
from .polymat import MatrixPolynomial, as_matrix, eval_poly
from .recurrence import (
    RecurrenceFamily,
    VerificationError,
    G_values,
    V_values,
    generate_G,
    generate_V,
)


class RegularityError(RuntimeError):
    """The perturbed functional is not quasi-definite at the requested degree."""


@dataclass(frozen=True)
class DeltaSpec:
    """Points c_j with derivative orders 0..M_j; h(x) = prod (x - c_j)^(M_j + 1)."""

    points: tuple

    def __post_init__(self):
        pts = tuple((complex(c), int(M)) for c, M in self.points)
        if not pts:
            raise ValueError("delta spec needs at least one point")
        if any(M < 0 for _, M in pts):
            raise ValueError("derivative orders must be non-negative")
        cs = [c for c, _ in pts]
        if len(set(cs)) != len(cs):
            raise ValueError("delta points must be distinct")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return sum(M + 1 for _, M in self.points)

    def functionals(self):
        """[(c, order)] in column order."""
        return [(c, o) for c, M in self.points for o in range(M + 1)]

    def h(self):
        """Coefficients (ascending) of h."""
        coeffs = np.array([1.0 + 0j])
        for c, M in self.points:
            for _ in range(M + 1):
                coeffs = np.polynomial.polynomial.polymul(coeffs, [-c, 1.0])
        return coeffs


def delta_on_P0(spec: DeltaSpec):
    """Entry (i, j) = <delta^{(o_j)}_{c_j}, x^i> = (-1)^o_j d^o_j/dx^o_j x^i at c_j."""
    n = spec.dim
    out = np.zeros((n, n), dtype=complex)
    for j, (c, o) in enumerate(spec.functionals()):
        for i in range(n):
            if o <= i:
                out[i, j] = (-1) ** o * factorial(i) / factorial(i - o) * c ** (i - o)
    return out


def lift_to_scalar_variable(p: MatrixPolynomial, spec: DeltaSpec):
    """Vector polynomial x -> p(h(x)) P_0(x) as an (deg+1, N) coefficient array."""
    n = p.dim
    if n != spec.dim:
        raise ValueError("polynomial dimension must match the delta spec")
    h = spec.h()
    total = np.zeros((p.degree * (h.size - 1) + n, n), dtype=complex)
    hp = np.array([1.0 + 0j])
    for coeff in p.coeffs:
        for col in range(n):
            # contribution coeff @ e_col * h^j * x^col
            term = np.zeros(hp.size + col, dtype=complex)
            term[col:] = hp
            total[: term.size] += term[:, None] * coeff[:, col][None, :]
        hp = np.polynomial.polynomial.polymul(hp, h)
    return total


# kernels -------------------------------------------------------------------------


def kernel_eval(fam: RecurrenceFamily, m, x, y):
    """K_m(x, y) = sum_{k<m} G_k(y) V_k(x)."""
    if m == 0:
        return np.zeros((fam.dim, fam.dim), dtype=complex)
    V = V_values(fam, x, m - 1)[0]
    G = G_values(fam, y, m - 1)[0]
    return np.einsum("kij,kjl->il", G, V)


def _scale(*mats):
    return sum(np.linalg.norm(a, 2) for a in mats)


def cd_residual(fam: RecurrenceFamily, m, x, z, relative=True):
    """Christoffel-Darboux residual
    (x - z) sum_{k<=m} G_k(z) V_k(x) - G_m(z) A_m V_{m+1}(x) + G_{m+1}(z) C_{m+1} V_m(x).

    With `relative`, the norm is divided by the sum of the norms of the
    three terms, the meaningful size in floating point.
    """
    V = V_values(fam, x, m + 1)[0]
    G = G_values(fam, z, m + 1)[0]
    A, _, _ = fam.coeffs(m)
    C1 = fam.coeffs(m + 1)[2]
    lhs = (x - z) * np.einsum("kij,kjl->il", G[: m + 1], V[: m + 1])
    t1 = G[m] @ A @ V[m + 1]
    t2 = G[m + 1] @ C1 @ V[m]
    r = np.linalg.norm(lhs - t1 + t2, 2)
    if relative:
        r /= max(_scale(lhs, t1, t2), 1e-300)
    return float(r)


def confluent_kernel(fam: RecurrenceFamily, m, x):
    """G_m(x) A_m V'_{m+1}(x) - G_{m+1}(x) C_{m+1} V'_m(x)."""
    V = V_values(fam, x, m + 1, deriv=1)
    G = G_values(fam, x, m + 1)[0]
    return G[m] @ fam.coeffs(m)[0] @ V[1, m + 1] - G[m + 1] @ fam.coeffs(m + 1)[2] @ V[1, m]


def kernel_at_zero(fam: RecurrenceFamily, m, tol=1e-9):
    """K_{m+1}(0, 0) = sum_{k<=m} G_k(0) V_k(0), checked against the confluent form."""
    direct = kernel_eval(fam, m + 1, 0.0, 0.0)
    conf = confluent_kernel(fam, m, 0.0)
    err = np.linalg.norm(direct - conf, 2) / (1.0 + np.linalg.norm(direct, 2))
    if err > tol:
        raise VerificationError(f"kernel at zero: direct sum and confluent form differ by {err:.3e} at m={m}")
    return direct


# perturbed family -------------------------------------------------------------------


@dataclass(eq=False)
class PerturbedFamily:
    """Base family plus Lam * delta; D_m normalises the perturbed V (default I)."""

    base: RecurrenceFamily
    delta: object  # DeltaSpec or the N x N matrix delta(P_0)
    Lam: np.ndarray
    D_m: Optional[Callable[[int], np.ndarray]] = None
    cond_limit: float = 1e12
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.base.dim
        if isinstance(self.delta, DeltaSpec):
            if self.delta.dim != n:
                raise ValueError(f"delta spec has {self.delta.dim} functionals, family dimension is {n}")
            self.delta_moment = delta_on_P0(self.delta)
        else:
            self.delta_moment = as_matrix(self.delta, n)
        self.Lam = as_matrix(self.Lam, n)
        self.D = self.delta_moment @ self.Lam.T

    @property
    def dim(self):
        return self.base.dim

    def norm(self, m):
        return np.eye(self.dim, dtype=complex) if self.D_m is None else as_matrix(self.D_m(m), self.dim)

    def zero_data(self, m_max):
        """V_k(0), G_k(0) for k <= m_max + 1 and running kernels K_{k+1}(0,0)."""
        key = ("zero", m_max)
        if key not in self._cache:
            V0 = V_values(self.base, 0.0, m_max + 1)[0]
            G0 = G_values(self.base, 0.0, m_max + 1)[0]
            K = np.cumsum(np.einsum("kij,kjl->kil", G0, V0), axis=0)
            self._cache[key] = (V0, G0, K)
        return self._cache[key]

    def regularity_matrix(self, m):
        K = self.zero_data(m)[2][m]
        return np.eye(self.dim) + self.D @ K

    def markov(self, F):
        """Callable z -> F(z) + D/z given the base Markov function (callable)."""
        D = self.D
        return lambda z: F(z) + D / z


def regularity_check(pf: PerturbedFamily, m):
    """(regular, condition number) of I + delta(P_0) Lam^T K_{m+1}(0, 0)."""
    Rm = pf.regularity_matrix(m)
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(Rm))
    if not np.isfinite(cond):
        cond = np.inf
    return cond < pf.cond_limit, cond


def _require_regular(pf, m):
    ok, cond = regularity_check(pf, m)
    if not ok:
        raise RegularityError(f"perturbed functional is singular at m={m} (condition {cond:.3e})")


def perturbed_value_at_zero(pf: PerturbedFamily, m):
    """V~_m(0) = D_m V_m(0) (I + D K_{m+1}(0,0))^{-1}."""
    _require_regular(pf, m)
    V0, _, _ = pf.zero_data(m)
    return pf.norm(m) @ V0[m] @ np.linalg.inv(pf.regularity_matrix(m))


def L_matrix(pf: PerturbedFamily, m):
    """L_m = V~_m(0) D, so that V~_m = D_m V_m - L_m K_{m+1}(., 0)."""
    return perturbed_value_at_zero(pf, m) @ pf.D


def perturbed_V(pf: PerturbedFamily, m):
    """V~_m(z) = D_m V_m(z) - V~_m(0) D K_{m+1}(z, 0)."""
    L = L_matrix(pf, m)
    V = generate_V(pf.base, m)
    _, G0, _ = pf.zero_data(m)
    n = pf.dim
    kern = np.zeros((m + 1, n, n), dtype=complex)
    for k in range(m + 1):
        kern[: k + 1] += G0[k] @ V[k].coeffs
    return MatrixPolynomial(np.einsum("ij,kjl->kil", pf.norm(m), V[m].coeffs) - L @ kern)


def perturbed_V_value(pf: PerturbedFamily, m, z, V=None):
    """V~_m(z) from base values."""
    L = L_matrix(pf, m)
    if V is None:
        V = V_values(pf.base, z, m)[0]
    _, G0, _ = pf.zero_data(m)
    kern = np.einsum("kij,kjl->il", G0[: m + 1], V[: m + 1])
    return pf.norm(m) @ V[m] - L @ kern


def hat_G(pf: PerturbedFamily, n_idx):
    """Mirror construction G^_n(y) = G_n(y) - K_{n+1}(0, y) D (I + K D)^{-1} G_n(0)."""
    V0, G0, K = pf.zero_data(n_idx)
    _require_regular(pf, n_idx)
    G = generate_G(pf.base, n_idx)
    n = pf.dim
    right = pf.D @ np.linalg.inv(np.eye(n) + K[n_idx] @ pf.D) @ G0[n_idx]
    kern = np.zeros((n_idx + 1, n, n), dtype=complex)
    for k in range(n_idx + 1):
        kern[: k + 1] += G[k].coeffs @ V0[k]
    return MatrixPolynomial(G[n_idx].coeffs - kern @ right)


def phi_closed_form(pf: PerturbedFamily, m):
    """Phi_m = I - V_m(0) (I + D K_{m+1}(0,0))^{-1} D G_m(0)."""
    V0, G0, K = pf.zero_data(m)
    n = pf.dim
    return np.eye(n) - V0[m] @ np.linalg.solve(np.eye(n) + pf.D @ K[m], pf.D @ G0[m])


def perturbed_G(pf: PerturbedFamily, n_idx):
    """G~_n = G^_n (D_n Phi_n)^{-1}, normalised so that <V~_n, G~_n>~ = I."""
    Gh = hat_G(pf, n_idx)
    S = pf.norm(n_idx) @ phi_closed_form(pf, n_idx)
    return Gh.rmul(np.linalg.inv(S))


def perturbed_recurrence(pf: PerturbedFamily, m, rng=None, n_points=5, tol=1e-9):
    """(alpha1_{m+1}, alpha2_m, alpha3_{m-1}) with
    z V~_m = alpha1 V_{m+1} + alpha2 V_m + alpha3 V_{m-1}.

    The residual is verified (relative to the size of the terms) at random
    points; a failure raises VerificationError carrying the matrices.
    """
    base = pf.base
    A, B, C = base.coeffs(m)
    Dm = pf.norm(m)
    L = L_matrix(pf, m)
    _, G0, _ = pf.zero_data(m + 1)
    a1 = Dm @ A - L @ G0[m] @ A
    a2 = Dm @ B + L @ G0[m + 1] @ base.coeffs(m + 1)[2]
    a3 = Dm @ C
    worst = recurrence_defect(pf, m, (a1, a2, a3), rng, n_points)
    if worst > tol:
        raise VerificationError(
            f"perturbed recurrence residual {worst:.3e} at m={m}: alpha1={a1}, alpha2={a2}, alpha3={a3}"
        )
    return a1, a2, a3


def recurrence_defect(pf: PerturbedFamily, m, alphas, rng=None, n_points=5):
    """Largest relative residual of z V~_m = a1 V_{m+1} + a2 V_m + a3 V_{m-1} at random z."""
    a1, a2, a3 = alphas
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for z in 3 * (rng.uniform(-1, 1, n_points) + 1j * rng.uniform(-1, 1, n_points)):
        V = V_values(pf.base, z, m + 1)[0]
        lhs = z * perturbed_V_value(pf, m, z, V)
        t = [a1 @ V[m + 1], a2 @ V[m], a3 @ V[m - 1] if m >= 1 else np.zeros_like(a3)]
        r = np.linalg.norm(lhs - sum(t), 2) / max(_scale(lhs, *t), 1e-300)
        worst = max(worst, float(r))
    return worst


def perturbed_markov_on_contour(pf: PerturbedFamily, spec: ContourSpec, source=None, F_values=None):
    if F_values is None:
        F_values = markov_on_contour(pf.base if source is None else source, spec)
    z = spec.nodes()
    return F_values + pf.D[None] / z[:, None, None]


def perturbed_biorthogonality(pf: PerturbedFamily, m, n_idx, spec: ContourSpec, F_values=None, source=None):
    """(1/2 pi i) closed integral of V~_m F~ G~_n; expected I delta_{mn}."""
    Ft = perturbed_markov_on_contour(pf, spec, source, F_values)
    Vt = perturbed_V(pf, m)
    Gt = perturbed_G(pf, n_idx)
    z = spec.nodes()
    vals = np.array([eval_poly(Vt, x) @ F @ eval_poly(Gt, x) for x, F in zip(z, Ft)])
    return contour_integral(vals, spec)
