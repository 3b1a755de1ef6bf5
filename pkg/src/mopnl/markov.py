"""Markov functions of constant-coefficient classes, approximants and contour pairings.

For the constant class the Markov function solves the continued-fraction
fixed point F = ((zI - B) - A F C)^{-1}; for a general family it is the
limit of the approximants V_m(z)^{-1} B^(1)_{m-1}(z). In both cases the
returned matrices carry the right factor G0^{-1}, so that z F(z) -> G0^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from .polymat import MatrixPolynomial, as_matrix, eval_poly
from .recurrence import RecurrenceFamily, V_values, W_values


class ConvergenceFailure(RuntimeError):
    """A fixed point or continuation did not reach its tolerance."""


@dataclass(frozen=True, eq=False)
class MarkovEvaluator:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G0: np.ndarray = None
    max_iter: int = 20000
    tol: float = 1e-10
    step_tol: float = 1e-14
    mp_dps: int = 50

    def __post_init__(self):
        A = as_matrix(self.A)
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", as_matrix(self.B, n))
        object.__setattr__(self, "C", as_matrix(self.C, n))
        g0 = np.eye(n, dtype=complex) if self.G0 is None else as_matrix(self.G0, n)
        object.__setattr__(self, "G0", g0)

    @classmethod
    def from_family(cls, fam: RecurrenceFamily, **kw):
        if fam.limits is None:
            raise ValueError("family has no declared limits (A, B, C)")
        return cls(*fam.limits, G0=fam.G0, **kw)

    @classmethod
    def ratio_limit_from_family(cls, fam: RecurrenceFamily, **kw):
        """Evaluator for Y with Y^{-1} = (zI - B) - C Y A.

        Y is the limit of V_{m-1}(z) V_m(z)^{-1} A_{m-1}^{-1} (and of the
        mirrored G-ratios). It is the continued fraction with A and C
        swapped, so it coincides with F_{A,B,C} only when the limits commute
        suitably (always for N = 1).
        """
        if fam.limits is None:
            raise ValueError("family has no declared limits (A, B, C)")
        A, B, C = fam.limits
        return cls(C, B, A, **kw)

    @property
    def dim(self):
        return self.A.shape[0]

    def bound(self):
        """Gershgorin radius of the limit operator."""
        return float((np.abs(self.A) + np.abs(self.B) + np.abs(self.C)).sum(axis=1).max())


@dataclass(frozen=True)
class FixedPointInfo:
    iterations: int
    residual: float
    jacobian_cond: float
    refined: str  # "none", "newton" or "mpmath"


def _residual(ev, F, z):
    n = ev.dim
    return float(np.linalg.norm(F @ ((z * np.eye(n) - ev.B) - ev.A @ F @ ev.C) - np.eye(n), 2))


def _jacobian(ev, F):
    Fi = np.linalg.inv(F)
    return np.kron(ev.C.T, ev.A) - np.kron(Fi.T, Fi)


def _jacobian_cond(ev, F):
    """||K^{-1}|| times the size of the two terms of K; np.linalg.cond is
    blind to degeneracy when K is 1x1."""
    K = _jacobian(ev, F)
    Fi = np.linalg.inv(F)
    scale = np.linalg.norm(ev.A, 2) * np.linalg.norm(ev.C, 2) + np.linalg.norm(Fi, 2) ** 2
    return float(np.linalg.norm(np.linalg.inv(K), 2) * scale)


def _vec(X):
    return X.reshape(-1, order="F")


def _unvec(v, n):
    return v.reshape((n, n), order="F")


def _newton(ev, F, z, steps=8):
    """Newton on F^{-1} - (zI - B) + A F C = 0 in double precision."""
    n = ev.dim
    for _ in range(steps):
        Fi = np.linalg.inv(F)
        phi = Fi - (z * np.eye(n) - ev.B) + ev.A @ F @ ev.C
        K = np.kron(ev.C.T, ev.A) - np.kron(Fi.T, Fi)
        delta = _unvec(np.linalg.solve(K, -_vec(phi)), n)
        F = F + delta
        if np.linalg.norm(delta) <= 1e-16 * (1 + np.linalg.norm(F)):
            break
    return F


def _newton_mp(ev, F, z, dps, steps=400):
    """Extended-precision Newton, used next to branch points where K degenerates."""
    n = ev.dim
    with mpmath.workdps(dps):
        A = mpmath.matrix(ev.A.tolist())
        B = mpmath.matrix(ev.B.tolist())
        C = mpmath.matrix(ev.C.tolist())
        I = mpmath.eye(n)
        zz = mpmath.mpc(z)
        X = mpmath.matrix(F.tolist())
        goal = mpmath.mpf(10) ** (-(dps - 10))
        for _ in range(steps):
            Xi = X ** -1
            phi = Xi - (zz * I - B) + A * X * C
            K = mpmath.matrix(n * n, n * n)
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        for d in range(n):
                            # row (b*n+a) <- vec index of (a, b); column (d*n+c) <- (c, d)
                            K[b * n + a, d * n + c] = C[d, b] * A[a, c] - Xi[d, b] * Xi[a, c]
            rhs = mpmath.matrix(n * n, 1)
            for a in range(n):
                for b in range(n):
                    rhs[b * n + a] = -phi[a, b]
            try:
                sol = mpmath.lu_solve(K, rhs)
            except ZeroDivisionError:
                break
            for a in range(n):
                for b in range(n):
                    X[a, b] += sol[b * n + a]
            if mpmath.norm(sol) < goal:
                break
        return np.array([[complex(X[i, j]) for j in range(n)] for i in range(n)])


def fixed_point_F(ev: MarkovEvaluator, z, return_info=False, F_start=None):
    """Markov function of the constant class at z (decaying branch).

    Runs F_{k+1} = ((zI - B) - A F_k C)^{-1} from F_0 = (zI - B)^{-1}, then
    polishes with Newton; near branch points (ill-conditioned Newton
    Jacobian) the polish is redone in extended precision. Raises
    ConvergenceFailure if the fixed point residual stays above ``ev.tol``.
    """
    z = complex(z)
    n = ev.dim
    zb = z * np.eye(n) - ev.B
    try:
        F = np.linalg.inv(zb) if F_start is None else np.array(F_start, dtype=complex)
        it = 0
        for it in range(1, ev.max_iter + 1):
            Fn = np.linalg.inv(zb - ev.A @ F @ ev.C)
            step = np.linalg.norm(Fn - F)
            F = Fn
            if step <= ev.step_tol * (1 + np.linalg.norm(F)):
                break
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"singular matrix in the fixed-point iteration at z={z}") from exc
    if not np.all(np.isfinite(F)):
        raise ConvergenceFailure(f"fixed-point iteration diverged at z={z}")
    converged = step <= 1e-6 * (1 + np.linalg.norm(F))

    refined = "newton"
    try:
        Fnew = _newton(ev, F, z)
        cond = _jacobian_cond(ev, Fnew)
    except np.linalg.LinAlgError:
        Fnew, cond = F, np.inf
    if np.all(np.isfinite(Fnew)) and np.linalg.norm(Fnew - F) < 1e-3 * (1 + np.linalg.norm(F)):
        F = Fnew
    if cond > 1e4:
        F = _newton_mp(ev, F, z, ev.mp_dps)
        refined = "mpmath"
    res = _residual(ev, F, z)
    if res > ev.tol or not (converged or refined == "mpmath"):
        raise ConvergenceFailure(f"fixed point not reached at z={z}: residual {res:.3e}")
    out = F @ np.linalg.inv(ev.G0)
    if return_info:
        return out, FixedPointInfo(it, res, float(cond), refined)
    return out


def _raw(ev, F):
    return F @ ev.G0


def derivative_F(ev: MarkovEvaluator, z, k=1, F=None, check=True):
    """k-th derivative (k = 0, 1, 2) of the Markov function at z.

    Differentiating F^{-1} = (zI - B) - A F C gives K vec F' = vec I and
    K vec F'' = vec(F^{-1} F' Y' + Y' F' F^{-1}) with Y' = I - A F' C and
    K = C^T (x) A - F^{-T} (x) F^{-1}. With `check`, F' is compared with a
    central difference (step 1e-5(1+|z|), relative 1e-5).
    """
    if k not in (0, 1, 2):
        raise ValueError("derivative order must be 0, 1 or 2")
    n = ev.dim
    if F is None:
        F = fixed_point_F(ev, z)
    if k == 0:
        return F
    Fr = _raw(ev, F)
    K = _jacobian(ev, Fr)
    if _jacobian_cond(ev, Fr) > 1e12:
        raise ConvergenceFailure(f"singular derivative system at z={z} (branch point)")
    d1 = _unvec(np.linalg.solve(K, _vec(np.eye(n, dtype=complex))), n)
    out = d1
    if k == 2:
        Fi = np.linalg.inv(Fr)
        Y1 = np.eye(n) - ev.A @ d1 @ ev.C
        out = _unvec(np.linalg.solve(K, _vec(Fi @ d1 @ Y1 + Y1 @ d1 @ Fi)), n)
    g0i = np.linalg.inv(ev.G0)
    if check:
        h = 1e-5 * (1 + abs(z))
        nearby = [_newton(ev, Fr, z + t, steps=30) for t in (-h, h)]
        if k == 2:
            nearby = [derivative_F(ev, z + t, 1, F=Fn @ g0i, check=False) @ ev.G0 for t, Fn in zip((-h, h), nearby)]
        fd = (nearby[1] - nearby[0]) / (2 * h)
        if np.linalg.norm(fd - out) > 1e-5 * max(1.0, np.linalg.norm(out)):
            raise ConvergenceFailure(f"derivative disagrees with finite differences at z={z}")
    return out @ g0i


def approximant_F(fam: RecurrenceFamily, m, z):
    """V_m(z)^{-1} B^(1)_{m-1}(z) G0^{-1}.

    Evaluated as the equivalent backward continued fraction
    [(zI - J_m)^{-1}]_{00}, which stays bounded where V_m itself overflows;
    falls back to the literal quotient if an intermediate block is singular.
    """
    n = fam.dim
    if m == 0:
        return np.zeros((n, n), dtype=complex)
    I = np.eye(n)
    g0i = np.linalg.inv(fam.G0)
    try:
        A, B, C = fam.coeffs(m - 1)
        T = np.linalg.inv(z * I - B)
        for k in range(m - 2, -1, -1):
            A, B, C = fam.coeffs(k)
            C_next = fam.coeffs(k + 1)[2]
            T = np.linalg.inv((z * I - B) - A @ T @ C_next)
        if np.all(np.isfinite(T)):
            return T @ g0i
    except np.linalg.LinAlgError:
        pass
    V = V_values(fam, z, m)[0, m]
    W = W_values(fam, z, m)[0, m]
    return np.linalg.solve(V, W) @ g0i


def approximant_F_direct(fam: RecurrenceFamily, m, z):
    """Literal V_m(z)^{-1} B^(1)_{m-1}(z) G0^{-1} from the value recurrences."""
    n = fam.dim
    if m == 0:
        return np.zeros((n, n), dtype=complex)
    V = V_values(fam, z, m)[0, m]
    W = W_values(fam, z, m)[0, m]
    return np.linalg.solve(V, W) @ np.linalg.inv(fam.G0)


# contour integrals ------------------------------------------------------------


@dataclass(frozen=True)
class ContourSpec:
    """Circle |z| = radius centred at 0 with n_quad equispaced trapezoid nodes."""

    radius: float
    n_quad: int = 128

    def __post_init__(self):
        if self.n_quad < 64 or self.n_quad % 2:
            raise ValueError("n_quad must be even and at least 64")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def nodes(self):
        return self.radius * np.exp(2j * np.pi * np.arange(self.n_quad) / self.n_quad)

    def doubled(self):
        return ContourSpec(self.radius, 2 * self.n_quad)


class MarkovSource:
    """Uniform access to F on a contour for a constant evaluator, a family or a callable."""

    def __init__(self, source, order=None):
        self.source = source
        self.order = order

    def bound(self):
        from .spectral import gershgorin_bound

        if isinstance(self.source, MarkovEvaluator):
            return self.source.bound()
        if isinstance(self.source, RecurrenceFamily):
            return gershgorin_bound(self.source, m_horizon=max(self.order or 0, 1) + 1)
        return getattr(self.source, "radius_bound", 0.0)

    def __call__(self, z):
        src = self.source
        if isinstance(src, MarkovEvaluator):
            return fixed_point_F(src, z)
        if isinstance(src, RecurrenceFamily):
            if src.limits is not None and src.is_constant and self.order is None:
                return fixed_point_F(MarkovEvaluator.from_family(src), z)
            return approximant_F(src, self.order or 60, z)
        return src(z)


def markov_on_contour(source, spec: ContourSpec, order=None, check_bound=True):
    """F at the contour nodes, stacked (n_quad, N, N)."""
    src = source if isinstance(source, MarkovSource) else MarkovSource(source, order)
    if check_bound:
        M = src.bound()
        if spec.radius <= M:
            raise ValueError(f"contour radius {spec.radius} must exceed the Gershgorin bound {M}")
    return np.array([src(z) for z in spec.nodes()])


def contour_integral(values, spec: ContourSpec):
    """(1/2 pi i) of the closed integral, given integrand values at the nodes."""
    w = spec.nodes() / spec.n_quad
    return np.tensordot(w, values, axes=(0, 0))


def contour_pairing(Vm: MatrixPolynomial, source, Gn: MatrixPolynomial, spec: ContourSpec,
                    F_values=None, order=None):
    """(1/2 pi i) closed integral of V_m(z) F(z) G_n(z) over the circle."""
    if F_values is None:
        if order is None and isinstance(source, RecurrenceFamily) and not source.is_constant:
            order = Vm.degree + Gn.degree + 10
        F_values = markov_on_contour(source, spec, order=order)
    z = spec.nodes()
    vals = np.array([eval_poly(Vm, x) @ F @ eval_poly(Gn, x) for x, F in zip(z, F_values)])
    return contour_integral(vals, spec)


def contour_moments(source, spec: ContourSpec, kmax, F_values=None):
    """mu_k = (1/2 pi i) closed integral of z^k F(z), k = 0..kmax."""
    if F_values is None:
        F_values = markov_on_contour(source, spec)
    z = spec.nodes()
    return [contour_integral(z[:, None, None] ** k * F_values, spec) for k in range(kmax + 1)]


def tail_resolvents(source, z, count, order=None):
    """T^(k) = [(zI - J^(k))^{-1}]_{00} for the tails J^(k) of J, k < count.

    For a constant class every tail equals the fixed point; otherwise a
    backward continued fraction of depth `order` is used.
    """
    if isinstance(source, MarkovEvaluator):
        T = fixed_point_F(source, z) @ source.G0
        return [T] * count
    fam = source
    if fam.is_constant and order is None:
        T = fixed_point_F(MarkovEvaluator.from_family(fam), z) @ fam.G0
        return [T] * count
    order = order or count + 60
    n = fam.dim
    I = np.eye(n)
    T = np.linalg.inv(z * I - fam.coeffs(order - 1)[1])
    out = [None] * count
    for k in range(order - 2, -1, -1):
        A, B, _ = fam.coeffs(k)
        T = np.linalg.inv((z * I - B) - A @ T @ fam.coeffs(k + 1)[2])
        if k < count:
            out[k] = T
    return out


def second_kind_values(source, z, m_max, order=None):
    """Recessive solutions at z: Q_m = V_m F - B^(1)_{m-1} G0^{-1} and
    R_n = F G_n - G^(1)_{n-1}, for m, n <= m_max.

    They are the first block column and row of (zI - J)^{-1} and are built
    as products of tail resolvents, so each is accurate to relative
    rounding even where V_m and G_n are large.
    """
    fam_like = source
    T = tail_resolvents(source, z, m_max + 1, order)
    if isinstance(fam_like, MarkovEvaluator):
        coeffs = lambda k: (fam_like.A, fam_like.B, fam_like.C)
        g0 = fam_like.G0
    else:
        coeffs = fam_like.coeffs
        g0 = fam_like.G0
    col = [T[0]]
    row = [T[0]]
    for k in range(1, m_max + 1):
        col.append(T[k] @ coeffs(k)[2] @ col[-1])
        row.append(row[-1] @ coeffs(k - 1)[0] @ T[k])
    g0i = np.linalg.inv(g0)
    return np.array(col) @ g0i, np.array(row)


def biorthogonality_table(fam: RecurrenceFamily, m_max, spec: ContourSpec, source=None, order=None):
    """P[m, n] = (1/2 pi i) closed integral of V_m F G_n for m, n <= m_max.

    The integrand is evaluated as Q_m G_n (m >= n) or V_m R_n (m < n);
    these differ from V_m F G_n by polynomials that the trapezoid rule
    integrates to exactly zero, and avoid the cancellation of large
    polynomial values against each other.
    """
    from .recurrence import G_values

    source = fam if source is None else source
    M = MarkovSource(source, order).bound()
    if spec.radius <= M:
        raise ValueError(f"contour radius {spec.radius} must exceed the Gershgorin bound {M}")
    if order is None and not fam.is_constant:
        order = 2 * m_max + 10
    n = fam.dim
    z = spec.nodes()
    Vz = np.empty((z.size, m_max + 1, n, n), complex)
    Gz = np.empty_like(Vz)
    Qz = np.empty_like(Vz)
    Rz = np.empty_like(Vz)
    for j, x in enumerate(z):
        Vz[j] = V_values(fam, x, m_max)[0]
        Gz[j] = G_values(fam, x, m_max)[0]
        Qz[j], Rz[j] = second_kind_values(source, x, m_max, order)
    out = np.empty((m_max + 1, m_max + 1, n, n), complex)
    for m in range(m_max + 1):
        for k in range(m_max + 1):
            if m >= k:
                vals = Qz[:, m] @ Gz[:, k]
            else:
                vals = Vz[:, m] @ Rz[:, k]
            out[m, k] = contour_integral(vals, spec)
    return out


# Dirac perturbation of the Markov function --------------------------------------


def perturbed_markov(F, delta_moment, Lam, z):
    """F~(z) = F(z) + delta(P_0) Lam^T / z; F may be a matrix or a callable."""
    if z == 0:
        raise ValueError("perturbed Markov function is singular at z = 0")
    Fz = F(z) if callable(F) else np.asarray(F, dtype=complex)
    return Fz + np.asarray(delta_moment) @ np.asarray(Lam).T / z


# continuation ------------------------------------------------------------------


def continuation(ev: MarkovEvaluator, z_target, spectrum=None, n_angles=32, start_radius=None):
    """F(z_target) by Newton continuation along a straight ray from far away.

    The ray direction maximises the distance to `spectrum` (points
    approximating the singular set, e.g. eigenvalues of a large J_m).
    Returns (F, path) with path the list of visited points.
    """
    z_target = complex(z_target)
    R = start_radius or (2 * ev.bound() + 2 + abs(z_target))
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    if spectrum is not None and len(spectrum):
        spec = np.asarray(spectrum, dtype=complex)
        t = np.linspace(0, 1, 200)
        best, theta = -1.0, 0.0
        for a in angles:
            pts = z_target + (R * np.exp(1j * a) - z_target) * t
            d = np.abs(pts[:, None] - spec[None, :]).min()
            if d > best:
                best, theta = d, a
    else:
        theta = np.pi / 2
    z_start = R * np.exp(1j * theta)
    F = fixed_point_F(ev, z_start) @ ev.G0
    path = [z_start]
    s, h = 0.0, 0.05
    n = ev.dim
    while s < 1.0:
        h = min(h, 1.0 - s)
        znew = z_start + (z_target - z_start) * (s + h)
        try:
            Fn = _newton(ev, F, znew, steps=30)
            ok = (
                np.all(np.isfinite(Fn))
                and _residual(ev, Fn, znew) < 1e-12
                and np.linalg.norm(Fn - F) < 0.25 * (1 + np.linalg.norm(F))
            )
        except np.linalg.LinAlgError:
            ok = False
        if ok:
            F, s = Fn, s + h
            path.append(znew)
            h *= 1.5
        else:
            h /= 2
            if h < 1e-8:
                raise ConvergenceFailure(f"continuation stalled near z={znew}")
    res = _residual(ev, F, z_target)
    if res > ev.tol:
        raise ConvergenceFailure(f"continuation residual {res:.3e} at z={z_target}")
    _ = n
    return F @ np.linalg.inv(ev.G0), path


# Example-1 closed forms ----------------------------------------------------------


def _lucas(a, s, m):
    """2^{-m}((a+s)^m - (a-s)^m)/s, with the s -> 0 limit m (a/2)^{m-1}."""
    if abs(s) < 1e-7 * (1 + abs(a)):
        return m * (a / 2) ** (m - 1) if m > 0 else 0.0
    return 2.0 ** (-m) * ((a + s) ** m - (a - s) ** m) / s


def _decaying_sqrt(a, d):
    s = np.sqrt(complex(d))
    return -s if abs(a + s) < abs(a - s) else s


def example1_closed_forms(m, z):
    """Printed closed forms of the 2x2 example with A = I, B = [[-1,0],[1,-1]], C = diag(-1,1).

    Returns a dict with E_m, F_m, the displayed combinations "V" and "B1"
    (indexed as printed) and the displayed Markov function "F".
    """
    z = complex(z)
    a = 1 + z
    sp = _decaying_sqrt(a, a * a + 4)
    sm = _decaying_sqrt(a, a * a - 4)
    E = lambda k: _lucas(a, sp, k)
    Fs = lambda k: _lucas(a, sm, k)
    V = (
        -0.5 * E(m + 2) * np.array([[0, 0], [a, 0]])
        + E(m + 1) * np.array([[a, 0], [-0.5, 0]])
        + E(m) * np.array([[1, 0], [0, 0]])
        + Fs(m + 1) * np.array([[0, 0], [0.5 * (2 + z) * z, a]])
        - Fs(m) * np.array([[0, 0], [a, 1]])
    )
    B1 = (
        E(m + 2) * np.array([[0, 0], [-0.5, 0]])
        + E(m + 1) * np.array([[1, 0], [0, 0]])
        + Fs(m + 1) * np.array([[0, 0], [0.5 * a, 1]])
    )
    f11 = 2 / (a + sp)
    f22 = 2 / (a + sm)
    f21 = (4 + (a - sp) * (a - sm - sp)) / ((a + sm) * (a + sp))
    F = np.array([[f11, 0], [f21, f22]], dtype=complex)
    return {"E": E(m), "F_seq": Fs(m), "V": V.astype(complex), "B1": B1.astype(complex), "F": F}


def example1_true_offdiagonal(z):
    """(2,1) entry of the fixed point: f11 f22 / (1 + f11 f22)."""
    a = 1 + complex(z)
    f11 = 2 / (a + _decaying_sqrt(a, a * a + 4))
    f22 = 2 / (a + _decaying_sqrt(a, a * a - 4))
    return f11 * f22 / (1 + f11 * f22)


def reconcile_example1(fam: RecurrenceFamily, zs, m_range=range(0, 8), tol=1e-8):
    """Find the index offset o in {-1, 0, 1} with printed V_m = V_{m+o} (per entry).

    Returns {"V": {(i,j): offset or None}, "B1": {...}} where B1 is compared
    with B^(1)_{m-1+o}.
    """
    mmax = max(m_range) + 3
    out = {}
    for key in ("V", "B1"):
        res = {}
        for i in range(2):
            for j in range(2):
                found = None
                for o in (0, 1, -1):
                    ok = True
                    for z in zs:
                        Vt = V_values(fam, z, mmax)[0]
                        Wt = W_values(fam, z, mmax)[0]
                        for m in m_range:
                            idx = m + o
                            if idx < 0:
                                continue
                            printed = example1_closed_forms(m, z)[key][i, j]
                            true = (Vt if key == "V" else Wt)[idx][i, j]
                            if abs(printed - true) > tol * (1 + abs(true)):
                                ok = False
                                break
                        if not ok:
                            break
                    if ok:
                        found = o
                        break
                res[(i, j)] = found
        out[key] = res
    return out
