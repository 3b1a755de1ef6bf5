"""Three-term matrix recurrences and the polynomial families they generate.

Left family:   z V_m = A_m V_{m+1} + B_m V_m + C_m V_{m-1},  V_0 = I, V_{-1} = 0
Right family:  z G_n = G_{n+1} C_{n+1} + G_n B_n + G_{n-1} A_{n-1},  G_0 = G0

The associated (numerator) polynomials use the same recurrences with
shifted starting data. Lists returned for them are indexed by the
polynomial's own subscript: ``generate_B1(...)[m]`` is B^(1)_m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .polymat import MatrixPolynomial, as_matrix


class FamilyError(ValueError):
    """A coefficient triple violates a structural invariant."""


class VerificationError(RuntimeError):
    """Two independent computations of the same object disagree."""


Triple = tuple


@dataclass(frozen=True, eq=False)
class RecurrenceFamily:
    """Coefficient provider m -> (A_m, B_m, C_m) plus normalisation data.

    A_m must be lower triangular and C_m upper triangular, both
    non-singular. ``limits`` holds the Nevai limits (A, B, C) when known;
    convergence towards them is spot-checked beyond ``nevai_from``.
    ``length`` bounds tabulated providers (None means unbounded).
    """

    dim: int
    coeff_provider: Callable[[int], Triple]
    limits: Optional[Triple] = None
    G0: Optional[np.ndarray] = None
    nevai_from: int = 0
    length: Optional[int] = None
    Delta0: Optional[np.ndarray] = None
    Theta0: Optional[np.ndarray] = None
    check_upto: int = 1000
    name: str = "family"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g0 = np.eye(self.dim, dtype=complex) if self.G0 is None else as_matrix(self.G0, self.dim)
        object.__setattr__(self, "G0", g0)
        if self.limits is not None:
            lim = tuple(as_matrix(x, self.dim) for x in self.limits)
            object.__setattr__(self, "limits", lim)
        if np.linalg.cond(g0) > 1e14:
            raise FamilyError("G0 must be non-singular")
        self.validate()

    # construction helpers
    @classmethod
    def constant(cls, A, B, C, G0=None, name="constant", **kw):
        A, B, C = (as_matrix(x) for x in (A, B, C))
        n = A.shape[0]
        trip = (as_matrix(A, n), as_matrix(B, n), as_matrix(C, n))
        return cls(n, lambda m: trip, limits=trip, G0=G0, name=name, **kw)

    @classmethod
    def tabulated(cls, As, Bs, Cs, G0=None, limits=None, name="tabulated", **kw):
        As = [as_matrix(a) for a in As]
        n = As[0].shape[0]
        Bs = [as_matrix(b, n) for b in Bs]
        Cs = [as_matrix(c, n) for c in Cs]
        length = min(len(As), len(Bs), len(Cs))

        def provider(m):
            if m >= length:
                raise IndexError(f"tabulated family has no coefficients at m={m}")
            return As[m], Bs[m], Cs[m]

        return cls(n, provider, limits=limits, G0=G0, length=length, name=name, **kw)

    @property
    def is_constant(self):
        if self.limits is None:
            return False
        return all(
            np.array_equal(x, y)
            for k in range(3)
            for x, y in [(self.coeffs(k)[i], self.limits[i]) for i in range(3)]
        )

    def coeffs(self, m):
        """(A_m, B_m, C_m) as complex arrays."""
        if m < 0:
            raise IndexError("coefficient index must be non-negative")
        hit = self._cache.get(m)
        if hit is None:
            A, B, C = self.coeff_provider(m)
            hit = tuple(as_matrix(x, self.dim) for x in (A, B, C))
            self._cache[m] = hit
        return hit

    def A_inv(self, m):
        key = ("Ainv", m)
        if key not in self._cache:
            self._cache[key] = np.linalg.inv(self.coeffs(m)[0])
        return self._cache[key]

    def C_inv(self, m):
        key = ("Cinv", m)
        if key not in self._cache:
            self._cache[key] = np.linalg.inv(self.coeffs(m)[2])
        return self._cache[key]

    def available(self, m):
        return self.length is None or m < self.length

    def validate(self, upto=None):
        """Check triangularity, invertibility and Nevai monotonicity."""
        upto = self.check_upto if upto is None else upto
        if self.length is not None:
            upto = min(upto, self.length)
        prev = None
        for m in range(upto):
            A, B, C = self.coeffs(m)
            scale = 1e-12 * (1.0 + max(np.abs(A).max(), np.abs(C).max()))
            if np.abs(np.triu(A, 1)).max(initial=0.0) > scale:
                raise FamilyError(f"A_{m} is not lower triangular")
            if np.abs(np.tril(C, -1)).max(initial=0.0) > scale:
                raise FamilyError(f"C_{m} is not upper triangular")
            if np.min(np.abs(np.diag(A))) == 0 or np.linalg.cond(A) > 1e14:
                raise FamilyError(f"A_{m} is singular")
            if np.min(np.abs(np.diag(C))) == 0 or np.linalg.cond(C) > 1e14:
                raise FamilyError(f"C_{m} is singular")
            if self.limits is not None and m >= self.nevai_from:
                dist = np.array([np.linalg.norm(x - y, 2) for x, y in zip((A, B, C), self.limits)])
                if prev is not None and np.any(dist > prev * (1 + 1e-9) + 1e-15):
                    raise FamilyError(f"coefficients move away from the declared limits at m={m}")
                prev = dist


# polynomial generation -----------------------------------------------------


def _left_run(fam, x_prev, x_cur, start, count):
    """Run the left recurrence from index `start`; returns `count` new polys."""
    n = fam.dim
    out = []
    for k in range(start, start + count):
        A, B, C = fam.coeffs(k)
        d = x_cur.shape[0]
        nxt = np.zeros((d + 1, n, n), dtype=complex)
        nxt[1:] += x_cur
        nxt[:d] -= B @ x_cur
        nxt[: x_prev.shape[0]] -= C @ x_prev
        nxt = fam.A_inv(k) @ nxt
        out.append(nxt)
        x_prev, x_cur = x_cur, nxt
    return out


def _right_run(fam, y_prev, y_cur, start, count):
    n = fam.dim
    out = []
    for k in range(start, start + count):
        A_prev = fam.coeffs(k - 1)[0] if k >= 1 else np.zeros((n, n), complex)
        B = fam.coeffs(k)[1]
        d = y_cur.shape[0]
        nxt = np.zeros((d + 1, n, n), dtype=complex)
        nxt[1:] += y_cur
        nxt[:d] -= y_cur @ B
        nxt[: y_prev.shape[0]] -= y_prev @ A_prev
        nxt = nxt @ fam.C_inv(k + 1)
        out.append(nxt)
        y_prev, y_cur = y_cur, nxt
    return out


def _wrap(arrs):
    return [MatrixPolynomial(a) for a in arrs]


def generate_V(fam: RecurrenceFamily, m_max: int):
    """V_0..V_{m_max}."""
    n = fam.dim
    I = np.eye(n, dtype=complex)[None]
    try:
        rest = _left_run(fam, np.zeros((1, n, n), complex), I, 0, m_max)
    except np.linalg.LinAlgError as exc:
        raise FamilyError(f"singular A_m while generating V: {exc}") from exc
    return _wrap([I] + rest)


def generate_B1(fam: RecurrenceFamily, m_max: int):
    """B^(1)_0..B^(1)_{m_max}; B^(1)_{-1} = 0, B^(1)_0 = A_0^{-1}."""
    n = fam.dim
    first = fam.A_inv(0)[None]
    rest = _left_run(fam, np.zeros((1, n, n), complex), first, 1, m_max)
    return _wrap([first] + rest)


def generate_G(fam: RecurrenceFamily, m_max: int):
    """G_0..G_{m_max} from the right-sided recurrence."""
    n = fam.dim
    g0 = fam.G0[None]
    rest = _right_run(fam, np.zeros((1, n, n), complex), g0, 0, m_max)
    return _wrap([g0] + rest)


def generate_G1(fam: RecurrenceFamily, m_max: int):
    """G^(1)_0..G^(1)_{m_max}; G^(1)_{-1} = 0, G^(1)_0 = C_1^{-1}."""
    n = fam.dim
    first = fam.C_inv(1)[None]
    rest = _right_run(fam, np.zeros((1, n, n), complex), first, 1, m_max)
    return _wrap([first] + rest)


def leading_coefficients(polys):
    """Top coefficient of each p_m, padding when a stored degree is short.

    Returns (list of matrices, list of indices whose top coefficient is singular).
    """
    lead, flagged = [], []
    for m, p in enumerate(polys):
        if p.degree < m:
            raise FamilyError(f"polynomial {m} has degree {p.degree} < {m}")
        top = p.coeffs[m]
        if np.any(p.coeffs[m + 1 :]):
            raise FamilyError(f"polynomial {m} has degree above {m}")
        lead.append(top)
        if np.linalg.matrix_rank(top) < top.shape[0]:
            flagged.append(m)
    return lead, flagged


# values at a point ----------------------------------------------------------


def left_values(fam, z, m_max, init=None, first=0, deriv=0):
    """Values (and z-derivatives) of a left-recurrence solution at z.

    The solution X has constant data (X_{first-1}, X_first) = `init` and
    obeys the left recurrence for indices >= `first`. Default is V
    (X_{-1} = 0, X_0 = I). Returns shape (deriv+1, m_max+1, N, N) holding
    X_0..X_{m_max}.
    """
    n = fam.dim
    I = np.eye(n, dtype=complex)
    if init is None:
        init = (np.zeros((n, n)), I)
    out = np.zeros((deriv + 1, m_max + 1, n, n), dtype=complex)
    prev = np.zeros((deriv + 1, n, n), complex)
    cur = np.zeros((deriv + 1, n, n), complex)
    prev[0], cur[0] = init
    if first >= 1:
        out[0, first - 1] = init[0]
    if first <= m_max:
        out[:, first] = cur
    for k in range(first, m_max):
        A, B, C = fam.coeffs(k)
        Ai = fam.A_inv(k)
        nxt = np.empty_like(cur)
        for j in range(deriv + 1):
            t = (z * I - B) @ cur[j] - C @ prev[j]
            if j:
                t = t + j * cur[j - 1]
            nxt[j] = Ai @ t
        prev, cur = cur, nxt
        out[:, k + 1] = cur
    return out


def right_values(fam, z, m_max, init=None, first=0, deriv=0):
    """Right-recurrence analogue of `left_values` (default solution G)."""
    n = fam.dim
    I = np.eye(n, dtype=complex)
    if init is None:
        init = (np.zeros((n, n)), fam.G0)
    out = np.zeros((deriv + 1, m_max + 1, n, n), dtype=complex)
    prev = np.zeros((deriv + 1, n, n), complex)
    cur = np.zeros((deriv + 1, n, n), complex)
    prev[0], cur[0] = init
    if first >= 1:
        out[0, first - 1] = init[0]
    if first <= m_max:
        out[:, first] = cur
    zero = np.zeros((n, n), complex)
    for k in range(first, m_max):
        B = fam.coeffs(k)[1]
        A_prev = fam.coeffs(k - 1)[0] if k >= 1 else zero
        Ci = fam.C_inv(k + 1)
        nxt = np.empty_like(cur)
        for j in range(deriv + 1):
            t = cur[j] @ (z * I - B) - prev[j] @ A_prev
            if j:
                t = t + j * cur[j - 1]
            nxt[j] = t @ Ci
        prev, cur = cur, nxt
        out[:, k + 1] = cur
    return out


def V_values(fam, z, m_max, deriv=0):
    """V_0(z)..V_{m_max}(z); shape (deriv+1, m_max+1, N, N)."""
    return left_values(fam, z, m_max, deriv=deriv)


def W_values(fam, z, m_max, deriv=0):
    """W_m = B^(1)_{m-1} for m = 0..m_max (W_0 = 0, W_1 = A_0^{-1})."""
    n = fam.dim
    return left_values(fam, z, m_max, init=(np.zeros((n, n)), fam.A_inv(0)), first=1, deriv=deriv)


def G_values(fam, z, m_max, deriv=0):
    return right_values(fam, z, m_max, deriv=deriv)


def H_values(fam, z, m_max, deriv=0):
    """H_n = G^(1)_{n-1} for n = 0..m_max (H_0 = 0, H_1 = C_1^{-1})."""
    n = fam.dim
    return right_values(fam, z, m_max, init=(np.zeros((n, n)), fam.C_inv(1)), first=1, deriv=deriv)


def left_ratios(fam, z, m_max, with_derivative=False):
    """R_k = V_{k+1}(z) V_k(z)^{-1} for k = 0..m_max-1 via the Riccati form.

    R_k = A_k^{-1}((z - B_k) - C_k R_{k-1}^{-1}); this avoids the overflow
    and cancellation of forming V_k itself. With `with_derivative`, also
    returns dR_k/dz.
    """
    n = fam.dim
    I = np.eye(n, dtype=complex)
    R = np.zeros((m_max, n, n), complex)
    dR = np.zeros((m_max, n, n), complex)
    Rinv = None
    for k in range(m_max):
        A, B, C = fam.coeffs(k)
        Ai = fam.A_inv(k)
        if k == 0:
            R[k] = Ai @ (z * I - B)
            dR[k] = Ai
        else:
            R[k] = Ai @ ((z * I - B) - C @ Rinv)
            dR[k] = Ai @ (I + C @ Rinv @ dR[k - 1] @ Rinv)
        Rinv = np.linalg.inv(R[k])
    return (R, dR) if with_derivative else R


def right_ratios(fam, z, m_max):
    """S_k = G_k(z)^{-1} G_{k+1}(z) for k = 0..m_max-1 via the Riccati form."""
    n = fam.dim
    I = np.eye(n, dtype=complex)
    S = np.zeros((m_max, n, n), complex)
    Sinv = None
    for k in range(m_max):
        B = fam.coeffs(k)[1]
        Ci = fam.C_inv(k + 1)
        if k == 0:
            S[k] = (z * I - B) @ Ci
        else:
            A_prev = fam.coeffs(k - 1)[0]
            S[k] = ((z * I - B) - Sinv @ A_prev) @ Ci
        Sinv = np.linalg.inv(S[k])
    return S


def log_det_derivative(fam, m, z):
    """(det V_m)'(z) / det V_m(z) = sum_k tr(R_k^{-1} R_k')."""
    R, dR = left_ratios(fam, z, m, with_derivative=True)
    return complex(sum(np.trace(np.linalg.solve(R[k], dR[k])) for k in range(m)))


def liouville_residual(fam, m, z, relative=True):
    """Defect of B^(1)_m G0^{-1} G_m - V_{m+1} G^(1)_{m-1} = A_m^{-1} at z.

    G0^{-1} G_m is the right family normalised to G_0 = I. With
    `relative`, the defect is divided by the size of the two products.
    """
    V = V_values(fam, z, m + 1)[0]
    W = W_values(fam, z, m + 1)[0]
    G = G_values(fam, z, m)[0]
    H = H_values(fam, z, m)[0]
    t1 = W[m + 1] @ np.linalg.solve(fam.G0, G[m])
    t2 = V[m + 1] @ H[m]
    Ai = fam.A_inv(m)
    r = np.linalg.norm(t1 - t2 - Ai, 2)
    if relative:
        r /= max(np.linalg.norm(t1, 2) + np.linalg.norm(t2, 2) + np.linalg.norm(Ai, 2), 1e-300)
    return float(r)


# initial-condition transformation --------------------------------------------


@dataclass(frozen=True)
class InitialTriple:
    P: np.ndarray
    M: np.ndarray
    Q: np.ndarray


def transform_initial_conditions(fam: RecurrenceFamily, t: InitialTriple, m_max: int, tol=1e-8):
    """Solutions of the constant recurrence with V^_0 = P, V^_1 = M + Qz.

    Returns (Vhat, What) with What[m] = B^^(1)_{m-1} (What[0] = 0,
    What[1] = Q). Both lists are computed by direct recurrence and by the
    closed combination V^_m = V_m P + B^(1)_{m-1} (AM + BP + (AQ - P) z),
    B^^(1)_{m-1} = B^(1)_{m-1} A Q, and the two must agree.
    """
    if not fam.is_constant:
        raise FamilyError("initial-condition transform needs a constant family")
    n = fam.dim
    A, B, C = fam.limits
    P, M, Q = (as_matrix(x, n) for x in (t.P, t.M, t.Q))
    if np.linalg.cond(P) > 1e14 or np.linalg.cond(Q) > 1e14:
        raise FamilyError("P and Q must be non-singular")

    v1 = np.stack([M, Q])
    direct_V = [P[None], v1] + _left_run(fam, P[None], v1, 1, max(m_max - 1, 0))
    direct_W = [np.zeros((1, n, n), complex), Q[None]]
    direct_W += _left_run(fam, direct_W[0], direct_W[1], 1, max(m_max - 1, 0))
    direct_V, direct_W = _wrap(direct_V[: m_max + 1]), _wrap(direct_W[: m_max + 1])

    V = generate_V(fam, m_max)
    B1 = generate_B1(fam, max(m_max - 1, 0))
    W = [MatrixPolynomial.zero(n)] + B1[: m_max]
    beta = MatrixPolynomial(np.stack([A @ M + B @ P, A @ Q - P]))
    closed_V = [V[m].rmul(P) + (W[m] @ beta) for m in range(m_max + 1)]
    closed_W = [W[m].rmul(A @ Q) for m in range(m_max + 1)]

    for m in range(m_max + 1):
        for name, a, b in (("V", direct_V[m], closed_V[m]), ("B1", direct_W[m], closed_W[m])):
            d = max(a.degree, b.degree) + 1
            ca = np.zeros((d, n, n), complex)
            cb = np.zeros((d, n, n), complex)
            ca[: a.degree + 1] = a.coeffs
            cb[: b.degree + 1] = b.coeffs
            err = np.abs(ca - cb).max() / (1.0 + np.abs(ca).max())
            if err > tol:
                raise VerificationError(f"transformed {name} routes disagree at m={m}: {err:.3e}")
    return direct_V, direct_W


def hatted_markov_limit(F0, fam: RecurrenceFamily, t: InitialTriple, z):
    """Limit of V^_m(z)^{-1} B^^(1)_{m-1}(z) given F0 = lim V_m^{-1} B^(1)_{m-1}.

    Equals (P + F0 beta(z))^{-1} F0 A Q with beta(z) = AM + BP + (AQ - P)z.
    """
    A, B, C = fam.limits
    P, M, Q = t.P, t.M, t.Q
    beta = A @ M + B @ P + (A @ Q - P) * z
    return np.linalg.solve(P + F0 @ beta, F0 @ A @ Q)
