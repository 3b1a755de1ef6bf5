"""Complex matrix polynomials, scalar polynomials and polynomial determinants."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_CLUSTER_TOL = 1e-8


def as_matrix(a, dim=None):
    """Coerce `a` to a square complex ndarray (scalars become 1x1)."""
    arr = np.atleast_2d(np.asarray(a, dtype=complex))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr


def matrices_close(a, b, atol):
    """Entrywise comparison with an explicit absolute tolerance."""
    return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) <= atol))


def _trim(coeffs):
    last = len(coeffs) - 1
    while last > 0 and not np.any(coeffs[last]):
        last -= 1
    return coeffs[: last + 1]


@dataclass(frozen=True, eq=False)
class MatrixPolynomial:
    """N x N matrix polynomial; ``coeffs[j]`` multiplies ``z**j``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise ValueError(f"bad coefficient array shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, mat):
        return cls(as_matrix(mat)[None])

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros((1, dim, dim), dtype=complex))

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim, dtype=complex)[None])

    @property
    def dim(self):
        return self.coeffs.shape[1]

    @property
    def degree(self):
        """Formal degree (length of the stored list minus one)."""
        return self.coeffs.shape[0] - 1

    def normalize(self):
        """Drop exactly-zero leading coefficients."""
        return MatrixPolynomial(_trim(self.coeffs))

    def leading(self):
        return self.coeffs[-1]

    def __call__(self, z):
        return eval_poly(self, z)

    def __add__(self, other):
        d = max(self.degree, other.degree) + 1
        out = np.zeros((d, self.dim, self.dim), dtype=complex)
        out[: self.degree + 1] += self.coeffs
        out[: other.degree + 1] += other.coeffs
        return MatrixPolynomial(out)

    def __neg__(self):
        return MatrixPolynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def lmul(self, mat):
        """``mat @ self`` for a constant matrix."""
        return MatrixPolynomial(np.einsum("ij,kjl->kil", as_matrix(mat), self.coeffs))

    def rmul(self, mat):
        """``self @ mat`` for a constant matrix."""
        return MatrixPolynomial(self.coeffs @ as_matrix(mat))

    def shift(self):
        """Multiply by z."""
        out = np.zeros((self.degree + 2, self.dim, self.dim), dtype=complex)
        out[1:] = self.coeffs
        return MatrixPolynomial(out)

    def __matmul__(self, other):
        d = self.degree + other.degree + 1
        out = np.zeros((d, self.dim, self.dim), dtype=complex)
        for i, a in enumerate(self.coeffs):
            out[i : i + other.degree + 1] += a @ other.coeffs
        return MatrixPolynomial(out)


@dataclass(frozen=True, eq=False)
class ScalarPolynomial:
    """Complex scalar polynomial; ``coeffs[j]`` multiplies ``z**j``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.array(self.coeffs, dtype=complex))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("scalar polynomial needs a 1-d coefficient list")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.coeffs.size - 1

    def normalize(self):
        return ScalarPolynomial(_trim(self.coeffs))

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def derivative(self, k=1):
        if k >= self.coeffs.size:
            return ScalarPolynomial([0.0])
        return ScalarPolynomial(np.polynomial.polynomial.polyder(self.coeffs, k))


def eval_poly(p: MatrixPolynomial, z):
    """Horner evaluation of a matrix polynomial at a complex scalar."""
    z = complex(z)
    acc = p.coeffs[-1].copy()
    for c in p.coeffs[-2::-1]:
        acc = acc * z + c
    return acc


def derivative(p: MatrixPolynomial, k=1):
    """k-th formal derivative."""
    if k < 0:
        raise ValueError("derivative order must be non-negative")
    if k == 0:
        return p
    if k > p.degree:
        return MatrixPolynomial.zero(p.dim)
    j = np.arange(k, p.degree + 1)
    fall = np.array([factorial(i) // factorial(i - k) for i in j], dtype=float)
    return MatrixPolynomial(p.coeffs[k:] * fall[:, None, None])


def _adjugate(mats):
    """Adjugates of a stack of square matrices via cofactors."""
    n = mats.shape[-1]
    if n == 1:
        return np.ones_like(mats)
    out = np.empty_like(mats)
    idx = np.arange(n)
    for i in range(n):
        for j in range(n):
            minor = mats[:, idx != i][:, :, idx != j]
            # adj[j, i] is the (i, j) cofactor
            out[:, j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


def _circle_interpolate(values, radius):
    """Coefficients of the polynomial taking `values` at radius*roots of unity."""
    k = values.shape[0]
    c = np.fft.fft(values, axis=0) / k
    scale = radius ** (-np.arange(k, dtype=float))
    return c * scale.reshape((-1,) + (1,) * (values.ndim - 1))


def _det_radius(p: MatrixPolynomial):
    # Interpolate once on the unit circle and move to the largest root
    # modulus, where sampled values bound the polynomial on the root region.
    k = p.degree * p.dim + 1
    if k == 1:
        return 1.0
    w = np.exp(2j * np.pi * np.arange(k) / k)
    c = _circle_interpolate(np.array([np.linalg.det(eval_poly(p, x)) for x in w]), 1.0)
    c = c.copy()
    c[-1] = np.linalg.det(p.coeffs[-1])
    if c[-1] == 0:
        return 1.0
    r = np.abs(np.polynomial.polynomial.polyroots(c)).max()
    return float(np.clip(r, 1e-3, 1e3))


def _det_expand(entries, rows, cols, memo):
    """Laplace expansion in coefficient space; entries[i][j] are ascending coefficient arrays."""
    if not rows:
        return np.ones(1, dtype=complex)
    key = (rows, cols)
    hit = memo.get(key)
    if hit is not None:
        return hit
    r, rest = rows[0], rows[1:]
    total = np.zeros(1, dtype=complex)
    for k, c in enumerate(cols):
        e = entries[r][c]
        if not np.any(e):
            continue
        sub = _det_expand(entries, rest, cols[:k] + cols[k + 1:], memo)
        term = np.convolve(e, sub)
        if k % 2:
            term = -term
        if term.size > total.size:
            total = np.concatenate([total, np.zeros(term.size - total.size, complex)])
        total[: term.size] += term
    memo[key] = total
    return total


def _pad(c, size):
    out = np.zeros(size, dtype=complex)
    out[: min(size, c.size)] = c[:size]
    return out


def det_and_adjugate(p: MatrixPolynomial, radius=None, method="expand"):
    """det(p) and Adj(p) as scalar polynomials with p Adj(p) = det(p) I.

    method="expand" multiplies coefficient arrays along a memoised Laplace
    expansion (exact up to rounding of the products, cost ~ 2^N N^2 deg^2).
    method="interpolate" samples deg*N + 1 points on a circle; `radius`
    defaults to the largest root modulus of det(p) from a first
    unit-circle pass. It loses digits when |det| varies strongly across
    the circle and is kept for comparison.
    """
    n, d = p.dim, p.degree
    if p.coeffs.shape[1:] != (n, n):
        raise ValueError("dimension mismatch")
    if method == "expand":
        entries = [[p.coeffs[:, i, j] for j in range(n)] for i in range(n)]
        memo = {}
        allc = tuple(range(n))
        det_c = _pad(_det_expand(entries, allc, allc, memo), d * n + 1)
        adj_deg = d * (n - 1)
        adj = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                rows = tuple(r for r in range(n) if r != j)
                cols = tuple(c for c in range(n) if c != i)
                cof = _det_expand(entries, rows, cols, memo)
                adj[i][j] = ScalarPolynomial(((-1) ** (i + j)) * _pad(cof, adj_deg + 1))
        return ScalarPolynomial(det_c), adj
    if method != "interpolate":
        raise ValueError(f"unknown method {method!r}")
    if radius is None:
        radius = _det_radius(p)
    k = d * n + 1
    w = radius * np.exp(2j * np.pi * np.arange(k) / k)
    vals = np.array([eval_poly(p, x) for x in w])
    det_c = _circle_interpolate(np.linalg.det(vals), radius)
    adj_c = _circle_interpolate(_adjugate(vals), radius)
    adj_deg = d * (n - 1)
    adj = [[ScalarPolynomial(adj_c[: adj_deg + 1, i, j]) for j in range(n)] for i in range(n)]
    return ScalarPolynomial(det_c), adj


def cluster_roots(roots, tol=DEFAULT_CLUSTER_TOL):
    """Merge roots closer than tol*(1+|r|); returns [(mean, count)] sorted."""
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return []
    dist = np.abs(roots[:, None] - roots[None, :])
    scale = 1.0 + np.maximum(np.abs(roots)[:, None], np.abs(roots)[None, :])
    ncomp, labels = connected_components(csr_matrix(dist <= tol * scale), directed=False)
    out = []
    for c in range(ncomp):
        members = roots[labels == c]
        out.append((complex(members.mean()), int(members.size)))
    out.sort(key=lambda t: (round(t[0].real, 12), round(t[0].imag, 12)))
    return out


def scalar_roots(q: ScalarPolynomial, tol=DEFAULT_CLUSTER_TOL):
    """Roots with multiplicities from the companion matrix eigenvalues."""
    q = q.normalize()
    if q.degree == 0 and q.coeffs[0] == 0:
        raise ValueError("zero polynomial has no finite root set")
    if q.degree < 1:
        raise ValueError("polynomial must have degree >= 1")
    comp = np.polynomial.polynomial.polycompanion(q.coeffs)
    return cluster_roots(np.linalg.eigvals(comp), tol)


def aberth_refine(roots, logder, maxiter=500, tol=1e-14):
    """Simultaneous Aberth-Ehrlich refinement of all roots of a polynomial.

    `logder(z)` must return q'(z)/q(z). Points where it fails with
    LinAlgError (exact hits) are left in place.
    """
    z = np.array(roots, dtype=complex)
    for _ in range(maxiter):
        worst = 0.0
        for k in range(z.size):
            try:
                # iterates may pass near zeros of intermediate factors
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    ld = logder(z[k])
            except (np.linalg.LinAlgError, ZeroDivisionError):
                continue
            others = np.delete(z, k)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = 1.0 / (ld - np.sum(1.0 / (z[k] - others)))
            if not np.isfinite(step):
                continue
            z[k] -= step
            worst = max(worst, abs(step) / (1.0 + abs(z[k])))
        if worst < tol:
            break
    return z
