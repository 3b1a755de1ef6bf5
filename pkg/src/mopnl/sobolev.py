"""Discrete Sobolev inner product <f,g>_S = int f g dmu + lam f'(0) g'(0) and its 2x2 packing.

Multiplication by x^2 is symmetric for this inner product, so Sobolev
orthonormal polynomials satisfy a five-term recurrence in x^2; grouping
them in pairs (p_2m, p_2m+1) turns it into a 2x2 three-term recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class GramBreakdown(RuntimeError):
    """The Sobolev Gram matrix is degenerate at some degree."""


def lebesgue_moments(count):
    """Moments of dx on [-1, 1] as exact fractions."""
    return [Fraction(2, k + 1) if k % 2 == 0 else Fraction(0) for k in range(count)]


def _as_fraction(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def _poly_inner(moments, lam, f, g):
    """Exact <f, g>_S for coefficient lists (ascending) of Fractions."""
    total = Fraction(0)
    for i, a in enumerate(f):
        if a:
            for j, b in enumerate(g):
                if b:
                    total += a * b * moments[i + j]
    fp = f[1] if len(f) > 1 else Fraction(0)
    gp = g[1] if len(g) > 1 else Fraction(0)
    return total + lam * fp * gp


def _sub(f, c, g):
    out = list(f) + [Fraction(0)] * max(0, len(g) - len(f))
    for i, b in enumerate(g):
        out[i] -= c * b
    return out


def sobolev_monic(moments, lam, n_max):
    """Monic Sobolev-orthogonal q_0..q_{n_max} and their squared norms, exactly."""
    mom = [_as_fraction(m) for m in moments]
    if len(mom) < 2 * n_max + 1:
        raise ValueError(f"need {2 * n_max + 1} moments, got {len(mom)}")
    lam = _as_fraction(lam)
    qs, norms = [], []
    for n in range(n_max + 1):
        q = [Fraction(0)] * n + [Fraction(1)]
        for k in range(n):
            q = _sub(q, _poly_inner(mom, lam, q, qs[k]) / norms[k], qs[k])
        nn = _poly_inner(mom, lam, q, q)
        if nn == 0:
            raise GramBreakdown(f"Sobolev Gram matrix is degenerate at n={n}")
        qs.append(q)
        norms.append(nn)
    return qs, norms


@dataclass
class SobolevPacking:
    """Orthonormal p_n (float coefficient rows), five-term coefficients and 2x2 blocks."""

    p: np.ndarray  # (n_max+3, n_max+5) ascending coefficients of p_0..p_{n_max+2}
    five_term: dict  # (k, i) -> c_{k,i} = <x^2 p_k, p_{k-i}>_S
    A_blocks: list
    B_blocks: list
    report: dict


def _inner_float(moments, lam, f, g):
    mom = np.asarray([float(m) for m in moments])
    total = f @ np.array([[mom[i + j] for j in range(len(g))] for i in range(len(f))]) @ g
    return total + float(lam) * f[1] * g[1]


def sobolev_pack(measure_moments, lam, n_max):
    """Sobolev orthonormal polynomials, five-term coefficients and packed 2x2 blocks.

    A~_m = [[c_{2m+2,2}, 0], [c_{2m+2,1}, c_{2m+3,2}]],
    B~_m = [[c_{2m,0}, c_{2m+1,1}], [c_{2m+1,1}', c_{2m+1,0}]],
    where the two off-diagonal entries of B~_m are computed independently
    (c_{2m+1,1} and <x^2 p_2m, p_2m+1>_S) so that symmetry is a check.
    Blocks are assembled for every m with 2m+3 <= n_max.
    """
    mom = [_as_fraction(m) for m in measure_moments]
    need = 2 * (n_max + 5)
    if len(mom) < need:
        raise ValueError(f"need {need} moments for n_max={n_max}")
    qs, norms = sobolev_monic(mom, lam, n_max + 2)
    size = n_max + 3
    p = np.zeros((size, size + 2))
    for n, (q, nn) in enumerate(zip(qs, norms)):
        s = float(nn) ** 0.5
        p[n, : len(q)] = [float(c) / s for c in q]
    mf = [float(m) for m in mom]
    lamf = float(lam)

    def x2(f):
        return np.concatenate([[0.0, 0.0], f[:-2]])

    def ip(f, g):
        k = np.arange(len(f))
        G = np.array(mf[: 2 * len(f)])[k[:, None] + k[None, :]]
        return f @ G @ g + lamf * f[1] * g[1]

    five = {}
    residual = []
    for k in range(n_max + 1):
        xk = x2(p[k])
        proj = np.zeros_like(xk)
        for i in range(-2, 3):
            j = k - i
            if 0 <= j < size:
                c = ip(xk, p[j])
                five[(k, i)] = c
                proj += c * p[j]
        rem = xk - proj
        residual.append(float(np.sqrt(abs(ip(rem, rem)))))

    A_blocks, B_blocks, sym = [], [], []
    m = 0
    while 2 * m + 3 <= n_max + 2:
        c = lambda k, i: five[(k, i)] if (k, i) in five else ip(x2(p[k]), p[k - i])
        A = np.array([[c(2 * m + 2, 2), 0.0], [c(2 * m + 2, 1), c(2 * m + 3, 2)]])
        b_up = c(2 * m + 1, 1)
        b_low = ip(x2(p[2 * m]), p[2 * m + 1])
        B = np.array([[c(2 * m, 0), b_up], [b_low, c(2 * m + 1, 0)]])
        A_blocks.append(A)
        B_blocks.append(B)
        sym.append(abs(b_up - b_low))
        m += 1
    report = {
        "five_term_residual": residual,
        "symmetry_defect": sym,
        "max_residual": max(residual),
        "max_symmetry_defect": max(sym) if sym else 0.0,
    }
    return SobolevPacking(p, five, A_blocks, B_blocks, report)


def packed_vectors(pack: SobolevPacking, m):
    """Rows p_2m and p_2m+1 (the vector polynomial B~_m) as coefficient rows."""
    return pack.p[2 * m], pack.p[2 * m + 1]


def vector_orthogonality(measure_moments, lam, pack: SobolevPacking, m):
    """Max over k < m of |(x^{2k} U~)(B~_m)| with U~ = (u1, u2),
    u1(f) = int f dmu, u2(f) = int x f dmu + lam f'(0)."""
    mf = np.array([float(x) for x in measure_moments])
    worst = 0.0
    for k in range(m):
        for row in packed_vectors(pack, m):
            f = np.concatenate([np.zeros(2 * k), row])
            u1 = f @ mf[: f.size]
            u2 = f @ mf[1 : f.size + 1] + lam * (f[1] if f.size > 1 else 0.0)
            worst = max(worst, abs(u1), abs(u2))
    return worst
