"""Finite-m experiments for the ratio, inverse-decay and perturbed-family limit theorems.

Every experiment returns a ConvergenceTable of (m, error) rows. Quantities
that grow or decay geometrically in m (V_m, G_m and their inverses) are
handled through the Riccati ratios V_{k+1} V_k^{-1} and G_k^{-1} G_{k+1}
so that m = 200 stays within floating-point range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac import PerturbedFamily, perturbed_G, perturbed_V, phi_closed_form
from .markov import (
    ConvergenceFailure,
    MarkovEvaluator,
    approximant_F,
    continuation,
    derivative_F,
    fixed_point_F,
)
from .recurrence import (
    RecurrenceFamily,
    generate_G,
    generate_V,
    left_ratios,
    right_ratios,
)
from .spectral import gershgorin_bound, truncated_jacobi


class ExperimentRefused(RuntimeError):
    """The experiment's hypotheses fail for this family (reported, not an error)."""


@dataclass
class ConvergenceTable:
    """Rows (m, error) plus optional extra columns and metadata."""

    experiment: str
    z: object  # complex or the string "coefficient-level"
    rows: list = field(default_factory=list)  # [(m, error)]
    gate: float | None = None
    extra: dict = field(default_factory=dict)  # column name -> list aligned with rows
    meta: dict = field(default_factory=dict)

    def add(self, m, error, **cols):
        if self.rows and m <= self.rows[-1][0]:
            raise ValueError("rows must be strictly increasing in m")
        if not error >= 0:
            raise ValueError(f"error must be a non-negative number, got {error}")
        self.rows.append((int(m), float(error)))
        for k, v in cols.items():
            self.extra.setdefault(k, []).append(v)

    @property
    def ms(self):
        return [m for m, _ in self.rows]

    @property
    def errors(self):
        return np.array([e for _, e in self.rows])

    @property
    def final_error(self):
        return self.rows[-1][1] if self.rows else None

    def error_at(self, m):
        for mm, e in self.rows:
            if mm == m:
                return e
        raise KeyError(m)

    def monotone_tail(self, start=20, slack=10.0, floor=1e-13):
        """True when the final error is within `slack` of the best error seen from m >= start."""
        tail = [e for m, e in self.rows if m >= start]
        if not tail:
            return True
        return tail[-1] <= max(slack * min(tail), floor)

    @property
    def passed(self):
        if self.gate is None or not self.rows:
            return True
        return bool(self.final_error < self.gate)

    def verdict(self):
        return {
            "final_error": self.final_error,
            "monotone_tail": self.monotone_tail(),
            "passed": self.passed,
        }


def _norm(x):
    return float(np.linalg.norm(x, 2))


def exterior_points(fam: RecurrenceFamily, m_horizon=200):
    """Default evaluation points M+1, 2M and i(M+1) for the Gershgorin radius M."""
    M = gershgorin_bound(fam, m_horizon)
    return [complex(M + 1), complex(2 * M), complex(0, M + 1)]


LIMITS = ("markov", "ratio")


def _evaluator(fam, limit):
    if limit == "markov":
        return MarkovEvaluator.from_family(fam)
    if limit == "ratio":
        return MarkovEvaluator.ratio_limit_from_family(fam)
    raise ValueError(f"limit must be one of {LIMITS}, got {limit!r}")


def limit_markov(fam: RecurrenceFamily, z, k=0, limit="markov"):
    """k-th derivative of F_{A,B,C} (limit="markov") or of the ratio limit Y (limit="ratio")."""
    ev = _evaluator(fam, limit)
    F = fixed_point_F(ev, z)
    return F if k == 0 else derivative_F(ev, z, k, F=F)


def _ratio_derivs(fam, z, m_max, k):
    """X_m = V_{m-1} V_m^{-1} and its z-derivatives up to order k, m = 1..m_max."""
    n = fam.dim
    I = np.eye(n)
    out = np.zeros((k + 1, m_max + 1, n, n), complex)
    R = dR = d2R = Rinv = None
    for j in range(m_max):
        A, B, C = fam.coeffs(j)
        Ai = fam.A_inv(j)
        if j == 0:
            R, dR, d2R = Ai @ (z * I - B), Ai, np.zeros((n, n), complex)
        else:
            P = Rinv @ dR @ Rinv
            nR = Ai @ ((z * I - B) - C @ Rinv)
            ndR = Ai @ (I + C @ P)
            nd2R = Ai @ C @ (Rinv @ d2R @ Rinv - 2 * P @ dR @ Rinv)
            R, dR, d2R = nR, ndR, nd2R
        Rinv = np.linalg.inv(R)
        out[0, j + 1] = Rinv
        if k >= 1:
            out[1, j + 1] = -Rinv @ dR @ Rinv
        if k >= 2:
            out[2, j + 1] = -Rinv @ d2R @ Rinv + 2 * Rinv @ dR @ Rinv @ dR @ Rinv
    return out


def ratio_experiment(fam: RecurrenceFamily, z, m_max=200, gate=None, F=None, require_exterior=True,
                     experiment="ratio", limit="markov"):
    """error_m = ||V_{m-1}(z) V_m(z)^{-1} A_{m-1}^{-1} - F_{A,B,C}(z)||."""
    return derivative_ratio_experiment(fam, z, 0, m_max, gate, F, require_exterior, experiment, limit)


def derivative_ratio_experiment(fam: RecurrenceFamily, z, k=1, m_max=200, gate=None, F=None,
                                require_exterior=True, experiment=None, limit="markov"):
    """error_m = ||(V_{m-1} V_m^{-1})^{(k)}(z) A_{m-1}^{-1} - F^{(k)}(z)||, k <= 2.

    The target is F_{A,B,C} by default; limit="ratio" compares with the
    swapped continued fraction Y instead. The distance to the other target
    is kept in column `other`.
    """
    if k > 2:
        raise ValueError("derivative order must be at most 2")
    z = complex(z)
    M = gershgorin_bound(fam, m_max)
    if require_exterior and abs(z) <= M:
        raise ExperimentRefused(f"|z| = {abs(z):.3f} is not beyond the Gershgorin bound {M:.3f}")
    target = limit_markov(fam, z, k, limit) if F is None else F
    other = limit_markov(fam, z, k, "ratio" if limit == "markov" else "markov")
    try:
        X = _ratio_derivs(fam, z, m_max, k)
    except np.linalg.LinAlgError as exc:
        raise ExperimentRefused(f"singular V_m(z) at exterior z={z}") from exc
    t = ConvergenceTable(experiment or f"ratio-d{k}", z, gate=gate,
                         meta={"gershgorin": M, "k": k, "limit": limit})
    for m in range(1, m_max + 1):
        r = X[k, m] @ fam.A_inv(m - 1)
        t.add(m, _norm(r - target), other=_norm(r - other))
    t.meta["limit_gap"] = _norm(target - other)
    return t


def inverse_decay_experiment(fam: RecurrenceFamily, z, m_max=200, gate=None, experiment="inverse-decay"):
    """||V_m(z)^{-1}|| and ||G_m(z)^{-1}||; the error column is their maximum."""
    z = complex(z)
    n = fam.dim
    R = left_ratios(fam, z, m_max)
    S = right_ratios(fam, z, m_max)
    Vinv = np.eye(n, dtype=complex)
    Ginv = np.linalg.inv(fam.G0)
    t = ConvergenceTable(experiment, z, gate=gate)
    t.add(0, max(_norm(Vinv), _norm(Ginv)), V_inv=_norm(Vinv), G_inv=_norm(Ginv))
    for m in range(1, m_max + 1):
        Vinv = Vinv @ np.linalg.inv(R[m - 1])
        Ginv = np.linalg.inv(S[m - 1]) @ Ginv
        t.add(m, max(_norm(Vinv), _norm(Ginv)), V_inv=_norm(Vinv), G_inv=_norm(Ginv))
    return t


# perturbed family ------------------------------------------------------------------


def phi_stable(pf: PerturbedFamily, m_max):
    """Phi_m for m = 0..m_max through ratio recursions.

    With gamma_m = G_m(0)^{-1} K_{m+1}(0,0) V_m(0)^{-1}
    (gamma_m = I + s_{m-1} gamma_{m-1} r_{m-1}, r = V_k V_{k+1}^{-1},
    s = G_{k+1}^{-1} G_k at 0), Phi_m = I - (G_m^{-1} D^{-1} V_m^{-1} + gamma_m)^{-1}.
    Requires an invertible D.
    """
    fam = pf.base
    n = fam.dim
    I = np.eye(n)
    Dinv = np.linalg.inv(pf.D)
    R = left_ratios(fam, 0.0, m_max)
    S = right_ratios(fam, 0.0, m_max)
    gam = I.astype(complex)
    Vinv = I.astype(complex)
    Ginv = np.linalg.inv(fam.G0)
    out = [I - np.linalg.inv(Ginv @ Dinv @ Vinv + gam)]
    for k in range(m_max):
        r = np.linalg.inv(R[k])
        s = np.linalg.inv(S[k])
        gam = I + s @ gam @ r
        Vinv = Vinv @ r
        Ginv = s @ Ginv
        out.append(I - np.linalg.inv(Ginv @ Dinv @ Vinv + gam))
    return np.array(out)


def phi_leading(pf: PerturbedFamily, m, V=None, G=None):
    """Phi_m = (beta_m)^{-1} beta~_m alpha~_m (alpha_m)^{-1} from leading coefficients."""
    V = generate_V(pf.base, m) if V is None else V
    G = generate_G(pf.base, m) if G is None else G
    a = V[m].coeffs[m]
    b = G[m].coeffs[m]
    at = perturbed_V(pf, m).coeffs[m]
    bt = perturbed_G(pf, m).coeffs[m]
    return np.linalg.solve(b, bt) @ at @ np.linalg.inv(a)


def markov_at_zero(fam: RecurrenceFamily, m_check=200, tol=1e-6, limit="markov"):
    """F(0) and F'(0) by continuation, refusing when 0 is not exterior to the limit set.

    Refusal happens when the ratios V_{m-1}(0) V_m(0)^{-1} A^{-1} do not
    settle (compared at m_check and m_check/2), when they settle away from
    the continued ratio limit Y(0), or (limit="markov") when the
    approximants V_m(0)^{-1} B^(1)_{m-1}(0) G0^{-1} disagree with the
    continued F(0).
    """
    ev = _evaluator(fam, limit)
    spectrum = np.linalg.eigvals(truncated_jacobi(fam, 60))
    try:
        X = _ratio_derivs(fam, 0.0, m_check, 0)[0]
    except np.linalg.LinAlgError as exc:
        raise ExperimentRefused("V_m(0) is singular: 0 lies on the zero set") from exc
    r_full = X[m_check] @ fam.A_inv(m_check - 1)
    r_half = X[m_check // 2] @ fam.A_inv(m_check // 2 - 1)
    if not np.all(np.isfinite(r_full)) or _norm(r_full - r_half) > tol * (1 + _norm(r_full)):
        raise ExperimentRefused("ratios at 0 do not converge: 0 is not exterior to the limit set")
    try:
        Y0, _ = continuation(MarkovEvaluator.ratio_limit_from_family(fam), 0.0, spectrum=spectrum)
        F0 = Y0 if limit == "ratio" else continuation(ev, 0.0, spectrum=spectrum)[0]
    except ConvergenceFailure as exc:
        raise ExperimentRefused(f"continuation to 0 failed: {exc}") from exc
    if _norm(Y0 - r_full) > 1e-6 * (1 + _norm(Y0)):
        raise ExperimentRefused("continued ratio limit at 0 disagrees with the ratios V_{m-1}(0) V_m(0)^{-1}")
    if limit == "markov":
        a_full = approximant_F(fam, m_check, 0.0)
        a_half = approximant_F(fam, m_check // 2, 0.0)
        if (not np.all(np.isfinite(a_full)) or _norm(a_full - a_half) > tol * (1 + _norm(a_full))
                or _norm(F0 - a_full) > tol * (1 + _norm(F0))):
            raise ExperimentRefused("continued F(0) disagrees with the Markov approximants at 0")
    try:
        dF0 = derivative_F(ev, 0.0, 1, F=F0)
    except ConvergenceFailure as exc:
        raise ExperimentRefused(f"F'(0) unavailable: {exc}") from exc
    return F0, dF0


def xi_target(fam: RecurrenceFamily, limit="markov"):
    """Xi = I + F(0) F'(0)^{-1} F(0) (F replaced by Y when limit="ratio")."""
    F0, dF0 = markov_at_zero(fam, limit=limit)
    if np.linalg.cond(dF0) > 1e12:
        raise ExperimentRefused("F'(0) is singular")
    return np.eye(fam.dim) + F0 @ np.linalg.solve(dF0, F0)


def xi_limit_experiment(pf: PerturbedFamily, m_max=200, identity_upto=100, gate=None,
                        identity_tol=1e-9, experiment="xi-limit", limit="markov"):
    """error_m = ||Phi_m - Xi||, plus the leading-coefficient identity defect.

    Phi_m is computed by the stable ratio route; for m <= identity_upto the
    leading-coefficient ratio and the closed kernel form are also computed
    and their largest disagreement with it stored in column `identity`.
    """
    n = pf.dim
    lam_zero = not np.any(pf.D)
    t = ConvergenceTable(experiment, "coefficient-level", gate=gate)
    if lam_zero:
        t.meta["note"] = "Lambda = 0: Phi_m = I, Xi comparison skipped"
        for m in range(m_max + 1):
            t.add(m, 0.0, identity=0.0)
        t.meta["identity_max"] = 0.0
        return t
    if np.linalg.cond(pf.D) > 1e12:
        raise ExperimentRefused("delta(P_0) Lam^T must be invertible for the Xi limit")
    Xi = xi_target(pf.base, limit)
    Xi_other = xi_target(pf.base, "ratio" if limit == "markov" else "markov")
    phis = phi_stable(pf, m_max)
    V = generate_V(pf.base, identity_upto)
    G = generate_G(pf.base, identity_upto)
    ident_max = 0.0
    for m in range(m_max + 1):
        cols = {}
        if m <= identity_upto:
            lead = phi_leading(pf, m, V, G)
            closed = phi_closed_form(pf, m)
            d = max(_norm(lead - closed), _norm(lead - phis[m]))
            cols["identity"] = d
            ident_max = max(ident_max, d)
        else:
            cols["identity"] = float("nan")
        t.add(m, _norm(phis[m] - Xi), **cols)
    t.meta.update({"Xi": Xi, "identity_max": ident_max, "identity_passed": ident_max < identity_tol,
                   "Phi_final": phis[-1], "limit": limit, "Xi_other": Xi_other,
                   "other_error": _norm(phis[-1] - Xi_other)})
    return t


def relative_ratio(pf: PerturbedFamily, z, m_max, phis=None):
    """V~_m(z) V_m(z)^{-1} for m = 0..m_max with D_m = I.

    Uses V~_m V_m^{-1} = I - (I - Phi_m) sigma_m, with
    sigma_m = sum_k G_m(0)^{-1} G_k(0) V_k(z) V_m(z)^{-1}
    = I + s_{m-1} sigma_{m-1} r_{m-1}(z).
    """
    fam = pf.base
    n = fam.dim
    I = np.eye(n)
    if phis is None:
        phis = phi_stable(pf, m_max)
    Rz = left_ratios(fam, z, m_max)
    S0 = right_ratios(fam, 0.0, m_max)
    sig = I.astype(complex)
    out = [I - (I - phis[0]) @ sig]
    for k in range(m_max):
        sig = I + np.linalg.inv(S0[k]) @ sig @ np.linalg.inv(Rz[k])
        out.append(I - (I - phis[k + 1]) @ sig)
    return np.array(out)


def relative_targets(fam: RecurrenceFamily, z, Xi, Psi=None, limit="markov"):
    """(derived, printed) limits of V~_m(z) V_m(z)^{-1}.

    derived = I + (1/z)(I - Xi)(F(0)^{-1} - F(z)^{-1});
    printed = Psi^{-1}[I - I/z - Xi(F(0)^{-1} - F(z)^{-1})].
    """
    n = fam.dim
    I = np.eye(n)
    F0, _ = markov_at_zero(fam, limit=limit)
    Fz = limit_markov(fam, z, limit=limit)
    diff = np.linalg.inv(F0) - np.linalg.inv(Fz)
    Psi = I if Psi is None else Psi
    derived = I + (I - Xi) @ diff / z
    printed = np.linalg.solve(Psi, I - I / z - Xi @ diff)
    return derived, printed


def relative_asymptotics_experiment(pf: PerturbedFamily, z, m_max=200, gate=None, target="derived",
                                    experiment="relative", limit="markov"):
    """error_m = ||V~_m(z) V_m(z)^{-1} - target||.

    `target` selects the derived limit (gated) or the printed one; both
    errors are stored (column `printed`). Psi is taken as I, the
    normalisation fixed by D_m = I; it is recorded in meta.
    """
    z = complex(z)
    if z == 0:
        raise ExperimentRefused("z must be non-zero")
    fam = pf.base
    M = gershgorin_bound(fam, m_max)
    if abs(z) <= M:
        raise ExperimentRefused(f"|z| = {abs(z):.3f} is not beyond the Gershgorin bound {M:.3f}")
    n = fam.dim
    lam_zero = not np.any(pf.D)
    phis = np.array([np.eye(n)] * (m_max + 1)) if lam_zero else phi_stable(pf, m_max)
    Xi_formula = xi_target(fam, limit)
    Xi_lim = np.eye(n) if lam_zero else Xi_formula
    derived, _ = relative_targets(fam, z, Xi_lim, limit=limit)
    _, printed = relative_targets(fam, z, Xi_formula, limit=limit)
    ratios = relative_ratio(pf, z, m_max, phis)
    t = ConvergenceTable(experiment, z, gate=gate)
    for m in range(m_max + 1):
        e_d = _norm(ratios[m] - derived)
        e_p = _norm(ratios[m] - printed)
        t.add(m, e_d if target == "derived" else e_p, derived=e_d, printed=e_p)
    t.meta.update({"Psi": np.eye(n), "Xi_formula": Xi_formula, "target": target, "limit": limit,
                   "derived_target": derived, "printed_target": printed})
    return t


def lambda_zero_probe(fam: RecurrenceFamily, z, m_max=50, limit="markov"):
    """Run the relative experiment with Lam = 0 and report which target degenerates to I."""
    pf = PerturbedFamily(fam, np.eye(fam.dim), np.zeros((fam.dim, fam.dim)))
    t = relative_asymptotics_experiment(pf, z, m_max, experiment="relative-lambda0", limit=limit)
    return {
        "derived_residual": t.extra["derived"][-1],
        "printed_residual": t.extra["printed"][-1],
        "derived_consistent": t.extra["derived"][-1] < 1e-12,
        "printed_consistent": t.extra["printed"][-1] < 1e-12,
        "table": t,
    }


def tail_contraction(table: ConvergenceTable, m_half, m_full, factor=2.0, floor=1e-12):
    """Error at m_full is at most error(m_half)/factor, or already below `floor`."""
    e_half, e_full = table.error_at(m_half), table.error_at(m_full)
    return e_full <= e_half / factor or e_full < floor
