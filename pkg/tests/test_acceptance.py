"""Acceptance criteria 1-10.

Every criterion prints one line ``criterion N: PASS|FAIL ...`` and is then
asserted; the lines are repeated in the pytest terminal summary. Gates are
the stated tolerances and runtime budgets. Criteria whose targets are not
reachable by the implemented limit are left failing; diagnostics printed on
the same line say why.

Run directly with ``python3 tests/test_acceptance.py`` for the lines alone.
"""
import filecmp
import time
from pathlib import Path

import numpy as np

from mopnl.asymptotics import (
    ExperimentRefused,
    lambda_zero_probe,
    ratio_experiment,
    relative_asymptotics_experiment,
    xi_limit_experiment,
)
from mopnl.cli import main
from mopnl.dirac import (
    DeltaSpec,
    PerturbedFamily,
    cd_residual,
    kernel_at_zero,
    kernel_eval,
    perturbed_biorthogonality,
    perturbed_recurrence,
    perturbed_V,
    recurrence_defect,
    regularity_check,
)
from mopnl.families import example1, mild_nonsymmetric, nevai_perturbation, random_family, scalar_chebyshev
from mopnl.markov import (
    ContourSpec,
    MarkovEvaluator,
    biorthogonality_table,
    contour_moments,
    example1_closed_forms,
    fixed_point_F,
    markov_on_contour,
)
from mopnl.polymat import MatrixPolynomial
from mopnl.recurrence import G_values, V_values, liouville_residual
from mopnl.sobolev import lebesgue_moments, sobolev_pack, vector_orthogonality
from mopnl.spectral import (
    det_roots,
    gershgorin_bound,
    match_multisets,
    quadrature_apply,
    quadrature_weights,
    truncated_jacobi,
)

from oracles import block_hankel_monic, chebyshev_u, semicircle_moments

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS = {}


def report(n, ok, detail, elapsed, budget=None):
    within = budget is None or elapsed < budget
    verdict = "PASS" if ok and within else "FAIL"
    timing = f"{elapsed:.2f}s" + (f" (< {budget:g}s)" if budget else "")
    if not within:
        timing += " OVER BUDGET"
    line = f"criterion {n}: {verdict} {detail}; {timing}"
    RESULTS[n] = line
    print(line)
    assert verdict == "PASS", line


def rnorm(a, *scale):
    return float(np.linalg.norm(a, 2) / max(sum(np.linalg.norm(s, 2) for s in scale), 1e-300))


def test_criterion_01_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    r = 5 * np.sqrt(rng.uniform(size=10))
    zs = r * np.exp(2j * np.pi * rng.uniform(size=10))
    cd = conf = liou = 0.0
    for fam in (scalar_chebyshev(), example1()):
        for i, z in enumerate(zs):
            x = zs[(i + 1) % zs.size]
            for m in range(16):
                cd = max(cd, cd_residual(fam, m, x, z))
                liou = max(liou, liouville_residual(fam, m, z))
                V = V_values(fam, z, m + 1, deriv=1)
                G = G_values(fam, z, m + 1)[0]
                t1 = G[m] @ fam.coeffs(m)[0] @ V[1, m + 1]
                t2 = G[m + 1] @ fam.coeffs(m + 1)[2] @ V[1, m]
                direct = kernel_eval(fam, m + 1, z, z)
                conf = max(conf, rnorm(direct - (t1 - t2), direct, t1, t2))
    ok = cd < 1e-10 and conf < 1e-9 and liou < 1e-10
    report(1, ok, f"CD {cd:.1e} (< 1e-10), confluent {conf:.1e} (< 1e-9), Liouville {liou:.1e} (< 1e-10)",
           time.perf_counter() - t0, 5)


def test_criterion_02_biorthogonality():
    t0 = time.perf_counter()
    worst = stab = 0.0
    for fam in (scalar_chebyshev(), example1()):
        spec = ContourSpec(gershgorin_bound(fam) + 1, 128)
        P = biorthogonality_table(fam, 8, spec)
        P2 = biorthogonality_table(fam, 8, spec.doubled())
        target = np.einsum("mn,ij->mnij", np.eye(9), np.eye(fam.dim))
        worst = max(worst, np.abs(P - target).max())
        stab = max(stab, np.abs(P - P2).max())
    ok = worst < 1e-8 and stab < 1e-10
    report(2, ok, f"max |<V_m,G_n> - I delta| {worst:.1e} (< 1e-8), node doubling {stab:.1e} (< 1e-10)",
           time.perf_counter() - t0, 30)


def test_criterion_03_zeros_and_quadrature():
    t0 = time.perf_counter()
    fams = [scalar_chebyshev(), example1(), mild_nonsymmetric(), random_family(3, np.random.default_rng(3))]
    eig_worst, eig_ok = 0.0, True
    for fam in fams:
        for m in range(1, 13):
            ev = np.linalg.eigvals(truncated_jacobi(fam, m))
            w, ok = match_multisets(ev, det_roots(fam, m), 1e-6)
            eig_worst, eig_ok = max(eig_worst, w), eig_ok and ok
    quad = point_only = 0.0
    defective = []
    for fam in (scalar_chebyshev(), example1()):
        spec = ContourSpec(gershgorin_bound(fam) + 1, 256)
        mu = contour_moments(fam, spec, 15, markov_on_contour(fam, spec))
        n = fam.dim
        for m in range(1, 9):
            rule = quadrature_weights(fam, m)
            if rule.defective:
                defective.append((fam.name, m))
            for k in range(2 * m):
                c = np.zeros((k + 1, n, n), complex)
                c[k] = np.eye(n)
                p = MatrixPolynomial(c)
                scale = max(1.0, np.abs(mu[k]).max())
                quad = max(quad, np.abs(quadrature_apply(rule, p) - mu[k]).max() / scale)
                point_only = max(point_only, np.abs(quadrature_apply(rule, p, point_only=True) - mu[k]).max() / scale)
    ok = eig_ok and quad < 1e-7
    report(3, ok, f"eig vs det roots {eig_worst:.1e} (tol 1e-6, m<=12, N<=3), quadrature {quad:.1e} (< 1e-7, "
           f"relative to max(1,|mu_k|)); defective rules {defective} need derivative weights, "
           f"point-only error there {point_only:.1e}", time.perf_counter() - t0, 60)


def test_criterion_04_example1():
    t0 = time.perf_counter()
    ev = MarkovEvaluator.from_family(example1())
    worst = 0.0
    pairs = []
    for z in (1, 3, 5):
        F = fixed_point_F(ev, z)
        a = 1 + z
        d11 = 2 / (a + np.sqrt(a * a + 4))
        d22 = 2 / (a + np.sqrt(a * a - 4))
        worst = max(worst, abs(F[0, 0] - d11), abs(F[1, 1] - d22))
        pairs.append((z, F[1, 0].real, example1_closed_forms(0, z)["F"][1, 0].real))
    ok = worst < 1e-10
    diag = ", ".join(f"z={z}: fixed point {f:.5f} vs printed {p:.5f}" for z, f, p in pairs)
    report(4, ok, f"diagonal {worst:.1e} (< 1e-10); (2,1) entry {diag}", time.perf_counter() - t0, 1)


def _ratio_case(fam, gate):
    z = gershgorin_bound(fam) + 1
    t = ratio_experiment(fam, z, 200, gate=gate)
    y = ratio_experiment(fam, z, 200, limit="ratio")
    return t.error_at(200), y.error_at(200), t.error_at(200) < gate, z


def test_criterion_05_ratio_asymptotics():
    t0 = time.perf_counter()
    cases = [("scalar", scalar_chebyshev(), 1e-6), ("example1", example1(), 1e-6),
             ("scalar-nevai", nevai_perturbation(scalar_chebyshev()), 1e-4),
             ("example1-nevai", nevai_perturbation(example1()), 1e-4)]
    parts, ok = [], True
    for name, fam, gate in cases:
        e, ey, passed, z = _ratio_case(fam, gate)
        ok = ok and passed
        parts.append(f"{name} z={z:g} {e:.1e} (< {gate:g}; vs ratio limit Y {ey:.1e})")
    report(5, ok, "error_200 against F_ABC: " + ", ".join(parts), time.perf_counter() - t0, 30)


def _left_monic(p):
    c = p.normalize().coeffs
    return np.linalg.solve(c[-1], c.transpose(1, 0, 2).reshape(p.dim, -1)).reshape(p.dim, -1, p.dim).transpose(1, 0, 2)


def test_criterion_06_perturbed_family():
    t0 = time.perf_counter()
    pf = PerturbedFamily(scalar_chebyshev(), DeltaSpec([(0, 0)]), [[1.0]])
    mu = [np.array([[x]]) for x in semicircle_moments(20)]
    mu[0] = mu[0] + 1.0
    coeff = max(np.abs(_left_monic(perturbed_V(pf, m)) - block_hankel_monic(mu, m)).max() for m in range(1, 7))
    rec = max(recurrence_defect(pf, m, perturbed_recurrence(pf, m, tol=np.inf)) for m in range(7))
    spec = ContourSpec(3.0, 128)
    F = markov_on_contour(pf.base, spec)
    bi = max(abs(perturbed_biorthogonality(pf, m, n, spec, F)[0, 0] - (m == n)) for m in range(7) for n in range(7))
    ok = coeff < 1e-9 and rec < 1e-9 and bi < 1e-7
    report(6, ok, f"Gram oracle {coeff:.1e} (< 1e-9, m<=6), recurrence {rec:.1e} (< 1e-9), "
           f"contour bi-orthogonality {bi:.1e} (< 1e-7)", time.perf_counter() - t0, 30)


def test_criterion_07_regularity_boundary():
    t0 = time.perf_counter()
    lam_err, ok, notes = 0.0, True, []
    for b in (0.0, 3.0):
        fam = scalar_chebyshev(b=b)
        K = [kernel_at_zero(fam, m)[0, 0].real for m in range(13)]
        # V_k(0) = U_k(-b/2) with U the Chebyshev-U polynomial
        K_exact = np.cumsum([chebyshev_u(k, -b / 2) ** 2 for k in range(13)])
        for m_star in range(11):
            lam = -1 / K[m_star]
            lam_err = max(lam_err, abs(lam + 1 / K_exact[m_star]))
            pf = PerturbedFamily(fam, DeltaSpec([(0, 0)]), [[lam]])
            singular = {m for m in range(13) if regularity_check(pf, m)[1] > 1e12}
            expected = {m for m in range(13) if abs(K_exact[m] - K_exact[m_star]) < 1e-12 * K_exact[m]}
            if singular != expected:
                ok = False
                notes.append(f"b={b:g} m*={m_star}: singular {sorted(singular)}, expected {sorted(expected)}")
    ok = ok and lam_err < 1e-8
    detail = f"singular sets match the analytic kernel levels, lambda error {lam_err:.1e} (< 1e-8)"
    detail += "; unshifted Chebyshev has V_odd(0) = 0 so m = 2j, 2j+1 share one singular lambda"
    if notes:
        detail += "; " + "; ".join(notes)
    report(7, ok, detail, time.perf_counter() - t0, 5)


def test_criterion_08_xi_and_relative():
    t0 = time.perf_counter()
    Lam2 = np.array([[0.7, 0.2], [-0.3, 0.5]])
    cases = [("scalar b=3", PerturbedFamily(scalar_chebyshev(b=3), DeltaSpec([(0, 0)]), [[1.0]])),
             ("mild", PerturbedFamily(mild_nonsymmetric(), DeltaSpec([(0, 1)]), Lam2))]
    parts, ok = [], True
    for name, pf in cases:
        xi = xi_limit_experiment(pf, 200, identity_upto=100, gate=1e-3)
        xi_y = xi_limit_experiment(pf, 200, identity_upto=0, limit="ratio")
        z = gershgorin_bound(pf.base) + 1
        rel = relative_asymptotics_experiment(pf, z, 200, gate=1e-3)
        rel_y = relative_asymptotics_experiment(pf, z, 200, limit="ratio")
        probe = lambda_zero_probe(pf.base, z)
        ok = ok and xi.meta["identity_max"] < 1e-9 and xi.error_at(200) < 1e-3 and rel.error_at(200) < 1e-3
        parts.append(
            f"{name}: identity {xi.meta['identity_max']:.1e} (< 1e-9), |Phi_200 - Xi| {xi.error_at(200):.1e} "
            f"(Y-based {xi_y.error_at(200):.1e}), relative z={z:g} {rel.error_at(200):.1e} "
            f"(Y-based {rel_y.error_at(200):.1e}), Lambda=0 probe derived {probe['derived_residual']:.1e} "
            f"printed {probe['printed_residual']:.2g}"
        )
    refused = []
    for name, pf in (("example1", PerturbedFamily(example1(), DeltaSpec([(0, 1)]), Lam2)),
                     ("scalar b=0", PerturbedFamily(scalar_chebyshev(), DeltaSpec([(0, 0)]), [[1.0]]))):
        try:
            xi_limit_experiment(pf, 50)
        except ExperimentRefused as exc:
            refused.append(f"{name} refused ({exc})")
    report(8, ok, "; ".join(parts + refused), time.perf_counter() - t0, 60)


def test_criterion_09_sobolev():
    t0 = time.perf_counter()
    mom = lebesgue_moments(40)
    pack = sobolev_pack(mom, 1, 9)
    res = max(pack.report["five_term_residual"][:9])
    sym = pack.report["max_symmetry_defect"]
    orth = max(vector_orthogonality(mom, 1.0, pack, m) for m in range(1, 5))
    ok = res < 1e-9 and sym < 1e-12 and orth < 1e-9
    report(9, ok, f"five-term residual {res:.1e} (< 1e-9, n<=8), B~_m symmetry {sym:.1e} (< 1e-12), "
           f"vector orthogonality {orth:.1e} (< 1e-9, m<=4)", time.perf_counter() - t0, 10)


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    subs = ["generate", "zeros", "markov", "identities", "perturb", "sobolev", "asymptotics"]
    compared, mismatched = 0, []
    for cfg in sorted(CONFIGS.glob("*.json")):
        for sub in subs:
            for fmt in ("csv", "json"):
                dirs = [tmp_path / f"{cfg.stem}-{sub}-{fmt}-{i}" for i in (0, 1)]
                codes = [main([sub, "--config", str(cfg), "--out", str(d), "--format", fmt]) for d in dirs]
                if codes == [2, 2]:
                    continue  # subcommand not applicable to this config
                names = sorted(p.name for p in dirs[0].iterdir()) if dirs[0].exists() else []
                _, diff, errs = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
                compared += len(names)
                if diff or errs or codes[0] != codes[1] or not names:
                    mismatched.append(f"{cfg.stem}/{sub}/{fmt}")
    ok = not mismatched and compared > 0
    report(10, ok, f"{compared} output files byte-identical across two runs"
           + (f"; mismatched {mismatched}" if mismatched else ""), time.perf_counter() - t0)


if __name__ == "__main__":
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
