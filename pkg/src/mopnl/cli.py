"""Command-line entry point: ``mopnl <subcommand> --config <path> [options]``.

Exit status is 0 when every gate passes, 1 when some gate fails (tables
are still written) and 2 when the configuration is invalid.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

import numpy as np

from . import asymptotics as asy
from .dirac import (
    RegularityError,
    confluent_kernel,
    cd_residual,
    kernel_eval,
    perturbed_recurrence,
    perturbed_V,
    recurrence_defect,
    regularity_check,
)
from .io import ConfigError, Table, convergence_to_table, load_config, write_table
from .markov import ContourSpec, ConvergenceFailure, MarkovEvaluator, biorthogonality_table, fixed_point_F
from .recurrence import (
    FamilyError,
    VerificationError,
    V_values,
    generate_B1,
    generate_G,
    generate_G1,
    generate_V,
    liouville_residual,
)
from .sobolev import GramBreakdown, lebesgue_moments, sobolev_pack, vector_orthogonality
from .spectral import gershgorin_bound, quadrature_weights

SUBCOMMANDS = ("generate", "zeros", "markov", "identities", "perturb", "sobolev", "asymptotics")

IDENTITY_GATES = {"cd": 1e-10, "confluent": 1e-9, "liouville": 1e-10, "biorthogonality": 1e-8,
                  "reproducing": 1e-8}


def _coefficient_rows(polys):
    rows = []
    for m, p in enumerate(polys):
        for k in range(p.coeffs.shape[0]):
            for i in range(p.dim):
                for j in range(p.dim):
                    rows.append([m, k, i, j, complex(p.coeffs[k, i, j])])
    return rows


def _matrix_columns(prefix, n):
    return [f"{prefix}{i}{j}" for i in range(n) for j in range(n)]


def _flat(mat):
    return [complex(x) for x in np.asarray(mat).reshape(-1)]


def _random_points(rng, count, radius):
    r = radius * np.sqrt(rng.uniform(0, 1, count))
    return r * np.exp(2j * np.pi * rng.uniform(0, 1, count))


# subcommands ------------------------------------------------------------------------


def run_generate(cfg, args):
    m = cfg.m
    fam = cfg.family
    cols = ["m", "power", "row", "col", "value"]
    out = []
    for name, gen in (("V", generate_V), ("G", generate_G), ("B1", generate_B1), ("G1", generate_G1)):
        out.append(Table(f"generate-{name}", cols, _coefficient_rows(gen(fam, m)), meta={"m_max": m}))
    return out


def run_zeros(cfg, args):
    fam = cfg.family
    m = cfg.m
    if m < 1:
        raise ConfigError("m: zeros need m >= 1")
    n = fam.dim
    cols = ["node", "multiplicity"] + _matrix_columns("w", n)
    t = Table(f"zeros-m{m}", cols, meta={"m": m}, gate=1e-8)
    try:
        rule = quadrature_weights(fam, m)
    except VerificationError as exc:
        t.passed = False
        t.meta["error"] = str(exc)
        return [t]
    order = sorted(range(len(rule.nodes)), key=lambda k: (rule.nodes[k][0].real, rule.nodes[k][0].imag))
    for k in order:
        x, mult = rule.nodes[k]
        t.rows.append([complex(x), int(mult)] + _flat(rule.weights[k]))
    total = sum(rule.weights) if rule.weights else np.zeros((n, n))
    defect = float(np.linalg.norm(total - np.linalg.inv(fam.G0), 2))
    t.meta.update({
        "weight_sum_defect": defect,
        "total_multiplicity": rule.total_multiplicity,
        "defective_nodes": [complex(x) for x in rule.defective],
        # rows [node, j, Gamma^(j) flattened]: weight of p^(j)(node) at defective nodes
        "derivative_weights": [[complex(rule.nodes[k][0]), j] + _flat(w)
                               for k in sorted(rule.derivative_weights)
                               for j, w in enumerate(rule.derivative_weights[k], start=1)],
    })
    t.passed = defect < t.gate and rule.total_multiplicity == m * n
    return [t]


def run_markov(cfg, args):
    fam = cfg.family
    if fam.limits is None:
        raise ConfigError("markov: the family declares no limits (A, B, C)")
    ev = MarkovEvaluator.from_family(fam)
    zs = cfg.z or asy.exterior_points(fam)
    n = fam.dim
    t = Table("markov", ["z"] + _matrix_columns("F", n) + ["residual", "refined"], gate=ev.tol)
    for z in zs:
        try:
            F, info = fixed_point_F(ev, z, return_info=True)
        except ConvergenceFailure as exc:
            t.rows.append([complex(z)] + [None] * (n * n) + [None, "failed"])
            t.passed = False
            t.meta.setdefault("failures", []).append(str(exc))
            continue
        t.rows.append([complex(z)] + _flat(F) + [info.residual, info.refined])
        t.passed = t.passed and info.residual < ev.tol
    return [t]


def run_identities(cfg, args):
    fam = cfg.family
    opts = cfg.identities
    m_max = int(opts.get("m_max", 15))
    if args.m_max is not None:
        m_max = args.m_max
    n_points = int(opts.get("n_points", 10))
    radius = float(opts.get("radius", 5.0))
    m_bi = min(int(opts.get("biorthogonality_m_max", 8)), m_max)
    gates = dict(IDENTITY_GATES)
    gates.update(opts.get("gates", {}))
    if fam.length is not None:
        m_max = min(m_max, fam.length - 2)
    rng = np.random.default_rng(cfg.seed)
    xs = _random_points(rng, n_points, radius)
    ys = _random_points(rng, n_points, radius)

    tabs = {k: Table(f"identities-{k}", ["m", "error"], gate=gates[k]) for k in gates}
    for m in range(m_max + 1):
        tabs["cd"].rows.append([m, max(cd_residual(fam, m, x, y) for x, y in zip(xs, ys))])
        worst = 0.0
        for x in xs:
            direct = kernel_eval(fam, m + 1, x, x)
            conf = confluent_kernel(fam, m, x)
            worst = max(worst, float(np.linalg.norm(direct - conf, 2) / (1 + np.linalg.norm(direct, 2))))
        tabs["confluent"].rows.append([m, worst])
        tabs["liouville"].rows.append([m, max(liouville_residual(fam, m, x) for x in xs)])

    bi, rep = tabs["biorthogonality"], tabs["reproducing"]
    try:
        M = gershgorin_bound(fam, 2 * m_bi + 12)
        spec = ContourSpec(radius=M + 1.0, n_quad=int(opts.get("n_quad", 128)))
        P = biorthogonality_table(fam, m_bi, spec)
        P2 = biorthogonality_table(fam, m_bi, spec.doubled())
        I = np.eye(fam.dim)
        for m in range(m_bi + 1):
            bi.rows.append([m, max(float(np.linalg.norm(P[m, k] - (I if k == m else 0 * I), 2))
                                   for k in range(m_bi + 1))])
        bi.meta["node_doubling"] = float(np.abs(P - P2).max())
        bi.meta["radius"] = spec.radius
        Vx = [V_values(fam, x, m_bi)[0] for x in xs]
        for m in range(1, m_bi + 1):
            worst = 0.0
            for V in Vx:
                scale = 1 + max(np.linalg.norm(V[k], 2) for k in range(m))
                for j in range(m):
                    rec = sum(P[j, k] @ V[k] for k in range(m))
                    worst = max(worst, float(np.linalg.norm(rec - V[j], 2) / scale))
            rep.rows.append([m, worst])
    except (ValueError, ConvergenceFailure, IndexError) as exc:
        for t in (bi, rep):
            t.passed = False
            t.meta["error"] = str(exc)
    for t in tabs.values():
        if t.rows and t.passed:
            t.passed = max(r[1] for r in t.rows) < t.gate
    return [tabs[k] for k in ("cd", "confluent", "liouville", "biorthogonality", "reproducing")]


def run_perturb(cfg, args):
    pf = cfg.perturbation
    if pf is None:
        raise ConfigError("perturb: the config has no 'perturbation' section")
    m_top = cfg.m
    rng = np.random.default_rng(cfg.seed)
    reg = Table("perturb-regularity", ["m", "regular", "condition"])
    coeffs = []
    rec = Table("perturb-recurrence", ["m", "error"], gate=1e-9)
    for m in range(m_top + 1):
        ok, cond = regularity_check(pf, m)
        reg.rows.append([m, bool(ok), float(cond)])
        if not ok:
            continue
        coeffs.append((m, perturbed_V(pf, m)))
        alphas = perturbed_recurrence(pf, m, rng=rng, tol=np.inf)
        rec.rows.append([m, recurrence_defect(pf, m, alphas, rng)])
    reg.passed = all(r[1] for r in reg.rows)
    reg.meta["singular_m"] = ",".join(str(r[0]) for r in reg.rows if not r[1])
    rows = []
    for m, p in coeffs:
        for k in range(p.coeffs.shape[0]):
            for i in range(p.dim):
                for j in range(p.dim):
                    rows.append([m, k, i, j, complex(p.coeffs[k, i, j])])
    vt = Table("perturb-V", ["m", "power", "row", "col", "value"], rows)
    rec.passed = all(r[1] < rec.gate for r in rec.rows)
    return [vt, reg, rec]


def _sobolev_moments(opts, count):
    mom = opts.get("moments", "lebesgue")
    if mom == "lebesgue":
        return lebesgue_moments(count)
    if not isinstance(mom, list):
        raise ConfigError("sobolev.moments: expected 'lebesgue' or a list of numbers")
    try:
        vals = [Fraction(str(v)) for v in mom]
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"sobolev.moments: {exc}") from exc
    if len(vals) < count:
        raise ConfigError(f"sobolev.moments: need at least {count} moments, got {len(vals)}")
    return vals


def run_sobolev(cfg, args):
    opts = cfg.sobolev
    try:
        lam = Fraction(str(opts.get("lambda", 1)))
    except ValueError as exc:
        raise ConfigError(f"sobolev.lambda: {exc}") from exc
    n_max = int(opts.get("n_max", 8))
    if n_max < 2:
        raise ConfigError("sobolev.n_max: must be at least 2")
    mom = _sobolev_moments(opts, 2 * (n_max + 5))
    try:
        pack = sobolev_pack(mom, lam, n_max)
    except GramBreakdown as exc:
        t = Table("sobolev-five-term", ["n", "error"], gate=1e-9, passed=False, meta={"error": str(exc)})
        return [t]
    five = Table("sobolev-five-term", ["n", "error"], gate=1e-9,
                 rows=[[k, r] for k, r in enumerate(pack.report["five_term_residual"])])
    sym = Table("sobolev-symmetry", ["m", "error"], gate=1e-12,
                rows=[[m, d] for m, d in enumerate(pack.report["symmetry_defect"])])
    m_orth = (n_max + 1) // 2
    orth = Table("sobolev-orthogonality", ["m", "error"], gate=1e-9,
                 rows=[[m, vector_orthogonality(mom, float(lam), pack, m)] for m in range(1, m_orth + 1)])
    blocks = []
    for m, (A, B) in enumerate(zip(pack.A_blocks, pack.B_blocks)):
        for name, X in (("A", A), ("B", B)):
            for i in range(2):
                for j in range(2):
                    blocks.append([m, name, i, j, float(X[i, j])])
    bt = Table("sobolev-blocks", ["m", "block", "row", "col", "value"], blocks, meta={"lambda": float(lam)})
    for t in (five, sym, orth):
        t.passed = all(r[1] < t.gate for r in t.rows)
    return [five, sym, orth, bt]


def _run_experiment(cfg, e):
    fam = cfg.family
    kind = e["kind"]
    z = e["z"]
    if kind in ("xi-limit", "relative") and cfg.perturbation is None:
        raise ConfigError(f"experiment {e['id']}: kind {kind} needs a 'perturbation' section")
    if kind in ("ratio", "derivative", "relative") and fam.limits is None:
        raise ConfigError(f"experiment {e['id']}: kind {kind} needs a family with limits")
    if z is None and kind != "xi-limit":
        z = asy.exterior_points(fam, e["m_max"])[0]
    kw = {"gate": e["gate"], "experiment": e["id"]}
    if kind == "ratio":
        t = asy.ratio_experiment(fam, z, e["m_max"], limit=e["limit"], **kw)
    elif kind == "derivative":
        t = asy.derivative_ratio_experiment(fam, z, e["k"], e["m_max"], limit=e["limit"], **kw)
    elif kind == "inverse-decay":
        t = asy.inverse_decay_experiment(fam, z, e["m_max"], **kw)
    elif kind == "xi-limit":
        t = asy.xi_limit_experiment(cfg.perturbation, e["m_max"], identity_upto=min(100, e["m_max"]),
                                    limit=e["limit"], **kw)
    else:
        t = asy.relative_asymptotics_experiment(cfg.perturbation, z, e["m_max"], target=e["target"],
                                                limit=e["limit"], **kw)
    table = convergence_to_table(t)
    if kind == "xi-limit":
        table.meta["identity_max"] = float(t.meta["identity_max"])
        table.passed = table.passed and bool(t.meta["identity_passed"])
    if kind == "relative":
        table.meta["printed_final"] = float(t.extra["printed"][-1])
    return table


def run_asymptotics(cfg, args):
    exps = cfg.experiments or [{"id": "ratio", "kind": "ratio", "z": None, "m_max": cfg.m_max,
                                "gate": None, "k": 1, "limit": "markov", "target": "derived"}]
    out = []
    for e in exps:
        try:
            out.append(_run_experiment(cfg, e))
        except (asy.ExperimentRefused, ConvergenceFailure, RegularityError, VerificationError) as exc:
            z = e["z"] if e["z"] is not None else "default"
            out.append(Table(e["id"], ["m", "error"], z=z, gate=e["gate"], passed=False,
                             meta={"refused": str(exc)}))
    return out


RUNNERS = {
    "generate": run_generate,
    "zeros": run_zeros,
    "markov": run_markov,
    "identities": run_identities,
    "perturb": run_perturb,
    "sobolev": run_sobolev,
    "asymptotics": run_asymptotics,
}


# argument handling ----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mopnl", description="Matrix orthogonal polynomial experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--m-max", type=int, default=None, help="override m_max of every experiment")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="output format")
    p.add_argument("--m", type=int, default=None, help="override the degree m")
    p.add_argument("--z", type=complex, default=None, help="override the evaluation point z")
    return p


def apply_overrides(cfg, args):
    if args.m is not None:
        if args.m < 0:
            raise ConfigError("--m: must be non-negative")
        cfg.m = args.m
    if args.m_max is not None:
        if args.m_max < 1:
            raise ConfigError("--m-max: must be positive")
        cfg.m_max = args.m_max
        for e in cfg.experiments:
            e["m_max"] = args.m_max
    if args.z is not None:
        cfg.z = [args.z]
        for e in cfg.experiments:
            e["z"] = args.z
    if args.format is not None:
        cfg.fmt = args.format
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        tables = RUNNERS[args.subcommand](cfg, args)
    except (ConfigError, FamilyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    failed = []
    for t in tables:
        path = write_table(t, args.out, cfg.fmt)
        status = "pass" if t.passed else "FAIL"
        print(f"{status} {t.experiment} -> {path}")
        if not t.passed:
            failed.append(t.experiment)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
