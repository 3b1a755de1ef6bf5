"""Tables on disk and JSON run configurations.

Tables are written as CSV (``#``-prefixed header lines carrying metadata,
then a column row) or JSON with the same content. Complex values are
written as ``re+imj`` with 17 significant digits, floats with 17
significant digits, so that reading a file back reproduces every number
exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dirac import DeltaSpec, PerturbedFamily
from .families import example1, mild_nonsymmetric, nevai_perturbation, scalar_chebyshev
from .recurrence import FamilyError, RecurrenceFamily


class ConfigError(ValueError):
    """The configuration violates a structural requirement."""


# value formatting -------------------------------------------------------------------


def format_complex(z):
    z = complex(z)
    return f"{z.real:.17g}{z.imag:+.17g}j"


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (complex, np.complexfloating)):
        return format_complex(v)
    return str(v)


def parse_value(text):
    """Inverse of format_value for cells of a CSV table."""
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("j"):
        try:
            return complex(text)
        except ValueError:
            pass
    return text


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, (complex, np.complexfloating)):
        return format_complex(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


# tables ---------------------------------------------------------------------------------


@dataclass
class Table:
    """A named table with metadata; the serialised form of every CLI result."""

    experiment: str
    columns: list
    rows: list = field(default_factory=list)
    z: object = None
    gate: object = None
    passed: bool = True
    meta: dict = field(default_factory=dict)

    def header(self):
        h = {"experiment": self.experiment, "z": self.z, "gate": self.gate, "passed": self.passed}
        h.update(self.meta)
        return _jsonable(h)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return (
            self.header() == other.header()
            and list(self.columns) == list(other.columns)
            and _rows_equal(self.rows, other.rows)
        )


def _cell_equal(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def _rows_equal(r1, r2):
    return len(r1) == len(r2) and all(
        len(a) == len(b) and all(_cell_equal(x, y) for x, y in zip(a, b)) for a, b in zip(r1, r2)
    )


def convergence_to_table(t):
    """ConvergenceTable -> Table with columns m,error and the verdict in the header."""
    meta = {"final_error": t.final_error, "monotone_tail": t.monotone_tail()}
    for k, v in t.meta.items():
        if isinstance(v, (str, int, float, bool, complex, np.floating, np.integer, np.complexfloating)):
            meta[k] = v
    z = t.z if isinstance(t.z, str) else complex(t.z)
    return Table(t.experiment, ["m", "error"], [list(r) for r in t.rows], z=z, gate=t.gate,
                 passed=t.passed, meta=meta)


def table_to_csv(t: Table) -> str:
    buf = io.StringIO()
    for k, v in t.header().items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for r in t.rows:
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()


def table_to_json(t: Table) -> str:
    doc = t.header()
    doc = {"header": doc, "columns": list(t.columns), "rows": [_jsonable(list(r)) for r in t.rows]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _header_to_table(h, columns, rows):
    h = dict(h)
    exp = h.pop("experiment")
    z = h.pop("z", None)
    gate = h.pop("gate", None)
    passed = h.pop("passed", True)
    if isinstance(z, str):
        z = parse_value(z)
    return Table(exp, columns, rows, z=z, gate=gate, passed=passed, meta=h)


def table_from_csv(text: str) -> Table:
    header = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("# "):
        key, _, val = lines[i][2:].partition(": ")
        header[key] = json.loads(val)
        i += 1
    reader = csv.reader(lines[i:])
    columns = next(reader)
    rows = [[parse_value(c) for c in r] for r in reader]
    # meta values that are complex strings stay strings; z is decoded
    return _header_to_table(header, columns, rows)


def table_from_json(text: str) -> Table:
    doc = json.loads(text)
    rows = [[parse_value(c) if isinstance(c, str) else c for c in r] for r in doc["rows"]]
    return _header_to_table(doc["header"], doc["columns"], rows)


def write_table(t: Table, out_dir, fmt="csv") -> Path:
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{t.experiment}.{fmt}"
    text = table_to_csv(t) if fmt == "csv" else table_to_json(t)
    path.write_text(text, encoding="utf-8")
    return path


def read_table(path) -> Table:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return table_from_json(text) if path.suffix == ".json" else table_from_csv(text)


# configuration ----------------------------------------------------------------------


TOP_KEYS = {
    "name", "dim", "family", "G0", "perturbation", "seed", "format", "m", "m_max", "z",
    "identities", "sobolev", "experiments",
}
EXPERIMENT_KINDS = {"ratio", "derivative", "inverse-decay", "xi-limit", "relative"}
BUILTINS = {"scalar-chebyshev", "example1", "mild-nonsymmetric"}


def parse_scalar(v, where):
    if isinstance(v, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{where}: cannot read {v!r} as a complex number") from None
    raise ConfigError(f"{where}: expected a number or a complex string, got {type(v).__name__}")


def parse_matrix(v, dim, where):
    if dim == 1 and not isinstance(v, list):
        return np.array([[parse_scalar(v, where)]])
    if not isinstance(v, list) or len(v) != dim or any(not isinstance(r, list) or len(r) != dim for r in v):
        raise ConfigError(f"{where}: expected a {dim}x{dim} matrix")
    return np.array([[parse_scalar(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(v)])


def _num(v, where, kind=float, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number")
    if kind is int and (float(v) != int(v)):
        raise ConfigError(f"{where}: expected an integer")
    v = kind(v)
    if positive and v <= 0:
        raise ConfigError(f"{where}: must be positive")
    return v


@dataclass
class Config:
    """Validated run configuration."""

    name: str
    dim: int
    family: RecurrenceFamily
    perturbation: PerturbedFamily | None
    seed: int
    fmt: str
    m: int
    m_max: int
    z: list
    identities: dict
    sobolev: dict
    experiments: list
    raw: dict


def _build_family(spec, dim, G0):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("family: expected an object with a 'type' field")
    kind = spec["type"]
    try:
        if kind == "builtin":
            name = spec.get("name")
            if name not in BUILTINS:
                raise ConfigError(f"family.name: unknown builtin {name!r} (choose from {sorted(BUILTINS)})")
            if name == "scalar-chebyshev":
                fam = scalar_chebyshev(a=_num(spec.get("a", 1.0), "family.a"),
                                       b=_num(spec.get("b", 0.0), "family.b"), G0=G0)
            elif name == "example1":
                fam = example1(shift=_num(spec.get("shift", 0.0), "family.shift"), G0=G0)
            else:
                fam = mild_nonsymmetric(G0=G0)
            if fam.dim != dim:
                raise ConfigError(f"family: builtin {name} has dimension {fam.dim}, config says dim={dim}")
            return fam
        if kind in ("constant", "nevai"):
            mats = [parse_matrix(spec.get(k), dim, f"family.{k}") for k in "ABC"]
            fam = RecurrenceFamily.constant(*mats, G0=G0, name=spec.get("name", kind))
            if kind == "nevai":
                Bd = spec.get("B_dir")
                fam = nevai_perturbation(
                    fam,
                    eps=_num(spec.get("eps", 1.0), "family.eps"),
                    power=_num(spec.get("power", 2), "family.power", positive=True),
                    B_dir=None if Bd is None else parse_matrix(Bd, dim, "family.B_dir"),
                )
            return fam
        if kind == "tabulated":
            seqs = {}
            for k in "ABC":
                v = spec.get(k)
                if not isinstance(v, list) or not v:
                    raise ConfigError(f"family.{k}: expected a non-empty list of matrices")
                seqs[k] = [parse_matrix(x, dim, f"family.{k}[{m}]") for m, x in enumerate(v)]
            lim = spec.get("limits")
            limits = None
            if lim is not None:
                limits = tuple(parse_matrix(lim.get(k), dim, f"family.limits.{k}") for k in "ABC")
            return RecurrenceFamily.tabulated(seqs["A"], seqs["B"], seqs["C"], G0=G0, limits=limits,
                                              name=spec.get("name", "tabulated"))
    except FamilyError as exc:
        raise ConfigError(f"family: {exc}") from exc
    raise ConfigError(f"family.type: unknown type {kind!r}")


def _build_perturbation(spec, fam):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("perturbation: expected an object")
    n = fam.dim
    if "Lambda" not in spec:
        raise ConfigError("perturbation.Lambda: missing")
    Lam = parse_matrix(spec["Lambda"], n, "perturbation.Lambda")
    if "points" in spec:
        pts = spec["points"]
        if not isinstance(pts, list) or not pts:
            raise ConfigError("perturbation.points: expected a non-empty list of [c, M] pairs")
        parsed = []
        for j, p in enumerate(pts):
            if not isinstance(p, list) or len(p) != 2:
                raise ConfigError(f"perturbation.points[{j}]: expected [c, M]")
            c = parse_scalar(p[0], f"perturbation.points[{j}][0]")
            M = _num(p[1], f"perturbation.points[{j}][1]", int)
            if M < 0:
                raise ConfigError(f"perturbation.points[{j}][1]: derivative order must be >= 0")
            parsed.append((c, M))
        total = sum(M + 1 for _, M in parsed)
        if total != n:
            raise ConfigError(f"perturbation.points: sum of (M_j + 1) is {total}, must equal dim={n}")
        try:
            delta = DeltaSpec(parsed)
        except ValueError as exc:
            raise ConfigError(f"perturbation.points: {exc}") from exc
    elif "delta_moment" in spec:
        delta = parse_matrix(spec["delta_moment"], n, "perturbation.delta_moment")
    else:
        raise ConfigError("perturbation: give either 'points' or 'delta_moment'")
    return PerturbedFamily(fam, delta, Lam)


def _parse_experiment(e, j, default_m_max):
    where = f"experiments[{j}]"
    if not isinstance(e, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = e.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"{where}.kind: unknown kind {kind!r} (choose from {sorted(EXPERIMENT_KINDS)})")
    exp_id = e.get("id", f"{kind}-{j}")
    if not isinstance(exp_id, str) or not exp_id or "/" in exp_id or exp_id.startswith("."):
        raise ConfigError(f"{where}.id: must be a plain file-name stem")
    out = {"id": exp_id, "kind": kind}
    out["m_max"] = _num(e.get("m_max", default_m_max), f"{where}.m_max", int, positive=True)
    out["z"] = None if e.get("z") is None else parse_scalar(e["z"], f"{where}.z")
    out["gate"] = None if e.get("gate") is None else _num(e["gate"], f"{where}.gate", positive=True)
    out["k"] = _num(e.get("k", 1), f"{where}.k", int)
    if kind == "derivative" and out["k"] not in (0, 1, 2):
        raise ConfigError(f"{where}.k: derivative order must be 0, 1 or 2")
    out["limit"] = e.get("limit", "markov")
    if out["limit"] not in ("markov", "ratio"):
        raise ConfigError(f"{where}.limit: must be 'markov' or 'ratio'")
    out["target"] = e.get("target", "derived")
    if out["target"] not in ("derived", "printed"):
        raise ConfigError(f"{where}.target: must be 'derived' or 'printed'")
    if kind == "relative" and out["z"] == 0:
        raise ConfigError(f"{where}.z: must be non-zero")
    return out


def load_config(path) -> Config:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


def parse_config(raw) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    dim = _num(raw.get("dim", 0), "dim", int, positive=True)
    G0 = None if raw.get("G0") is None else parse_matrix(raw["G0"], dim, "G0")
    if G0 is not None and np.linalg.cond(G0) > 1e14:
        raise ConfigError("G0: must be non-singular")
    if "family" not in raw:
        raise ConfigError("family: missing")
    fam = _build_family(raw["family"], dim, G0)
    pf = _build_perturbation(raw.get("perturbation"), fam)
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format: must be 'csv' or 'json'")
    m_max = _num(raw.get("m_max", 200), "m_max", int, positive=True)
    zs = raw.get("z", [])
    if not isinstance(zs, list):
        zs = [zs]
    zs = [parse_scalar(v, f"z[{i}]") for i, v in enumerate(zs)]
    ident = raw.get("identities", {})
    if not isinstance(ident, dict):
        raise ConfigError("identities: expected an object")
    sob = raw.get("sobolev", {})
    if not isinstance(sob, dict):
        raise ConfigError("sobolev: expected an object")
    exps = raw.get("experiments", [])
    if not isinstance(exps, list):
        raise ConfigError("experiments: expected a list")
    experiments = [_parse_experiment(e, j, m_max) for j, e in enumerate(exps)]
    ids = [e["id"] for e in experiments]
    if len(set(ids)) != len(ids):
        raise ConfigError("experiments: ids must be unique")
    return Config(
        name=str(raw.get("name", fam.name)),
        dim=dim,
        family=fam,
        perturbation=pf,
        seed=_num(raw.get("seed", 0), "seed", int),
        fmt=fmt,
        m=_num(raw.get("m", 5), "m", int),
        m_max=m_max,
        z=zs,
        identities=ident,
        sobolev=sob,
        experiments=experiments,
        raw=raw,
    )
