"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 numerical failure (the error class
name is printed on stderr), 3 I/O error. Reports go to stdout, or to
``--out`` with the one-line summary on stdout; without ``--out`` the summary
goes to stderr so stdout stays machine readable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from typing import Callable, Optional

import numpy as np

from . import serialize
from .asymptotics import effective_velocity_average, effective_velocity_flow
from .catalog import NAMES, FRAMES, catalog_get, frame_get, get_field
from .characteristics import LevelSpec, sigma_on_grid
from .errors import IsoflowError, UnknownName
from .fields import check_componentwise_sign, check_ratio_condition, tensor_grid
from .flow import IntegrationConfig
from .homogenization import INITIAL_DATA, TransportProblem, convergence_study, default_grid, initial_datum
from .torus import build_transport_matrix, cross_gradients, invariance_check, slab_sign_detector

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

# Defaults applied after the config file; flags win over both.
DEFAULTS = {
    "format": None,  # per-command default below
    "out": None,
    "threads": None,
    "rtol": 1e-10,
    "atol": 1e-12,
    "sigma": "catalog",
    "phi": None,
    "times": "0.1,1,10",
    "n": 64,
    "frame": None,
    "grid_n": None,
}
DEFAULT_FORMAT = {"reconstruct": "csv", "catalog list": "csv"}

# Options whose values may start with '-' (negative numbers, -inf).
_VALUE_OPTIONS = {"--grid", "--band", "--level", "--seed", "--horizons", "--eps", "--time", "--times"}


class UsageError(Exception):
    pass


# --- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--format", choices=("csv", "json"), default=None, help="output format")
    g.add_argument("--out", default=None, help="write the report to this file")
    g.add_argument("--threads", type=int, default=None, help="worker cap (fallback: ISOFLOW_THREADS)")
    g.add_argument("--config", default=None, help="flat JSON object of option defaults")
    g.add_argument("--rtol", type=float, default=None, help="integrator relative tolerance")
    g.add_argument("--atol", type=float, default=None, help="integrator absolute tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isoflow", description="Isotropic realizability and torus-flow toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("catalog", help="list or probe the field catalog")
    csub = p.add_subparsers(dest="action", metavar="ACTION")
    csub.required = True
    pl = csub.add_parser("list", help="list catalog entries", description="CSV columns: name, dimension, periodic, closed_forms, frame.")
    _common(pl)
    pp = csub.add_parser("probe", help="run the catalog checks on one entry")
    pp.add_argument("name")
    _common(pp)

    p = sub.add_parser(
        "reconstruct",
        help="sigma by the method of characteristics",
        description="CSV columns: x1..xd, u, tau, sigma, status (tau and sigma empty on failure).",
    )
    p.add_argument("--field", default=None, help="catalog field NAME[:variant]")
    p.add_argument("--level", type=float, default=None, help="level c_u (default: catalog level)")
    p.add_argument("--band", default=None, help="LO,HI (inf allowed; default: catalog band)")
    p.add_argument("--grid", default=None, help="lo,hi,n or per axis lo,hi,n;lo,hi,n")
    _common(p)

    p = sub.add_parser(
        "check-invariant",
        help="invariant-measure check on the torus",
        description="CSV columns: section, key, value.",
    )
    p.add_argument("--field", default=None)
    p.add_argument("--sigma", default=None, help="catalog | one | frame")
    p.add_argument("--phi", default=None, help="test function such as cos2pi_x2 or sin4pi_x1")
    p.add_argument("--times", default=None, help="comma-separated times")
    p.add_argument("--n", type=int, default=None, help="quadrature nodes per axis")
    _common(p)

    p = sub.add_parser("criterium", help="gradient-invertibility criterium for a frame", description="CSV columns: key, value.")
    p.add_argument("--frame", default=None, help=f"one of {', '.join(FRAMES)}")
    p.add_argument("--n", type=int, default=None)
    _common(p)

    p = sub.add_parser(
        "asymptotics",
        help="effective velocity X(T,x)/T",
        description="CSV columns: T, seed, est1..estd, error, bound.",
    )
    p.add_argument("--field", default=None)
    p.add_argument("--seed", action="append", default=None, help="x1,x2,... (repeatable)")
    p.add_argument("--horizons", default=None, help="T1,T2,...")
    p.add_argument("--frame", default=None, help="'catalog' or a frame name; attaches xi and the corrector bound")
    _common(p)

    p = sub.add_parser(
        "homogenize",
        help="transport homogenization convergence study",
        description="CSV columns: eps, sup_error, ratio, bound.",
    )
    p.add_argument("--field", default=None)
    p.add_argument("--u0", default=None, help=f"one of {', '.join(INITIAL_DATA)}")
    p.add_argument("--eps", default=None, help="decreasing list E1,E2,E3,...")
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--frame", default=None, help="'catalog' (default) or a frame name")
    p.add_argument("--grid-n", dest="grid_n", type=int, default=None, help="grid points per axis on [0,1]^d")
    _common(p)
    return parser


def _normalize_argv(argv: list) -> list:
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_OPTIONS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise UsageError("config file must be a flat JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _merge(args: argparse.Namespace, config: dict) -> argparse.Namespace:
    for key, val in config.items():
        if key in ("command", "action", "config"):
            continue
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    for key, val in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    if args.format is None:
        key = f"{args.command} {getattr(args, 'action', '')}".strip()
        args.format = DEFAULT_FORMAT.get(key, DEFAULT_FORMAT.get(args.command, "json"))
    if args.threads is None:
        env = os.environ.get("ISOFLOW_THREADS")
        args.threads = int(env) if env else 1
    if args.threads < 1:
        raise UsageError("--threads must be positive")
    return args


# --- small parsers ----------------------------------------------------------


def _floats(text, what: str) -> list:
    try:
        if isinstance(text, (int, float)):
            return [float(text)]
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what}: {text!r}") from None


def _require(args, name: str):
    val = getattr(args, name, None)
    if val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return val


def _parse_grid(text: str, dim: int):
    parts = [p for p in str(text).split(";") if p.strip()]
    if len(parts) not in (1, dim):
        raise UsageError(f"grid needs one or {dim} axis specs")
    specs = []
    for p in parts:
        vals = _floats(p, "grid")
        if len(vals) != 3 or not all(math.isfinite(v) for v in vals) or vals[2] < 1 or vals[2] != int(vals[2]):
            raise UsageError(f"grid axis spec must be finite lo,hi,n: {p!r}")
        specs.append((vals[0], vals[1], int(vals[2])))
    if len(specs) == 1:
        specs = specs * dim
    lo, hi, n = zip(*specs)
    axes = tuple(np.linspace(a, b, k) for a, b, k in specs)
    return tensor_grid(lo, hi, n, dim), axes


_PHI = re.compile(r"^(sin|cos)(\d*)pi_x(\d+)$")


def parse_phi(name: str, dim: int) -> Callable:
    """Test functions ``cos2pi_x2``, ``sin4pi_x1``, ... (trig(k pi x_j))."""
    m = _PHI.match(name)
    if m is None:
        raise UsageError(f"unknown test function {name!r} (expected e.g. cos2pi_x1)")
    trig = np.sin if m.group(1) == "sin" else np.cos
    k = int(m.group(2) or 1)
    j = int(m.group(3)) - 1
    if not 0 <= j < dim:
        raise UsageError(f"test function coordinate out of range for dimension {dim}")
    return lambda x: trig(k * np.pi * np.asarray(x)[..., j])


def _cfg(args) -> IntegrationConfig:
    return IntegrationConfig(rel_tol=float(args.rtol), abs_tol=float(args.atol))


def _flat_rows(obj, prefix: str = "") -> list:
    if isinstance(obj, dict):
        rows = []
        for k, v in obj.items():
            rows += _flat_rows(v, f"{prefix}.{k}" if prefix else str(k))
        return rows
    if isinstance(obj, (list, tuple)) and any(isinstance(v, (dict, list, tuple)) for v in obj):
        rows = []
        for i, v in enumerate(obj):
            rows += _flat_rows(v, f"{prefix}.{i}")
        return rows
    if isinstance(obj, (list, tuple)):
        return [[prefix, " ".join(serialize.fmt(v) for v in obj)]]
    return [[prefix, serialize.fmt(obj)]]


def _kv_csv(obj: dict, header=("key", "value")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(_flat_rows(obj))
    return buf.getvalue()


# --- commands ---------------------------------------------------------------
# Each returns (report text, one-line summary).


def cmd_catalog_list(args):
    rows = []
    for name in NAMES:
        e = catalog_get(name)
        rows.append({
            "name": name,
            "dimension": e.dim,
            "periodic": e.field.periodic,
            "closed_forms": e.closed_forms.available(),
            "frame": e.frame is not None,
        })
    if args.format == "json":
        text = serialize.dumps(rows)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "dimension", "periodic", "closed_forms", "frame"])
        for r in rows:
            w.writerow([r["name"], r["dimension"], serialize.fmt(r["periodic"]), " ".join(r["closed_forms"]), serialize.fmt(r["frame"])])
        text = buf.getvalue()
    return text, f"catalog: {len(rows)} entries"


def probe_entry(name: str) -> dict:
    e = catalog_get(name)
    d = e.dim
    checks: dict = {}
    lo, hi = (0.0, 1.0) if e.field.periodic else (-1.0, 1.0)
    grid = tensor_grid(lo, hi, 9 if d <= 2 else 7, d)
    checks["componentwise_sign"] = check_componentwise_sign(e.field, grid).to_dict()
    if e.potential is not None and e.ratio_bounds is not None:
        checks["ratio_condition"] = check_ratio_condition(e.potential, grid, e.ratio_bounds).to_dict()
    checks["closed_forms"] = e.closed_forms.available()
    if e.field.periodic:
        checks["slab"] = [slab_sign_detector(e.field, k, 64, 64).to_dict() for k in range(d)]
        for key, f in e.variants.items():
            checks[f"slab[{key}]"] = [slab_sign_detector(f, k, 64, 64).to_dict() for k in range(d)]
    if e.frame is not None:
        rep = build_transport_matrix(e.frame, 32 if d <= 2 else 16)
        checks["criterium"] = {"pass": rep.passed, "xi": rep.xi.tolist()}
    return {"name": name, "dimension": d, "periodic": e.field.periodic, "checks": checks}


def cmd_catalog_probe(args):
    rep = probe_entry(args.name)
    text = serialize.dumps(rep) if args.format == "json" else _kv_csv(rep)
    return text, f"probe {args.name}: {len(rep['checks'])} checks"


def cmd_reconstruct(args):
    name = _require(args, "field")
    entry = catalog_get(name.partition(":")[0])
    field = get_field(name)
    potential = entry.level_function
    if potential is None:
        raise UsageError(f"{name} has no level function")
    level = args.level if args.level is not None else entry.level_value
    if level is None:
        raise UsageError("--level is required for this field")
    band = tuple(_floats(args.band, "band")) if args.band is not None else entry.band
    if band is None or len(band) != 2:
        raise UsageError("--band must be LO,HI")
    spec = LevelSpec(potential, float(level), band)
    grid, axes = _parse_grid(_require(args, "grid"), field.dim)
    sf = sigma_on_grid(field, spec, grid, _cfg(args), threads=args.threads, axes=axes)
    text = sf.to_csv() if args.format == "csv" else sf.to_json()
    ok = sf.ok
    if ok.any():
        rng = f"sigma in [{serialize.fmt(np.min(sf.sigma[ok]))}, {serialize.fmt(np.max(sf.sigma[ok]))}]"
    else:
        rng = "no valid points"
    return text, f"reconstruct {name}: {int(ok.sum())}/{len(ok)} points ok, {rng}"


def _resolve_sigma(choice: str, name: str, d: int):
    entry = catalog_get(name.partition(":")[0])
    if choice == "one":
        return lambda x: np.ones(np.shape(x)[:-1])
    if choice == "catalog":
        if ":" in name:
            return None
        return entry.invariant_sigma
    if choice == "frame":
        return cross_gradients(entry.require_frame()).sigma
    raise UsageError(f"--sigma must be catalog, one or frame, not {choice!r}")


def cmd_check_invariant(args):
    name = _require(args, "field")
    field = get_field(name)
    if not field.periodic:
        raise UsageError(f"{name} is not periodic")
    d = field.dim
    report: dict = {"field": name}
    report["slab"] = [slab_sign_detector(field, k).to_dict() for k in range(d)]
    sigma = _resolve_sigma(args.sigma, name, d)
    if sigma is None:
        report["invariance"] = None
        summary_tail = "no candidate sigma"
    else:
        phi = parse_phi(args.phi or f"cos2pi_x{d}", d)
        times = _floats(args.times, "times")
        inv = invariance_check(sigma, field, phi, times, int(args.n), _cfg(args))
        report["invariance"] = inv.to_dict()
        summary_tail = f"max deviation {serialize.fmt(inv.max_deviation)}"
    verdicts = [s["verdict"] for s in report["slab"]]
    verdict = "NoInvariantMeasure" if "NoInvariantMeasure" in verdicts else "Inconclusive"
    report["verdict"] = verdict
    text = serialize.dumps(report) if args.format == "json" else _kv_csv(report, ("section", "value"))
    return text, f"check-invariant {name}: slab {verdict}, {summary_tail}"


def cmd_criterium(args):
    name = _require(args, "frame")
    frame = frame_get(name)
    rep = build_transport_matrix(frame, int(args.n))
    out = {"frame": name, **rep.to_dict()}
    text = serialize.dumps(out) if args.format == "json" else _kv_csv(out)
    xi = " ".join(serialize.fmt(v) for v in rep.xi)
    return text, f"criterium {name}: {'pass' if rep.passed else 'fail'}, xi = ({xi})"


def _criterium_for(name: str, frame_opt: str):
    if frame_opt in (None, "none"):
        return None
    frame = catalog_get(name.partition(":")[0]).require_frame() if frame_opt == "catalog" else frame_get(frame_opt)
    return build_transport_matrix(frame, 64 if frame.dim <= 2 else 16)


def cmd_asymptotics(args):
    name = _require(args, "field")
    field = get_field(name)
    entry = catalog_get(name.partition(":")[0])
    seeds = args.seed if args.seed is not None else ["0" + ",0" * (field.dim - 1)]
    if isinstance(seeds, str):
        seeds = [seeds]
    pts = np.array([_floats(s, "seed") for s in seeds])
    horizons = _floats(_require(args, "horizons"), "horizons")
    crit = _criterium_for(name, args.frame)
    reference = None
    if crit is None and ":" not in name:
        reference = entry.closed_forms.xi
    rep = effective_velocity_flow(field, pts, horizons, _cfg(args), criterium=crit, reference=reference)
    d = rep.to_dict()
    if entry.invariant_sigma is not None and ":" not in name:
        d["average_estimate"] = effective_velocity_average(entry.invariant_sigma, field).tolist()
    text = serialize.dumps(d) if args.format == "json" else rep.to_csv()
    errs = rep.errors
    tail = f", max error {serialize.fmt(float(np.max(errs)))}" if errs is not None else ""
    return text, f"asymptotics {name}: {len(horizons)} horizons x {len(pts)} seeds{tail}"


def cmd_homogenize(args):
    name = _require(args, "field")
    field = get_field(name)
    u0, lip = initial_datum(_require(args, "u0"), field.dim)
    eps = _floats(_require(args, "eps"), "eps")
    t = float(_require(args, "time"))
    crit = _criterium_for(name, args.frame or "catalog")
    grid = default_grid(field.dim, args.grid_n)
    template = TransportProblem(u0, field, eps[0], t, grid, lipschitz=lip)
    study = convergence_study(template, eps, crit.xi, _cfg(args), sup_wsharp=crit.sup_wsharp(64 if field.dim <= 2 else 16))
    text = study.to_json() if args.format == "json" else study.to_csv()
    rate = "undefined" if study.rate is None else serialize.fmt(study.rate)
    return text, f"homogenize {name}: rate {rate}, within bound {study.within_bounds}"


COMMANDS = {
    ("catalog", "list"): cmd_catalog_list,
    ("catalog", "probe"): cmd_catalog_probe,
    ("reconstruct", None): cmd_reconstruct,
    ("check-invariant", None): cmd_check_invariant,
    ("criterium", None): cmd_criterium,
    ("asymptotics", None): cmd_asymptotics,
    ("homogenize", None): cmd_homogenize,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize_argv(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args = _merge(args, _load_config(args.config))
        handler = COMMANDS[(args.command, getattr(args, "action", None))]
        text, summary = handler(args)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            print(summary, file=stdout)
        else:
            stdout.write(text)
            print(summary, file=stderr)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=stderr)
        return EXIT_USAGE
    except UnknownName as exc:
        print(f"usage error: {exc.name}: {exc}", file=stderr)
        return EXIT_USAGE
    except IsoflowError as exc:
        print(f"error: {exc.name}: {exc}", file=stderr)
        return EXIT_NUMERIC
    except serialize.NaNInOutput as exc:
        print(f"error: NaNInOutput: {exc}", file=stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"usage error: config is not valid JSON: {exc}", file=stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
