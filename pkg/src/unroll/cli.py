"""Command-line surface: ``unroll {validate,energy,build,verify,minimize,sweep}``.

Every command writes a JSON report that embeds the canonical configuration
with its SHA-256, alongside the input hash and the tolerance table.  Exit
status 0 means every check passed and 1 means a check failed; configuration
errors exit with 2, runtime failures with 3.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .admissibility import Options, check_admissible
from .config import RunConfig, canonical_json, config_from_dict, resolve_input
from .energy import density_csv, reduced_energy
from .errors import SchemaError, UnrollError
from .immersion import build_immersion, sample_mesh, to_obj, verify_isometry
from .optimizer import FAMILIES, DescentOptions, descend
from .presets import CATALOG
from .rulings import RulingField

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("validate", "energy", "build", "verify", "minimize", "sweep")
REPORT_VERSION = "1.0"

# preset -> (family, preset params passed to the family, preset param used as the start)
FAMILY_OF_PRESET = {
    "cylinder_wrap": ("cylinder_radius", ("L", "W"), "R"),
    "plane_identity": ("plane_width", ("L",), "W"),
    "cylinder_rim_stretch": ("rim_stretch", ("L", "W", "R"), "stretch"),
}


@dataclass
class CommandResult:
    status: int
    report: dict
    artifacts: dict = field(default_factory=dict)
    summary: str = ""


def worker_count(cfg: RunConfig) -> int:
    """Configured thread count (default: CPU count), capped by ``UNROLL_THREADS``."""
    n = cfg.data.get("threads") or os.cpu_count() or 1
    cap = os.environ.get("UNROLL_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise SchemaError(f"UNROLL_THREADS must be an integer, got {cap!r}", "/threads") from None
    return max(1, int(n))


def admissibility_options(cfg: RunConfig) -> Options:
    t, q, v = cfg.tolerances, cfg.quadrature, cfg.options["validate"]
    return Options(n_alpha=cfg.n_alpha, closure_tol=t["closure_tol"], curvature_tol=t["curvature_tol"],
                   angle_tol=t["angle_tol"], flatness_tol=t["flatness_tol"], margin_tol=t["margin_tol"],
                   exhaustive_crossing=v["exhaustive_crossing"], crossing_pair_cap=v["crossing_pair_cap"], modulus=q["modulus"],
                   quad_epsabs=q["epsabs"], quad_epsrel=q["epsrel"], direct_oracle=q["direct_oracle"])


def tolerance_table(cfg: RunConfig, preset=None) -> dict:
    table = dict(cfg.tolerances)
    if preset is not None:
        resolved = admissibility_options(cfg).resolved(preset.framed, preset.region)
        for k in ("closure_tol", "curvature_tol", "angle_tol", "flatness_tol", "closure_tol_abs", "eps_normal", "eps_kappa",
                  "eps_flat", "crossing_tol"):
            table[k] = resolved[k]
    return table


def _envelope(cmd: str, cfg: RunConfig, input_hash: str, tolerances: dict, checks: dict, result: dict,
              artifacts: dict) -> dict:
    return {"schema_version": REPORT_VERSION, "command": cmd, "config": cfg.to_dict(), "config_sha256": cfg.sha256,
            "input_sha256": input_hash, "tolerances": tolerances, "checks": {k: bool(v) for k, v in checks.items()},
            "passed": bool(all(checks.values())), "artifacts": artifacts, "result": _plain(result)}


def _plain(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


class _Writer:
    """Collects artifacts under the output directory, named ``<stem>.<command>.<ext>``."""

    def __init__(self, cfg: RunConfig, cmd: str, out_dir: str | None):
        self.dir = out_dir or cfg.outputs["dir"]
        self.prefix = f"{cfg.stem()}.{cmd}"
        self.files: dict[str, str] = {}
        self.pending: list[tuple[str, str]] = []

    def add(self, key: str, suffix: str, text: str) -> None:
        name = f"{self.prefix}{suffix}"
        self.files[key] = name
        self.pending.append((name, text))

    def flush(self, report: dict) -> str:
        os.makedirs(self.dir, exist_ok=True)
        for name, text in self.pending:
            with open(os.path.join(self.dir, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        path = os.path.join(self.dir, f"{self.prefix}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(canonical_json(report))
        return path


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _validate(cfg, preset, w):
    rep = check_admissible(preset.framed, preset.region, admissibility_options(cfg))
    checks = {k: c["passed"] for k, c in rep.clauses.items()}
    status = "admissible" if rep.overall else "rejected: " + ", ".join(rep.failed)
    return checks, rep.to_dict(), status


def _energy(cfg, preset, w):
    q = cfg.quadrature
    field_ = RulingField(preset.framed, preset.region, cfg.n_alpha)
    er = reduced_energy(field_, q["modulus"], q["epsabs"], q["epsrel"], q["limit"], direct=q["direct_oracle"])
    checks = {"finite": math.isfinite(er.energy)}
    if q["direct_oracle"]:
        agree = er.relative_agreement
        checks["direct_agreement"] = agree is not None and agree <= cfg.tolerances["energy_agreement_tol"]
    if cfg.outputs["phi_csv"]:
        w.add("phi_csv", ".phi.csv", density_csv(er))
    result = er.to_dict()
    result["expected"] = preset.expected
    return checks, result, f"E_reduced = {er.energy:.12g}"


def _admissible_immersion(cfg, preset):
    rep = check_admissible(preset.framed, preset.region, admissibility_options(cfg))
    if not rep.overall:
        return rep, None
    return rep, build_immersion(preset.framed, preset.region, rep.ruling_field, cfg.n_alpha)


def _build(cfg, preset, w):
    rep, imm = _admissible_immersion(cfg, preset)
    if imm is None:
        return {"admissible": False}, {"admissibility": rep.to_dict()}, "rejected: " + ", ".join(rep.failed)
    m = cfg.options["mesh"]
    mesh = sample_mesh(imm, m["n_along"], m["n_across"])
    w.add("mesh_obj", ".obj", to_obj(mesh))
    result = {"immersion": imm.to_dict(), "mesh": {"vertices": int(len(mesh.image)), "triangles": int(len(mesh.triangles)),
                                                   "n_along": m["n_along"], "n_across": m["n_across"]}}
    return {"admissible": True}, result, f"{len(mesh.image)} vertices, {len(mesh.triangles)} triangles"


def _verify(cfg, preset, w):
    rep, imm = _admissible_immersion(cfg, preset)
    if imm is None:
        return {"admissible": False}, {"admissibility": rep.to_dict()}, "rejected: " + ", ".join(rep.failed)
    m, v, t = cfg.options["mesh"], cfg.options["verify"], cfg.tolerances
    reg = verify_isometry(imm, m["n_along"], m["n_across"], v["k_neighbors"], fd_step=v["fd_step"],
                          threads=worker_count(cfg))
    checks = reg.checks(metric_tol=t["metric_tol"], jump_tol=t["normal_jump_tol"], k_tol=t["k_tol"],
                        collinear_tol=t["collinear_tol"], fd_tol=t["fd_tol"], q_tol=t["q_tol"])
    checks.pop("all")
    checks = {"admissible": True, **checks}
    result = reg.to_dict()
    result["checks"] = checks
    flagged = sum(1 for j in reg.mean_curvature_jumps if j["flagged"])
    return checks, result, f"metric {reg.metric_error:.3g}, normal jump {reg.normal_jump:.3g}, {flagged} curvature jump(s) flagged"


def make_family(cfg: RunConfig):
    """Descent family and start point for the configuration."""
    opt = cfg.options["minimize"]
    name, kwargs, p0 = opt["family"], {}, opt["p0"]
    preset = cfg.input.get("preset")
    if name is None:
        if preset is None or preset["name"] not in FAMILY_OF_PRESET:
            raise SchemaError(f"no descent family matches this input; set options.minimize.family "
                              f"(presets with a family: {sorted(FAMILY_OF_PRESET)})", "/options/minimize/family")
        name = FAMILY_OF_PRESET[preset["name"]][0]
    match = FAMILY_OF_PRESET.get(preset["name"]) if preset is not None else None
    if match is not None and match[0] == name:
        kwargs = {k: preset["params"][k] for k in match[1]}
        if p0 is None:
            p0 = [preset["params"][match[2]]]
    kwargs.update(opt["family_params"])
    try:
        family = FAMILIES[name](**kwargs)
    except TypeError as exc:
        raise SchemaError(f"bad family parameters for {name}: {exc}", "/options/minimize/family_params") from None
    if p0 is None:
        p0 = (0.5 * (family.lower + family.upper)).tolist()
    if len(p0) != family.dim:
        raise SchemaError(f"family {name} has {family.dim} parameters, p0 has {len(p0)}", "/options/minimize/p0")
    return family, np.asarray(p0, dtype=float)


def _minimize(cfg, preset, w):
    family, p0 = make_family(cfg)
    opt = cfg.options["minimize"]
    opts = DescentOptions(g_tol=opt["g_tol"], s_tol=opt["s_tol"], max_iter=opt["max_iter"], n_alpha=opt["n_alpha"],
                          threads=worker_count(cfg))
    p, trace = descend(family, p0, opts)
    w.add("trace_json", ".trace.json", trace.to_json())
    w.add("trace_csv", ".trace.csv", trace.to_csv())
    checks = {"converged": trace.termination in ("gradient", "step"), "monotone": trace.monotone()}
    result = {"family": family.name, "description": family.description, "p0": p0.tolist(), "p": p.tolist(),
              "objective": trace.objectives[-1] if trace.iterates else None, "termination": trace.termination,
              "evaluations": trace.evaluations, "iterations": len(trace.iterates) - 1}
    return checks, result, f"{family.name}: p = {p.tolist()} after {trace.evaluations} evaluations ({trace.termination})"


def _sweep(cfg, preset, w):
    sw = cfg.options["sweep"]
    src = cfg.input.get("preset")
    if src is None:
        raise SchemaError("sweep needs a preset input", "/input")
    param, values = sw["param"], sw["values"]
    if param is None or param not in src["params"]:
        raise SchemaError(f"sweep parameter must be one of {sorted(src['params'])}", "/options/sweep/param")
    if not values:
        raise SchemaError("sweep needs at least one value", "/options/sweep/values")
    q = cfg.quadrature

    def point(value):
        params = dict(src["params"], **{param: value})
        try:
            pr = CATALOG[src["name"]](**params)
            er = reduced_energy(RulingField(pr.framed, pr.region, cfg.n_alpha), q["modulus"], q["epsabs"],
                                q["epsrel"], q["limit"], direct=sw["direct_oracle"])
        except (UnrollError, ValueError, ArithmeticError) as exc:
            return {"value": value, "error": f"{type(exc).__name__}: {exc}"}
        return {"value": value, "energy_reduced": er.energy, "energy_direct": er.energy_direct,
                "infinite_count": er.infinite_count, "error": ""}

    with ThreadPoolExecutor(worker_count(cfg)) as pool:
        rows = list(pool.map(point, values))
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow([param, "energy_reduced", "energy_direct", "infinite_count", "error"])
    fmt = lambda x: "" if x is None else format(x, ".17g")
    for r in rows:
        out.writerow([fmt(r["value"]), fmt(r.get("energy_reduced")), fmt(r.get("energy_direct")),
                      r.get("infinite_count", ""), r["error"]])
    w.add("sweep_csv", ".csv", buf.getvalue())
    checks = {"all_points_evaluated": all(not r["error"] for r in rows)}
    return checks, {"param": param, "rows": rows}, f"{len(rows)} grid points"


HANDLERS = {"validate": _validate, "energy": _energy, "build": _build, "verify": _verify, "minimize": _minimize,
            "sweep": _sweep}


def run_subcommand(cmd: str, cfg: RunConfig, out_dir: str | None = None, write: bool = True) -> CommandResult:
    """Run one command; configuration errors propagate as :class:`SchemaError`, runtime errors are reported."""
    if cmd not in HANDLERS:
        raise SchemaError(f"unknown command {cmd!r}", "/")
    w = _Writer(cfg, cmd, out_dir)
    preset, input_hash, tolerances = None, "0" * 64, dict(cfg.tolerances)
    try:
        preset, input_hash = resolve_input(cfg)
        tolerances = tolerance_table(cfg, preset)
        checks, result, summary = HANDLERS[cmd](cfg, preset, w)
        status = EXIT_OK if all(checks.values()) else EXIT_CHECKS
    except SchemaError:
        raise
    except ValueError as exc:
        if preset is None:
            raise SchemaError(f"input could not be built: {exc}", "/input") from None
        checks, result, summary, status = _failure(exc)
    except Exception as exc:  # runtime failures become a report, not a traceback
        checks, result, summary, status = _failure(exc)
    report = _envelope(cmd, cfg, input_hash, tolerances, checks, result, dict(w.files))
    if write:
        report_path = w.flush(report)
        artifacts = {"report": report_path, **{k: os.path.join(w.dir, v) for k, v in w.files.items()}}
    else:
        artifacts = {}
    return CommandResult(status, report, artifacts, summary)


def _failure(exc):
    return ({"completed": False}, {"error": type(exc).__name__, "message": str(exc)},
            f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _pairs(items, flag):
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise SchemaError(f"{flag} expects key=value, got {item!r}", "/")
        out[key] = _value(val)
    return out


def _grid(text: str):
    key, sep, grid_text = text.partition("=")
    if not sep or not key:
        raise SchemaError(f"--grid expects key=start:stop:num or key=v1,v2,..., got {text!r}", "/options/sweep")
    try:
        if ":" in grid_text:
            start, stop, num = grid_text.split(":")
            values = np.linspace(float(start), float(stop), int(num)).tolist()
        else:
            values = [float(v) for v in grid_text.split(",") if v]
    except ValueError:
        raise SchemaError(f"cannot parse grid {grid_text!r}", "/options/sweep/values") from None
    return key, values


def config_from_args(args) -> RunConfig:
    base_dir = "."
    if args.config:
        if not os.path.exists(args.config):
            raise SchemaError(f"config file not found: {args.config}", "/")
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", "/") from None
        base_dir = os.path.dirname(os.path.abspath(args.config))
    elif args.preset:
        raw = {}
    else:
        raise SchemaError("give --config PATH or --preset NAME", "/input")
    if not isinstance(raw, dict):
        raise SchemaError("configuration must be a JSON object", "/")
    if args.preset:
        raw["input"] = {"preset": {"name": args.preset, "params": {}}}
    params = _pairs(args.param, "--param")
    if params:
        preset = raw.get("input", {}).get("preset")
        if preset is None:
            raise SchemaError("--param needs a preset input", "/input")
        preset.setdefault("params", {}).update(params)
    if args.n_alpha is not None:
        raw["n_alpha"] = args.n_alpha
    if args.out is not None:
        raw.setdefault("outputs", {})["dir"] = args.out
    tols = _pairs(args.tol, "--tol")
    if tols:
        raw.setdefault("tolerances", {}).update(tols)
    options = raw.setdefault("options", {})
    if args.exhaustive_crossing:
        options.setdefault("validate", {})["exhaustive_crossing"] = True
    if getattr(args, "phi_csv", False):
        raw.setdefault("outputs", {})["phi_csv"] = True
    if getattr(args, "grid", None):
        key, values = _grid(args.grid)
        options.setdefault("sweep", {}).update({"param": key, "values": values})
    if getattr(args, "family", None):
        options.setdefault("minimize", {})["family"] = args.family
    if getattr(args, "p0", None):
        options.setdefault("minimize", {})["p0"] = args.p0
    if not options:
        raw.pop("options")
    return config_from_dict(raw, base_dir)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--preset", metavar="NAME", choices=sorted(CATALOG), help="catalog preset (replaces the config input)")
    p.add_argument("--param", metavar="K=V", action="append", help="preset parameter override (repeatable)")
    p.add_argument("--n-alpha", metavar="INT", type=int, help="boundary grid size")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--tol", metavar="K=V", action="append", help="tolerance override (repeatable)")
    p.add_argument("--exhaustive-m2", "--exhaustive-crossing", dest="exhaustive_crossing", action="store_true",
                   help="all-pairs ruling crossing check")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unroll", description="Developable isometric immersions of planar regions "
                                     "built from framed boundary curves.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {"validate": "admissibility report", "energy": "bending energy report",
             "build": "construct the immersion and write an OBJ mesh", "verify": "sampled isometry and regularity checks",
             "minimize": "penalty descent over a curve family", "sweep": "energy over a preset-parameter grid"}
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p)
        if name == "energy":
            p.add_argument("--phi-csv", action="store_true", help="also write the energy density samples")
        if name == "sweep":
            p.add_argument("--grid", metavar="K=VALUES", help="parameter grid: K=start:stop:num or K=v1,v2,...")
        if name == "minimize":
            p.add_argument("--family", choices=sorted(FAMILIES), help="descent family (default: from the preset)")
            p.add_argument("--p0", type=float, nargs="+", help="start point")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        res = run_subcommand(args.command, cfg)
    except SchemaError as exc:
        print(f"unroll: config error at {exc.pointer}: {exc.detail}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"unroll: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    verdict = {EXIT_OK: "PASS", EXIT_CHECKS: "FAIL", EXIT_RUNTIME: "ERROR"}[res.status]
    failed = [k for k, v in res.report["checks"].items() if not v]
    line = f"{args.command} {cfg.stem()}: {verdict}; {res.summary}"
    if failed and res.status == EXIT_CHECKS:
        line += f" (failed: {', '.join(failed)})"
    print(line)
    print(f"report: {res.artifacts['report']}")
    if res.status == EXIT_RUNTIME:
        print(f"unroll: runtime error: {res.summary}", file=sys.stderr)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
