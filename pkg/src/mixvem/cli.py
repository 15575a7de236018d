"""Batch runner: ``mixvem {mesh,solve,convergence,sweep,spurious} [flags]``.

Settings come from built-in defaults, then an optional flat YAML config file
(``--config``), then command-line flags.  Exit codes: 0 success, 2 invalid
configuration, 3 numerical failure.  Every run writes ``manifest.json`` in the
output directory, also on failure.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import analysis, export
from .assembly import NumericalError, assemble
from .eigensolver import Backend, SolveOptions, solve_eigen
from .mesh import BcSpec, Domain, MeshError, MeshFamily, generate, quality, tag_boundary, write_mesh

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "domain": None, "bc": "dirichlet", "family": "t2", "n": 16,
    "n_list": [8, 16, 32, 64], "w": 1.0, "w_list": None, "modes": 6, "seed": 0,
    "backend": "auto", "out": "results", "mesh_out": None, "vtk_out": None,
    "dump_matrices": None, "rel_window": 0.35, "plot": True,
    "track_modes": False,
}
SWEEP_W = [4.0 ** k for k in range(6, -7, -1)] + [0.0]
COMMANDS = ("mesh", "solve", "convergence", "sweep", "spurious")


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(v) for v in str(text).replace(",", " ").split()]


def _ints(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixvem", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat YAML file of settings (flags override it)")
    p.add_argument("--domain", choices=[d.value for d in Domain])
    p.add_argument("--bc", choices=[b.value for b in BcSpec])
    p.add_argument("--family", type=str.lower, choices=[f.value for f in MeshFamily])
    p.add_argument("--n", type=int)
    p.add_argument("--n-list", type=_ints, dest="n_list")
    p.add_argument("--w", type=float)
    p.add_argument("--w-list", type=_floats, dest="w_list")
    p.add_argument("--modes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=[b.value for b in Backend])
    p.add_argument("--out")
    p.add_argument("--mesh-out", dest="mesh_out")
    p.add_argument("--vtk-out", dest="vtk_out")
    p.add_argument("--dump-matrices", dest="dump_matrices")
    p.add_argument("--rel-window", type=float, dest="rel_window")
    p.add_argument("--track-modes", action="store_true", dest="track_modes", default=None,
                   help="order convergence columns by eigenfunction identity (closed-form domains)")
    p.add_argument("--no-plot", action="store_false", dest="plot", default=None)
    return p


def load_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must be a flat mapping")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return validate(cfg, args.command)


def validate(cfg: dict, command: str) -> dict:
    try:
        cfg["family"] = MeshFamily(str(cfg["family"]).lower()).value
        cfg["bc"] = BcSpec(cfg["bc"]).value
        cfg["backend"] = Backend(cfg["backend"]).value
        if cfg["domain"] is None:
            if cfg["family"] in ("t5", "t6", "t7"):
                cfg["domain"] = Domain.LSHAPE.value
            elif cfg["bc"] == "mixed":
                cfg["domain"] = Domain.SYM_SQUARE.value
            else:
                cfg["domain"] = Domain.UNIT_SQUARE.value
        cfg["domain"] = Domain(cfg["domain"]).value
        cfg["n"] = int(cfg["n"])
        cfg["n_list"] = sorted(int(v) for v in (_ints(cfg["n_list"]) if isinstance(cfg["n_list"], str)
                                                 else cfg["n_list"]))
        cfg["w"] = float(cfg["w"])
        if cfg["w_list"] is None:
            cfg["w_list"] = SWEEP_W
        elif isinstance(cfg["w_list"], str):
            cfg["w_list"] = _floats(cfg["w_list"])
        cfg["w_list"] = [float(v) for v in cfg["w_list"]]
        cfg["modes"] = int(cfg["modes"])
        cfg["seed"] = int(cfg["seed"])
        cfg["rel_window"] = float(cfg["rel_window"])
        cfg["plot"] = bool(cfg["plot"])
        cfg["track_modes"] = bool(cfg["track_modes"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["n"] < 1 or any(n < 1 for n in cfg["n_list"]):
        raise ConfigError("N must be a positive integer")
    if cfg["w"] < 0 or any(w < 0 for w in cfg["w_list"]):
        raise ConfigError("stability constants must be non-negative")
    if cfg["modes"] < 1:
        raise ConfigError("modes must be at least 1")
    if command == "convergence" and len(cfg["n_list"]) < 2:
        raise ConfigError("convergence needs at least two values in n_list")
    if cfg["bc"] == "mixed" and cfg["domain"] != Domain.SYM_SQUARE.value:
        raise ConfigError("mixed boundary conditions are defined on sym-square only")
    if cfg["track_modes"] and cfg["domain"] == Domain.LSHAPE.value:
        raise ConfigError("mode tracking needs closed-form eigenfunctions (not available on lshape)")
    return cfg


def _mesh(cfg, n=None):
    try:
        return tag_boundary(generate(cfg["domain"], cfg["family"], n or cfg["n"], cfg["seed"]), cfg["bc"])
    except MeshError as exc:
        raise ConfigError(str(exc)) from exc


def _check_modes(cfg, mesh):
    if cfg["modes"] > mesh.n_cells:
        raise ConfigError(f"{cfg['modes']} modes requested but the mesh has only {mesh.n_cells} cells")


def cmd_mesh(cfg, out: Path, files: list, timer):
    with timer("generate"):
        mesh = _mesh(cfg)
    q = quality(mesh)
    path = Path(cfg["mesh_out"] or out / "mesh.txt")
    write_mesh(mesh, path)
    files.append(path)
    summary = {"cells": mesh.n_cells, "vertices": mesh.n_vertices, "edges": mesh.n_edges,
               "h": mesh.h(), "boundary": mesh.count_tags(),
               "quality": {"min_edge_to_diameter": q.min_edge_to_diameter,
                           "min_inradius_to_diameter": q.min_inradius_to_diameter,
                           "all_convex": q.all_convex}}
    export.write_json(out / "mesh.json", summary)
    files.append(out / "mesh.json")
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, {mesh.n_edges} edges written to {path}")
    print(f"quality: min edge/diameter {q.min_edge_to_diameter:.4f}, "
          f"min inradius/diameter {q.min_inradius_to_diameter:.4f}, convex {q.all_convex}")


def cmd_solve(cfg, out, files, timer):
    with timer("generate"):
        mesh = _mesh(cfg)
    _check_modes(cfg, mesh)
    if cfg["mesh_out"]:
        write_mesh(mesh, cfg["mesh_out"])
        files.append(Path(cfg["mesh_out"]))
    with timer("assemble"):
        pencil, dofs = assemble(mesh, cfg["w"])
    if cfg["dump_matrices"]:
        files += export.dump_matrices(pencil, cfg["dump_matrices"])
    with timer("solve"):
        res = solve_eigen(pencil, SolveOptions(m=cfg["modes"], backend=cfg["backend"]))
    export.write_csv(out / "solve.csv", ["mode", "lambda", "residual"],
                     [[str(j + 1), lam, r] for j, (lam, r) in enumerate(zip(res.lambdas, res.residuals))])
    export.write_json(out / "solve.json", {"config": _echo(cfg), "lambdas": res.lambdas,
                                           "residuals": res.residuals, "backend": res.backend,
                                           "n_sigma": pencil.n_sigma, "n_u": pencil.n_u, "h": mesh.h()})
    files += [out / "solve.csv", out / "solve.json"]
    if cfg["vtk_out"]:
        files += export.write_vtk_modes(mesh, dofs, res, cfg["vtk_out"])
    print(" ".join(f"{v:.4f}" for v in res.lambdas))


def cmd_convergence(cfg, out, files, timer):
    for n in cfg["n_list"]:
        _check_modes(cfg, _mesh(cfg, n))
    with timer("study"):
        st = analysis.convergence_study(cfg["domain"], cfg["family"], cfg["n_list"], cfg["w"], cfg["bc"],
                                        cfg["modes"], cfg["seed"], cfg["backend"], track=cfg["track_modes"])
    m = cfg["modes"]
    header = ["N", "h"] + [f"lambda_h{j + 1}" for j in range(m)]
    rows = [[str(n), h, *lam] for n, h, lam in zip(st.n_values, st.h_values, st.lambdas)]
    rows.append(["Order", ""] + list(st.orders))
    rows.append(["Exact" if st.reference_kind == "exact" else "Extrap.", ""] + list(st.reference))
    if st.extrapolated and all(e is not None for e in st.extrapolated):
        rows.append(["Extrap.order", ""] + [e.order for e in st.extrapolated])
        if st.reference_kind == "exact":
            rows.append(["Extrap.", ""] + [e.lam_inf for e in st.extrapolated])
    export.write_csv(out / "convergence.csv", header, rows)
    export.write_json(out / "convergence.json", {
        "config": _echo(cfg), "N": st.n_values, "h": st.h_values, "lambdas": st.lambdas,
        "orders": st.orders, "reference": st.reference, "reference_kind": st.reference_kind,
        "extrapolation": [None if e is None else {"lam_inf": e.lam_inf, "order": e.order, "constant": e.constant}
                          for e in st.extrapolated]})
    files += [out / "convergence.csv", out / "convergence.json"]
    if cfg["plot"]:
        from .plotting import convergence_figure
        convergence_figure(st, out / "convergence.png", f"{cfg['family']} on {cfg['domain']} ({cfg['bc']})")
        files.append(out / "convergence.png")
    print("orders: " + " ".join(f"{o:.4f}" for o in st.orders))


def cmd_sweep(cfg, out, files, timer):
    with timer("sweep"):
        tb = analysis.stabilization_sweep(cfg["domain"], cfg["family"], cfg["n_list"], cfg["w_list"],
                                          cfg["bc"], 1, cfg["seed"], cfg["backend"])
    header = ["N", "h"] + [f"w={w:g}" for w in tb.w_values]
    rows = [[str(n), h, *tb.lambdas[:, i, 0]] for i, (n, h) in enumerate(zip(tb.n_values, tb.h_values))]
    rows.append(["Order", ""] + list(tb.orders))
    rows.append(["Exact", ""] + [tb.reference] * len(tb.w_values))
    export.write_csv(out / "sweep.csv", header, rows)
    export.write_json(out / "sweep.json", {"config": _echo(cfg), "N": tb.n_values, "w": tb.w_values,
                                           "h": tb.h_values, "lambda_h1": tb.lambdas[:, :, 0],
                                           "orders": tb.orders, "reference": tb.reference})
    files += [out / "sweep.csv", out / "sweep.json"]
    if cfg["plot"]:
        from .plotting import sweep_figure
        sweep_figure(tb, out / "sweep.png")
        files.append(out / "sweep.png")
    print("orders: " + " ".join(f"w={w:g}:{o:.4f}" for w, o in zip(tb.w_values, tb.orders)))


def cmd_spurious(cfg, out, files, timer):
    mesh = _mesh(cfg)
    _check_modes(cfg, mesh)
    with timer("solve"):
        res, rep = analysis.spurious_scan(cfg["domain"], cfg["family"], cfg["n"], cfg["w"], cfg["bc"],
                                          cfg["modes"], cfg["seed"], cfg["backend"], cfg["rel_window"])
    exact = analysis.exact_spectrum(cfg["domain"], cfg["bc"], cfg["modes"]).values
    matched = dict(rep.matches)
    export.write_csv(out / "spurious.csv", ["mode", "lambda_h", "matched_exact", "spurious"],
                     [[str(j + 1), lam, matched.get(float(lam)), "yes" if float(lam) in rep.flagged else "no"]
                      for j, lam in enumerate(res.lambdas)])
    export.write_json(out / "spurious.json", {
        "config": _echo(cfg), "computed": res.lambdas, "exact": exact, "window": rep.window,
        "expected_count": rep.expected_count, "computed_count": rep.computed_count,
        "flagged": rep.flagged, "flagged_count": len(rep.flagged), "rel_window": cfg["rel_window"]})
    files += [out / "spurious.csv", out / "spurious.json"]
    if cfg["plot"]:
        from .plotting import spectrum_figure
        spectrum_figure(res.lambdas, exact, rep.flagged, out / "spurious.png")
        files.append(out / "spurious.png")
    print(f"flagged {len(rep.flagged)} of {len(res.lambdas)}: " + " ".join(f"{v:.4f}" for v in rep.flagged))


def _echo(cfg):
    return {k: v for k, v in cfg.items() if k not in ("out", "mesh_out", "vtk_out", "dump_matrices")}


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out or DEFAULTS["out"])
    files: list = []
    stages: dict = {}
    manifest = {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
                "versions": _versions(), "status": "error", "config": None}

    class timer:
        def __init__(self, name):
            self.name = name

        def __enter__(self):
            self.t = time.perf_counter()

        def __exit__(self, *exc):
            stages[self.name] = round(time.perf_counter() - self.t, 4)

    code = EXIT_OK
    try:
        cfg = load_config(args)
        manifest["config"] = cfg
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        {"mesh": cmd_mesh, "solve": cmd_solve, "convergence": cmd_convergence,
         "sweep": cmd_sweep, "spurious": cmd_spurious}[args.command](cfg, out, files, timer)
        manifest["status"] = "ok"
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        code = EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        code = EXIT_NUMERIC
    finally:
        manifest["stages_seconds"] = stages
        manifest["files"] = [str(f) for f in files]
        try:
            out.mkdir(parents=True, exist_ok=True)
            export.write_json(out / "manifest.json", manifest)
        except OSError as exc:
            print(f"cannot write manifest: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
