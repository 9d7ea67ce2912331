"""Command-line entry point: ``asssolve {mesh-info,bench,eig,export-matrices}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import (
    METHODS,
    BenchSpec,
    ConfigError,
    emit_eig_scatter,
    export_matrices,
    mesh_info,
    mesh_info_csv,
    rows_to_csv,
    run_bench,
)

log = logging.getLogger("asssolve")


def _cmd_mesh_info(args) -> int:
    infos = [mesh_info(k) for k in args.k]
    text = mesh_info_csv(infos)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_alpha(items: list[str] | None) -> dict[str, float]:
    """``--alpha 1e-3`` applies to every method; ``--alpha p-bas=0.5`` to one."""
    out = {}
    for item in items or []:
        if "=" in item:
            name, value = item.split("=", 1)
            out[name] = float(value)
        else:
            out["*"] = float(item)
    return out


def _cmd_bench(args) -> int:
    spec = BenchSpec.from_json(args.config) if args.config else BenchSpec()
    data = spec.to_dict()
    for key in ("k", "nu", "omega", "out", "time_limit"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if args.method is not None:
        data["methods"] = args.method
    alpha = dict(data["alpha"])
    overrides = _parse_alpha(args.alpha)
    if "*" in overrides:
        value = overrides.pop("*")
        alpha.update({m: value for m in data["methods"]})
    alpha.update(overrides)
    data["alpha"] = alpha
    spec = BenchSpec.from_dict(data)

    def progress(row):
        log.info("%s k=%d nu=%g omega=%g -> %s (%s)", row.method, row.k, row.nu, row.omega,
                 row.iterations, row.converged)

    rows = run_bench(spec, progress=progress)
    text = rows_to_csv(rows)
    if spec.out:
        Path(spec.out).parent.mkdir(parents=True, exist_ok=True)
        Path(spec.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eig(args) -> int:
    summary = emit_eig_scatter(args.k, args.nu, args.omega, args.alpha, args.out_prefix)
    print(summary.line())
    print(f"wrote {summary.b_path} and {summary.preconditioned_path}")
    return 0


def _cmd_export(args) -> int:
    for p in export_matrices(args.k, args.out_dir, args.nu, args.omega):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asssolve", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    mi = sub.add_parser("mesh-info", help="mass-matrix constants and alpha* per mesh level")
    mi.add_argument("--k", type=int, nargs="+", default=[4, 5, 6, 7], help="mesh levels, h = 2^-k")
    mi.add_argument("--out", help="write CSV here instead of stdout")
    mi.set_defaults(func=_cmd_mesh_info)

    b = sub.add_parser("bench", help="iteration counts over a (method, k, nu, omega) grid")
    b.add_argument("--config", help="JSON file with BenchSpec fields")
    b.add_argument("--method", nargs="*", choices=METHODS)
    b.add_argument("--k", type=int, nargs="+")
    b.add_argument("--nu", type=float, nargs="+")
    b.add_argument("--omega", type=float, nargs="+")
    b.add_argument("--alpha", nargs="+", help="VALUE for all methods or METHOD=VALUE")
    b.add_argument("--time-limit", dest="time_limit", type=float, help="seconds per cell before DNC-TIME")
    b.add_argument("--out", help="CSV output path (default stdout)")
    b.set_defaults(func=_cmd_bench)

    e = sub.add_parser("eig", help="dense spectra of B and of the preconditioned B (k <= 4)")
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--nu", type=float, required=True)
    e.add_argument("--omega", type=float, required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--out-prefix", dest="out_prefix", required=True)
    e.set_defaults(func=_cmd_eig)

    x = sub.add_parser("export-matrices", help="write M and K in Matrix Market format")
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--out-dir", dest="out_dir", required=True)
    x.add_argument("--nu", type=float, help="with --omega, also export the 4x4 block and PRESB matrices")
    x.add_argument("--omega", type=float)
    x.set_defaults(func=_cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"asssolve: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"asssolve: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
