"""Parameter sweeps over (method, k, nu, omega), mesh tables, and spectrum dumps."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .asss import (
    DENSE_K_MAX,
    AsssConfig,
    TimeLimitExceeded,
    alpha_star,
    alpha_star_estimate,
    asss_solve,
    iasss_solve,
    iteration_matrix_dense,
)
from .blocksys import build_problem
from .fem import FemSystem, GridConfig, build_fem_system
from .precond import (
    AsssPreconditioner,
    BasPreconditioner,
    BdPreconditioner,
    PresbPreconditioner,
    bas_iteration_alpha,
    bas_preconditioner_alpha,
    fgmres_asss,
    fgmres_bas,
    fgmres_bd,
    fgmres_presb,
    ibas_solve,
)
from .sparsela import KrylovConfig, dense_eig_general, write_matrix_market, write_spectrum_csv

METHODS = ("iasss", "ibas", "p-asss", "p-bas", "p-presb", "p-bd", "asss-exact")
CSV_COLUMNS = ("method", "k", "nu", "omega", "alpha", "iterations", "converged", "seconds", "inner_total")
DEFAULT_NU = (1e-2, 1e-4, 1e-6, 1e-8)
DEFAULT_OMEGA = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4)
DNC_ITER = "DNC-ITER"
DNC_TIME = "DNC-TIME"


class ConfigError(ValueError):
    pass


@dataclass
class BenchSpec:
    k: list[int] = field(default_factory=lambda: [5])
    nu: list[float] = field(default_factory=lambda: list(DEFAULT_NU))
    omega: list[float] = field(default_factory=lambda: list(DEFAULT_OMEGA))
    methods: list[str] = field(default_factory=lambda: ["iasss"])
    # method name -> fixed alpha; methods without an entry use their default rule
    alpha: dict[str, float] = field(default_factory=dict)
    outer_tol: float = 1e-6
    inner_tol: float = 1e-4
    max_iterations: int = 500
    time_limit: float = 60.0
    droptol: float = 1e-3
    bd_mass_weight: str = "sqrt_nu_omega"
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        for k in self.k:
            GridConfig(k)
        if any(v <= 0 for v in self.nu):
            raise ConfigError("nu values must be positive")
        if any(v < 0 for v in self.omega):
            raise ConfigError("omega values must be nonnegative")
        for name, a in self.alpha.items():
            if name not in METHODS:
                raise ConfigError(f"alpha override for unknown method {name!r}")
            if not a > 0:
                raise ConfigError(f"alpha for {name} must be positive")
        if not self.time_limit > 0:
            raise ConfigError("time_limit must be positive")
        try:
            self.outer, self.inner
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def outer(self) -> KrylovConfig:
        return KrylovConfig(self.outer_tol, self.max_iterations)

    @property
    def outer_fgmres(self) -> KrylovConfig:
        return KrylovConfig(self.outer_tol, self.max_iterations, restart=self.max_iterations)

    @property
    def inner(self) -> KrylovConfig:
        return KrylovConfig(self.inner_tol, 500)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchRow:
    method: str
    k: int
    nu: float
    omega: float
    alpha: float | None
    iterations: int | None
    converged: str
    seconds: float
    inner_total: int | None

    def as_csv(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(v)

        return [self.method, str(self.k), repr(self.nu), repr(self.omega), num(self.alpha),
                num(self.iterations), self.converged, f"{self.seconds:.4f}", num(self.inner_total)]


def default_alpha(method: str, fem: FemSystem, nu: float, omega: float) -> float | None:
    from .blocksys import ProblemParams

    if method in ("iasss", "p-asss", "asss-exact"):
        return alpha_star(fem.M, q1_mass=True)
    if method == "ibas":
        return bas_iteration_alpha(ProblemParams(nu, omega))
    if method == "p-bas":
        return bas_preconditioner_alpha(ProblemParams(nu, omega))
    return None


def run_cell(method: str, fem: FemSystem, nu: float, omega: float, alpha: float | None, spec: BenchSpec,
             deadline: float | None = None):
    """Solve one (method, nu, omega) instance; returns (x, SolveReport)."""
    problem = build_problem(fem.grid.k, nu, omega, fem)
    inner, droptol = spec.inner, spec.droptol
    if method in ("iasss", "asss-exact"):
        mode = "inexact" if method == "iasss" else "exact"
        cfg = AsssConfig(alpha, outer=spec.outer, inner=inner, mode=mode, droptol=droptol)
        solve = iasss_solve if mode == "inexact" else asss_solve
        return solve(problem.op, problem.b, cfg, deadline=deadline)
    if method == "ibas":
        return ibas_solve(problem, alpha, outer=spec.outer, inner=inner, droptol=droptol, deadline=deadline)
    if method == "p-asss":
        pre = AsssPreconditioner(problem.op, alpha, inner=inner, droptol=droptol)
        return fgmres_asss(problem.op, problem.b, pre, spec.outer_fgmres, deadline)
    if method == "p-bas":
        pre = BasPreconditioner(fem, problem.params, alpha, inner=inner, droptol=droptol)
        return fgmres_bas(problem, pre, spec.outer_fgmres, deadline)
    if method == "p-presb":
        pre = PresbPreconditioner(problem.presb, inner=inner, droptol=droptol)
        return fgmres_presb(problem, pre, spec.outer_fgmres, deadline)
    if method == "p-bd":
        pre = BdPreconditioner(fem, problem.params, inner=inner, droptol=droptol, mass_weight=spec.bd_mass_weight)
        return fgmres_bd(problem, pre, spec.outer_fgmres, deadline)
    raise ConfigError(f"unknown method {method!r}")


def run_bench(spec: BenchSpec, progress=None) -> list[BenchRow]:
    """Run every (method, k, nu, omega) cell in order; failures are recorded, never raised."""
    rows = []
    for k in spec.k:
        fem = build_fem_system(k)
        for method in spec.methods:
            for nu in spec.nu:
                for omega in spec.omega:
                    alpha = spec.alpha.get(method, default_alpha(method, fem, nu, omega))
                    t0 = time.perf_counter()
                    iterations = inner_total = None
                    try:
                        _, rep = run_cell(method, fem, nu, omega, alpha, spec, deadline=t0 + spec.time_limit)
                        iterations, inner_total = rep.iterations, rep.inner_iteration_totals
                        status = "yes" if rep.converged else DNC_ITER
                    except TimeLimitExceeded:
                        status = DNC_TIME
                    except Exception as exc:  # one bad cell must not end the sweep
                        status = f"ERROR {type(exc).__name__}: {exc}".replace("\n", " ")
                    row = BenchRow(method, k, nu, omega, alpha, iterations, status,
                                   time.perf_counter() - t0, inner_total)
                    rows.append(row)
                    if progress is not None:
                        progress(row)
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def iteration_grid(rows: list[BenchRow], method: str, k: int) -> dict[tuple[float, float], int | None]:
    """(nu, omega) -> iteration count (None for DNC or errors)."""
    return {(r.nu, r.omega): (r.iterations if r.converged == "yes" else None)
            for r in rows if r.method == method and r.k == k}


# ---------------------------------------------------------------------------
# mesh table


@dataclass
class MeshInfo:
    k: int
    h: float
    theta: float
    mu_min: float
    mu_max: float
    alpha_closed: float
    alpha_power: float
    mu_min_power: float
    mu_max_power: float
    power_converged: bool

    @property
    def alpha_rel_diff(self) -> float:
        return abs(self.alpha_power - self.alpha_closed) / self.alpha_closed


MESH_COLUMNS = ("k", "h", "theta", "mu_min", "mu_max", "alpha_star", "alpha_star_power", "rel_diff",
                "mu_min_power", "mu_max_power")


def mesh_info(k: int) -> MeshInfo:
    """theta, the Q1 bounds theta/4 and 9 theta/4 on sigma(M), and alpha* two ways."""
    grid = GridConfig(k)
    fem = build_fem_system(grid)
    theta = grid.theta
    a_power, lo, hi = alpha_star_estimate(fem.M, lower_bound=theta / 4)
    return MeshInfo(k, grid.h, theta, theta / 4, 9 * theta / 4, alpha_star(fem.M, q1_mass=True),
                    a_power, lo.value, hi.value, lo.converged and hi.converged)


def sig(x: float, digits: int = 5) -> str:
    """Scientific notation with ``digits`` significant figures, rounding halves up.

    The exact binary value of h^2 = 3.90625e-3 would print as 3.9062e-03 with
    Python's round-half-even formatting; tables round it to 3.9063e-03.
    """
    d = Decimal(repr(float(x)))
    if d == 0:
        return f"{0:.{digits - 1}e}"
    exp = d.adjusted()
    q = d.scaleb(-exp).quantize(Decimal(1).scaleb(1 - digits), rounding=ROUND_HALF_UP)
    if abs(q) >= 10:
        q, exp = (q / 10).quantize(Decimal(1).scaleb(1 - digits), rounding=ROUND_HALF_UP), exp + 1
    return f"{q}e{exp:+03d}"


def mesh_info_csv(infos: list[MeshInfo]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MESH_COLUMNS)
    for i in infos:
        w.writerow([i.k, f"{i.h:.6g}", sig(i.theta), sig(i.mu_min), sig(i.mu_max), sig(i.alpha_closed),
                    sig(i.alpha_power), f"{i.alpha_rel_diff:.3e}", sig(i.mu_min_power), sig(i.mu_max_power)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# spectra


@dataclass
class ScatterSummary:
    k: int
    nu: float
    omega: float
    alpha: float
    max_dist_from_one: float
    min_real_part: float
    b_path: Path | None = None
    preconditioned_path: Path | None = None

    def line(self) -> str:
        return (f"k={self.k} nu={self.nu:g} omega={self.omega:g} alpha={self.alpha:.4e} "
                f"max|lambda-1|={self.max_dist_from_one:.10f} min Re(lambda)={self.min_real_part:.3e}")


def eig_spectra(k: int, nu: float, omega: float, alpha: float | None = None):
    """(alpha, eig(B), eig(P^{-1} B)) using P^{-1} B = I - T."""
    if k > DENSE_K_MAX:
        raise ConfigError(f"dense spectra need k <= {DENSE_K_MAX}, got {k}")
    problem = build_problem(k, nu, omega)
    alpha = alpha_star(problem.fem.M, q1_mass=True) if alpha is None else alpha
    lam_b = dense_eig_general(problem.op.dense())
    T = iteration_matrix_dense(problem.fem, problem.params, alpha)
    lam_p = dense_eig_general(np.eye(T.shape[0]) - T)
    return alpha, lam_b, lam_p


def emit_eig_scatter(k: int, nu: float, omega: float, alpha: float | None = None,
                     out_prefix: str | Path | None = None) -> ScatterSummary:
    alpha, lam_b, lam_p = eig_spectra(k, nu, omega, alpha)
    s = ScatterSummary(k, nu, omega, alpha, float(np.max(np.abs(lam_p - 1.0))), float(np.min(lam_p.real)))
    if out_prefix is not None:
        prefix = Path(out_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        s.b_path = prefix.with_name(prefix.name + "_B.csv")
        s.preconditioned_path = prefix.with_name(prefix.name + "_PinvB.csv")
        write_spectrum_csv(s.b_path, lam_b)
        write_spectrum_csv(s.preconditioned_path, lam_p)
    return s


def export_matrices(k: int, out_dir: str | Path, nu: float | None = None, omega: float | None = None) -> list[Path]:
    """Write M and K; with ``nu`` and ``omega`` also the 4x4 block matrix A and the PRESB form."""
    fem = build_fem_system(k)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {out / f"mass_k{k}.mtx": fem.M, out / f"stiffness_k{k}.mtx": fem.K}
    if (nu is None) != (omega is None):
        raise ConfigError("give both nu and omega to export the block systems")
    if nu is not None:
        problem = build_problem(k, nu, omega, fem)
        tag = f"k{k}_nu{nu:g}_omega{omega:g}"
        written[out / f"block4_{tag}.mtx"] = problem.A
        written[out / f"presb_{tag}.mtx"] = problem.presb.calK
    for path, mat in written.items():
        write_matrix_market(path, mat)
    return list(written)
