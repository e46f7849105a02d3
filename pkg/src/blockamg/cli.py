"""Command-line front end: generate or load a system, build the requested
preconditioner, run the outer GMRES solve, and emit metric rows.

Configuration is a flat key-value file with dotted keys (one ``key = value``
per line, ``#`` comments); ``--set key=value`` flags override file keys. The
``study`` subcommand expands ``sweep.<key> = v1,v2,...`` entries into a
cross-product of runs and appends one CSV row per run.

CSV schema (stable order):
    kind,n,gamma,preconditioner,levels,operator_complexity,n_L,t_Se,t_So,t_Sigma,converged

Exit codes: 0 all runs converged (or --allow-failures), 1 otherwise, 2 usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .hierarchy import (Hierarchy, SetupError, SetupParams, apply_preconditioner,
                        hierarchy_report, setup_block_hierarchy, setup_scalar_hierarchy)
from .krylov import gmres, write_convergence_csv
from .mmio import write_matrix_market, write_vector_market
from .problems import BuiltProblem, ProblemSpec, build_problem, manufactured_rhs
from .smoothers import SmootherSpec
from .sparse import BlockMatrix, BlockVector, stack_blocks

__all__ = ["RunConfig", "RunRecord", "parse_config_file", "run_solve", "run_study", "main"]

CSV_COLUMNS = ("kind", "n", "gamma", "preconditioner", "levels",
               "operator_complexity", "n_L", "t_Se", "t_So", "t_Sigma", "converged")

PRECONDITIONERS = ("none", "block_diagonal", "monolithic_amg")


class ConfigError(ValueError):
    """Bad key, value, or combination in a run configuration."""


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_SCHEMA = {
    "problem.kind": str, "problem.n": int, "problem.epsilon": float,
    "problem.velocity_x": float, "problem.velocity_y": float,
    "problem.tau": float, "problem.gamma": float, "problem.seed": int,
    "problem.coupling": str,
    "mg.max_levels": int, "mg.coarse_size": int, "mg.target_size": int,
    "mg.transfer": str, "mg.clone_aggregates": _parse_bool,
    "mg.share_transfers": _parse_bool, "mg.drop_tol": float,
    "mg.normalize_tentative": _parse_bool, "mg.omega_sa": float,
    "smoother.kind": str, "smoother.sweeps": int, "smoother.omega": float,
    "smoother.sub_kind": str, "smoother.sub_sweeps": int, "smoother.sub_omega": float,
    "smoother.schwarz_domains": int,
    "solver.tol": float, "solver.max_iter": int, "solver.restart": int,
    "preconditioner": str,
    "output.csv_path": str, "output.report_path": str, "output.solution_path": str,
    "output.history_path": str, "output.dump_dir": str,
}


def _coerce(key, raw):
    base = key[len("sweep."):] if key.startswith("sweep.") else key
    conv = _SCHEMA.get(base)
    if conv is None:
        raise ConfigError(f"unknown configuration key {base!r}")
    if key.startswith("sweep."):
        return [conv(part.strip()) for part in raw.split(",")]
    try:
        return conv(raw.strip())
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from e


def parse_config_file(path) -> Dict[str, object]:
    """Read a flat dotted-key config file into a typed dict."""
    values: Dict[str, object] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            values[key] = _coerce(key, raw)
    return values


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one solve."""

    problem: ProblemSpec
    preconditioner: str = "monolithic_amg"
    tol: float = 1e-8
    max_iter: int = 100
    restart: int = 50
    mg: Dict[str, object] = field(default_factory=dict)
    smoother_kind: Optional[str] = None
    smoother_sweeps: int = 1
    smoother_omega: float = 1.0
    sub_kind: str = "schwarz_ilu0"
    sub_sweeps: int = 1
    sub_omega: float = 1.0
    schwarz_domains: int = 1
    csv_path: Optional[str] = None
    report_path: Optional[str] = None
    solution_path: Optional[str] = None
    history_path: Optional[str] = None
    dump_dir: str = "."

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {PRECONDITIONERS}, "
                              f"got {self.preconditioner!r}")


def config_from_values(values: Dict[str, object]) -> RunConfig:
    """Turn a typed key-value dict into a RunConfig (defaults filled in)."""
    v = dict(values)
    if "problem.kind" not in v:
        raise ConfigError("problem.kind is required")
    problem = ProblemSpec(
        kind=v.pop("problem.kind"),
        n=v.pop("problem.n", 8),
        epsilon=v.pop("problem.epsilon", 1.0),
        velocity=(v.pop("problem.velocity_x", 1.0), v.pop("problem.velocity_y", 0.5)),
        tau=v.pop("problem.tau", 0.05),
        gamma=v.pop("problem.gamma", 0.0),
        seed=v.pop("problem.seed", 0),
        coupling=v.pop("problem.coupling", "node_identity"),
    )
    mg = {key.split(".", 1)[1]: v.pop(key) for key in list(v) if key.startswith("mg.")}
    cfg = RunConfig(
        problem=problem,
        preconditioner=v.pop("preconditioner", "monolithic_amg"),
        tol=v.pop("solver.tol", 1e-8),
        max_iter=v.pop("solver.max_iter", 100),
        restart=v.pop("solver.restart", 50),
        mg=mg,
        smoother_kind=v.pop("smoother.kind", None),
        smoother_sweeps=v.pop("smoother.sweeps", 1),
        smoother_omega=v.pop("smoother.omega", 1.0),
        sub_kind=v.pop("smoother.sub_kind", "schwarz_ilu0"),
        sub_sweeps=v.pop("smoother.sub_sweeps", 1),
        sub_omega=v.pop("smoother.sub_omega", 1.0),
        schwarz_domains=v.pop("smoother.schwarz_domains", 1),
        csv_path=v.pop("output.csv_path", None),
        report_path=v.pop("output.report_path", None),
        solution_path=v.pop("output.solution_path", None),
        history_path=v.pop("output.history_path", None),
        dump_dir=v.pop("output.dump_dir", "."),
    )
    if v:
        raise ConfigError(f"unused configuration keys: {sorted(v)}")
    return cfg


def _smoother_spec(cfg: RunConfig, is_block: bool) -> SmootherSpec:
    kind = cfg.smoother_kind
    if kind is None:
        kind = "block_gauss_seidel" if is_block else "gauss_seidel"
    if kind == "block_gauss_seidel":
        sub = SmootherSpec(cfg.sub_kind, sweeps=cfg.sub_sweeps, damping=cfg.sub_omega,
                           schwarz_domains=cfg.schwarz_domains)
        return SmootherSpec(kind, sweeps=cfg.smoother_sweeps, damping=cfg.smoother_omega,
                            sub_solvers=(sub, sub))
    return SmootherSpec(kind, sweeps=cfg.smoother_sweeps, damping=cfg.smoother_omega,
                        schwarz_domains=cfg.schwarz_domains)


def _setup_params(cfg: RunConfig, built: BuiltProblem) -> SetupParams:
    block_ks = built.block_dofs_per_node if built.is_block else (1, 1)
    return SetupParams(
        smoother=_smoother_spec(cfg, built.is_block),
        dofs_per_node=built.block_dofs_per_node[0] if not built.is_block else 1,
        block_dofs_per_node=tuple(block_ks),
        **cfg.mg,
    )


@dataclass
class RunRecord:
    """One row of the metric table."""

    kind: str
    n: int
    gamma: float
    preconditioner: str
    levels: int
    operator_complexity: float
    n_L: int
    t_Se: float
    t_So: float
    converged: bool
    error: Optional[str] = None

    @property
    def t_Sigma(self):
        return self.t_Se + self.t_So

    def csv_row(self) -> str:
        return ",".join([
            self.kind, str(self.n), repr(self.gamma), self.preconditioner,
            str(self.levels), f"{self.operator_complexity:.4f}", str(self.n_L),
            f"{self.t_Se:.3f}", f"{self.t_So:.3f}", f"{self.t_Sigma:.3f}",
            str(self.converged).lower(),
        ])


def _append_csv(path, record: RunRecord):
    header_needed = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a") as f:
        if header_needed:
            f.write(",".join(CSV_COLUMNS) + "\n")
        f.write(record.csv_row() + "\n")


def _build_hierarchy(cfg: RunConfig, built: BuiltProblem) -> Tuple[Optional[Hierarchy], float]:
    """Set up the configured preconditioner, returning (hierarchy, setup seconds)."""
    if cfg.preconditioner == "none":
        return None, 0.0
    params = _setup_params(cfg, built)
    A = built.matrix
    t0 = time.perf_counter()
    if not built.is_block:
        h = setup_scalar_hierarchy(A, params)
    else:
        if cfg.preconditioner == "block_diagonal":
            A = BlockMatrix([[A.blocks[0][0], None], [None, A.blocks[1][1]]],
                            row_sizes=A.row_sizes, col_sizes=A.col_sizes)
        h = setup_block_hierarchy(A, params)
    return h, time.perf_counter() - t0


def run_solve(cfg: RunConfig) -> RunRecord:
    """Execute one configured solve; writes CSV/report/solution side outputs."""
    built = build_problem(cfg.problem)
    hierarchy, t_se = _build_hierarchy(cfg, built)
    b, _ = manufactured_rhs(built.matrix, cfg.problem.seed)
    precond = None if hierarchy is None else (lambda r: apply_preconditioner(hierarchy, r))
    x, stats = gmres(built.matrix, b, precond=precond, tol=cfg.tol,
                     max_iter=cfg.max_iter, restart=cfg.restart)
    record = RunRecord(
        kind=cfg.problem.kind, n=cfg.problem.n, gamma=cfg.problem.gamma,
        preconditioner=cfg.preconditioner,
        levels=hierarchy.n_levels if hierarchy else 0,
        operator_complexity=hierarchy.operator_complexity() if hierarchy else 0.0,
        n_L=stats.iterations, t_Se=t_se, t_So=stats.solve_seconds,
        converged=stats.converged,
    )
    if cfg.csv_path:
        _append_csv(cfg.csv_path, record)
    if cfg.report_path and hierarchy is not None:
        with open(cfg.report_path, "w") as f:
            f.write(hierarchy_report(hierarchy) + "\n")
    if cfg.solution_path:
        vec = x.to_array() if isinstance(x, BlockVector) else x
        write_vector_market(cfg.solution_path, vec, comment=f"solution {cfg.problem.kind} n={cfg.problem.n}")
    if cfg.history_path:
        write_convergence_csv(cfg.history_path, stats)
    return record


def expand_study(values: Dict[str, object]) -> List[Dict[str, object]]:
    """Expand sweep.* keys into the cross product of per-run value dicts."""
    base = {k: v for k, v in values.items() if not k.startswith("sweep.")}
    sweeps = [(k[len("sweep."):], v) for k, v in values.items() if k.startswith("sweep.")]
    if not sweeps:
        return [base]
    keys = [k for k, _ in sweeps]
    rows = []
    for combo in itertools.product(*(v for _, v in sweeps)):
        row = dict(base)
        row.update(zip(keys, combo))
        rows.append(row)
    return rows


def run_study(configs: List[RunConfig]) -> List[RunRecord]:
    """Run configs in order; a failing run is recorded and the study continues."""
    if not configs:
        raise ConfigError("study needs at least one run configuration")
    records = []
    for cfg in configs:
        try:
            records.append(run_solve(cfg))
        except (SetupError, ConfigError, ValueError, ArithmeticError) as e:
            print(f"run failed ({cfg.problem.kind} n={cfg.problem.n}): {e}", file=sys.stderr)
            rec = RunRecord(kind=cfg.problem.kind, n=cfg.problem.n, gamma=cfg.problem.gamma,
                            preconditioner=cfg.preconditioner, levels=0,
                            operator_complexity=0.0, n_L=0, t_Se=0.0, t_So=0.0,
                            converged=False, error=str(e))
            if cfg.csv_path:
                _append_csv(cfg.csv_path, rec)
            records.append(rec)
    return records


def run_dump(cfg: RunConfig) -> List[str]:
    """Write the generated system as MatrixMarket files plus a metadata line."""
    built = build_problem(cfg.problem)
    os.makedirs(cfg.dump_dir, exist_ok=True)
    written = []

    def _path(name):
        p = os.path.join(cfg.dump_dir, name)
        written.append(p)
        return p

    A = built.matrix
    if isinstance(A, BlockMatrix):
        write_matrix_market(_path("A.mtx"), stack_blocks(A), comment="merged block system")
        for i in range(A.n_block_rows):
            for j in range(A.n_block_cols):
                blk = A.blocks[i][j]
                if blk is not None:
                    write_matrix_market(_path(f"A{i}{j}.mtx"), blk)
        b, _ = manufactured_rhs(A, cfg.problem.seed)
        write_vector_market(_path("b.mtx"), b.to_array())
    else:
        write_matrix_market(_path("A.mtx"), A)
        b, _ = manufactured_rhs(A, cfg.problem.seed)
        write_vector_market(_path("b.mtx"), b)
    meta_path = os.path.join(cfg.dump_dir, "meta.jsonl")
    with open(meta_path, "a") as f:
        f.write(json.dumps(built.meta, sort_keys=True) + "\n")
    written.append(meta_path)
    return written


def _load_config(path, overrides) -> Dict[str, object]:
    values = parse_config_file(path)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="blockamg",
        description="Block algebraic-multigrid preconditioned solves of generated test systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "run one configured solve"),
                            ("study", "run a sweep of solves, one CSV row each"),
                            ("dump", "write the generated system to MatrixMarket files")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", action="append", required=True,
                       help="config file (repeatable for study)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", dest="overrides",
                       help="override a config key (repeatable)")
        if name in ("solve", "study"):
            p.add_argument("--allow-failures", action="store_true",
                           help="exit 0 even if runs fail to converge")
    return parser


def main(argv=None) -> int:
    parser = _make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dump":
            for path in args.config:
                cfg = config_from_values(_load_config(path, args.overrides))
                for written in run_dump(cfg):
                    print(f"wrote {written}")
            return 0

        configs: List[RunConfig] = []
        for path in args.config:
            values = _load_config(path, args.overrides)
            for row in expand_study(values):
                configs.append(config_from_values(row))

        if args.command == "solve":
            if len(configs) != 1:
                raise ConfigError("solve expects exactly one run; use study for sweeps")
            record = run_solve(configs[0])
            records = [record]
        else:
            records = run_study(configs)
        for rec in records:
            status = "converged" if rec.converged else "FAILED"
            print(f"{rec.kind} n={rec.n} gamma={rec.gamma} {rec.preconditioner}: "
                  f"n_L={rec.n_L} levels={rec.levels} t_Se={rec.t_Se:.3f}s "
                  f"t_So={rec.t_So:.3f}s t_Sigma={rec.t_Sigma:.3f}s [{status}]")
        if all(r.converged for r in records) or args.allow_failures:
            return 0
        return 1
    except (ConfigError, SetupError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
