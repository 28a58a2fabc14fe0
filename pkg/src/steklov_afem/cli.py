"""Command-line interface.

Subcommands::

    steklov-afem solve    --domain square --algorithm 3 --k 1 --history out.csv
    steklov-afem compare  --domain lshape --k 1 --out-dir results/
    steklov-afem mesh-gen --domain lshape --diameter 0.011 --out mesh.txt

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path


from .drivers import DEFAULT_INITIAL_DIAMETER, DEFAULT_MAX_DOF, RunConfig, run, run_scheme_1
from .errors import SteklovError
from .files import read_mesh, write_history, write_indicators, write_mesh
from .marking import DEFAULT_OMEGA
from .mesh import DomainSpec, generate_uniform, uniform_refine

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class CliInvocation:
    subcommand: str
    config: RunConfig | None = None
    history: Path | None = None
    mesh_out: Path | None = None
    indicators_out: Path | None = None
    out_dir: Path | None = None
    out: Path | None = None
    levels: int = 1
    refine: int = 0
    domain: DomainSpec | None = None
    diameter: float = DEFAULT_INITIAL_DIAMETER
    extras: dict = field(default_factory=dict)


def _omega(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"omega must lie in (0, 1), got {value}")
    return value


def _positive_int(text):
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _domain(text):
    if text == "square":
        return DomainSpec.unit_square()
    if text == "lshape":
        return DomainSpec.lshape()
    if text.startswith("file:"):
        return Path(text[5:])
    raise argparse.ArgumentTypeError("domain must be square, lshape or file:PATH")


def build_parser():
    parser = _Parser(prog="steklov-afem", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="key=value file mirroring the flags (flags win)")
        p.add_argument("--domain", type=_domain, default="square", help="square | lshape | file:PATH (default square)")
        p.add_argument("--k", type=_positive_int, default=1, help="1-based eigenvalue index (default 1)")
        p.add_argument("--omega", type=_omega, default=DEFAULT_OMEGA, help="bulk marking fraction (default 0.25)")
        p.add_argument("--max-dof", type=_positive_int, default=DEFAULT_MAX_DOF, help="stop once N >= this (default 400000)")
        p.add_argument("--max-iters", type=_positive_int, help="stop after this many iterations")
        p.add_argument("--eta-tol", type=_positive_float, help="stop once the global estimator drops below this")
        p.add_argument("--lambda-ref", type=float, help="reference eigenvalue for the error column")
        p.add_argument(
            "--initial-diameter",
            type=_positive_float,
            default=DEFAULT_INITIAL_DIAMETER,
            help="diameter of the initial uniform mesh (default sqrt(2)/128)",
        )

    solve = sub.add_parser("solve", help="run one algorithm")
    common(solve)
    solve.add_argument("--algorithm", choices=["1", "2", "3", "scheme1"], default="3")
    solve.add_argument("--history", type=Path, help="CSV convergence history")
    solve.add_argument("--mesh-out", type=Path, help="directory for the final mesh")
    solve.add_argument("--indicators-out", type=Path, help="directory for the final indicator field")
    solve.add_argument("--levels", type=_positive_int, default=3, help="scheme1: number of meshes (default 3)")

    compare = sub.add_parser("compare", help="run algorithms 1, 2 and 3")
    common(compare)
    compare.add_argument("--out-dir", type=Path, default=Path("."), help="directory for the three histories")

    gen = sub.add_parser("mesh-gen", help="write a uniform initial mesh")
    gen.add_argument("--domain", type=_domain, default="square")
    gen.add_argument("--diameter", type=_positive_float, default=DEFAULT_INITIAL_DIAMETER)
    gen.add_argument("--refine", type=int, default=0, help="uniform bisection rounds applied afterwards")
    gen.add_argument("--out", type=Path, required=True)
    return parser


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment; keys use flag spelling."""
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        values[key.lstrip("-")] = value
    return values


def parse_args(argv=None) -> CliInvocation:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    ns = parser.parse_args(argv)
    if getattr(ns, "config", None):
        extra = []
        for key, value in read_config_file(ns.config).items():
            extra += [f"--{key}", value]
        # file values first so explicit flags parsed later override them
        idx = argv.index(ns.subcommand) + 1
        ns = parser.parse_args(argv[:idx] + extra + argv[idx:])
    if ns.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")

    if ns.subcommand == "mesh-gen":
        if isinstance(ns.domain, Path):
            raise UsageError("mesh-gen needs a built-in domain")
        return CliInvocation("mesh-gen", domain=ns.domain, diameter=ns.diameter, refine=ns.refine, out=ns.out)

    kwargs = dict(
        k=ns.k,
        omega=ns.omega,
        max_dof=ns.max_dof,
        max_iters=ns.max_iters,
        eta_tol=ns.eta_tol,
        lambda_ref=ns.lambda_ref,
        initial_diameter=ns.initial_diameter,
    )
    if isinstance(ns.domain, Path):
        kwargs["initial_mesh"] = read_mesh(ns.domain, relabel=True)
    else:
        kwargs["domain"] = ns.domain
    if ns.subcommand == "solve":
        config = RunConfig(algorithm=ns.algorithm, **kwargs)
        return CliInvocation(
            "solve",
            config,
            history=ns.history,
            mesh_out=ns.mesh_out,
            indicators_out=ns.indicators_out,
            levels=ns.levels,
        )
    return CliInvocation("compare", RunConfig(algorithm="3", **kwargs), out_dir=ns.out_dir)


def _print_history(history, stream=None):
    stream = stream or sys.stdout
    print(f"algorithm {history.algorithm}, k={history.k}, stop: {history.stop_reason}", file=stream)
    print(f"{'l':>4} {'N':>9} {'lambda':>12} {'eta':>11} {'error':>11} {'time(s)':>9}", file=stream)
    for r in history.records:
        err = "" if history.lambda_ref is None else f"{abs(r.lam - history.lambda_ref):.3e}"
        print(f"{r.iter:>4} {r.dofs:>9} {r.lam:>12.8f} {r.eta_global:>11.3e} {err:>11} {r.wall_time_s:>9.2f}", file=stream)
    if history.error:
        print(f"aborted: {history.error}", file=stream)


def _solve(inv: CliInvocation):
    cfg = inv.config
    if cfg.algorithm == "scheme1":
        mesh = cfg.build_initial_mesh()
        meshes = [mesh]
        for _ in range(inv.levels - 1):
            meshes.append(uniform_refine(meshes[-1], 2))
        pair = run_scheme_1(cfg, meshes)
        print(f"scheme1 k={cfg.k} levels={inv.levels} N={meshes[-1].n_vertices} lambda={pair.lam:.10f}")
        return
    last = {}

    def keep(level, mesh, pair, indicators):
        last["mesh"], last["indicators"] = mesh, indicators

    history = run(cfg, callback=keep)
    _print_history(history)
    if inv.history:
        write_history(history, inv.history)
    if inv.mesh_out:
        inv.mesh_out.mkdir(parents=True, exist_ok=True)
        write_mesh(last["mesh"], inv.mesh_out / f"mesh_alg{cfg.algorithm}_k{cfg.k}.txt")
    if inv.indicators_out:
        inv.indicators_out.mkdir(parents=True, exist_ok=True)
        write_indicators(last["indicators"], inv.indicators_out / f"indicators_alg{cfg.algorithm}_k{cfg.k}.csv")


def _compare(inv: CliInvocation):
    inv.out_dir.mkdir(parents=True, exist_ok=True)
    for alg in ("1", "2", "3"):
        inv.config.algorithm = alg
        history = run(inv.config)
        _print_history(history)
        write_history(history, inv.out_dir / f"history_alg{alg}_k{inv.config.k}.csv")


def _mesh_gen(inv: CliInvocation):
    mesh = uniform_refine(generate_uniform(inv.domain, inv.diameter), inv.refine)
    write_mesh(mesh, inv.out)
    print(f"wrote {inv.out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")


def main(argv=None) -> int:
    try:
        inv = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SteklovError, ValueError, OSError) as exc:
        print(f"steklov-afem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        {"solve": _solve, "compare": _compare, "mesh-gen": _mesh_gen}[inv.subcommand](inv)
    except SteklovError as exc:
        print(f"steklov-afem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
