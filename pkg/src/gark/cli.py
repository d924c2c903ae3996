"""Command-line front end.

Exit codes: 0 success, 1 a certificate or check failed, 2 bad input, 3 a stage
solve failed during integration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path


from . import library
from .construct import compose_symmetric_symplectic, conjugate_pair, symplectic_conjugate, time_reverse
from .errors import GarkError, StageSolveFailure
from .integrate import REFERENCE_METHODS, PhaseState, SolverConfig, integrate, plan_stages
from .order import gark_order_residuals, partitioned_order_residuals
from .problems import DEFAULT_Y0, make_problem, resolved_params
from .structure import (
    algebraic_stability_check,
    partitioned_symplecticity_residual,
    symmetry_residual,
    symplecticity_residual,
)
from .tableau import GarkTableau, PartitionedGarkTableau, dumps_tableau, is_internally_consistent, read_tableau
from .verify import (
    _run_level,
    energy_drift,
    numerical_symplecticity,
    reference_state,
    reversibility_roundtrip,
    two_window_fits,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVE = 0, 1, 2, 3

SYMPLECTIC_FD_TOL = 1e-6
REVERSIBILITY_TOL = 1e-10
DRIFT_TOL = 1e-10

CSV_COLUMNS = "h,steps,err_H,err_H1,err_H2,grad_evals_fast,grad_evals_slow,wall_ns"


class InputError(Exception):
    pass


def fmt_residual(x: float) -> str:
    """Compact scientific notation such as ``0.0e0`` or ``1.2e-13``."""
    mant, exp = f"{x:.1e}".split("e")
    return f"{mant}e{int(exp)}"


def fmt_float(x: float) -> str:
    return repr(float(x))


def load_tableau(spec: str):
    """Resolve a built-in name first, then a file path; both matching is an error."""
    named = library.is_named(spec)
    path = Path(spec)
    if named and path.exists():
        raise InputError(f"{spec!r} is both a built-in tableau and a file")
    if named:
        return library.get(spec)
    if not path.exists():
        raise InputError(f"no built-in tableau or file named {spec!r}")
    return read_tableau(path)


def resolve_method(spec: str):
    if spec in REFERENCE_METHODS:
        if Path(spec).exists():
            raise InputError(f"{spec!r} is both a built-in method and a file")
        return spec
    return load_tableau(spec)


# --- certification ----------------------------------------------------------

def _line(label: str, ok: bool, residual: float | None = None) -> str:
    tail = f" (residual {fmt_residual(residual)})" if residual is not None else ""
    return f"{label}: {'PASS' if ok else 'FAIL'}{tail}"


def cmd_check(args) -> int:
    t = load_tableau(args.tableau)
    tol = args.tol
    results: dict[str, bool] = {}
    lines = []
    if isinstance(t, PartitionedGarkTableau):
        rep = partitioned_symplecticity_residual(t, tol)
    else:
        rep, _ = symplecticity_residual(t, tol=tol)
    results["symplectic"] = rep.verdict
    lines.append(_line("symplectic", rep.verdict, rep.max_abs_residual))
    sym = symmetry_residual(t, tol)
    results["symmetric"] = sym.verdict
    lines.append(_line("symmetric", sym.verdict, sym.max_abs_residual))
    if isinstance(t, GarkTableau):
        ok, ic = is_internally_consistent(t, tol)
        results["internally-consistent"] = ok
        lines.append(_line("internally consistent", ok, ic.max_abs_residual))
        ok, diag = algebraic_stability_check(t, tol)
        results["algebraically-stable"] = ok
        lines.append(
            f"algebraically stable: {'PASS' if ok else 'FAIL'} "
            f"(min eigenvalue {fmt_residual(diag.min_eigenvalue)}, min weight {fmt_residual(diag.min_weight)}; "
            "semidefinite test)"
        )
    explicit = plan_stages(t).explicit
    results["explicit"] = explicit
    lines.append(_line("explicit", explicit))
    order = (partitioned_order_residuals(t, 4, tol) if isinstance(t, PartitionedGarkTableau)
             else gark_order_residuals(t, 4, tol)).attained_order
    lines.append(f"order: {order}")
    print("\n".join(lines))
    required = [r.strip() for r in args.require.split(",") if r.strip()]
    unknown = [r for r in required if r not in results]
    if unknown:
        raise InputError(f"unknown certificate {unknown[0]!r}; choose from {sorted(results)}")
    return EXIT_OK if all(results[r] for r in required) else EXIT_FAIL


def cmd_order(args) -> int:
    t = load_tableau(args.tableau)
    if isinstance(t, PartitionedGarkTableau):
        rep = partitioned_order_residuals(t, args.max, args.tol)
    else:
        rep = gark_order_residuals(t, args.max, args.tol)
    if isinstance(t, GarkTableau):
        print(f"condition set: {rep.condition_set}")
    for p, r in sorted(rep.per_order.items()):
        print(f"order {p}: {'PASS' if r.verdict else 'FAIL'} "
              f"({len(r)} conditions, max residual {fmt_residual(r.max_abs_residual)})")
        if args.verbose:
            for e in r.entries:
                print(f"  {e.id} {','.join(map(str, e.index))} {fmt_float(e.residual)}")
    print(f"attained order: {rep.attained_order}")
    return EXIT_OK


def _emit_tableau(t, out: str | None) -> int:
    text = dumps_tableau(t)
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise InputError(str(exc)) from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_reverse(args) -> int:
    return _emit_tableau(time_reverse(load_tableau(args.tableau)), args.output)


def cmd_compose(args) -> int:
    return _emit_tableau(compose_symmetric_symplectic(load_tableau(args.tableau), args.tol), args.output)


def cmd_conjugate(args) -> int:
    t = load_tableau(args.tableau)
    name = f"conjugate({t.name})" if t.name else ""
    if isinstance(t, PartitionedGarkTableau):
        out = PartitionedGarkTableau(
            t.N, t.s, t.s_hat, t.A, symplectic_conjugate(t.A, t.b, t.b_hat), t.b, t.b_hat, name
        )
    elif args.pair:
        out = conjugate_pair(t, name)
    else:
        out = GarkTableau(t.N, t.s, symplectic_conjugate(t.A, t.b), t.b, name)
    return _emit_tableau(out, args.output)


# --- experiments --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    problem: str = "pendulum"
    params: dict = field(default_factory=dict)
    scheme: str = "multirate42"
    y0: list | None = None
    h0: float = 1 / 32
    levels: int = 8
    T_end: float = 10.0
    output: str | None = None
    abs_tol: float = 1e-13
    rel_tol: float = 1e-13
    max_iters: int = 50

    def validate(self) -> None:
        if self.levels < 1:
            raise InputError("levels must be at least 1")
        if not self.h0 > 0:
            raise InputError("h0 must be positive")
        if not self.T_end > 0:
            raise InputError("T_end must be positive")
        if self.problem == "pendulum" and "g" not in self.params:
            raise InputError("the pendulum problem needs an explicit gravity parameter g")

    def solver(self) -> SolverConfig:
        return SolverConfig(self.abs_tol, self.rel_tol, self.max_iters)

    def initial_state(self, d: int) -> PhaseState:
        y0 = self.y0 if self.y0 is not None else DEFAULT_Y0.get(self.problem)
        if y0 is None or len(y0) != 2 * d:
            raise InputError(f"y0 must list {2 * d} numbers (q then p)")
        return PhaseState(y0[:d], y0[d:])

    def h_values(self) -> list[float]:
        return [self.h0 * 2.0 ** -j for j in range(self.levels)]


def _config_keys() -> set[str]:
    return set(ExperimentConfig.__dataclass_fields__)


def build_config(args) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        unknown = set(data) - _config_keys()
        if unknown:
            raise InputError(f"unknown config key {sorted(unknown)[0]!r}")
    cfg = ExperimentConfig(**data)
    for key in ("problem", "scheme", "h0", "levels", "T_end", "output", "abs_tol", "rel_tol", "max_iters"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "y0", None) is not None:
        cfg.y0 = _floats(args.y0)
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise InputError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg.params[k.strip()] = float(v)
    cfg.validate()
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc


def _setup(cfg: ExperimentConfig):
    try:
        system = make_problem(cfg.problem, cfg.params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {cfg.problem}: {exc}") from exc
    return system, resolve_method(cfg.scheme), cfg.initial_state(system.d)


def _level_worker(payload):
    cfg_dict, h, ref_parts = payload
    cfg = ExperimentConfig(**cfg_dict)
    system, method, y0 = _setup(cfg)
    try:
        return _run_level((system, method, y0, h, cfg.T_end, ref_parts, cfg.solver()))
    except StageSolveFailure as exc:
        return exc


def _workers(levels: int) -> int:
    env = os.environ.get("GARK_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise InputError("GARK_THREADS must be an integer") from exc
    return max(1, min(cap, levels))


def _csv_row(row, n_parts: int, labels: list[str]) -> str:
    errs = [fmt_float(e) for e in row.err_parts[:2]] + [""] * (2 - min(n_parts, 2))
    fast = row.grad_evals.get(labels[0], 0) if labels else 0
    slow = row.grad_evals.get(labels[1], 0) if len(labels) > 1 else 0
    return ",".join([fmt_float(row.h), str(row.steps), fmt_float(row.err_H), *errs, str(fast), str(slow),
                     str(row.wall_ns)])


def cmd_converge(args) -> int:
    cfg = build_config(args)
    system, method, y0 = _setup(cfg)
    hs = cfg.h_values()
    ref = reference_state(system, y0, cfg.T_end)
    ref_parts = system.part_values(ref.q, ref.p)
    labels = [v.label for v in system.potentials]

    out = open(cfg.output, "w") if cfg.output else sys.stdout
    try:
        header = {k: v for k, v in asdict(cfg).items() if k != "output"}
        header["params"] = resolved_params(cfg.problem, cfg.params)
        header["y0"] = list(y0.vector())
        header["fast_potential"] = labels[0]
        header["slow_potential"] = labels[1] if len(labels) > 1 else None
        for k in sorted(header):
            out.write(f"# {k}: {json.dumps(header[k])}\n")
        out.write("# err_H is |H(T_end) - H(0)|; err_H1, err_H2 compare part energies with a reference solution\n")
        out.write(CSV_COLUMNS + "\n")

        payloads = [(asdict(cfg), h, ref_parts) for h in hs]
        n_workers = _workers(len(hs))
        if n_workers > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                results = list(pool.map(_level_worker, payloads))
        else:
            results = []
            for p in payloads:
                results.append(_level_worker(p))
                if isinstance(results[-1], StageSolveFailure):
                    break

        rows = []
        for h, res in zip(hs, results):
            if isinstance(res, StageSolveFailure):
                out.write(f"{fmt_float(h)},FAILED,,,,,,\n")
                out.write(f"# stage solve failed at step {res.step}: {res} (residual {res.residual!r})\n")
                out.flush()
                return EXIT_SOLVE
            rows.append(res)
            out.write(_csv_row(res, len(labels), labels) + "\n")

        if len(rows) > 1:
            parts = [("err_H", [r.err_H for r in rows])]
            parts += [(f"err_H{i + 1}", [r.err_parts[i] for r in rows]) for i in range(min(len(labels), 2))]
            summary = []
            for key, errs in parts:
                if all(e > 0 for e in errs):
                    large, small = two_window_fits(hs, errs)
                    summary.append(f"{key} {large.slope:.2f}→{small.slope:.2f}")
            out.write("# slopes (largest h window → smallest h window): " + "; ".join(summary) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = build_config(args)
    system, method, y0 = _setup(cfg)
    solver = cfg.solver()
    ok = True

    sym = numerical_symplecticity(system, method, y0, args.h, args.fd_step, solver)
    print(_line(f"map symplecticity (h={args.h}, threshold {SYMPLECTIC_FD_TOL:g})", sym <= SYMPLECTIC_FD_TOL, sym))
    ok &= sym <= SYMPLECTIC_FD_TOL

    rev = reversibility_roundtrip(system, method, y0, args.h, solver)
    print(_line(f"reversibility (h={args.h}, threshold {REVERSIBILITY_TOL:g})", rev <= REVERSIBILITY_TOL, rev))
    ok &= rev <= REVERSIBILITY_TOL

    if args.drift_steps:
        drift = energy_drift(system, method, y0, args.drift_h, args.drift_steps, solver)
        passed = abs(drift) <= DRIFT_TOL
        print(_line(f"energy drift ({args.drift_steps} steps of h={args.drift_h}, threshold {DRIFT_TOL:g})",
                    passed, drift))
        ok &= passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_integrate(args) -> int:
    cfg = build_config(args)
    system, method, y0 = _setup(cfg)
    if args.h is None or args.steps is None:
        raise InputError("integrate needs --h and --steps")
    tr = integrate(system, method, y0, args.h, args.steps, cfg.solver())
    d = system.d
    out = open(cfg.output, "w") if cfg.output else sys.stdout
    try:
        cols = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"]
        cols += [f"H{i + 1}" for i in range(tr.H_parts.shape[1])]
        out.write(",".join(cols) + "\n")
        for k in range(tr.t.size):
            vals = [tr.t[k], *tr.q[k], *tr.p[k], tr.H[k], *tr.H_parts[k]]
            out.write(",".join(fmt_float(v) for v in vals) + "\n")
        counts = ", ".join(f"{k}={v}" for k, v in sorted(tr.grad_evals.items()))
        out.write(f"# gradient evaluations: {counts}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def _add_experiment_flags(p: argparse.ArgumentParser, sweep: bool) -> None:
    p.add_argument("--config", help="JSON file with experiment keys (flags override it)")
    p.add_argument("--problem", choices=["pendulum", "harmonic"])
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="problem parameter, e.g. g=9.81 or k=1e-4 (repeatable)")
    p.add_argument("--scheme", help="built-in tableau, leapfrog/yoshida4/rk4, or tableau file")
    p.add_argument("--y0", help="initial state as comma-separated q then p")
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("-o", "--output")
    if sweep:
        p.add_argument("--h0", type=float)
        p.add_argument("--levels", type=int)
        p.add_argument("--t-end", dest="T_end", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gark", description="GARK tableau certification and integration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="structural certificates of a tableau")
    p.add_argument("tableau")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--require", default="symplectic",
                   help="comma-separated certificates that decide the exit code (default: symplectic)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("order", help="order-condition residuals")
    p.add_argument("tableau")
    p.add_argument("--max", type=int, default=4, choices=[1, 2, 3, 4])
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_order)

    for name, func, help_ in (
        ("reverse", cmd_reverse, "time-reversed tableau"),
        ("conjugate", cmd_conjugate, "symplectic conjugate (discrete adjoint) tableau"),
        ("compose", cmd_compose, "symmetric and symplectic composition with the reverse"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("tableau")
        p.add_argument("-o", "--output")
        p.add_argument("--tol", type=float, default=1e-12)
        if name == "conjugate":
            p.add_argument("--pair", action="store_true",
                           help="emit the partitioned pair (input drives momenta, conjugate drives positions)")
        p.set_defaults(func=func)

    p = sub.add_parser("converge", help="energy-error convergence sweep as CSV")
    _add_experiment_flags(p, sweep=True)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", help="map-level symplecticity, reversibility and drift checks")
    _add_experiment_flags(p, sweep=False)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--fd-step", dest="fd_step", type=float, default=1e-6)
    p.add_argument("--drift-h", dest="drift_h", type=float, default=0.05)
    p.add_argument("--drift-steps", dest="drift_steps", type=int, default=100_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("integrate", help="trajectory as CSV")
    _add_experiment_flags(p, sweep=False)
    p.add_argument("--h", type=float)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_integrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageSolveFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except (InputError, GarkError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
