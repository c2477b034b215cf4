"""Command-line front end: ``ebm2 simulate|equilibria|scan|verify``.

Exit codes: 0 success (or the expected outcome), 1 error or failed check,
2 unexpected blow-up.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ConfigError, build, load_config, merge_config, set_path
from .integrator import BLEW_UP, COMPLETED, integrate
from .legendre import extrema
from .model import StateVec
from .ode import find_equilibria
from .qualitative import ConvergenceError, InputError, solve_equilibrium, write_report_csv
from .verification import SUITES, run_check

EXIT_OK, EXIT_ERROR, EXIT_BLOWUP = 0, 1, 2


def fmt(v) -> str:
    return f"{float(v):.17g}"


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows) -> int:
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    _atomic_write(path, "\n".join(lines) + "\n")
    return len(lines) - 1


def write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _out_dir(args, cfg_dir: str | None) -> str:
    out = args.out or os.environ.get("EBM2_OUT") or cfg_dir or "ebm2_out"
    os.makedirs(out, exist_ok=True)
    return out


def _config(args) -> dict:
    if args.config:
        return load_config(args.config)
    return merge_config({"schema": 1})


# ---------------------------------------------------------------------------
# trajectory export
# ---------------------------------------------------------------------------


def export_trajectory(rec, out: str, formats) -> dict:
    counts = {}
    if "coeffs" in formats:
        rows = (
            [fmt(t), str(n), name, fmt(U[c, n])]
            for t, U in zip(rec.times, rec.coeffs)
            for c, name in enumerate(("T_a", "T_s"))
            for n in range(U.shape[1])
        )
        counts["trajectory_coeffs.csv"] = write_csv(os.path.join(out, "trajectory_coeffs.csv"),
                                                    ["t", "mode", "field", "coeff"], rows)
    if "nodal" in formats:
        x = rec.grid.nodes
        nod = rec.nodal()
        rows = ([fmt(t), fmt(xi), fmt(V[0, i]), fmt(V[1, i])]
                for t, V in zip(rec.times, nod) for i, xi in enumerate(x))
        counts["trajectory_nodal.csv"] = write_csv(os.path.join(out, "trajectory_nodal.csv"),
                                                   ["t", "x", "T_a", "T_s"], rows)
    if "energy" in formats:
        rows = ([fmt(t), fmt(e[0]), fmt(e[1])] for t, e in zip(rec.times, rec.energies))
        counts["energy.csv"] = write_csv(os.path.join(out, "energy.csv"), ["t", "E_H", "E_V"], rows)
    return counts


def _sups(state: StateVec) -> tuple[float, float]:
    return tuple(max(abs(v) for v in extrema(f)) for f in (state.t_a, state.t_s))


def _exit_for(status: str, expect_blowup: bool) -> int:
    if status == COMPLETED:
        return EXIT_BLOWUP if expect_blowup else EXIT_OK
    if status == BLEW_UP:
        return EXIT_OK if expect_blowup else EXIT_BLOWUP
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    rc = build(cfg, seed=args.seed)
    out = _out_dir(args, rc.out_dir if args.config else None)
    rec = integrate(rc.T0, rc.params, rc.forcing, rc.t_max, rc.controls)
    counts = export_trajectory(rec, out, rc.formats)
    sa, ss = _sups(rec.final)
    code = _exit_for(rec.status, rc.expect_blowup)
    summary = {
        "status": rec.status,
        "t_star_bracket": list(rec.t_star_bracket) if rec.t_star_bracket else None,
        "expect_blowup": rc.expect_blowup,
        "exit_code": code,
        "n_records": int(len(rec.times)),
        "n_steps": rec.n_steps,
        "n_rejected": rec.n_rejected,
        "t_final": float(rec.times[-1]),
        "final_sup_T_a": sa,
        "final_sup_T_s": ss,
        "final_v_norm": float(rec.v_norms[-1]),
        "rows": counts,
    }
    write_json(os.path.join(out, "summary.json"), summary)
    write_json(os.path.join(out, "config_effective.json"), rc.raw)
    msg = f"status={rec.status}"
    if rec.t_star_bracket:
        msg += f" t*=[{rec.t_star_bracket[0]:.10g}, {rec.t_star_bracket[1]:.10g}]"
    print(msg)
    return code


def _read_start(path: str, grid) -> StateVec:
    """Seed state from JSON {"t_a": [...], "t_s": [...]} or CSV mode,T_a,T_s."""
    U = np.zeros((2, grid.n_modes))
    if path.endswith(".json"):
        with open(path) as fh:
            d = json.load(fh)
        cols = [np.asarray(d["t_a"], dtype=float), np.asarray(d["t_s"], dtype=float)]
    else:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = [data[:, 1], data[:, 2]]
    for c, v in enumerate(cols):
        if len(v) > grid.n_modes:
            raise ConfigError("--seed", f"{path} has more modes than grid.n_modes")
        U[c, : len(v)] = v
    return StateVec.from_coeffs(grid, U)


def cmd_equilibria(args) -> int:
    cfg = _config(args)
    rc = build(cfg, seed=getattr(args, "seed", None))
    out = _out_dir(args, rc.out_dir if args.config else None)
    start = args.start
    seed = start if start in ("warmest", "coldest") else _read_start(start, rc.grid)
    f = rc.forcing
    betas = (f.beta_a, f.beta_s)
    rows = []
    for label, qb in (("q_bar_min", f.q_bar_min), ("q_bar_max", f.q_bar_max)):
        for k, e in enumerate(find_equilibria(rc.params, qb, betas)):
            rows.append([label, fmt(qb), str(k), fmt(e.t_a), fmt(e.t_s)])
    write_csv(os.path.join(out, "ode_equilibria.csv"), ["which", "q_bar", "index", "T_a", "T_s"], rows)
    try:
        sol = solve_equilibrium(rc.params, rc.forcing, seed)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    st = sol.state
    x = rc.grid.nodes
    ta, ts = st.nodal()
    write_csv(os.path.join(out, "equilibrium_nodal.csv"), ["x", "T_a", "T_s"],
              ([fmt(xi), fmt(a), fmt(s)] for xi, a, s in zip(x, ta, ts)))
    write_csv(os.path.join(out, "equilibrium_coeffs.csv"), ["mode", "T_a", "T_s"],
              ([str(n), fmt(a), fmt(s)] for n, (a, s) in enumerate(st.coeffs.T)))
    write_json(os.path.join(out, "equilibrium_summary.json"), {
        "start": start if isinstance(seed, str) else "file",
        "residual_h": sol.residual_h,
        "method": sol.method,
        "iterations": sol.iterations,
        "monotone_ok": sol.monotone_ok,
        "monotone_violation": sol.monotone_violation,
        "warnings": sol.warnings,
    })
    print(f"residual_h={sol.residual_h:.3e} method={sol.method} T_s(0)={st.t_s(0.0):.10g}")
    return EXIT_OK


def _scan_one(task):
    cfg, seed = task
    try:
        rc = build(cfg, seed=seed)
        rec = integrate(rc.T0, rc.params, rc.forcing, rc.t_max, rc.controls)
        sa, ss = _sups(rec.final)
        br = rec.t_star_bracket or (float("nan"), float("nan"))
        return {"status": rec.status, "t_lo": br[0], "t_hi": br[1], "sup_T_a": sa, "sup_T_s": ss}
    except ConfigError as exc:
        return {"status": "error", "error": str(exc)}


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--values", f"expected comma-separated numbers, got {text!r}") from None


def cmd_scan(args) -> int:
    cfg = _config(args)
    param = args.param or cfg["scan"]["parameter"]
    values = _parse_values(args.values) if args.values else cfg["scan"]["values"]
    if not values:
        raise ConfigError("scan.values", "nothing to scan")
    out = _out_dir(args, cfg["outputs"]["dir"] if args.config else None)
    tasks = [(set_path(cfg, param, v), args.seed) for v in values]
    build(tasks[0][0], seed=args.seed)  # fail fast on a bad base config
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_scan_one, tasks))
    else:
        results = [_scan_one(t) for t in tasks]
    rows = []
    for v, r in zip(values, results):
        if r["status"] == "error":
            print(f"error at {param}={v}: {r['error']}", file=sys.stderr)
            return EXIT_ERROR
        rows.append([fmt(v), r["status"], fmt(r["t_lo"]), fmt(r["t_hi"]), fmt(r["sup_T_a"]), fmt(r["sup_T_s"])])
    write_csv(os.path.join(out, "scan.csv"), ["value", "status", "t_lo", "t_hi", "sup_T_a", "sup_T_s"], rows)
    done = [v for v, r in zip(values, results) if r["status"] == COMPLETED]
    blew = [v for v, r in zip(values, results) if r["status"] == BLEW_UP]
    boundary = {
        "parameter": param,
        "largest_completed": max(done) if done else None,
        "smallest_blew_up": min(blew) if blew else None,
    }
    boundary["monotone"] = not (done and blew and max(done) > min(blew))
    write_json(os.path.join(out, "scan_summary.json"), boundary)
    for v, r in zip(values, results):
        print(f"{param}={v:g}: {r['status']}")
    print(f"boundary: largest completed={boundary['largest_completed']}, "
          f"smallest blew_up={boundary['smallest_blew_up']}")
    return EXIT_OK


def _verify_one(task):
    name, scale = task
    return run_check(name, scale)


def cmd_verify(args) -> int:
    out = _out_dir(args, None)
    names = [f.__name__ for f in SUITES[args.suite]]
    tasks = [(n, args.tol_scale) for n in names]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_verify_one, tasks))
    else:
        results = [_verify_one(t) for t in tasks]
    write_report_csv(os.path.join(out, "verify_report.csv"), results)
    text = "\n".join(r.line() for r in results)
    n_fail = sum(not r.passed for r in results)
    text += f"\n{len(results) - n_fail}/{len(results)} checks passed\n"
    _atomic_write(os.path.join(out, "verify_report.txt"), text)
    print(text, end="")
    return EXIT_OK if n_fail == 0 else EXIT_ERROR


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    base = argparse.ArgumentParser(add_help=False)
    base.add_argument("--config", metavar="PATH", help="JSON run configuration (schema 1)")
    base.add_argument("--out", metavar="DIR", help="output directory (overrides EBM2_OUT and the config)")
    base.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    common = argparse.ArgumentParser(add_help=False, parents=[base])
    common.add_argument("--seed", type=_u64, default=None, metavar="U64", help="seed for random initial data")

    ap = argparse.ArgumentParser(prog="ebm2", description="Two-layer energy balance model toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate one trajectory")
    eq = sub.add_parser("equilibria", parents=[base], help="compute a stationary state")
    # here --seed picks the starting state, not a random seed
    eq.add_argument("--seed", "--start", dest="start", default="warmest", metavar="warmest|coldest|FILE",
                    help="starting point: ODE warmest/coldest equilibrium or a coefficient file")
    sc = sub.add_parser("scan", parents=[common], help="run one simulation per parameter value")
    sc.add_argument("--param", help="dotted config key, e.g. model.eps_a")
    sc.add_argument("--values", help="comma-separated values")
    ve = sub.add_parser("verify", parents=[common], help="run a check suite")
    ve.add_argument("--suite", choices=sorted(SUITES), default="core")
    ve.add_argument("--tol-scale", type=float, default=1.0, help="multiply every check tolerance")
    return ap


COMMANDS = {"simulate": cmd_simulate, "equilibria": cmd_equilibria, "scan": cmd_scan, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InputError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
