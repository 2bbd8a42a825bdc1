"""Command line entry point: ``fdtdsens <task> --scenario ... [flags]``.

Exit codes: 0 success, 2 validation error, 3 numerical failure (instability,
run-budget mismatch, empty valid band), 4 comparison tolerance exceeded.
"""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels, oracles, solver
from .engine import REFERENCE_COUNTER, RUN_COUNTER, NumericalInstability
from .eqsources import write_csv as write_eqsources
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("fdtdsens")

TASKS = ("jacobian", "high-order", "hessian", "mixed", "oracle-cfd", "oracle-dual", "taylor-check", "compare")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 2, 3, 4

# default tolerances of `compare`, per method task and oracle
TOLERANCES = {("jacobian", "dual"): 0.01, ("jacobian", "cfd"): 0.03}
DEFAULT_TOLERANCE = 0.05


class UsageError(ValueError):
    pass


class ToleranceError(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdtdsens", description="FDTD field derivatives from equivalent sources")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--scenario", default="multilayer", help="built-in name or scenario file")
    p.add_argument("--params", "--param", dest="params", default=None, help="comma-separated parameter names")
    p.add_argument("--order", type=int, default=None, help="derivative order M")
    p.add_argument("--h", type=float, default=None, help="CFD step, or Taylor offset for taylor-check")
    p.add_argument("--band", default=None, help="analysis band lo:hi in Hz")
    p.add_argument("--freqs", type=int, default=None, help="number of frequency points")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="concurrent FDTD runs")
    p.add_argument("--task", dest="method", default="jacobian", choices=("jacobian", "high-order", "mixed"),
                   help="method task compared by `compare`")
    p.add_argument("--oracle", default="dual", choices=("dual", "cfd"), help="oracle used by `compare`")
    p.add_argument("--observable", default="S11", choices=("S11", "field"))
    p.add_argument("--tol", type=float, default=None, help="relative L2 tolerance of `compare`")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _scenario(args):
    sc = load_scenario(args.scenario)
    changes = {}
    if args.band:
        try:
            lo, hi = (float(v) for v in args.band.split(":"))
        except ValueError:
            raise UsageError(f"--band expects lo:hi, got {args.band!r}") from None
        changes.update(f_lo=lo, f_hi=hi)
    if args.freqs is not None:
        if args.freqs < 1:
            raise UsageError("--freqs must be >= 1")
        changes["nfreq"] = args.freqs
    if changes:
        sc = sc.replace(**changes)
        if not 0 < sc.f_lo < sc.f_hi < 0.5 / sc.dt:
            raise UsageError(f"band must satisfy 0 < lo < hi < {0.5 / sc.dt:g} Hz")
    return sc


def _names(args, sc, count=None) -> list:
    names = [n for n in (args.params or "").split(",") if n] or [p.name for p in sc.params]
    for n in names:
        sc.parameter(n)  # raises KeyError for unknown names
    if count is not None and len(names) not in count:
        raise UsageError(f"task {args.task!r} takes {' or '.join(map(str, count))} parameter(s), got {len(names)}")
    return names


def write_spectrum(path: Path, freqs, values) -> None:
    """Rows only inside the valid band (NaN entries are absent)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "real", "imag", "magnitude", "phase_rad"])
        for f, v in zip(freqs, values):
            if np.isnan(v):
                continue
            w.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v))),
                        repr(float(np.angle(v)))])


def write_manifest(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v}\n")


def rel_l2(method, oracle) -> float:
    m = ~np.isnan(method) & ~np.isnan(oracle)
    if not m.any():
        raise ValueError("no common valid frequencies")
    den = np.linalg.norm(oracle[m])
    num = np.linalg.norm(method[m] - oracle[m])
    return float(num / den) if den > 0 else float(num)


# -- tasks ---------------------------------------------------------------------------------

def _task_jacobian(args, sc, out, info):
    names = _names(args, sc)
    rep = solver.jacobian(sc, names, args.observable, args.threads)
    for n in names:
        write_spectrum(out / f"jacobian_{n}.csv", sc.freqs, rep[n].values)
    write_spectrum(out / f"nominal_{args.observable}.csv", sc.freqs, rep.nominal)
    write_eqsources(out / "eqsources.csv", sc.grid, [rep.records[n] for n in names])
    return rep


def _task_high_order(args, sc, out, info):
    (name,) = _names(args, sc, (1,))
    order = args.order or 2
    rep = solver.high_order(sc, name, order, args.observable, args.threads)
    for m in range(1, order + 1):
        write_spectrum(out / f"high_order_{name}_m{m}.csv", sc.freqs, rep[m].values)
    return rep


def _task_mixed(args, sc, out, info):
    u, v = _names(args, sc, (2,))
    rep = solver.mixed(sc, u, v, args.observable, args.threads)
    write_spectrum(out / f"mixed_{u}_{v}.csv", sc.freqs, rep[(u, v)].values)
    return rep


def _task_hessian(args, sc, out, info):
    names = _names(args, sc)
    rep = solver.hessian(sc, names, args.observable, args.threads)
    for i, u in enumerate(names):
        for v in names[i:]:
            write_spectrum(out / f"hessian_{u}_{v}.csv", sc.freqs, rep[(u, v)].values)
    return rep


def _cfd(args, sc, names, order):
    model = oracles.scenario_model(sc, args.observable)
    hs = [args.h if args.h is not None else sc.default_step(n) for n in names]
    if len(names) == 2:
        return oracles.cfd_mixed(model, names[0], names[1], hs[0], hs[1]), hs
    if order == 1:
        return oracles.cfd_first(model, names[0], hs[0]), hs
    if order == 2:
        return oracles.cfd_second(model, names[0], hs[0]), hs
    raise UsageError("CFD oracles cover orders 1 and 2 only")


def _task_oracle_cfd(args, sc, out, info):
    names = _names(args, sc, (1, 2))
    order = args.order or (2 if len(names) == 2 else 1)
    values, hs = _cfd(args, sc, names, order)
    label = "_".join(names) + ("" if len(names) == 2 else f"_m{order}")
    write_spectrum(out / f"cfd_{label}.csv", sc.freqs, values)
    info.update(oracle="cfd", h=",".join(repr(h) for h in hs))
    return None


def _task_oracle_dual(args, sc, out, info):
    (name,) = _names(args, sc, (1,))
    order = args.order or 1
    res = oracles.dual_fdtd(sc, name, order, args.observable)
    for m in range(1, order + 1):
        write_spectrum(out / f"dual_{name}_m{m}.csv", sc.freqs, res.derivs[m])
    info.update(oracle="dual")
    return None


def _task_taylor(args, sc, out, info):
    (name,) = _names(args, sc, (1,))
    order = args.order or 2
    p = sc.parameter(name)
    delta = args.h if args.h is not None else 5 * sc.default_step(name)  # half a cell for geometric parameters
    rep = solver.high_order(sc, name, order, "S11", args.threads)
    truth = oracles.scenario_model(sc, "S11")({name: delta})
    rows = []
    for m in range(1, order + 1):
        pred = solver.taylor_eval(rep.nominal, [rep[k].values for k in range(1, m + 1)], delta)
        ok = ~np.isnan(pred) & ~np.isnan(truth)
        rows.append((m, float(np.linalg.norm(pred[ok] - truth[ok]))))
    with open(out / f"taylor_{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "l2_residual"])
        for m, r in rows:
            w.writerow([m, repr(r)])
    info.update(delta=repr(delta), parameter_kind=p.kind, residuals=",".join(f"{r:.6e}" for _, r in rows))
    for m, r in rows:
        print(f"order {m}: L2 residual {r:.6e}")
    if any(rows[i + 1][1] >= rows[i][1] for i in range(len(rows) - 1)):
        raise ToleranceError("Taylor residual does not decrease with order")
    return rep


def _task_compare(args, sc, out, info):
    names = _names(args, sc)
    method = args.method
    if method == "mixed":
        if len(names) != 2:
            raise UsageError("compare --task mixed needs two parameters")
        rep = solver.mixed(sc, names[0], names[1], args.observable, args.threads)
        mvals = rep[(names[0], names[1])].values
        if args.oracle == "dual":
            ovals = oracles.dual_mixed(sc, names[0], names[1], args.observable)
        else:
            ovals, _ = _cfd(args, sc, names, 2)
        label = "_".join(names)
    else:
        if len(names) != 1:
            raise UsageError("compare needs exactly one parameter for this task")
        name = names[0]
        order = 1 if method == "jacobian" else (args.order or 2)
        if method == "jacobian":
            rep = solver.jacobian(sc, [name], args.observable, args.threads)
            mvals = rep[name].values
        else:
            rep = solver.high_order(sc, name, order, args.observable, args.threads)
            mvals = rep[order].values
        if args.oracle == "dual":
            ovals = oracles.dual_fdtd(sc, name, order, args.observable).derivs[order]
        else:
            ovals, _ = _cfd(args, sc, [name], order)
        label = f"{name}_m{order}"
    err = rel_l2(mvals, ovals)
    tol = args.tol if args.tol is not None else TOLERANCES.get((method, args.oracle), DEFAULT_TOLERANCE)
    with open(out / f"compare_{method}_{args.oracle}_{label}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "method_real", "method_imag", "oracle_real", "oracle_imag", "rel_error"])
        for f, a, b in zip(sc.freqs, mvals, ovals):
            if np.isnan(a) or np.isnan(b):
                continue
            w.writerow([repr(float(f)), repr(float(a.real)), repr(float(a.imag)), repr(float(b.real)),
                        repr(float(b.imag)), repr(float(abs(a - b) / abs(b))) if b != 0 else "inf"])
    info.update(oracle=args.oracle, method=method, rel_l2_error=repr(err), tolerance=repr(tol))
    print(f"aggregate relative L2 error {err:.3e} (tolerance {tol:g})")
    if not err < tol:
        raise ToleranceError(f"relative L2 error {err:.3e} exceeds {tol:g}")
    return rep


HANDLERS = {
    "jacobian": _task_jacobian, "high-order": _task_high_order, "mixed": _task_mixed, "hessian": _task_hessian,
    "oracle-cfd": _task_oracle_cfd, "oracle-dual": _task_oracle_dual, "taylor-check": _task_taylor,
    "compare": _task_compare,
}


def run_task(args) -> int:
    out = Path(args.out)
    info = {"task": args.task}
    t0 = time.perf_counter()
    runs0, refs0 = RUN_COUNTER.value, REFERENCE_COUNTER.value
    status, rep = EXIT_OK, None
    caught: list = []
    try:
        sc = _scenario(args)
        info.update(scenario=sc.name, params=args.params or "", nsteps=sc.nsteps)
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = HANDLERS[args.task](args, sc, out, info)
    except (ScenarioError, UsageError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        msg = str(exc)
        print(f"error: {msg}", file=sys.stderr)
        status = EXIT_NUMERICAL if "valid band" in msg else EXIT_VALIDATION
        return status
    except (NumericalInstability, solver.RunBudgetError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    except ToleranceError as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        status = EXIT_TOLERANCE
    for w in caught:
        log.warning("%s", w.message)
    total = RUN_COUNTER.value - runs0
    info.update(
        run_count=rep.run_count if rep is not None else total,
        total_forward_runs=total,
        reference_runs=REFERENCE_COUNTER.value - refs0,
        wall_time_s=f"{time.perf_counter() - t0:.3f}",
        warnings=len(caught),
        status=status,
        package_version=__version__,
        numpy_version=np.__version__,
        python_version=platform.python_version(),
        kernel_backend=kernels.BACKEND,
    )
    if rep is not None and hasattr(rep, "run_count"):
        info["expected_run_count"] = solver.RunBudget(rep.task, _budget_params(rep)).expected
    if out.exists():
        write_manifest(out / "manifest.txt", info)
    return status


def _budget_params(rep) -> int:
    if rep.task in ("mixed", "hessian"):
        return len({k[0] for k in rep.results})
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_task(args)


if __name__ == "__main__":
    sys.exit(main())
