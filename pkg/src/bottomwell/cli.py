"""Command-line front end: forward formulas, spectra, traces, fits, inversion and checks."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import SymmetryClass, TaylorPotential, load_potential, multi_indices_of_order
from .hessian import hessian_report
from .invariants import Convention, literal_l1_term, wave_invariant, wave_invariant_linear_term
from .inverse import RecoveryError, RecoverySettings, end_to_end_1d, recover_from_samples
from .oscillator import a0_values, max_time
from .spectral import fd_spectrum, hermite_spectrum, minmax_bound_check, weyl_count_check
from .symcalc import trig_identity_residual
from .trace import (CutoffFunction, TraceTable, extract_invariants, geometric_grid, hbar_sweep,
                    perturbation_oracle)

THREADS_ENV = "BOTTOMWELL_THREADS"
BUNDLED = ("cubic_quartic", "sextic", "quartic")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated parameters of one command; ``digest`` identifies the run in outputs."""

    command: str
    params: dict = field(default_factory=dict)

    def digest(self) -> str:
        text = json.dumps({"command": self.command, **self.params}, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def header(self) -> list[str]:
        return [f"bottomwell {__version__}", f"config {self.digest()}", f"command {self.command}"]


def _g(x: float) -> str:
    return f"{x:.17g}"


def bundled_potential(name: str) -> TaylorPotential:
    text = resources.files("bottomwell").joinpath("data", f"{name}.json").read_text()
    return TaylorPotential.from_json(text)


def _potential(spec: str) -> TaylorPotential:
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        if name not in BUNDLED:
            raise ConfigError(f"no bundled potential '{name}'; choose from {', '.join(BUNDLED)}")
        return bundled_potential(name)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"potential file '{spec}' not found")
    try:
        return load_potential(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid potential file '{spec}': {exc}") from None


def _grid(spec: str, geometric: bool = False) -> np.ndarray:
    try:
        lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise ConfigError(f"grid '{spec}' must look like lo:hi:count") from None
    if count < 1 or hi < lo or (count > 1 and hi == lo):
        raise ConfigError(f"grid '{spec}' is empty or reversed")
    if geometric:
        if lo <= 0:
            raise ConfigError("geometric grids need lo > 0")
        return geometric_grid(lo, hi, count)
    return np.linspace(lo, hi, count)


def _check_t(ts: np.ndarray, V: TaylorPotential) -> None:
    tmax = max_time(V.frequencies)
    if ts.min() <= 0 or ts.max() >= tmax:
        raise ConfigError(f"t-grid must lie inside (0, {tmax:.6g}) for these frequencies")


def _write_csv(path: str | None, cfg: RunConfig, columns: Sequence[str], rows: Sequence[Sequence[float]],
               gnuplot: bool = False) -> None:
    lines = [f"# {h}" for h in cfg.header()]
    lines.append(",".join(columns))
    lines += [",".join(_g(float(x)) for x in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text)
    if gnuplot:
        _write_gnuplot(Path(path), columns)


def _write_gnuplot(path: Path, columns: Sequence[str]) -> None:
    plots = ", ".join(f"'{path.name}' using 1:{k + 1} with lines title '{c}'"
                      for k, c in enumerate(columns) if k > 0)
    script = f"set datafile separator ','\nset key autotitle columnhead\nset xlabel '{columns[0]}'\nplot {plots}\n"
    path.with_suffix(".gp").write_text(script)


def _write_json(path: str | None, cfg: RunConfig, payload: dict) -> None:
    doc = {"version": __version__, "config": cfg.digest(), **payload}
    text = json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# commands ---------------------------------------------------------------------

def cmd_forward(args: argparse.Namespace) -> int:
    V = _potential(args.potential)
    ts = _grid(args.t_grid)
    _check_t(ts, V)
    if args.j < 0:
        raise ConfigError("j must be non-negative")
    if args.j > 0:
        V.require_order(2 * args.j + 2, f"a_{args.j}")
    cfg = RunConfig("forward", {"potential": V.to_dict(), "j": args.j, "t": ts.tolist(),
                                "convention": args.convention})
    if args.j == 0:
        values = a0_values(V.frequencies, ts)
    else:
        values = [wave_invariant(V, args.j, t, convention=args.convention).value for t in ts]
    rows = [(t, v.real, v.imag) for t, v in zip(ts, values)]
    _write_csv(args.out, cfg, ["t", f"re_a{args.j}", f"im_a{args.j}"], rows, args.gnuplot)
    return 0


def _solve(V: TaylorPotential, hbar: float, cutoff: float, args: argparse.Namespace):
    if args.solver == "hermite":
        return hermite_spectrum(V, hbar, cutoff)
    if args.L is None or args.M is None:
        raise ConfigError("the finite-difference solver needs --L and --M")
    return fd_spectrum(V, hbar, cutoff, L=args.L, M=args.M)


def cmd_spectrum(args: argparse.Namespace) -> int:
    V = _potential(args.potential)
    if args.hbar <= 0:
        raise ConfigError("hbar must be positive")
    cfg = RunConfig("spectrum", {"potential": V.to_dict(), "hbar": args.hbar, "cutoff": args.cutoff,
                                 "solver": args.solver, "L": args.L, "M": args.M})
    eigs = _solve(V, args.hbar, args.cutoff, args)
    cfg.params["estimated_accuracy"] = eigs.estimated_accuracy
    _write_csv(args.out, cfg, ["index", "energy"], list(enumerate(eigs.eigenvalues)), args.gnuplot)
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    V = _potential(args.potential)
    ts = _grid(args.t_grid)
    _check_t(ts, V)
    hbars = _grid(args.hbar_grid, geometric=True)
    delta = args.delta if args.delta is not None else 20 * min(V.frequencies)
    cfg = RunConfig("trace", {"potential": V.to_dict(), "t": ts.tolist(), "hbar": hbars.tolist(),
                              "delta": delta, "plateau": args.plateau, "solver": args.solver})
    theta = CutoffFunction(delta, args.plateau)
    opts = {"L": args.L, "M": args.M} if args.solver == "finite-difference" else {}
    table = hbar_sweep(V, theta, ts, hbars, solver=args.solver, threads=args.threads, **opts)
    table.provenance.update(version=__version__, config=cfg.digest())
    table.to_csv(args.out, cfg.header())
    if args.gnuplot:
        _write_gnuplot(Path(args.out), ["hbar", "t", "re", "im"])
    return 0


def _load_table(path: str) -> TraceTable:
    if not Path(path).is_file():
        raise ConfigError(f"trace table '{path}' not found")
    return TraceTable.from_csv(path)


def cmd_extract(args: argparse.Namespace) -> int:
    table = _load_table(args.table)
    cfg = RunConfig("extract", {"table": table.provenance.get("config", args.table), "J": args.J})
    fits = extract_invariants(table, args.J)
    columns = ["t"]
    for j in range(args.J + 1):
        columns += [f"re_a{j}", f"im_a{j}"]
    columns += ["residual", "condition"]
    rows = []
    for f in fits:
        row = [f.t]
        for c in f.coefficients:
            row += [c.real, c.imag]
        rows.append(row + [f.residual, f.condition])
    _write_csv(args.out, cfg, columns, rows, args.gnuplot)
    return 0


def cmd_invert(args: argparse.Namespace) -> int:
    if (args.potential is None) == (args.table is None):
        raise ConfigError("give exactly one of --potential (formula route) or --table (empirical route)")
    if args.order < 4 or args.order % 2:
        raise ConfigError("--order must be an even number >= 4")
    truth = None
    if args.potential is not None:
        truth = _potential(args.potential)
        if truth.dimension != 1:
            raise ConfigError("the formula route inverts one-dimensional potentials")
        ts = _grid(args.t_grid) if args.t_grid else None
        if ts is not None:
            _check_t(ts, truth)
        settings = RecoverySettings(route="formula", t_grid=None if ts is None else tuple(ts))
        cfg = RunConfig("invert", {"potential": truth.to_dict(), "order": args.order,
                                   "t": None if ts is None else ts.tolist()})
        report = end_to_end_1d(truth, args.order, settings)
    else:
        table = _load_table(args.table)
        cfg = RunConfig("invert", {"table": table.provenance.get("config", args.table), "J": args.J,
                                   "order": args.order, "dimension": args.dimension,
                                   "symmetry": args.symmetry})
        fits = extract_invariants(table, args.J, warn=False)
        jmax = args.order // 2 - 1
        if args.J < jmax:
            raise ConfigError(f"order {args.order} needs a fit order J >= {jmax}")
        samples = {j: np.array([f.coefficients[j] for f in fits]) for j in range(jmax + 1)}
        report = recover_from_samples(table.t_grid, samples, args.dimension, args.order, args.symmetry,
                                      frequency_tol=1e-5, fit_tol=5e-2,
                                      stages=[f"fit of order {args.J} to {len(table.hbar_grid)} hbar values"])
        if "potential" in table.provenance:
            truth = TaylorPotential.from_dict(table.provenance["potential"])
            report.compare(truth)
    print(report.table(truth))
    if args.out:
        _write_json(args.out, cfg, {"report": report.to_dict()})
    return 0


def _verify_hessian(args: argparse.Namespace) -> bool:
    rng = np.random.default_rng(args.seed)
    print(f"{'l':>2} {'n':>2} {'max|HH^-1-I|':>14} {'det rel.err':>12} {'FD rel.err':>12} {'signature':>9}")
    ok = True
    for l in range(1, 5):
        for n in range(1, 4):
            worst = {"identity": 0.0, "det": 0.0, "finite_difference": 0.0}
            sig_ok = True
            for _ in range(args.samples):
                w = rng.uniform(0.5, 2.0, n)
                t = rng.uniform(0.02, 0.98) * max_time(w)
                r = hessian_report(l, w, t)
                for k in worst:
                    worst[k] = max(worst[k], r[k])
                sig_ok &= r["signature"] == -n
            good = worst["identity"] < 1e-10 and worst["det"] < 1e-10 and worst["finite_difference"] < 1e-5 and sig_ok
            ok &= good
            print(f"{l:>2} {n:>2} {worst['identity']:>14.3e} {worst['det']:>12.3e} "
                  f"{worst['finite_difference']:>12.3e} {(-n if sig_ok else 'FAIL')!s:>9}")
    return ok


def _verify_trig(args: argparse.Namespace) -> bool:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(100):
        w = rng.uniform(0.3, 3.0)
        t = rng.uniform(0.01, 0.99) * max_time([w])
        worst = max(worst, trig_identity_residual(w, t, rng.uniform(0, t)))
    print(f"trig identity: max relative residual {worst:.3e} over 100 samples")
    return worst < 1e-12


def _verify_closed_form(args: argparse.Namespace) -> bool:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for n, j in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]:
        w = rng.uniform(0.6, 1.6, n)
        derivs = {tuple(2 * a for a in alpha): rng.uniform(-1, 1)
                  for m in range(2, j + 2) for alpha in multi_indices_of_order(n, m)}
        V = TaylorPotential(tuple(w), derivs, symmetry=SymmetryClass.EVEN)
        t = rng.uniform(0.2, 0.9) * max_time(w)
        engine = literal_l1_term(V, j, t, rng.uniform(0, t))
        closed = wave_invariant_linear_term(V, j, t)
        err = abs(engine - closed) / abs(closed)
        worst = max(worst, err)
        print(f"n={n} j={j} t={t:.4f}: literal {engine:.12g}  closed form {closed:.12g}  rel.err {err:.2e}")
    return worst < 1e-10


def _verify_oracle(args: argparse.Namespace) -> bool:
    ok = True
    for a, b in [(0.0, 0.05), (0.1, 0.05)]:
        derivs = {(4,): 24 * b}
        if a:
            derivs[(3,)] = 6 * a
        V = TaylorPotential((1.0,), derivs)
        worst = 0.0
        for t in np.linspace(0.3, 1.4, 10):
            e, o = wave_invariant(V, 1, t).value, perturbation_oracle(V, 1, t)
            worst = max(worst, abs(e - o) / abs(o))
        ok &= worst < 1e-6
        print(f"a={a} b={b}: max relative deviation engine vs perturbation oracle {worst:.3e}")
    return ok


def _verify_weyl(args: argparse.Namespace) -> bool:
    ok = True
    for name, V in [("harmonic", TaylorPotential((1.0,), {})), ("quartic", bundled_potential("quartic"))]:
        r = weyl_count_check(V, 0.005, 0.5)
        ok &= 0.9 <= r.ratio <= 1.1
        print(f"{name}: count {r.count}, phase-space estimate {r.phase_space_estimate:.4f}, ratio {r.ratio:.5f}")
    return ok


def _verify_minmax(args: argparse.Namespace) -> bool:
    V = bundled_potential("quartic")
    eigs = hermite_spectrum(V, 0.01, 0.5)
    r = minmax_bound_check(V, 0.01, 0.5, (-1.5, 1.5), eigenvalues=eigs)
    bad = eigs.eigenvalues.copy()
    bad[0] -= 2 * r.bound + 0.1
    neg = minmax_bound_check(V, 0.01, 0.5, (-1.5, 1.5), eigenvalues=bad)
    print(f"min-max: {r.checked} levels, C = {r.bound:.4g}, holds = {r.holds}; corrupted level detected = {not neg.holds}")
    return r.holds and not neg.holds


VERIFY = {
    "hessian": _verify_hessian,
    "trig": _verify_trig,
    "closed-form": _verify_closed_form,
    "oracle": _verify_oracle,
    "weyl": _verify_weyl,
    "minmax": _verify_minmax,
}


def cmd_verify(args: argparse.Namespace) -> int:
    suites = list(VERIFY) if args.suite == "all" else [args.suite]
    ok = True
    for name in suites:
        print(f"== {name}")
        good = VERIFY[name](args)
        print(f"-> {'PASS' if good else 'FAIL'}")
        ok &= good
    return 0 if ok else 1


def cmd_demo(args: argparse.Namespace) -> int:
    if args.route in ("empirical", "both"):
        V = bundled_potential("cubic_quartic")
        print("empirical route: V = x^2/2 + 0.1 x^3 + 0.05 x^4, eigenvalues -> trace sweep -> fit -> recovery")
        report = end_to_end_1d(V, 4, RecoverySettings(route="empirical", threads=args.threads))
        print(report.table(V))
        print()
    if args.route in ("formula", "both"):
        V = bundled_potential("sextic")
        print("formula route: V = x^2/2 + 0.1 x^3 + 0.05 x^4 + 0.02 x^5 + 0.01 x^6, exact invariants -> recovery")
        report = end_to_end_1d(V, 6)
        print(report.table(V))
    print("the sign of the cubic coefficient is not determined; odd orders are reported for V''' > 0")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bottomwell", description=__doc__)
    p.add_argument("--version", action="version", version=f"bottomwell {__version__}")
    p.add_argument("--threads", type=int, default=int(os.environ.get(THREADS_ENV, "1")),
                   help=f"worker threads for spectral solves (default from ${THREADS_ENV}, else 1)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    sub = p.add_subparsers(dest="command", required=True)

    def out_opts(q: argparse.ArgumentParser) -> None:
        q.add_argument("--out", help="output file (stdout if omitted)")
        q.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to the CSV")

    def solver_opts(q: argparse.ArgumentParser) -> None:
        q.add_argument("--solver", choices=["hermite", "finite-difference"], default="hermite")
        q.add_argument("--L", type=float, help="finite-difference box half-width")
        q.add_argument("--M", type=int, help="finite-difference grid points")

    q = sub.add_parser("forward", help="wave invariant a_j on a t-grid")
    q.add_argument("--potential", required=True, help="potential JSON, or bundled:<name>")
    q.add_argument("--j", type=int, required=True)
    q.add_argument("--t-grid", required=True, help="lo:hi:count")
    q.add_argument("--convention", choices=[c.value for c in Convention], default="physical")
    out_opts(q)
    q.set_defaults(func=cmd_forward)

    q = sub.add_parser("spectrum", help="eigenvalues below a cutoff")
    q.add_argument("--potential", required=True)
    q.add_argument("--hbar", type=float, required=True)
    q.add_argument("--cutoff", type=float, required=True)
    solver_opts(q)
    out_opts(q)
    q.set_defaults(func=cmd_spectrum)

    q = sub.add_parser("trace", help="truncated trace over a hbar sweep")
    q.add_argument("--potential", required=True)
    q.add_argument("--t-grid", required=True)
    q.add_argument("--hbar-grid", default="0.02:0.1:8", help="lo:hi:count, geometric")
    q.add_argument("--delta", type=float, help="energy cutoff (default 20 min omega)")
    q.add_argument("--plateau", type=float, default=0.1)
    solver_opts(q)
    q.add_argument("--out", required=True)
    q.add_argument("--gnuplot", action="store_true")
    q.set_defaults(func=cmd_trace)

    q = sub.add_parser("extract", help="fit a_0..a_J to a trace table")
    q.add_argument("--table", required=True)
    q.add_argument("--J", type=int, default=5)
    out_opts(q)
    q.set_defaults(func=cmd_extract)

    q = sub.add_parser("invert", help="recover Taylor coefficients")
    q.add_argument("--potential", help="formula route: invert exact invariants of this potential")
    q.add_argument("--table", help="empirical route: trace table CSV")
    q.add_argument("--order", type=int, default=4)
    q.add_argument("--J", type=int, default=5, help="fit order for the empirical route")
    q.add_argument("--dimension", type=int, default=1)
    q.add_argument("--symmetry", choices=[s.value for s in SymmetryClass], default="general")
    q.add_argument("--t-grid", help="lo:hi:count for the formula route")
    q.add_argument("--out", help="JSON report")
    q.set_defaults(func=cmd_invert)

    q = sub.add_parser("verify", help="run a verification suite")
    q.add_argument("suite", choices=[*VERIFY, "all"])
    q.add_argument("--samples", type=int, default=20, help="random times per (l, n) for the hessian suite")
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("demo", help="one-dimensional recovery showcase")
    q.add_argument("--route", choices=["empirical", "formula", "both"], default="both")
    q.set_defaults(func=cmd_demo)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"bottomwell {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except RecoveryError as exc:
        print(f"bottomwell {args.command}: recovery failed at stage '{exc.stage}': {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"bottomwell {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
