"""Command line driver: ``python -m llmaxwell COMMAND [--config FILE]``.

Every run writes into the output directory a ``manifest.json`` (resolved
config, versions, timings, file list), the replayable ``config.ini`` and
the CSV artifacts of the command.  Solver failures additionally leave a
``diagnostics.json``.

Exit codes: 0 success, 2 configuration/geometry/data error, 3 solver
non-convergence or rejected step, 4 invariant breach (bracket, chart,
resolution, winding, or a failed criterion in ``full-report``).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, dump_config, load_config, resolve_output_dir
from .domain import GridSpec, build_torus_mask, make_boundary_data
from .errors import (ConfigurationError, DataError, GeometryError, LLMError, NonConvergenceError,
                     StepRejected)
from .field import energy, residuals, save_snapshot
from .report import Laboratory
from .spectrum import assemble_linearization, spectrum_row, tbound_check, write_spectrum_csv
from .steady import lambda_sweep, measured_winding

COMMANDS = ("demag-check", "limit", "steady", "sweep", "evolve", "spectrum", "full-report")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, GeometryError, DataError)):
        return EXIT_CONFIG
    if isinstance(exc, (NonConvergenceError, StepRejected)):
        return EXIT_SOLVER
    # BracketError, ChartError, ResolutionError and anything unexpected
    return EXIT_INVARIANT


class Artifacts:
    """Single writer for one output directory; records every file it creates."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._drop_previous()
        self.files: list[str] = []

    def _drop_previous(self):
        # files listed by an earlier manifest in the same directory would
        # otherwise linger as undeclared artifacts
        old = self.root / "manifest.json"
        if not old.exists():
            return
        try:
            names = json.loads(old.read_text()).get("files", [])
        except (OSError, ValueError):
            return
        for name in names:
            p = self.root / name
            if p.is_file():
                p.unlink()

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content)
        return p

    def rows(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


class Run:
    def __init__(self, cfg: RunConfig, out: Artifacts, echo=print):
        self.cfg = cfg
        self.out = out
        self.echo = echo
        self.timings: dict[str, float] = {}
        self.lab = Laboratory(cfg)

    def timed(self, name, fn, *args):
        t = time.perf_counter()
        try:
            return fn(*args)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t

    # ---- commands -------------------------------------------------------
    def demag_check(self):
        r = self.timed("demag-check", self.lab.maxwell_check)
        v = r.values
        self.echo(f"demag factor        {v['factor']:.6f} (exact 1/3, rel. err {v['rel_err']:.3e})")
        self.echo(f"energy identity err {v['identity_err_max']:.3e} (max over {self.cfg.demag_samples} fields)")
        self.echo(f"L2-bound margin     {v['margin_min']:.4f} (min)")
        self.out.rows("demag.csv", ["quantity", "value"], [(k, float(x)) for k, x in v.items()])
        return True

    def limit(self):
        a, H = self.timed("limit", self.lab.limit)
        p = self.lab.params
        rt, _ = residuals(a, H, p)
        e = energy(a, H, p)
        w = measured_winding(a)
        self.echo(f"limit state: energy {e:.10g}, residual {a.mask.norm(rt):.3e}, winding {w}")
        self.out.rows("limit.csv", ["winding", "energy", "r_theta"], [(w, e, a.mask.norm(rt))])
        save_snapshot(a, self.out.path("snapshots/limit.csv"))
        return True

    def steady(self):
        lab = self.lab
        lam = lab.lambdas[-1]
        sw = self.timed("steady", lambda_sweep, lab.mask, lab.bdata(), [lam], lab.params, lab.limit())
        q = sw.points[0]
        self.echo(f"lambda {lam:.6g}: sup|xi| {q.xi_sup:.4e}, energy {q.state.energy_value:.10g}, "
                  f"{q.state.iterations} outer iterations, residuals {q.state.residuals}")
        sw.write_csv(self.out.path("steady.csv"))
        save_snapshot(q.state.angles, self.out.path("snapshots/steady.csv"), extra={"lambda": lam})
        return True

    def sweep(self):
        sw = self.timed("sweep", self.lab.sweep)
        sw.write_csv(self.out.path("sweep.csv"))
        for q in sw.points:
            self.echo(f"lambda {q.lam:12.6g}  sup|xi| {q.xi_sup:.4e}  |theta-theta*| {q.theta_dist_l2:.3e}")
        lines = [f"sup_xi_slope = {sw.sup_slope!r}", f"holder_slope = {sw.holder_slope!r}",
                 f"points = {len(sw.points)}"]
        self.out.text("sweep_summary.txt", "\n".join(lines) + "\n")
        self.echo(f"fitted slope: sup|xi| ~ lambda^{sw.sup_slope:.4f}, Holder quotient ~ lambda^{sw.holder_slope:.4f}")
        every = self.cfg.snapshot_every
        if every > 0:
            for i, q in enumerate(sw.points):
                if i % every == 0:
                    save_snapshot(q.state.angles, self.out.path(f"snapshots/sweep_{i:02d}.csv"),
                                  extra={"lambda": q.lam})
        return True

    def _snapshot_cb(self, gamma):
        every = self.cfg.snapshot_every
        if every <= 0:
            return None

        def cb(seed, state, k):
            if k % every == 0:
                save_snapshot(state.angles, self.out.path(f"snapshots/evolve_g{gamma:g}_s{seed}_{k:06d}.csv"),
                              extra={"t": state.time})
        return cb

    def _write_battery(self, gamma, bat, rows):
        for rec, rate, q in zip(bat.records, bat.rates, bat.qualities):
            rec.write_csv(self.out.path(f"decay/g{gamma:g}_s{rec.seed}.csv"))
            rows.append((gamma, rec.seed, int(rec.converged), int(rec.unstable), len(rec.times) - 1,
                         rec.distances[-1], rate, q))

    def evolve(self):
        from .dynamics import perturbation_battery

        cfg, lab = self.cfg, self.lab
        target = self.timed("steady", lab.state, -1)
        base = lab.params.with_(lam=lab.lambdas[-1])
        rows = []
        for g in cfg.gammas:
            n = cfg.seeds if g == 0 else cfg.gamma_seeds
            bat = self.timed("evolve", perturbation_battery, target, base.with_(gamma=g),
                             range(cfg.seed, cfg.seed + n), cfg.perturbation, cfg.t_max, cfg.dt or None,
                             cfg.decay_tol, self._snapshot_cb(g))
            self._write_battery(g, bat, rows)
            self.echo(f"gamma {g:g}: {sum(r.converged for r in bat.records)}/{n} decayed, "
                      f"rates {', '.join(f'{x:.2f}' for x in bat.rates)}")
        self.out.rows("evolve.csv", EVOLVE_COLUMNS, rows)
        return True

    def spectrum(self):
        cfg, lab = self.cfg, self.lab
        rows = []
        for i, lam in enumerate(lab.lambdas):
            for g in cfg.gammas:
                rep = self.timed("spectrum", lab.spectrum, i, g)
                blocks = assemble_linearization(lab.state(i), g, coupling=cfg.coupling)
                tb = self.timed("tbound", tbound_check, blocks, cfg.tbound_beta, cfg.tbound_samples, cfg.seed)
                rows.append(spectrum_row(rep, tb["max"]))
                self.echo(f"lambda {lam:12.6g} gamma {g:<5g} Re mu1 {rep.gap:12.5f}  psi mass {rep.psi_mass[0]:.3e}")
        write_spectrum_csv(rows, self.out.path("spectrum.csv"))
        box = self.timed("spectrum", lab.box_diagnostic)
        self.echo(f"box diagnostic: {box['measured']:.5f} vs {box['expected']:.5f} (rel. err {box['rel_err']:.2e})")
        self.out.rows("box.csv", ["expected", "measured", "rel_err"],
                      [(box["expected"], box["measured"], box["rel_err"])])
        return True

    def full_report(self):
        lab = self.lab
        results = []
        for check in (lab.maxwell_check, lab.xi_scaling, lab.homotopy, lab.limit_convergence, lab.uniqueness,
                      lab.spectral_gap_check, lab.psi_mass_scaling, lab.dynamic_stability,
                      lab.linearization_consistency):
            t = time.perf_counter()
            r = check()
            r.seconds = time.perf_counter() - t
            self.timings[f"criterion {r.number}"] = r.seconds
            self.echo(r.line())
            results.append(r)
        self.out.rows("summary.csv", ["criterion", "name", "passed", "detail"],
                      [(r.number, r.name, int(r.passed), r.detail) for r in results])
        self.out.json("summary_values.json", {str(r.number): r.values for r in results})
        lab.sweep().write_csv(self.out.path("sweep.csv"))
        rows = [spectrum_row(rep) for _, rep in sorted(lab._spec.items())]
        write_spectrum_csv(rows, self.out.path("spectrum.csv"))
        ev = []
        self._write_battery(0.0, lab.battery(), ev)
        self.out.rows("evolve.csv", EVOLVE_COLUMNS, ev)
        n_ok = sum(r.passed for r in results)
        self.echo(f"{n_ok}/{len(results)} criteria passed")
        return n_ok == len(results)


EVOLVE_COLUMNS = ["gamma", "seed", "converged", "unstable", "steps", "final_distance", "rate", "r2"]


def gnuplot_script(files) -> str:
    """Plot commands for whichever CSV artifacts exist."""
    out = ["set datafile separator ','", "set key autotitle columnhead", "set term pngcairo size 900,600", ""]
    if "sweep.csv" in files:
        out += ["set output 'sweep.png'", "set logscale xy", "set xlabel 'lambda'",
                "plot 'sweep.csv' using 1:2 with linespoints title 'sup|xi|', \\",
                "     '' using 1:4 with linespoints title '|theta - theta*|', \\",
                "     '' using 1:5 with linespoints title '|grad(v - v*)|'", "unset logscale", ""]
    if "spectrum.csv" in files:
        out += ["set output 'spectrum.png'", "set logscale x", "set xlabel 'lambda'",
                "plot 'spectrum.csv' using 1:3 with points title 'Re mu1'", "unset logscale", ""]
    decays = sorted(f for f in files if f.startswith("decay/"))
    if decays:
        out += ["set output 'decay.png'", "set logscale y", "set xlabel 't'",
                "plot " + ", \\\n     ".join(f"'{f}' using 1:2 with lines title '{Path(f).stem}'" for f in decays),
                "unset logscale", ""]
    return "\n".join(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="llmaxwell", description="Landau-Lifshitz-Maxwell steady states, "
                                 "sweeps, spectra and stability batteries on a masked grid.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", "-c", type=Path, help="INI file (sections: geometry, boundary, steady, "
                    "dynamics, spectrum, maxwell, output)")
    ap.add_argument("--quiet", "-q", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    echo = (lambda *a, **k: None) if args.quiet else print
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        # geometry is checked before any compute starts
        make_boundary_data(build_torus_mask(cfg.major_radius, cfg.minor_radius,
                                            GridSpec(cfg.box_side, cfg.cells)), cfg.winding, cfg.amplitude)
    except LLMError as exc:
        print(f"llmaxwell: {exc}", file=sys.stderr)
        return exit_code_for(exc)

    out = Artifacts(resolve_output_dir(cfg))
    out.text("config.ini", dump_config(cfg))
    run = Run(cfg, out, echo)
    status, error = EXIT_OK, None
    t0 = time.perf_counter()
    try:
        ok = getattr(run, args.command.replace("-", "_"))()
        if not ok:
            status = EXIT_INVARIANT
    except LLMError as exc:
        status = exit_code_for(exc)
        error = {"type": type(exc).__name__, "message": str(exc)}
        for key in ("residual", "trace", "sup_xi", "bound", "volume", "diagnostics"):
            if hasattr(exc, key):
                error[key] = getattr(exc, key)
        out.json("diagnostics.json", error)
        print(f"llmaxwell: {type(exc).__name__}: {exc}", file=sys.stderr)
    run.timings["total"] = time.perf_counter() - t0
    csvs = [f for f in out.files if f.endswith(".csv")]
    if any(f in csvs for f in ("sweep.csv", "spectrum.csv")) or any(f.startswith("decay/") for f in csvs):
        out.text("plots.gp", gnuplot_script(csvs))
    out.path("manifest.json")
    manifest = {
        "command": args.command,
        "exit_status": status,
        "config": cfg.to_dict(),
        "versions": {"llmaxwell": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings_seconds": run.timings,
        "error": error,
        "files": out.files,
    }
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    echo(f"artifacts in {out.root}")
    return status


if __name__ == "__main__":
    sys.exit(main())
