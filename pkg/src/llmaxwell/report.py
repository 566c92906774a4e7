"""Reference experiments and the pass/fail summary table.

:class:`Laboratory` builds the reference torus, caches every expensive
intermediate (limit states, sweeps, spectra, perturbation batteries) and
evaluates the nine checks used by ``full-report`` and the acceptance tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .domain import GridSpec, build_ball_mask, build_cube_mask, build_torus_mask, make_boundary_data
from .dynamics import flow_rhs, perturbation_battery
from .field import AngleField, SolverParams, assemble_u
from .maxwell import solve_demag
from .spectrum import (assemble_linearization, limit_eigenvalues, make_state, spectral_gap,
                       tbound_check)
from .steady import fixed_point, lambda_sweep, loglog_slope, measured_winding, solve_limit, theta_distance


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


def strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


class Laboratory:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.grid = GridSpec(cfg.box_side, cfg.cells)
        self.mask = build_torus_mask(cfg.major_radius, cfg.minor_radius, self.grid)
        self.lambdas = cfg.physical_lambdas()
        self.params = SolverParams(lam=self.lambdas[0], gamma=0.0, linear_tol=cfg.linear_tol,
                                   fixed_point_tol=cfg.fixed_point_tol, max_iters=cfg.max_iters,
                                   relaxation=cfg.relaxation, demag=cfg.demag,
                                   lam_min=cfg.physical_lambda_min())
        self._bdata, self._limit, self._sweep, self._spec = {}, {}, {}, {}
        self._battery = None
        self._gamma0 = None

    # ---- cached building blocks ----------------------------------------
    def bdata(self, w=None):
        w = self.cfg.winding if w is None else w
        if w not in self._bdata:
            self._bdata[w] = make_boundary_data(self.mask, w, self.cfg.amplitude)
        return self._bdata[w]

    def limit(self, w=None):
        w = self.cfg.winding if w is None else w
        if w not in self._limit:
            self._limit[w] = solve_limit(self.mask, self.bdata(w), self.params)
        return self._limit[w]

    def sweep(self, w=None):
        w = self.cfg.winding if w is None else w
        if w not in self._sweep:
            self._sweep[w] = lambda_sweep(self.mask, self.bdata(w), self.lambdas, self.params, limit=self.limit(w))
        return self._sweep[w]

    def state(self, lam_index=-1, w=None):
        return self.sweep(w).points[lam_index].state

    def spectrum(self, lam_index, gamma):
        key = (lam_index % len(self.lambdas), float(gamma))
        if key not in self._spec:
            blocks = assemble_linearization(self.state(lam_index), gamma, coupling=self.cfg.coupling)
            self._spec[key] = spectral_gap(blocks, k=self.cfg.eigen_k, tol=self.cfg.eigen_tol)
        return self._spec[key]

    def battery(self):
        if self._battery is None:
            dt = self.cfg.dt or None
            self._battery = perturbation_battery(self.state(-1), self.params.with_(lam=self.lambdas[-1]),
                                                 seeds=range(self.cfg.seed, self.cfg.seed + self.cfg.seeds),
                                                 eps=self.cfg.perturbation, T_max=self.cfg.t_max, dt=dt,
                                                 tol=self.cfg.decay_tol)
        return self._battery

    def gamma0(self):
        """Largest positive gamma of the schedule whose battery decays (0 if none)."""
        if self._gamma0 is None:
            g0, results = 0.0, {}
            base = self.params.with_(lam=self.lambdas[-1])
            for g in sorted(x for x in self.cfg.gammas if x > 0):
                res = perturbation_battery(self.state(-1), base.with_(gamma=g),
                                           seeds=range(self.cfg.seed, self.cfg.seed + self.cfg.gamma_seeds),
                                           eps=self.cfg.perturbation, T_max=self.cfg.t_max,
                                           dt=self.cfg.dt or None, tol=self.cfg.decay_tol)
                results[g] = res
                if not res.all_decay:
                    break
                g0 = g
            self._gamma0 = (g0, results)
        return self._gamma0[0]

    # ---- criteria -------------------------------------------------------
    def maxwell_check(self) -> CriterionResult:
        cfg = self.cfg
        ball_grid = GridSpec(cfg.box_side, cfg.ball_cells)
        ball = build_ball_mask(cfg.ball_radius, ball_grid)
        u = np.tile([0.0, 0.0, 1.0], (ball.n, 1))
        H = solve_demag(u, ball).H
        depth = -ball.level_set(*ball.centers.T)
        deep = depth >= 2 * ball.h
        factor_deep = -float(H[deep, 2].mean())
        factor_all = -float(H[:, 2].mean())
        err = abs(factor_deep - 1 / 3) / (1 / 3)
        rng = np.random.default_rng(cfg.seed)
        id_err, margins = [], []
        vol = self.mask.volume
        for _ in range(cfg.demag_samples):
            m = rng.standard_normal((self.mask.n, 3))
            m /= np.linalg.norm(m, axis=1, keepdims=True)
            f = solve_demag(m, self.mask)
            lhs = f.field_energy
            rhs = -float(np.sum(m * f.H)) * self.mask.cell_volume
            id_err.append(abs(lhs - rhs) / abs(rhs))
            margins.append(1 - math.sqrt(lhs) / math.sqrt(vol))
        ok = err < 0.05 and max(id_err) < 1e-6 and min(margins) > 0
        detail = (f"demag factor {factor_deep:.5f} (cells >= 2h deep; all cells {factor_all:.4f}) vs 1/3, "
                  f"err {100 * err:.3f}%; identity err max {max(id_err):.2e}; L2-bound margin min {min(margins):.3f}")
        return CriterionResult(1, "Maxwell correctness", ok, detail,
                               dict(factor=factor_deep, factor_all_cells=factor_all, rel_err=err,
                                    identity_err_max=max(id_err), margin_min=min(margins)))

    def xi_scaling(self) -> CriterionResult:
        sw = self.sweep()
        s, hq = sw.sup_slope, sw.holder_slope
        bracket = max(q.xi_sup / (2 * q.bracket_C / q.lam) for q in sw.points)
        ok = abs(s + 1.0) <= 0.15 and bracket <= 1.0 and -1.1 <= hq <= -0.4
        detail = (f"sup|xi| slope {s:.4f} (target -1 +- 0.15); Holder-quotient slope {hq:.4f} "
                  f"(in [-1.1, -0.4]); max sup|xi|/(2C/lambda) = {bracket:.3e}")
        return CriterionResult(2, "xi scaling", ok, detail,
                               dict(sup_slope=s, holder_slope=hq, bracket_ratio_max=bracket,
                                    xi_sup=[q.xi_sup for q in sw.points]))

    def homotopy(self) -> CriterionResult:
        got = {}
        ok = True
        for w in self.cfg.windings:
            ws = [measured_winding(q.state.angles) for q in self.sweep(w).points]
            got[w] = ws
            ok &= all(x == w for x in ws)
        detail = "; ".join(f"w={w}: {ws}" for w, ws in got.items())
        return CriterionResult(3, "homotopy preservation", ok, detail, dict(windings=got))

    def limit_convergence(self) -> CriterionResult:
        sw = self.sweep()
        th = [q.theta_dist_l2 for q in sw.points]
        gv = [q.gradv_dist_l2 for q in sw.points]
        ok = (strictly_decreasing(th) and strictly_decreasing(gv)
              and th[-1] < th[0] / 10 and gv[-1] < gv[0] / 10)
        detail = (f"|theta-theta*| {th[0]:.3e} -> {th[-1]:.3e} (x{th[0] / th[-1]:.1f}); "
                  f"|grad(v-v*)| {gv[0]:.3e} -> {gv[-1]:.3e} (x{gv[0] / gv[-1]:.1f}); strictly decreasing")
        return CriterionResult(4, "limit convergence", ok, detail, dict(theta=th, gradv=gv))

    def uniqueness(self) -> CriterionResult:
        rng = np.random.default_rng(self.cfg.seed + 1)
        bd = self.bdata()
        dists = []
        for q in self.sweep().points:
            init = AngleField(bd, 0.05 * rng.standard_normal(self.mask.n), np.zeros(self.mask.n))
            other = fixed_point(self.mask, bd, self.params.with_(lam=q.lam), init=init)
            a, b = q.state.angles, other.angles
            dists.append(theta_distance(a, b) + self.mask.norm(a.xi - b.xi))
        tol = self.cfg.fixed_point_tol
        ok = max(dists) < 10 * tol
        detail = f"max distance {max(dists):.3e} < 10*tol = {10 * tol:.1e}"
        return CriterionResult(5, "uniqueness probe", ok, detail, dict(distances=dists))

    def box_diagnostic(self) -> dict:
        cfg = self.cfg
        cube = build_cube_mask(cfg.box_cube_side, self.grid)
        bd = make_boundary_data(cube, winding=0, amplitude=0.0)
        p = SolverParams(lam=cfg.box_lambda, demag=False)
        rep = spectral_gap(assemble_linearization(make_state(AngleField.zeros(bd), p), 0.0, coupling=False),
                           k=3, tol=cfg.eigen_tol)
        psi = rep.branch("psi")
        expect = 2 * cfg.box_lambda + 3 * math.pi**2 / cfg.box_cube_side**2
        got = float(np.real(psi[0])) if psi else float("nan")
        return dict(expected=expect, measured=got, rel_err=abs(got - expect) / expect)

    def spectral_gap_check(self) -> CriterionResult:
        g0 = self.gamma0()
        gaps = {0.0: [], g0: []}
        for g in gaps:
            for i in range(len(self.lambdas)):
                gaps[g].append(float(np.real(self.spectrum(i, g).eigenvalues[0])))
        box = self.box_diagnostic()
        rep = self.spectrum(-1, 0.0)
        phi_vals = [float(np.real(x)) for x in rep.branch("phi")]
        k = min(3, len(phi_vals))
        lim_vals = [float(np.real(x)) for x in limit_eigenvalues(*self.limit(), k=k, tol=self.cfg.eigen_tol)]
        rel = [abs(a - b) / abs(b) for a, b in zip(phi_vals[:k], lim_vals)]
        ok = (all(x > 0 for v in gaps.values() for x in v) and box["rel_err"] < 0.02 and max(rel) < 0.05)
        detail = (f"Re mu1 min {min(gaps[0.0]):.2f} (gamma=0), {min(gaps[g0]):.2f} (gamma0={g0}); "
                  f"box {box['measured']:.3f} vs {box['expected']:.3f} ({100 * box['rel_err']:.3f}%); "
                  f"limit problem rel. diff max {max(rel):.2e}")
        return CriterionResult(6, "spectral gap", ok, detail,
                               dict(gaps={str(g): v for g, v in gaps.items()}, gamma0=g0, box=box,
                                    phi_branch=phi_vals[:k], limit=lim_vals, rel=rel))

    def psi_mass_scaling(self) -> CriterionResult:
        out = {}
        for g in (0.0, self.gamma0()):
            mass = [self.spectrum(i, g).psi_mass[0] for i in range(len(self.lambdas))]
            out[g] = (loglog_slope(self.lambdas, mass), mass)
        ok = all(s <= -0.8 for s, _ in out.values())
        detail = "; ".join(f"gamma={g}: exponent {s:.3f}" for g, (s, _) in out.items()) + " (<= -0.8)"
        return CriterionResult(7, "psi-mass scaling", ok, detail,
                               dict(exponents={str(g): s for g, (s, _) in out.items()},
                                    masses={str(g): m for g, (_, m) in out.items()}))

    def dynamic_stability(self) -> CriterionResult:
        bat = self.battery()
        gap = self.spectrum(-1, 0.0).gap
        rel = [abs(r - gap) / gap for r in bat.rates]
        jumps = []
        for rec in bat.records:
            E = np.asarray(rec.energies)
            jumps.append(float(np.max(np.diff(E) / np.abs(E[:-1]))) if len(E) > 1 else 0.0)
        ok = bat.all_decay and max(rel) < 0.25 and max(jumps) < 1e-10
        detail = (f"{sum(r.converged for r in bat.records)}/{len(bat.records)} trajectories decayed; "
                  f"rates {min(bat.rates):.1f}..{max(bat.rates):.1f} vs gap {gap:.1f} (max dev {100 * max(rel):.1f}%); "
                  f"max relative energy increase {max(jumps):.1e}")
        return CriterionResult(8, "dynamic stability", ok, detail,
                               dict(rates=bat.rates, gap=gap, rel=rel, energy_jump_max=max(jumps),
                                    steps=[len(r.times) - 1 for r in bat.records]))

    def linearization_consistency(self, directions: int = 5, eps=(1e-3, 5e-4, 2.5e-4)) -> CriterionResult:
        from .dynamics import smooth_field

        s = self.state(-1)
        mask = self.mask
        rng = np.random.default_rng(self.cfg.seed + 2)
        ratios, finals = [], []
        for g in (0.0, self.gamma0()):
            p = s.params.with_(gamma=g)
            blocks = assemble_linearization(s, g, coupling=self.cfg.coupling)
            a = s.angles

            def F(b):
                ft, fx = flow_rhs(b, solve_demag(assemble_u(b), mask), p)
                return np.concatenate([ft, fx])

            F0 = F(a)
            n = mask.n
            for _ in range(directions):
                x = np.concatenate([smooth_field(mask, rng), 1e-3 * smooth_field(mask, rng)])
                Ax = blocks.apply(x)
                errs = []
                for e in eps:
                    b = a.with_(phi=a.phi + e * x[:n], xi=a.xi + e * x[n:])
                    errs.append(np.linalg.norm((F(b) - F0) / e - Ax) / np.linalg.norm(Ax))
                ratios += [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
                finals.append(errs[-1])
        ok = all(1.6 <= r <= 2.4 for r in ratios) and max(finals) < 1e-2
        detail = (f"error ratio per halving {min(ratios):.3f}..{max(ratios):.3f} (first order = 2); "
                  f"max rel. error at eps={eps[-1]:g}: {max(finals):.2e}")
        return CriterionResult(9, "linearization consistency", ok, detail, dict(ratios=ratios, finals=finals))

    def all_criteria(self):
        checks = [self.maxwell_check, self.xi_scaling, self.homotopy, self.limit_convergence, self.uniqueness,
                  self.spectral_gap_check, self.psi_mass_scaling, self.dynamic_stability,
                  self.linearization_consistency]
        out = []
        for c in checks:
            t = time.perf_counter()
            r = c()
            r.seconds = time.perf_counter() - t
            out.append(r)
        return out
