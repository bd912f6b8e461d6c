"""Homogenization pipeline: contact statistics, effective levels, decay.

Everything here reduces generic centers to the origin by translating the
test function (phi at x0 becomes phi(. + x0) at 0), so every lattice
problem lives on a box centered at zero while the coefficients are read
at grid/eps under the given environment.

The obstacle statistic is exact in three discrete senses that tests rely
on: contact masks are literal zero sets, fractions are ratios of integer
counts, and the fixed-sweep engine preserves orderings (in level, in
forcing, in domain inclusion) without floating-point leakage.  All
Monte Carlo work is a deterministic fold over (eps, seed, level) items,
and the optional process pool cannot change any reported number.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import Environment, EnvironmentSpec, sample_environment, translate
from .errors import ConfigurationError, SolverError
from .kernels import KernelFamily, QuadratureTable, build_quadrature
from .operators import Box, ExteriorRule, GridFunction, TestFunction
from .solve import (
    Bump,
    DirichletProblem,
    OperatorHandle,
    barrier_threshold,
    solve_dirichlet,
    solve_obstacle,
    _lattice,
)

__all__ = [
    "MbarEstimate",
    "EffectiveSample",
    "ExtractionConfig",
    "RowLog",
    "CSV_COLUMNS",
    "quadratic_bank",
    "contact_statistic",
    "estimate_mbar",
    "effective_value",
    "corrector_decay_profile",
    "comparison_measurable_experiment",
    "abp_scaling_experiment",
    "convergence_experiment",
    "worker_count",
]

CSV_COLUMNS = (
    "experiment_id", "eps", "seed", "l", "contact_fraction",
    "sup_norm", "iterations", "residual", "wall_ms",
)


class RowLog:
    """Collects one CSV row per solve, in a fixed column order.

    wall_ms is the last column so determinism comparisons can drop it;
    every other field must replay bit-identically.
    """

    def __init__(self):
        self.rows = []

    def add(self, experiment_id, eps="", seed="", l="", contact_fraction="",
            sup_norm="", iterations="", residual="", wall_ms=""):
        self.rows.append((experiment_id, eps, seed, l, contact_fraction,
                          sup_norm, iterations, residual, wall_ms))

    @staticmethod
    def _fmt(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return repr(float(v))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                w.writerow([self._fmt(v) for v in row])


# ---------------------------------------------------------------------------
# result types

@dataclass
class MbarEstimate:
    phi: TestFunction
    x0: tuple
    level: float
    eps_list: tuple
    fractions: dict          # (eps, seed) -> contact fraction
    means: dict              # eps -> seed average
    spreads: dict            # eps -> max - min over seeds
    estimate: float
    stderr: float
    extrapolation: str       # "last" | "richardson"

    def validate(self):
        if any(not (0.0 <= f <= 1.0) for f in self.fractions.values()):
            raise ConfigurationError("contact fractions must lie in [0, 1]")
        if not 0.0 <= self.estimate <= 1.0:
            raise ConfigurationError("m-bar estimate must lie in [0, 1]")
        if any(a <= b for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigurationError("eps list must be strictly decreasing")
        return self


@dataclass
class EffectiveSample:
    phi: TestFunction
    x0: tuple
    bracket: tuple           # (l_lo, l_hi) after bisection
    value: float             # effective level estimate
    theta: float
    eps_list: tuple
    seeds: tuple
    certificates: dict       # how the initial bracket was certified
    steps: list              # (level, mbar estimate, side) per bisection step

    def validate(self):
        lo, hi = self.bracket
        if not lo <= self.value <= hi:
            raise ConfigurationError("effective value must sit inside its bracket")
        return self


@dataclass(frozen=True)
class ExtractionConfig:
    eps_list: tuple = (2.0**-4,)
    seeds: tuple = (0, 1, 2, 3)
    h: float | None = None           # None: eps_min / 4
    theta: float | None = None       # None: two cells out of the interior count
    tol: float = 2.0**-6             # bisection stops at this bracket width
    max_steps: int = 48
    solver_tol: float = 1e-7
    r_out_factor: float = 8.0
    method: str = "auto"
    richardson: bool = False         # experimental extrapolation in eps
    workers: int = 1


def worker_count(requested=None):
    """Resolve a worker count: explicit arg, env override, else all cores."""
    envval = os.environ.get("NONLOCAL_HOMOG_WORKERS")
    if requested is not None and requested > 0:
        return int(requested)
    if envval:
        return max(1, int(envval))
    return os.cpu_count() or 1


def quadratic_bank(dim: int, r_cut: float = 4.0):
    """Fixed, reproducible family of capped quadratic test functions.

    Curvature eigenvalues run over {-2, -1, 0, 1, 2}; in 2d the bank
    holds the ordered diagonal pairs plus two rotated representatives so
    off-diagonal curvature is probed as well.
    """
    bank = []
    levels = [-2.0, -1.0, 0.0, 1.0, 2.0]
    if dim == 1:
        for k in levels:
            bank.append(TestFunction.make(P=np.array([[k]]), p=np.zeros(1),
                                          const=0.0, center=np.zeros(1), r_cut=r_cut))
        return bank
    if dim != 2:
        raise ConfigurationError("test-function bank covers dimensions 1 and 2")
    for i, k1 in enumerate(levels):
        for k2 in levels[: i + 1]:
            bank.append(TestFunction.make(P=np.diag([k1, k2]), p=np.zeros(2),
                                          const=0.0, center=np.zeros(2), r_cut=r_cut))
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    R = np.array([[c, -s], [s, c]])
    for pair in ((2.0, -1.0), (1.0, -1.0)):
        P = R @ np.diag(pair) @ R.T
        bank.append(TestFunction.make(P=P, p=np.zeros(2), const=0.0,
                                      center=np.zeros(2), r_cut=r_cut))
    return bank


# ---------------------------------------------------------------------------
# frozen-operator obstacle statistic

def _frozen_problem(phi, x0, level, eps, env, fam, h, *, domain_half=0.5,
                    shape="cube"):
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    shifted = phi.shifted(x0) if np.any(x0 != 0.0) else phi
    handle = OperatorHandle(fam=fam, env=env, eps=eps,
                            frozen=(shifted, np.zeros(env.dim)))
    box = Box(center=(0.0,) * env.dim, half=domain_half, h=h)
    return DirichletProblem(handle=handle, domain=box, rhs=level,
                            exterior=ExteriorRule.zero(), shape=shape)


def _contact_solve(phi, x0, level, eps, env, fam, h, *, quad=None,
                   tol=1e-7, method="auto", fixed_sweeps=None, init=None):
    prob = _frozen_problem(phi, x0, level, eps, env, fam, h)
    if quad is None:
        quad = build_quadrature(fam.dim, fam.sigma, h,
                                8.0 * 2.0 * prob.domain.half * (1 if fam.dim == 1 else math.sqrt(2)))
    sol = solve_obstacle(prob, tol=tol, quad=quad, method=method,
                         fixed_sweeps=fixed_sweeps, init=init)
    return sol, quad


def contact_statistic(phi, x0, level, eps, env, fam: KernelFamily,
                      h: float | None = None, **kw) -> float:
    """Contact fraction of the frozen-operator obstacle problem.

    Least nonnegative supersolution at the given level on the unit box
    around the (translated-away) center, coefficients read at grid/eps;
    returns the fraction of interior cells in exact contact.
    """
    if h is None:
        h = eps / 4.0
    sol, _ = _contact_solve(phi, x0, level, eps, env, fam, h, **kw)
    return sol.fraction


# ---------------------------------------------------------------------------
# Monte Carlo m-bar and the effective level

def _mbar_item(args):
    (spec, fam, seed, phi, x0, level, eps, h, tol, method) = args
    env = sample_environment(spec, seed=seed)
    t0 = time.perf_counter()
    sol, _ = _contact_solve(phi, x0, level, eps, env, fam, h,
                            tol=tol, method=method)
    wall = (time.perf_counter() - t0) * 1e3
    d = sol.diagnostics
    return (eps, seed, sol.fraction, float(np.max(np.abs(sol.u.values))),
            d.iterations, d.residual, wall)


def fam_of(spec: EnvironmentSpec, sigma: float | None = None) -> KernelFamily:
    """Kernel family matching an environment spec (sigma defaults to 1)."""
    return KernelFamily(kind=spec.kernel_class, dim=spec.dim,
                        sigma=1.0 if sigma is None else sigma,
                        lam=spec.lam, lam_big=spec.lam_big)


def _run_items(items, fn, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=1))


def estimate_mbar(phi, x0, level, eps_list, seeds, spec: EnvironmentSpec,
                  fam: KernelFamily, *, h=None, tol=1e-7, method="auto",
                  richardson=False, workers=1, log: RowLog | None = None,
                  experiment_id="mbar") -> MbarEstimate:
    """Seed-averaged contact fractions per eps, extrapolated in eps.

    The default extrapolation takes the smallest-eps average (no rate is
    available to justify more); Richardson on the last two eps values is
    offered as an experimental alternative.  Seed spread per eps is the
    self-averaging diagnostic.
    """
    eps_list = tuple(sorted(set(eps_list), reverse=True))
    if len(seeds) < 1:
        raise ConfigurationError("estimate_mbar needs at least one seed")
    items = []
    for eps in eps_list:
        he = (eps / 4.0) if h is None else h
        for seed in seeds:
            items.append((spec, fam, seed, phi, np.atleast_1d(x0), level, eps,
                          he, tol, method))
    out = _run_items(items, _mbar_item, workers)
    fractions, means, spreads = {}, {}, {}
    for eps, seed, frac, sup, its, res, wall in out:
        fractions[(eps, seed)] = frac
        if log is not None:
            log.add(experiment_id, eps=eps, seed=seed, l=level,
                    contact_fraction=frac, sup_norm=sup, iterations=its,
                    residual=res, wall_ms=wall)
    for eps in eps_list:
        vals = [fractions[(eps, s)] for s in seeds]
        means[eps] = float(np.mean(vals))
        spreads[eps] = float(np.max(vals) - np.min(vals))
    smallest = eps_list[-1]
    if richardson and len(eps_list) >= 2:
        e1, e2 = eps_list[-2], eps_list[-1]
        m1, m2 = means[e1], means[e2]
        est = m2 + (m2 - m1) * e2 / (e1 - e2)
        est = min(1.0, max(0.0, est))
        mode = "richardson"
    else:
        est = means[smallest]
        mode = "last"
    vals = [fractions[(smallest, s)] for s in seeds]
    stderr = float(np.std(vals) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return MbarEstimate(phi=phi, x0=tuple(np.atleast_1d(x0)), level=level,
                        eps_list=eps_list, fractions=fractions, means=means,
                        spreads=spreads, estimate=est, stderr=stderr,
                        extrapolation=mode).validate()


def _bracket(phi, x0, cfg: ExtractionConfig, spec, fam):
    """Certified starting bracket for the level bisection.

    Low end: below min F(P+) over every (eps, seed) the positive bump is
    a subsolution, so the least supersolution dominates it and the
    contact fraction is zero.  High end: above max F(0) the zero function
    already satisfies the level, so contact is total.
    """
    lo = math.inf
    hi = -math.inf
    for eps in cfg.eps_list:
        he = (eps / 4.0) if cfg.h is None else cfg.h
        for seed in cfg.seeds:
            env = sample_environment(spec, seed=seed)
            prob = _frozen_problem(phi, x0, 0.0, eps, env, fam, he)
            quad = build_quadrature(fam.dim, fam.sigma, he,
                                    cfg.r_out_factor * 2.0 * prob.domain.half
                                    * (1 if fam.dim == 1 else math.sqrt(2)))
            lo = min(lo, barrier_threshold(prob, +1, quad=quad))
            lat = _lattice(prob, quad)
            z = np.zeros(lat.rhs.shape)
            F0, _ = lat.operator_values(z)
            hi = max(hi, float(np.max(np.asarray(F0)[lat.active])))
    margin = max(1e-9, 1e-6 * (abs(lo) + abs(hi)))
    return lo - margin, hi + margin


def effective_value(phi, x0, cfg: ExtractionConfig, spec: EnvironmentSpec,
                    fam: KernelFamily, *, log: RowLog | None = None,
                    experiment_id="effective") -> EffectiveSample:
    """Bisect on the level for the boundary between contact regimes.

    Below the effective level the extrapolated contact fraction sits at
    or under theta (treated as zero at this resolution); above it the
    fraction is positive.  Discrete monotonicity of the fraction in the
    level makes the bisection sound.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    lo, hi = _bracket(phi, x0, cfg, spec, fam)
    if not lo < hi:
        raise SolverError(f"degenerate effective-value bracket [{lo}, {hi}]")
    smallest = min(cfg.eps_list)
    he = (smallest / 4.0) if cfg.h is None else cfg.h
    cells = int(round(1.0 / he)) ** spec.dim  # interior cells of the unit box
    theta = cfg.theta if cfg.theta is not None else 2.0 / cells
    certificates = {"lo": ("barrier", lo), "hi": ("zero-function", hi)}
    steps = []

    def mbar_at(level):
        est = estimate_mbar(phi, x0, level, cfg.eps_list, cfg.seeds, spec, fam,
                            h=cfg.h, tol=cfg.solver_tol, method=cfg.method,
                            richardson=cfg.richardson, workers=cfg.workers,
                            log=log, experiment_id=experiment_id)
        return est.estimate

    for _ in range(cfg.max_steps):
        if hi - lo <= cfg.tol:
            break
        mid = 0.5 * (lo + hi)
        m = mbar_at(mid)
        if m <= theta:
            steps.append((mid, m, "zero"))
            lo = mid
        else:
            steps.append((mid, m, "positive"))
            hi = mid
    value = 0.5 * (lo + hi)
    return EffectiveSample(phi=phi, x0=tuple(x0), bracket=(lo, hi), value=value,
                           theta=theta, eps_list=tuple(cfg.eps_list),
                           seeds=tuple(cfg.seeds), certificates=certificates,
                           steps=steps).validate()


# ---------------------------------------------------------------------------
# corrector decay

def corrector_decay_profile(phi, x0, level, eps_list, seed,
                            spec: EnvironmentSpec, fam: KernelFamily, *,
                            h=None, tol=1e-7, method="auto",
                            r_out_factor=8.0, log: RowLog | None = None,
                            experiment_id="corrector"):
    """Sup norms of the frozen-operator Dirichlet correctors on the unit ball.

    At the effective level the sequence should decay as eps shrinks; off
    the effective level it stalls at a positive floor.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    eps_list = tuple(sorted(set(eps_list), reverse=True))
    env = sample_environment(spec, seed=seed)
    sups = []
    for eps in eps_list:
        he = (eps / 4.0) if h is None else h
        shifted = phi.shifted(x0) if np.any(x0 != 0.0) else phi
        handle = OperatorHandle(fam=fam, env=env, eps=eps,
                                frozen=(shifted, np.zeros(env.dim)))
        box = Box(center=(0.0,) * env.dim, half=1.0, h=he)
        prob = DirichletProblem(handle=handle, domain=box, rhs=level,
                                exterior=ExteriorRule.zero(), shape="ball")
        diam = 2.0 * box.half * (1 if fam.dim == 1 else math.sqrt(2))
        quad = build_quadrature(fam.dim, fam.sigma, he, r_out_factor * diam)
        t0 = time.perf_counter()
        w, d = solve_dirichlet(prob, tol=tol, quad=quad, method=method)
        wall = (time.perf_counter() - t0) * 1e3
        sup = float(np.max(np.abs(w.values)))
        sups.append(sup)
        if log is not None:
            log.add(experiment_id, eps=eps, seed=seed, l=level, sup_norm=sup,
                    iterations=d.iterations, residual=d.residual, wall_ms=wall)
    return sups


# ---------------------------------------------------------------------------
# measurable-ingredient comparison and ABP scaling

def _indicator_forcing(box: Box, measure: float):
    """Centered indicator with the requested support measure, snapped to cells.

    Returns (values at nodes, actual measure).  Support is a centered
    interval (1d) or square (2d) made of whole cells.
    """
    if box.dim == 1:
        k = max(1, int(round(measure / box.h)))
        m = box.m
        lo = (m - k) // 2
        g = np.zeros(m)
        g[lo:lo + k] = 1.0
        return g, k * box.h
    side_cells = max(1, int(round(math.sqrt(measure) / box.h)))
    m = box.m
    lo = (m - side_cells) // 2
    g = np.zeros((m, m))
    g[lo:lo + side_cells, lo:lo + side_cells] = 1.0
    return g, (side_cells * box.h) ** 2


def _extremal_forced_sup(fam, box, g, *, tol, method, quad, amplitude=1.0):
    handle = OperatorHandle(fam=fam, extremal_sign=+1)
    prob = DirichletProblem(handle=handle, domain=box, rhs=-amplitude * g,
                            exterior=ExteriorRule.zero(), shape="ball")
    t0 = time.perf_counter()
    v, d = solve_dirichlet(prob, tol=tol, quad=quad, method=method)
    wall = (time.perf_counter() - t0) * 1e3
    return float(np.max(v.values)), d, wall


def comparison_measurable_experiment(sizes, seed, fam: KernelFamily, *,
                                     h=2.0**-9, conjecture_cs=False, tol=1e-8,
                                     method="auto", r_out_factor=8.0,
                                     log: RowLog | None = None,
                                     experiment_id="cmi"):
    """Extremal response to shrinking-support unit forcing.

    Solves the upper extremal equation with forcing -g, g an indicator of
    prescribed measure, and records sup v per measure.  For the scalar
    multiplier class this probes an unproved comparison and is refused
    unless the conjecture flag is set.
    """
    if fam.kind == "cs" and not conjecture_cs:
        raise ConfigurationError(
            "measurable-ingredient comparison for the scalar class is "
            "conjecture-conditional; pass conjecture_cs=True to probe it"
        )
    box = Box(center=(0.0,) * fam.dim, half=1.0, h=h)
    diam = 2.0 * (1 if fam.dim == 1 else math.sqrt(2))
    quad = build_quadrature(fam.dim, fam.sigma, h, r_out_factor * diam)
    rows = []
    for m_req in sorted(sizes, reverse=True):
        g, m_act = _indicator_forcing(box, m_req)
        sup, d, wall = _extremal_forced_sup(fam, box, g, tol=tol,
                                            method=method, quad=quad)
        rows.append({"measure": m_act, "sup_v": sup,
                     "conjecture": fam.kind == "cs"})
        if log is not None:
            log.add(experiment_id, seed=seed, l=m_act, sup_norm=sup,
                    iterations=d.iterations, residual=d.residual, wall_ms=wall)
    ms = np.array([r["measure"] for r in rows])
    sv = np.array([max(r["sup_v"], 1e-300) for r in rows])
    slope = float(np.polyfit(np.log(ms), np.log(sv), 1)[0]) if len(rows) >= 2 else math.nan
    return {"rows": rows, "fitted_slope": slope, "sigma": fam.sigma,
            "class": fam.kind}


def abp_scaling_experiment(fam: KernelFamily, *, h=2.0**-9,
                           amplitudes=(1.0, 2.0, 4.0, 8.0),
                           supports=(2.0**-1, 2.0**-3, 2.0**-5, 2.0**-7, 2.0**-9),
                           base_support=2.0**-2, tol=1e-8, method="auto",
                           r_out_factor=8.0, log: RowLog | None = None,
                           experiment_id="abp"):
    """Two scaling probes of the extremal forced bound.

    (i) amplitude sweep at fixed support: sup v must grow at most
    linearly (the exact operator is positively homogeneous, so the
    measured ratio per doubling is 2 up to solver error);
    (ii) support sweep at unit amplitude: log sup v against log measure,
    fitted slope compared against sigma/2 minus a calibration margin.
    """
    if fam.kind != "a":
        raise ConfigurationError("the scaling bound is proved for the matrix class only")
    box = Box(center=(0.0,) * fam.dim, half=1.0, h=h)
    diam = 2.0 * (1 if fam.dim == 1 else math.sqrt(2))
    quad = build_quadrature(fam.dim, fam.sigma, h, r_out_factor * diam)
    g0, m0 = _indicator_forcing(box, base_support)
    amp_rows = []
    for c in amplitudes:
        sup, d, wall = _extremal_forced_sup(fam, box, g0, tol=tol,
                                            method=method, quad=quad,
                                            amplitude=c)
        amp_rows.append({"amplitude": c, "sup_v": sup})
        if log is not None:
            log.add(experiment_id + "-amp", l=c, sup_norm=sup,
                    iterations=d.iterations, residual=d.residual, wall_ms=wall)
    ratios = [amp_rows[i + 1]["sup_v"] / amp_rows[i]["sup_v"]
              for i in range(len(amp_rows) - 1)
              if amp_rows[i]["sup_v"] > 0]
    sup_rows = []
    for m_req in sorted(supports, reverse=True):
        g, m_act = _indicator_forcing(box, m_req)
        sup, d, wall = _extremal_forced_sup(fam, box, g, tol=tol,
                                            method=method, quad=quad)
        sup_rows.append({"measure": m_act, "sup_v": sup})
        if log is not None:
            log.add(experiment_id + "-supp", l=m_act, sup_norm=sup,
                    iterations=d.iterations, residual=d.residual, wall_ms=wall)
    ms = np.array([r["measure"] for r in sup_rows])
    sv = np.array([max(r["sup_v"], 1e-300) for r in sup_rows])
    slope = float(np.polyfit(np.log(ms), np.log(sv), 1)[0]) if len(sup_rows) >= 2 else math.nan
    return {
        "amplitude_rows": amp_rows,
        "amplitude_ratios": ratios,
        "support_rows": sup_rows,
        "support_slope": slope,
        "sigma": fam.sigma,
        "base_support": m0,
    }


# ---------------------------------------------------------------------------
# convergence harness

def _converge_item(args):
    (spec, sigma, seed, eps, h, box_args, far, tol, method, r_out_factor,
     shift) = args
    env = sample_environment(spec, seed=seed)
    box = Box(*box_args)
    fam = fam_of(spec, sigma)
    if shift is not None:
        # translated route: shifted environment, shifted domain and data
        env = translate(env, np.full(spec.dim, shift))
        box = Box(center=tuple(c - eps * shift for c in box.center),
                  half=box.half, h=box.h)
    handle = OperatorHandle(fam=fam, env=env, eps=eps)
    g = _exterior_from_tag(far, spec.dim, eps * shift if shift is not None else 0.0)
    prob = DirichletProblem(handle=handle, domain=box, rhs=0.0, exterior=g,
                            shape="cube")
    diam = 2.0 * box.half * (1 if spec.dim == 1 else math.sqrt(2))
    quad = build_quadrature(spec.dim, sigma, h, r_out_factor * diam)
    t0 = time.perf_counter()
    u, d = solve_dirichlet(prob, tol=tol, quad=quad, method=method)
    wall = (time.perf_counter() - t0) * 1e3
    return u.values, d.iterations, d.residual, wall


def _exterior_from_tag(tag, dim, offset=0.0):
    """Reproducible exterior data; must be picklable, hence tag-based.

    "cosine": smooth bounded profile; "zero": zero.  The offset shifts
    the argument for translated-route solves.
    """
    if tag == "zero":
        return ExteriorRule.zero()
    if tag == "cosine":
        def fn(pts, _off=offset):
            pts = np.asarray(pts, dtype=np.float64)
            s = np.sum(pts + _off, axis=1)
            return np.cos(2.0 * s) / (1.0 + 0.25 * np.abs(s))
        return ExteriorRule(fn=fn, far=0.0)
    raise ConfigurationError(f"unknown exterior data tag {tag!r}")


def convergence_experiment(exterior_tag, eps_list, seeds,
                           spec: EnvironmentSpec, fam: KernelFamily, *,
                           domain_half=0.5, h=None, tol=1e-7, method="auto",
                           r_out_factor=8.0, translation_shift=0.25,
                           workers=1, log: RowLog | None = None,
                           experiment_id="converge"):
    """Scaled Dirichlet solves across eps and seeds, with three diagnostics.

    (a) seed discrepancy per eps (sup over seed pairs), (b) Cauchy gaps
    between consecutive eps at shared grid nodes, (c) a translated-route
    replay whose values must land bit-identically after shifting back.
    All solves share one grid (h fixed by the smallest eps), so the
    comparisons need no interpolation.
    """
    eps_list = tuple(sorted(set(eps_list), reverse=True))
    if len(eps_list) < 2:
        raise ConfigurationError("convergence harness needs at least two eps values")
    he = (min(eps_list) / 4.0) if h is None else h
    box_args = ((0.0,) * spec.dim, domain_half, he)
    sigma = fam.sigma
    items = []
    for eps in eps_list:
        for seed in seeds:
            items.append((spec, sigma, seed, eps, he, box_args, exterior_tag,
                          tol, method, r_out_factor, None))
    # translated route for the largest eps, first seed
    shift = translation_shift
    if (shift * min(eps_list)) % he != 0.0:
        raise ConfigurationError(
            "translation shift times eps must be a whole number of cells"
        )
    items.append((spec, sigma, seeds[0], eps_list[0], he, box_args,
                  exterior_tag, tol, method, r_out_factor, shift))
    out = _run_items(items, _converge_item, workers)
    sols = {}
    for (it, (vals, its, res, wall)) in zip(items, out):
        eps, seed, shf = it[3], it[2], it[10]
        key = (eps, seed, shf is not None)
        sols[key] = vals
        if log is not None:
            log.add(experiment_id + ("-shift" if shf is not None else ""),
                    eps=eps, seed=seed,
                    sup_norm=float(np.max(np.abs(vals))),
                    iterations=its, residual=res, wall_ms=wall)
    seed_disc = {}
    for eps in eps_list:
        worst = 0.0
        for i in range(len(seeds)):
            for j in range(i + 1, len(seeds)):
                a = sols[(eps, seeds[i], False)]
                b = sols[(eps, seeds[j], False)]
                worst = max(worst, float(np.max(np.abs(a - b))))
        seed_disc[eps] = worst
    cauchy = {}
    for e1, e2 in zip(eps_list, eps_list[1:]):
        a = sols[(e1, seeds[0], False)]
        b = sols[(e2, seeds[0], False)]
        cauchy[(e1, e2)] = float(np.max(np.abs(a - b)))
    base = sols[(eps_list[0], seeds[0], False)]
    moved = sols[(eps_list[0], seeds[0], True)]
    translation_gap = float(np.max(np.abs(base - moved)))
    return {
        "seed_discrepancy": seed_disc,
        "cauchy_gaps": cauchy,
        "translation_gap": translation_gap,
        "eps_list": eps_list,
        "seeds": tuple(seeds),
        "h": he,
    }
