"""Dirichlet and obstacle solver tests.

The exact couplings (level monotonicity, subadditivity) run two solves
with the same fixed sweep count; the damped update is monotone in every
coordinate because the diagonal dominates all branch slopes, so the
orderings hold without any floating-point slack.
"""

import numpy as np
import pytest

from nlhomog.env import EnvironmentSpec, sample_environment, translate
from nlhomog.errors import ConfigurationError, SolverError
from nlhomog.kernels import KernelFamily, build_quadrature
from nlhomog.operators import Box, ExteriorRule
from nlhomog.solve import (
    Bump,
    DirichletProblem,
    OperatorHandle,
    barrier_check,
    barrier_level,
    barrier_threshold,
    default_quadrature,
    residual_field,
    solve_dirichlet,
    solve_obstacle,
)

FAM = KernelFamily(kind="cs", dim=1, sigma=1.0, lam=1.0, lam_big=2.0)


def const_env(a=1.0, f=0.0):
    spec = EnvironmentSpec(dim=1, coeff_law="fixed", coeff_value=a,
                           forcing_law="fixed", forcing_value=f)
    return sample_environment(spec, seed=0)


def mixed_env(seed=3):
    spec = EnvironmentSpec(dim=1, n_alpha=2, n_beta=2, coeff_law="uniform",
                           forcing_law="uniform", f_bound=1.0)
    return sample_environment(spec, seed=seed)


def sqrt_problem(h):
    box = Box((0.0,), 1.0, h)
    return DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env()),
                            domain=box, rhs=-2.0 * np.pi,
                            exterior=ExteriorRule.zero(), shape="ball")


def mixed_problem(level, h=1.0 / 16, half=0.5, eps=0.25, seed=3):
    box = Box((0.0,), half, h)
    handle = OperatorHandle(fam=FAM, env=mixed_env(seed), eps=eps)
    return DirichletProblem(handle=handle, domain=box, rhs=level,
                            exterior=ExteriorRule.zero(), shape="cube")


QUAD16 = build_quadrature(1, 1.0, 1.0 / 16, 8.0)


# ---------------------------------------------------------------------------
# Dirichlet accuracy

def test_sqrt_profile_oracle():
    # sigma=1, unit coefficient: the operator applied to sqrt(1-x^2) on
    # the unit ball is the constant -2*pi, so that profile is the exact
    # solution of the level problem with zero exterior data
    h = 2.0**-6
    prob = sqrt_problem(h)
    quad = build_quadrature(1, 1.0, h, 16.0)
    u, diag = solve_dirichlet(prob, tol=1e-8, quad=quad)
    x = prob.domain.axis_nodes(0)
    exact = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    err = np.abs(u.values - exact)
    assert diag.converged
    # boundary cells carry the sqrt singularity, interior is much tighter
    assert np.max(err[np.abs(x) < 1.0]) <= 0.025
    assert np.max(err[np.abs(x) < 0.5]) <= 3e-3


def test_sqrt_profile_error_shrinks_under_refinement():
    sups = []
    for k in (6, 7):
        h = 2.0**-k
        prob = sqrt_problem(h)
        quad = build_quadrature(1, 1.0, h, 16.0)
        u, _ = solve_dirichlet(prob, tol=1e-8, quad=quad)
        x = prob.domain.axis_nodes(0)
        exact = np.sqrt(np.maximum(1.0 - x * x, 0.0))
        sups.append(float(np.max(np.abs(u.values - exact)[np.abs(x) < 1.0])))
    assert sups[1] < sups[0]


def test_zero_data_gives_zero_solution_exactly():
    prob = mixed_problem(0.0)
    # zero forcing variant: every branch value of F(0) is exactly zero
    spec = EnvironmentSpec(dim=1, n_alpha=2, n_beta=2, coeff_law="uniform",
                           forcing_law="fixed", forcing_value=0.0)
    handle = OperatorHandle(fam=FAM, env=sample_environment(spec, seed=1), eps=0.25)
    prob = DirichletProblem(handle=handle, domain=prob.domain, rhs=0.0,
                            exterior=ExteriorRule.zero(), shape="cube")
    u, diag = solve_dirichlet(prob, tol=1e-12, quad=QUAD16)
    assert np.array_equal(u.values, np.zeros(prob.domain.m))
    assert diag.converged


def test_forcing_shift_equals_level_shift():
    # F with constant forcing f is F without forcing plus f, so solving
    # at level l matches solving the forcing-free problem at l - f
    box = Box((0.0,), 0.5, 1.0 / 16)
    p1 = DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env(f=0.75)),
                          domain=box, rhs=1.0, exterior=ExteriorRule.zero())
    p2 = DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env(f=0.0)),
                          domain=box, rhs=0.25, exterior=ExteriorRule.zero())
    u1, _ = solve_dirichlet(p1, tol=1e-11, quad=QUAD16)
    u2, _ = solve_dirichlet(p2, tol=1e-11, quad=QUAD16)
    assert np.max(np.abs(u1.values - u2.values)) <= 1e-9


def test_newton_matches_sweeps():
    h = 2.0**-6
    prob = sqrt_problem(h)
    quad = build_quadrature(1, 1.0, h, 16.0)
    u1, d1 = solve_dirichlet(prob, tol=1e-10, quad=quad, method="newton")
    u2, d2 = solve_dirichlet(prob, tol=1e-10, quad=quad, method="sweeps")
    assert d1.method == "newton" and d2.method == "sweeps"
    assert np.max(np.abs(u1.values - u2.values)) <= 1e-9


def test_dirichlet_2d_smoke():
    spec = EnvironmentSpec(dim=2, kernel_class="a", coeff_law="uniform",
                           forcing_law="uniform", f_bound=1.0)
    env = sample_environment(spec, seed=0)
    h = 1.0 / 8
    box = Box((0.0, 0.0), 0.5, h)
    prob = DirichletProblem(handle=OperatorHandle(fam=KernelFamily(
        kind="a", dim=2, sigma=1.0, lam=1.0, lam_big=2.0), env=env, eps=0.5),
        domain=box, rhs=0.25, exterior=ExteriorRule.zero(), shape="cube")
    quad = build_quadrature(2, 1.0, h, 8.0)
    u, diag = solve_dirichlet(prob, tol=1e-6, quad=quad)
    assert diag.converged and diag.residual <= 1e-6
    r = residual_field(prob, u, quad=quad)
    assert np.max(np.abs(r.values)) <= 1e-6


# ---------------------------------------------------------------------------
# obstacle problem

def test_obstacle_nonnegative_and_vi_residual():
    prob = mixed_problem(0.05)
    tol = 1e-9
    sol = solve_obstacle(prob, tol=tol, quad=QUAD16)
    u = sol.u.values
    assert np.all(u >= 0.0)
    # complementarity: max(F - l, -U) vanishes cell by cell
    r = residual_field(prob, sol.u, quad=QUAD16).values
    assert np.max(np.abs(np.maximum(r, -u))) <= tol
    # supersolution side holds everywhere, not just off contact
    assert np.max(r) <= tol
    assert np.array_equal(sol.contact, u == 0.0)
    assert sol.fraction == pytest.approx(np.mean(u == 0.0))


def test_obstacle_below_barrier_threshold_touches_nothing():
    prob = mixed_problem(0.0)
    thr = barrier_threshold(prob, +1, quad=QUAD16)
    low = mixed_problem(thr - 1.0)
    sol = solve_obstacle(low, tol=1e-9, quad=QUAD16)
    assert sol.fraction == 0.0
    bump = Bump(center=np.zeros(1), r=0.5)
    pvals = bump(low.domain.nodes())
    # the positive bump is a subsolution at this level, so the least
    # supersolution dominates it
    assert np.min(sol.u.values - pvals) >= -1e-9


def test_obstacle_above_zero_level_is_identically_zero():
    prob = mixed_problem(0.0)
    from nlhomog.solve import _lattice
    lat = _lattice(prob, QUAD16)
    f0, _ = lat.operator_values(np.zeros(lat.m))
    high = mixed_problem(float(np.max(f0)) + 1.0)
    sol = solve_obstacle(high, tol=1e-9, quad=QUAD16)
    assert np.array_equal(sol.u.values, np.zeros(high.domain.m))
    assert sol.fraction == 1.0


def test_obstacle_dominates_dirichlet_solution():
    prob = mixed_problem(0.05)
    sol = solve_obstacle(prob, tol=1e-9, quad=QUAD16)
    u, _ = solve_dirichlet(prob, tol=1e-9, quad=QUAD16)
    assert np.min(sol.u.values - u.values) >= -1e-8


def test_obstacle_level_monotone_exact_coupling():
    lo = mixed_problem(0.05)
    hi = mixed_problem(0.35)
    s1 = solve_obstacle(lo, quad=QUAD16, fixed_sweeps=240, method="sweeps")
    s2 = solve_obstacle(hi, quad=QUAD16, fixed_sweeps=240, method="sweeps")
    assert np.all(s1.u.values >= s2.u.values)


def test_obstacle_domain_monotone():
    h = 1.0 / 16
    small = mixed_problem(0.05, h=h, half=0.5)
    big = mixed_problem(0.05, h=h, half=1.0)
    qbig = build_quadrature(1, 1.0, h, 16.0)
    ss = solve_obstacle(small, tol=1e-9, quad=QUAD16)
    sb = solve_obstacle(big, tol=1e-9, quad=qbig)
    # node i of the small box is node i + 8 of the big one
    inner = sb.u.values[8:-8]
    assert np.min(inner - ss.u.values) >= -1e-7


def test_extremal_forced_subadditive_coupling():
    h = 2.0**-6
    box = Box((0.0,), 1.0, h)
    quad = build_quadrature(1, 1.0, h, 16.0)
    x = box.axis_nodes(0)
    g1 = np.where(np.abs(x) < 0.25, 1.0, 0.0)
    g2 = np.where(np.abs(x - 0.3) < 0.2, 0.7, 0.0)
    handle = OperatorHandle(fam=FAM, extremal_sign=+1)

    def forced(g):
        p = DirichletProblem(handle=handle, domain=box, rhs=-g,
                             exterior=ExteriorRule.zero(), shape="ball")
        u, _ = solve_dirichlet(p, quad=quad, fixed_sweeps=200, method="sweeps")
        return u.values

    v1, v2, v12 = forced(g1), forced(g2), forced(g1 + g2)
    assert np.max(v12 - v1 - v2) <= 1e-12


def test_obstacle_translation_covariance_bit_exact():
    eps, h, s = 0.25, 1.0 / 16, 0.25
    env = mixed_env(seed=5)
    box = Box((0.0,), 0.5, h)
    p1 = DirichletProblem(handle=OperatorHandle(fam=FAM, env=env, eps=eps),
                          domain=box, rhs=0.05, exterior=ExteriorRule.zero())
    moved = translate(env, np.array([s]))
    box2 = Box((-eps * s,), 0.5, h)
    p2 = DirichletProblem(handle=OperatorHandle(fam=FAM, env=moved, eps=eps),
                          domain=box2, rhs=0.05, exterior=ExteriorRule.zero())
    s1 = solve_obstacle(p1, tol=1e-9, quad=QUAD16)
    s2 = solve_obstacle(p2, tol=1e-9, quad=QUAD16)
    assert np.array_equal(s1.u.values, s2.u.values)
    assert np.array_equal(s1.contact, s2.contact)


def test_residual_field_reports_zero_outside_ball():
    h = 2.0**-5
    prob = sqrt_problem(h)
    quad = build_quadrature(1, 1.0, h, 16.0)
    u, _ = solve_dirichlet(prob, tol=1e-8, quad=quad)
    r = residual_field(prob, u, quad=quad)
    x = prob.domain.axis_nodes(0)
    outside = np.abs(x) >= 1.0
    assert np.array_equal(r.values[outside], np.zeros(np.sum(outside)))
    assert np.max(np.abs(r.values[~outside])) <= 1e-8


# ---------------------------------------------------------------------------
# bump barriers

def test_barrier_check_certifies_extreme_levels():
    prob = mixed_problem(0.0)
    assert barrier_check(prob, -1e6, side=+1, quad=QUAD16)
    thr = barrier_threshold(prob, +1, quad=QUAD16)
    assert not barrier_check(prob, thr + 0.1, side=+1, quad=QUAD16)
    assert barrier_check(prob, 1e6, side=-1, quad=QUAD16)
    thr2 = barrier_threshold(prob, -1, quad=QUAD16)
    assert not barrier_check(prob, thr2 - 0.1, side=-1, quad=QUAD16)


def test_barrier_level_bisects_the_certified_amplitude():
    # with zero forcing the operator is positively homogeneous, so the
    # threshold scales linearly in the amplitude and the largest
    # certified amplitude at level 2*thr(1) is exactly 2
    box = Box((0.0,), 0.5, 1.0 / 16)
    prob = DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env()),
                            domain=box, rhs=0.0, exterior=ExteriorRule.zero())
    thr1 = barrier_threshold(prob, +1, quad=QUAD16, amp=1.0)
    assert thr1 < 0.0
    amp = barrier_level(prob, 2.0 * thr1, side=+1, quad=QUAD16)
    assert amp == pytest.approx(2.0, abs=1e-6)
    assert barrier_check(prob, 2.0 * thr1, side=+1, quad=QUAD16, amp=amp)
    # an uncertifiable level returns amplitude zero
    assert barrier_level(prob, 1.0, side=+1, quad=QUAD16) == 0.0


# ---------------------------------------------------------------------------
# failure modes and validation

def test_solver_error_carries_diagnostics():
    prob = mixed_problem(0.05)
    with pytest.raises(SolverError) as exc:
        solve_dirichlet(prob, tol=1e-15, max_iter=8, quad=QUAD16,
                        method="sweeps")
    assert exc.value.iterations == 8
    assert exc.value.residual > 1e-15


def test_fixed_sweeps_never_raises():
    prob = mixed_problem(0.05)
    u, diag = solve_dirichlet(prob, tol=1e-15, quad=QUAD16,
                              fixed_sweeps=5, method="sweeps")
    assert not diag.converged
    assert u.values.shape == (prob.domain.m,)


def test_newton_is_one_dimensional_only():
    spec = EnvironmentSpec(dim=2, coeff_law="fixed", coeff_value=1.0,
                           forcing_law="fixed", forcing_value=0.0)
    env = sample_environment(spec, seed=0)
    box = Box((0.0, 0.0), 0.5, 1.0 / 8)
    prob = DirichletProblem(handle=OperatorHandle(fam=KernelFamily(
        kind="a", dim=2, sigma=1.0, lam=1.0, lam_big=2.0), env=env, eps=0.5),
        domain=box, rhs=0.0, exterior=ExteriorRule.zero())
    with pytest.raises(ConfigurationError):
        solve_dirichlet(prob, method="newton",
                        quad=build_quadrature(2, 1.0, 1.0 / 8, 4.0))


@pytest.mark.parametrize("build", [
    lambda: OperatorHandle(fam=FAM, env=None).validate(),
    lambda: OperatorHandle(fam=FAM, env=const_env(), extremal_sign=2).validate(),
    lambda: OperatorHandle(fam=FAM, env=const_env(), eps=0.0).validate(),
    lambda: DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env()),
                             domain=Box((0.0,), 0.5, 1.0 / 16), rhs=0.0,
                             exterior=ExteriorRule.zero(),
                             shape="triangle").validate(),
    lambda: DirichletProblem(handle=OperatorHandle(fam=FAM, env=mixed_env(),
                                                   eps=1.0 / 16),
                             domain=Box((0.0,), 0.5, 1.0 / 16), rhs=0.0,
                             exterior=ExteriorRule.zero()).validate(),
])
def test_configuration_rejections(build):
    with pytest.raises(ConfigurationError):
        build()


def test_rhs_grid_must_match_domain():
    prob = DirichletProblem(handle=OperatorHandle(fam=FAM, env=const_env()),
                            domain=Box((0.0,), 0.5, 1.0 / 16),
                            rhs=np.zeros(7), exterior=ExteriorRule.zero())
    with pytest.raises(ConfigurationError):
        solve_dirichlet(prob, quad=QUAD16)


def test_quadrature_grid_mismatch_rejected():
    prob = mixed_problem(0.0)
    with pytest.raises(ConfigurationError):
        solve_dirichlet(prob, quad=build_quadrature(1, 1.0, 1.0 / 32, 8.0))


# ---------------------------------------------------------------------------
# helpers

def test_bump_profile_shape():
    b = Bump(center=np.zeros(1), r=0.5)
    pts = np.array([[0.0], [0.25], [0.5], [0.7]])
    v = b(pts)
    assert v[0] == 1.0
    assert v[1] == pytest.approx((1.0 - 0.25) ** 2)
    assert v[2] == 0.0 and v[3] == 0.0
    neg = Bump(center=np.zeros(1), r=0.5, sign=-1.0, amp=3.0)
    assert np.array_equal(neg(pts), -3.0 * v)


def test_default_quadrature_radius():
    box = Box((0.0,), 0.5, 1.0 / 16)
    q = default_quadrature(FAM, box, r_out_factor=8.0)
    # radius covers eight box diameters
    assert q.w.shape[0] * box.h >= 8.0 * 1.0 - box.h
