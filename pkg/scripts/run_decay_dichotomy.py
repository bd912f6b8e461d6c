"""Corrector decay on and off the effective level.

Extracts the effective level for one profile, then reports the corrector
sup norms along shrinking eps at that level and at offsets above and
below it.  On the level the sups should decay; off it they stall (below)
or the solution develops a negative part (above).
"""

import argparse

import numpy as np

from nlhomog.env import EnvironmentSpec, sample_environment
from nlhomog.homog import (
    ExtractionConfig,
    RowLog,
    corrector_decay_profile,
    effective_value,
    quadratic_bank,
)
from nlhomog.kernels import KernelFamily, build_quadrature
from nlhomog.operators import Box, ExteriorRule
from nlhomog.solve import DirichletProblem, OperatorHandle, solve_dirichlet


def signed_min(phi, level, eps, seed, spec, fam):
    env = sample_environment(spec, seed=seed)
    h = eps / 4.0
    handle = OperatorHandle(fam=fam, env=env, eps=eps,
                            frozen=(phi, np.zeros(1)))
    prob = DirichletProblem(handle=handle, domain=Box((0.0,), 1.0, h),
                            rhs=level, exterior=ExteriorRule.zero(),
                            shape="ball")
    quad = build_quadrature(1, fam.sigma, h, 16.0)
    w, _ = solve_dirichlet(prob, tol=1e-9, quad=quad)
    return float(np.min(w.values))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigma", type=float, default=1.5)
    ap.add_argument("--phi-index", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=2.0**-5)
    ap.add_argument("--offset-tols", type=float, default=10.0,
                    help="off-level offset, in units of the bisection tol")
    ap.add_argument("--eps", type=float, nargs="+",
                    default=[2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6])
    ap.add_argument("--period", type=int, default=8)
    ap.add_argument("--out", default=None, help="optional rows.csv path")
    args = ap.parse_args()

    spec = EnvironmentSpec(dim=1, coeff_law="uniform", forcing_law="fixed",
                           forcing_value=0.0, interpolation="constant",
                           layout="periodic", period=args.period)
    fam = KernelFamily(kind="cs", dim=1, sigma=args.sigma,
                       lam=spec.lam, lam_big=spec.lam_big)
    phi = quadratic_bank(1)[args.phi_index]
    log = RowLog()

    cfg = ExtractionConfig(eps_list=(min(args.eps),), seeds=(args.seed,),
                           tol=args.tol)
    es = effective_value(phi, np.zeros(1), cfg, spec, fam, log=log)
    print(f"effective level {es.value:.5f} "
          f"bracket [{es.bracket[0]:.5f}, {es.bracket[1]:.5f}]")

    off = args.offset_tols * args.tol
    for label, level in (("on level", es.value),
                         (f"level - {off:.4f}", es.value - off),
                         (f"level + {off:.4f}", es.value + off)):
        sups = corrector_decay_profile(phi, np.zeros(1), level, args.eps,
                                       args.seed, spec, fam, log=log,
                                       experiment_id=label)
        ratio = sups[-1] / sups[0] if sups[0] > 0 else float("nan")
        print(f"{label:>16}: sups {[f'{s:.5f}' for s in sups]} "
              f"last/first {ratio:.4f}")

    hi_min = signed_min(phi, es.value + off, min(args.eps), args.seed,
                        spec, fam)
    print(f"signed minimum at level + {off:.4f}, eps={min(args.eps)}: "
          f"{hi_min:.5f}")

    if args.out:
        log.write(args.out)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
