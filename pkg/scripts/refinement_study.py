"""Observed convergence orders of the discrete operators on n = 1 grids.

Prints, per weight, the error of the pointwise adjoint formula against the
exact discrete adjoint and the worst energy-identity residual over seeded
test forms, with the error ratio per halving of h.

    python scripts/refinement_study.py [--forms 20]
"""

import argparse

import numpy as np

from dbarlab.catalog import catalog_weight
from dbarlab.diagnostics import TestFormGenerator, kohn_morrey_residual, refinement_ratio
from dbarlab.grid import FormField, WeightedMeasure, build_grid, weighted_norm
from dbarlab.operators import dbar_complex, dbar_star_formula


def gaussian_form(grid):
    return FormField.from_function(1, grid, lambda z: np.exp(-np.abs(z[:, 0] - 0.3) ** 2)[None, :])


def adjoint_errors(spec, L, Ns):
    out = []
    for N in Ns:
        g = build_grid(1, L, N)
        u = gaussian_form(g)
        c = dbar_complex(spec, g)
        diff = dbar_star_formula(u, spec, g) - c.d0_star.apply(u)
        out.append(weighted_norm(diff, WeightedMeasure.from_weight(spec, g)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--forms", type=int, default=20)
    args = ap.parse_args()
    Ns = [41, 81, 161]
    for key in ("z2_n1", "z4_n1"):
        spec = catalog_weight(key)
        errs = adjoint_errors(spec, 6.0 if key == "z2_n1" else 3.0, Ns)
        print(f"{key} adjoint formula error {['%.3e' % e for e in errs]}  ratios {np.round(refinement_ratio(errs, [1 / (N - 1) for N in Ns]), 3)}")
        gen = TestFormGenerator(seed=0)
        ratios = []
        for i in range(args.forms):
            res = [kohn_morrey_residual(gen.form(build_grid(1, 4.0, N), i), spec) for N in (81, 161)]
            ratios.append(refinement_ratio(res, [1 / 80, 1 / 160])[0])
        print(f"{key} energy identity ratio over {args.forms} forms: min {min(ratios):.3f} max {max(ratios):.3f}")


if __name__ == "__main__":
    main()
