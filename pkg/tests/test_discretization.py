import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from dbarlab.errors import ConfigurationError, PreconditionError
from dbarlab.grid import FormField, GridSpec, WeightedMeasure, build_grid, truncation_mass, weighted_inner, weighted_norm
from dbarlab.operators import (
    WeightedOperator, assemble_box_laplacian, dbar_0, dbar_1, dbar_complex, dbar_operator, dbar_star_formula,
    discrete_adjoint, export_field_csv, export_matrix_market, q_form,
)
from dbarlab.spectral import hermitian_defect, symmetrize
from dbarlab.weights import coordinate_sum, radial


def random_field(q, grid, rng, support=None):
    comps = rng.normal(size=(grid.n_components(q), grid.P)) + 1j * rng.normal(size=(grid.n_components(q), grid.P))
    if support is not None:
        comps[:, grid.radius >= support] = 0
    return FormField.from_components(q, grid, comps)


def deep_interior(grid, layers=2):
    m = np.zeros(grid.shape, dtype=bool)
    m[(slice(layers, -layers),) * (2 * grid.n)] = True
    return m.ravel()


def gaussian_function(grid):
    return FormField.from_function(0, grid, lambda z: np.exp(-np.sum(np.abs(z) ** 2, axis=1))[None, :])


class TestGrid:
    def test_examples(self):
        g = build_grid(1, 4.0, 9)
        assert g.h == 1.0 and g.P == 81
        g = build_grid(2, 3.0, 13)
        assert g.h == 0.5 and g.P == 28561
        with pytest.raises(ConfigurationError):
            build_grid(1, 4.0, 8)
        with pytest.raises(ConfigurationError):
            build_grid(1, 4.0, 7)
        with pytest.raises(ConfigurationError):
            build_grid(3, 4.0, 9)
        with pytest.raises(ConfigurationError):
            build_grid(1, 0.0, 9)

    def test_centre_and_partition(self):
        g = build_grid(2, 1.0, 9)
        assert np.count_nonzero(g.radius == 0) == 1
        assert g.interior_mask.sum() == g.P_int == 7**4
        assert g.dofs(1) == 2 * 7**4 and g.dofs(0) == g.P and g.dofs(2) == g.P
        assert build_grid(1, 1.0, 9).dofs(2) == 0

    def test_field_shapes_and_boundary(self, rng):
        g = build_grid(2, 1.0, 9)
        u = random_field(1, g, rng)
        assert u.vanishes_on_boundary(1)
        assert not u.vanishes_on_boundary(2)
        assert np.array_equal(FormField.from_stacked(1, g, u.stacked()).components, u.components)
        with pytest.raises(PreconditionError):
            FormField(1, g, np.zeros((1, g.P)))
        with pytest.raises(PreconditionError):
            FormField.from_stacked(1, g, np.zeros(3))

    def test_half_density_round_trip(self, rng):
        g = build_grid(1, 3.0, 21)
        ms = WeightedMeasure.from_weight(radial(1, 1), g)
        u = random_field(1, g, rng)
        y = ms.to_half_density(u)
        assert np.linalg.norm(y) == pytest.approx(weighted_norm(u, ms))
        assert np.allclose(ms.from_half_density(1, y, rel_floor=0.0).components, u.components)


class TestDbar:
    def test_dbar0_linear_exactness(self):
        g = build_grid(1, 2.0, 21)
        zbar = FormField.from_function(0, g, lambda z: np.conj(z[:, 0])[None, :])
        out = dbar_0(zbar)
        assert np.allclose(out.components[0, g.interior_mask], 1, atol=1e-13)
        assert np.all(out.components[0, ~g.interior_mask] == 0)
        hol = FormField.from_function(0, g, lambda z: z[:, 0][None, :])
        assert np.allclose(dbar_0(hol).components, 0, atol=1e-13)

    def test_dbar0_gaussian_order_two(self):
        errs, hs = [], []
        for N in (41, 81, 161):
            g = build_grid(1, 4.0, N)
            f = gaussian_function(g)
            exact = -g.points[:, 0] * f.components[0]
            errs.append(np.max(np.abs(dbar_0(f).components[0] - exact)[g.interior_mask]))
            hs.append(g.h)
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        assert all(3 <= r <= 5 for r in ratios), ratios

    def test_dbar1_linear_exactness(self):
        g = build_grid(2, 1.0, 9)
        u = FormField.from_function(1, g, lambda z: np.stack([np.conj(z[:, 1]), 0 * z[:, 0]]))
        out = dbar_1(u)
        assert out.q == 2
        assert np.allclose(out.components[0, deep_interior(g)], -1, atol=1e-13)

    def test_dbar1_empty_for_n1(self, rng):
        g = build_grid(1, 1.0, 9)
        out = dbar_1(random_field(1, g, rng))
        assert out.components.shape == (0, g.P)

    def test_complex_property(self):
        for N in (9, 13):
            g = build_grid(2, 2.0, N)
            f = FormField.from_components(0, g, np.exp(-4 * g.radius**2) * (g.radius < 1.0))
            f = FormField.from_function(0, g, lambda z: (np.exp(-3 * np.sum(np.abs(z) ** 2, axis=1))
                                                        * (np.sum(np.abs(z) ** 2, axis=1) < 1))[None, :])
            ms = WeightedMeasure.from_weight(radial(2, 1), g)
            assert weighted_norm(dbar_1(dbar_0(f)), ms) <= 1e-12 * weighted_norm(f, ms)

    def test_degree_checks(self, rng):
        g = build_grid(1, 1.0, 9)
        with pytest.raises(PreconditionError):
            dbar_0(random_field(1, g, rng))
        with pytest.raises(ConfigurationError):
            dbar_operator(g, 2)


class TestInnerProduct:
    def test_examples(self, rng):
        g = build_grid(2, 1.0, 9)
        ms = WeightedMeasure.from_weight(radial(2, 2), g)
        z = FormField.zeros(1, g)
        assert weighted_inner(z, z, ms) == 0
        a, b = random_field(1, g, rng), random_field(1, g, rng)
        assert weighted_inner(a, b, ms) == pytest.approx(np.conj(weighted_inner(b, a, ms)), rel=1e-13)
        assert weighted_inner(a, a, ms).real > 0

    def test_uniform_measure_cell_sum(self, rng):
        g = build_grid(1, 2.0, 17)
        ms = WeightedMeasure.uniform(g)
        comps = np.zeros((1, g.P), dtype=complex)
        centre = np.flatnonzero(g.radius == 0)[0]
        comps[0, centre] = 2 - 1j
        f = FormField(0, g, comps)
        assert weighted_inner(f, f, ms).real == pytest.approx(g.h**2 * 5)

    def test_degree_mismatch(self, rng):
        g = build_grid(1, 1.0, 9)
        ms = WeightedMeasure.uniform(g)
        with pytest.raises(PreconditionError):
            weighted_inner(random_field(0, g, rng), random_field(1, g, rng), ms)


class TestAdjointFormula:
    def test_zero_and_linear(self):
        g = build_grid(1, 2.0, 21)
        assert np.all(dbar_star_formula(FormField.zeros(1, g), radial(1, 1)).components == 0)
        u = FormField.from_function(1, g, lambda z: z[:, 0][None, :])
        out = dbar_star_formula(u, None)
        assert np.allclose(out.components[0, deep_interior(g)], -1, atol=1e-13)

    def test_linear_n2(self):
        g = build_grid(2, 1.0, 9)
        u = FormField.from_function(1, g, lambda z: np.stack([z[:, 0], 0 * z[:, 0]]))
        out = dbar_star_formula(u, None)
        assert np.allclose(out.components[0, deep_interior(g)], -1, atol=1e-13)

    def test_matches_discrete_adjoint_at_order_two(self):
        spec = radial(1, 1)
        errs = []
        for N in (41, 81, 161):
            g = build_grid(1, 6.0, N)
            u = FormField.from_function(1, g, lambda z: np.exp(-np.abs(z[:, 0] - 0.3) ** 2)[None, :])
            c = dbar_complex(spec, g)
            errs.append(weighted_norm(dbar_star_formula(u, spec) - c.d0_star.apply(u), c.measure))
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        assert all(3 <= r <= 5 for r in ratios), ratios


class TestDiscreteAdjoint:
    def test_involution_and_zero(self):
        g = build_grid(1, 2.0, 11)
        ms0 = WeightedMeasure.from_weight(radial(1, 2), g)
        A = dbar_operator(g, 0)
        back = discrete_adjoint(discrete_adjoint(A, ms0), ms0)
        assert abs(back.matrix - A.matrix).max() <= 1e-12 * abs(A.matrix).max()
        Z = WeightedOperator(sp.csr_matrix(A.shape, dtype=complex), 0, 1, g, "zero")
        assert discrete_adjoint(Z, ms0).matrix.nnz == 0

    @pytest.mark.parametrize("spec_n,L,N", [(radial(1, 1), 3.0, 21), (radial(1, 2), 2.0, 21),
                                            (coordinate_sum(2, [2, 2]), 1.5, 9), (radial(2, 2), 1.5, 9)])
    def test_adjointness(self, spec_n, L, N, rng):
        g = build_grid(spec_n.n, L, N)
        c = dbar_complex(spec_n, g)
        pairs = [(c.d0, c.d0_star)] + ([(c.d1, c.d1_star)] if g.n == 2 else [])
        for A, As in pairs:
            for _ in range(10):
                f, v = random_field(A.source, g, rng), random_field(A.target, g, rng)
                lhs = weighted_inner(A.apply(f), v, c.measure)
                rhs = weighted_inner(f, As.apply(v), c.measure)
                scale = weighted_norm(f, c.measure) * weighted_norm(v, c.measure)
                assert abs(lhs - rhs) <= 1e-12 * scale * max(1.0, np.sqrt(abs(A.matrix).power(2).sum()))

    def test_overflow_guard(self):
        g = build_grid(1, 8.0, 9)
        with pytest.raises(ConfigurationError):
            dbar_complex(radial(1, 4), g)

    @given(st.integers(1, 3), st.floats(0.2, 2.0), st.integers(0, 2**31))
    def test_adjointness_property(self, m, a, seed):
        rng = np.random.default_rng(seed)
        g = build_grid(1, 2.0, 15)
        spec = radial(1, m, a)
        c = dbar_complex(spec, g)
        f, v = random_field(0, g, rng), random_field(1, g, rng)
        lhs = weighted_inner(c.d0.apply(f), v, c.measure)
        rhs = weighted_inner(f, c.d0_star.apply(v), c.measure)
        assert abs(lhs - rhs) <= 1e-12 * weighted_norm(f, c.measure) * weighted_norm(v, c.measure) * 1e2


class TestBoxLaplacian:
    @pytest.mark.parametrize("spec,L,N", [(radial(1, 1), 3.0, 21), (radial(2, 1), 1.5, 9)])
    def test_energy_identity_and_psd(self, spec, L, N, rng):
        g = build_grid(spec.n, L, N)
        box = assemble_box_laplacian(spec, g)
        c = dbar_complex(spec, g)
        for _ in range(50):
            u = random_field(1, g, rng)
            val = weighted_inner(box.apply(u), u, c.measure)
            energy = weighted_norm(c.d0_star.apply(u), c.measure) ** 2
            if g.n == 2:
                energy += weighted_norm(c.d1.apply(u), c.measure) ** 2
            assert val.real >= 0
            assert val.real == pytest.approx(energy, rel=1e-10)
            assert abs(val.imag) <= 1e-10 * energy
            assert q_form(u, u, spec).real == pytest.approx(val.real, rel=1e-10)

    def test_n1_structure(self):
        g = build_grid(1, 3.0, 21)
        c = dbar_complex(radial(1, 1), g)
        box = assemble_box_laplacian(radial(1, 1), g)
        assert abs(box.matrix - (c.d0.matrix @ c.d0_star.matrix)).max() == 0

    def test_symmetrized_is_hermitian(self):
        for spec, L, N in ((radial(1, 1), 6.0, 41), (radial(1, 2), 2.2, 41), (radial(2, 1), 1.5, 9)):
            g = build_grid(spec.n, L, N)
            S = symmetrize(assemble_box_laplacian(spec, g), WeightedMeasure.from_weight(spec, g))
            assert hermitian_defect(S) <= 1e-12 * max(1.0, abs(S).max())

    def test_q_form_examples(self, rng):
        g = build_grid(1, 6.0, 81)
        spec = radial(1, 1)
        assert q_form(FormField.zeros(1, g), FormField.zeros(1, g), spec) == 0
        ms = WeightedMeasure.from_weight(spec, g)
        for _ in range(5):
            u = random_field(1, g, rng, support=4.0)
            u = u * (1 / weighted_norm(u, ms))
            assert q_form(u, u, spec).real >= 1 - 5 * g.h**2


class TestExportAndTruncation:
    def test_matrix_market_round_trip(self, tmp_path):
        g = build_grid(1, 1.0, 9)
        op = assemble_box_laplacian(radial(1, 1), g)
        export_matrix_market(op, tmp_path / "box.mtx")
        back = scipy.io.mmread(str(tmp_path / "box.mtx"))
        assert abs(sp.csr_matrix(back) - op.matrix).max() <= 1e-14 * abs(op.matrix).max()

    def test_field_csv(self, tmp_path, rng):
        g = build_grid(1, 1.0, 9)
        u = random_field(1, g, rng)
        export_field_csv(u, tmp_path / "u.csv")
        rows = (tmp_path / "u.csv").read_text().splitlines()
        assert rows[0] == "index,re,im" and len(rows) == 1 + g.dofs(1)
        i, re, im = rows[5].split(",")
        assert complex(float(re), float(im)) == u.stacked()[int(i)]

    def test_truncation_mass(self):
        assert truncation_mass(radial(1, 1), build_grid(1, 6.0, 81)) < 1e-8
        # Gaussian mass outside the square [-1, 1]^2 is 1 - erf(1)^2
        from math import erf
        m = truncation_mass(radial(1, 1), build_grid(1, 1.0, 401), extend=6.0)
        assert m == pytest.approx(1 - erf(1) ** 2, rel=1e-2)
