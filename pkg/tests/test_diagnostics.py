import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dbarlab.diagnostics import (
    ProbeConfig, TestFormGenerator, eigenform_tail_bound, inf_mu_outside, kohn_morrey_residual,
    kohn_morrey_sides, komo_inequality_margin, refinement_ratio, smooth_bump, tail_bound_check, tail_mass,
    translation_defect,
)
from dbarlab.errors import ConfigurationError, PreconditionError
from dbarlab.grid import FormField, WeightedMeasure, build_grid, weighted_norm
from dbarlab.operators import assemble_box_laplacian, q_form
from dbarlab.spectral import SolverConfig, smallest_eigenpairs
from dbarlab.weights import coordinate_sum, radial


class TestGenerator:
    @pytest.mark.parametrize("kind", ["random_smooth", "gaussian_bump", "polynomial_bump"])
    @pytest.mark.parametrize("n,L,N", [(1, 4.0, 41), (2, 2.0, 13)])
    def test_support_in_inner_half(self, kind, n, L, N):
        g = build_grid(n, L, N)
        gen = TestFormGenerator(seed=3, kind=kind)
        for u in gen.batch(g, 3):
            assert np.all(u.components[:, g.radius >= 0.5 * L] == 0)
            outer = np.max(np.abs(g.points.view(float).reshape(g.P, -1)), axis=1) >= 0.75 * L
            assert np.all(u.components[:, outer] == 0)
            assert np.any(u.components != 0)

    def test_seeded_and_grid_independent(self):
        a, b = TestFormGenerator(seed=5), TestFormGenerator(seed=5)
        g1, g2 = build_grid(1, 4.0, 41), build_grid(1, 4.0, 81)
        assert np.array_equal(a.form(g1, 2).components, b.form(g1, 2).components)
        # grid points shared by both grids carry the same values
        assert np.array_equal(a.form(g1, 2).components.reshape(41, 41), a.form(g2, 2).components.reshape(81, 81)[::2, ::2])
        assert not np.array_equal(a.form(g1, 1).components, a.form(g1, 2).components)

    def test_bad_kind(self):
        with pytest.raises(ConfigurationError):
            TestFormGenerator(kind="wavelet")

    def test_bump(self):
        r = np.array([0.0, 0.5, 1.0, 2.0])
        assert np.allclose(smooth_bump(r, 1.0), [1.0, np.exp(1 - 1 / 0.75), 0.0, 0.0])


class TestKohnMorrey:
    def test_zero_form(self):
        g = build_grid(1, 2.0, 21)
        assert kohn_morrey_residual(FormField.zeros(1, g), radial(1, 1)) == 0

    @pytest.mark.parametrize("n,L,N", [(1, 4.0, 41), (2, 2.0, 13)])
    def test_flat_weight_exact(self, n, L, N):
        # central differences commute, so with phi = 0 both sides agree to rounding
        g = build_grid(n, L, N)
        for u in TestFormGenerator(seed=2).batch(g, 5):
            s = kohn_morrey_sides(u, None)
            assert s["levi"] == 0
            assert abs(s["lhs"] - s["gradient"]) <= 1e-12 * s["lhs"]

    @pytest.mark.parametrize("spec", [radial(1, 1), radial(1, 2), radial(1, 3)])
    def test_second_order_n1(self, spec):
        gen = TestFormGenerator(seed=11)
        Ns = (81, 161)
        res = {N: [] for N in Ns}
        for N in Ns:
            g = build_grid(1, 4.0, N)
            res[N] = [kohn_morrey_residual(u, spec) for u in gen.batch(g, 5)]
        hs = [8.0 / (N - 1) for N in Ns]
        for i in range(5):
            r = refinement_ratio([res[N][i] for N in Ns], hs)[0]
            assert 3 <= r <= 5, r

    def test_boundary_touching_rejected(self):
        g = build_grid(1, 1.0, 9)
        comps = np.zeros((1, g.P), dtype=complex)
        comps[0, g.interior_index[0]] = 1
        with pytest.raises(PreconditionError):
            kohn_morrey_residual(FormField(1, g, comps), radial(1, 1))

    def test_inequality_margin_n2(self):
        spec = radial(2, 2)
        g = build_grid(2, 2.0, 13)
        ms = WeightedMeasure.from_weight(spec, g)
        for u in TestFormGenerator(seed=4).batch(g, 5):
            m = komo_inequality_margin(u, spec)
            assert m / weighted_norm(u, ms) ** 2 >= -5 * g.h**2

    def test_refinement_ratio_convention(self):
        assert refinement_ratio([4.0, 1.0, 0.25], [0.2, 0.1, 0.05]) == pytest.approx([4.0, 4.0])
        assert refinement_ratio([1.0, 0.5], [0.2, 0.1]) == pytest.approx([2.0])


class TestTail:
    def test_support_gives_zero(self):
        g = build_grid(1, 4.0, 41)
        u = TestFormGenerator(seed=0).form(g)
        assert tail_mass(u, 2.5, radial(1, 1)) == 0

    def test_shell_oracle(self):
        spec = radial(1, 1)
        g = build_grid(1, 4.0, 81)
        shell = (g.radius > 1.0) & (g.radius < 2.0)
        comps = np.where(shell, 1.0 + 0j, 0)[None, :]
        u = FormField(1, g, comps)
        w = np.exp(-g.radius**2)
        R = 1.5
        expected = np.sum(w[shell & (g.radius > R)]) / np.sum(w[shell])
        assert tail_mass(u, R, spec) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_radius(self):
        g = build_grid(1, 4.0, 81)
        u = FormField.from_function(1, g, lambda z: np.exp(-np.abs(z[:, 0]) ** 2)[None, :])
        t = [tail_mass(u, R, radial(1, 1)) for R in (0.5, 1.0, 2.0, 3.0)]
        assert all(a >= b for a, b in zip(t, t[1:])) and 0 <= t[-1] <= t[0] <= 1

    def test_radius_range(self):
        g = build_grid(1, 4.0, 41)
        with pytest.raises(ConfigurationError):
            tail_mass(FormField.zeros(1, g), 4.0, radial(1, 1))

    def test_z4_bound_value(self):
        spec = radial(1, 2)
        g = build_grid(1, 4.0, 81)
        u = TestFormGenerator(seed=1).form(g)
        R = 1.0
        tb = tail_bound_check(u, R, spec)
        rmin = g.radius[g.interior_index][g.radius[g.interior_index] >= R].min()
        assert tb.inf_mu == pytest.approx(4 * rmin**2, rel=1e-12)
        assert tb.bound == pytest.approx(q_form(u, u, spec).real / (4 * rmin**2), rel=1e-12)
        assert tb.margin >= -5 * g.h**2

    def test_z2_bound_independent_of_radius(self):
        spec = radial(1, 1)
        g = build_grid(1, 4.0, 81)
        u = TestFormGenerator(seed=1).form(g)
        tbs = [tail_bound_check(u, R, spec) for R in (0.5, 1.0, 1.5)]
        assert len({tb.bound for tb in tbs}) == 1
        assert all(tb.margin >= 0 for tb in tbs)

    def test_vacuous_when_mu_vanishes(self):
        spec = coordinate_sum(2, [2, 2])
        g = build_grid(2, 2.0, 13)
        assert inf_mu_outside(spec, g, 1.0) == 0
        u = TestFormGenerator(seed=1).form(g)
        assert tail_bound_check(u, 1.0, spec).vacuous

    def test_eigenforms_z4(self):
        spec = radial(1, 2)
        g = build_grid(1, 4.0, 81)
        op = assemble_box_laplacian(spec, g)
        ms = WeightedMeasure.from_weight(spec, g)
        for p in smallest_eigenpairs(op, ms, SolverConfig(k=4)):
            u = p.form(ms) * (1 / np.sqrt(p.lam))
            for R in (1.0, 1.5, 2.0):
                direct = tail_bound_check(u, R, spec)
                via_pair = eigenform_tail_bound(p, R, spec, g)
                assert direct.q_value == pytest.approx(1, rel=1e-7)
                assert via_pair.tail == pytest.approx(direct.tail, rel=1e-7)
                assert via_pair.margin >= -1e-3


class TestTranslation:
    def setup_method(self):
        self.g = build_grid(1, 4.0, 161)
        self.u = TestFormGenerator(seed=1, kind="gaussian_bump").form(self.g)

    def test_zero_shift(self):
        assert translation_defect(self.u, 0, 1.5, radial(1, 1)) == 0

    def test_constant_coefficients(self):
        g = self.g
        u = FormField(1, g, np.ones((1, g.P), dtype=complex))
        assert translation_defect(u, 3 * g.h + 2j * g.h, 1.5, radial(1, 1)) == 0

    @pytest.mark.parametrize("direction", [1, 1j])
    def test_linear_in_shift(self, direction):
        g = self.g
        d = [translation_defect(self.u, direction * s * g.h, 1.5, radial(1, 1)) for s in (1, 2, 4)]
        slope = np.polyfit(np.log([1, 2, 4]), np.log(d), 1)[0]
        assert slope == pytest.approx(1, abs=0.02)

    def test_gradient_bound(self):
        g = self.g
        R = 1.5
        c = self.u.components[0].reshape(g.shape)
        ux = np.gradient(c, g.h, axis=0)
        sup = np.max(np.abs(ux))
        ball_mass = np.sqrt(np.sum(np.exp(-g.radius**2)[g.radius < R]) * g.h**2)
        for s in (1, 2, 4):
            assert translation_defect(self.u, s * g.h, R, radial(1, 1)) <= 1.05 * s * g.h * sup * ball_mass

    def test_errors(self):
        g = self.g
        with pytest.raises(ConfigurationError):
            translation_defect(self.u, 0.5 * g.h, 1.5, radial(1, 1))
        with pytest.raises(ConfigurationError):
            translation_defect(self.u, 2.5, 1.5, radial(1, 1))
        with pytest.raises(ConfigurationError):
            translation_defect(self.u, [g.h, g.h], 1.5, radial(1, 1))

    @given(st.integers(-5, 5), st.integers(-5, 5))
    def test_reflection_symmetry(self, a, b):
        # |tau_s u - u| over a centred ball is unchanged by s -> -s for the even weight and u(-z)
        g = self.g
        s = (a + 1j * b) * g.h
        flipped = FormField(1, g, self.u.components[:, ::-1].copy())
        # 1.53 is not a grid distance, so the ball is exactly symmetric
        d1 = translation_defect(self.u, s, 1.53, radial(1, 1))
        d2 = translation_defect(flipped, -s, 1.53, radial(1, 1))
        assert d1 == pytest.approx(d2, rel=1e-12, abs=1e-15)


def test_probe_config_validation():
    with pytest.raises(ConfigurationError):
        ProbeConfig(tail_fractions=(0.5, 1.0))
    with pytest.raises(ConfigurationError):
        ProbeConfig(decay_factor=1.5)
