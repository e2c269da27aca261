import numpy as np
import pytest
from scipy.optimize import brentq

from shrinkage_lab import DomainError, PopulationSpectrum, boundary_values
from shrinkage_lab.functionals import (
    M_functional,
    T_bilinear,
    T_functional,
    frobenius_covariance_loss,
    kernel_K,
    lp_covariance_shrinker,
    lp_precision_shrinker,
    two_resolvent_limit,
)
from shrinkage_lab.shrinkage import ShrinkageFunction
from shrinkage_lab.spectrum import _z_of_m, _z_prime

from conftest import two_atom_trace_draw


def grid_fn(spec, fn, at0):
    return ShrinkageFunction.from_callable(fn, spec.grid, value_at_zero=at0)


def exact_resolvent_values(h_pop, gamma, z=-1.0):
    """Independent oracle: for h(x) = 1/(x - z) with real z < 0, both M and T
    follow from the companion transform at z via the inverse map."""
    t, w = h_pop.locations, h_pop.weights
    zf = lambda m: float(_z_of_m(np.array([m]), t, w, gamma)[0]) - z
    mb = brentq(zf, 1e-12, 1e8, xtol=1e-15)
    mbp = 1.0 / float(_z_prime(np.array([mb]), t, w, gamma)[0])
    m_exact = -(1.0 + z * mb) / (gamma * z * mb)
    t_exact = -1.0 / (gamma * z * z * mb * mb) + mbp / (gamma * z * z * mb**4)
    return m_exact, t_exact


class TestMFunctional:
    def test_constant_gives_first_population_moment(self, spec_two_third,
                                                    spec_two_gamma2):
        for spec in (spec_two_third, spec_two_gamma2):
            val = M_functional(spec, ShrinkageFunction.constant(1.0))
            assert abs(val.value - 2.5) < 1e-4
            assert not val.flagged

    def test_identity_covariance_reduces_to_mp_moment(self, spec_unit_half):
        h = grid_fn(spec_unit_half, lambda x: x, 0.0)
        assert abs(M_functional(spec_unit_half, h).value - 1.0) < 1e-4

    @pytest.mark.parametrize("gamma_key", ["third", "two"])
    def test_exact_resolvent_cross_check(self, request, h_two, gamma_key):
        spec = request.getfixturevalue(f"spec_two_{gamma_key}")
        m_exact, _ = exact_resolvent_values(h_two, spec.gamma)
        h = grid_fn(spec, lambda x: 1.0 / (x + 1.0), 1.0)
        assert abs(M_functional(spec, h).value - m_exact) < 1e-9

    def test_linearity(self, spec_two_third):
        spec = spec_two_third
        h1 = grid_fn(spec, lambda x: 1.0 / (x + 1.0), 1.0)
        h2 = grid_fn(spec, lambda x: np.exp(-x), 1.0)
        combo = ShrinkageFunction.from_grid(
            spec.grid, 2.0 * h1.grid_values - 3.0 * h2.grid_values,
            2.0 * h1.at_zero - 3.0 * h2.at_zero,
        )
        lhs = M_functional(spec, combo, diagnostics=False).value
        rhs = (2.0 * M_functional(spec, h1, diagnostics=False).value
               - 3.0 * M_functional(spec, h2, diagnostics=False).value)
        assert abs(lhs - rhs) < 1e-10

    def test_monte_carlo_trace(self, spec_two_third):
        vals = []
        for seed in range(8):
            lam, bdiag, _ = two_atom_trace_draw(1.0 / 3.0, 1000, 300 + seed)
            vals.append(float((1.0 / (lam + 1.0)) @ bdiag) / 1000)
        vals = np.array(vals)
        h = grid_fn(spec_two_third, lambda x: 1.0 / (x + 1.0), 1.0)
        theory = M_functional(spec_two_third, h, diagnostics=False).value
        assert abs(theory - vals.mean()) < 2e-2


class TestKernel:
    def test_symmetry(self, spec_two_third):
        k1 = kernel_K(spec_two_third, 0.8, 3.1)
        k2 = kernel_K(spec_two_third, 3.1, 0.8)
        assert abs(k1 - k2) < 1e-10 * max(1.0, abs(k1))

    def test_diagonal_is_removable(self, spec_two_third):
        x = 3.0
        k_near = 0.5 * (kernel_K(spec_two_third, x, x + 1e-4)
                        + kernel_K(spec_two_third, x, x - 1e-4))
        k_nearer = 0.5 * (kernel_K(spec_two_third, x, x + 2e-5)
                          + kernel_K(spec_two_third, x, x - 2e-5))
        assert abs(k_near - k_nearer) < 1e-4 * abs(k_nearer)

    def test_rejects_equal_arguments(self, spec_two_third):
        with pytest.raises(DomainError):
            kernel_K(spec_two_third, 1.0, 1.0)


class TestTFunctional:
    def test_identity_covariance_second_moment(self, spec_unit_half):
        h = grid_fn(spec_unit_half, lambda x: x, 0.0)
        assert abs(T_functional(spec_unit_half, h).value - 1.5) < 5e-4

    def test_zero_function(self, spec_two_third):
        assert T_functional(spec_two_third, ShrinkageFunction.zero()).value == 0.0

    @pytest.mark.parametrize("gamma_key", ["third", "two"])
    def test_exact_resolvent_cross_check(self, request, h_two, gamma_key):
        spec = request.getfixturevalue(f"spec_two_{gamma_key}")
        _, t_exact = exact_resolvent_values(h_two, spec.gamma)
        h = grid_fn(spec, lambda x: 1.0 / (x + 1.0), 1.0)
        assert abs(T_functional(spec, h).value - t_exact) < 1e-8

    @pytest.mark.parametrize("gamma_key,atom_mass", [("unit_half", 0.0),
                                                     ("unit_two", 0.5)])
    def test_identity_covariance_collapse(self, request, gamma_key, atom_mass):
        spec = request.getfixturevalue(f"spec_{gamma_key}")
        polys = [
            (lambda x: np.ones_like(x), 1.0),
            (lambda x: x, 0.0),
            (lambda x: 1.0 + 0.5 * x - 0.2 * x**2, 1.0),
            (lambda x: x**3 - x + 2.0, 2.0),
        ]
        for fn, at0 in polys:
            h = grid_fn(spec, fn, at0)
            expected = spec.integrate_f(np.asarray(fn(spec.grid)) ** 2, 0.0)
            expected += atom_mass * at0**2
            assert abs(T_functional(spec, h).value - expected) < 5e-4

    def test_quadratic_scaling(self, spec_two_third):
        spec = spec_two_third
        h = grid_fn(spec, lambda x: 1.0 / (x + 0.5), 2.0)
        base = T_functional(spec, h, diagnostics=False).value
        scaled = T_functional(spec, h.scaled(3.0), diagnostics=False).value
        assert abs(scaled - 9.0 * base) < 1e-10 * max(1.0, abs(base) * 9)

    def test_polarization_consistency(self, spec_two_gamma2):
        spec = spec_two_gamma2
        h1 = grid_fn(spec, lambda x: 1.0 / (x + 1.0), 1.0)
        h2 = grid_fn(spec, lambda x: np.exp(-0.3 * x), 1.0)
        plus = ShrinkageFunction.from_grid(
            spec.grid, h1.grid_values + h2.grid_values, h1.at_zero + h2.at_zero)
        minus = ShrinkageFunction.from_grid(
            spec.grid, h1.grid_values - h2.grid_values, h1.at_zero - h2.at_zero)
        polarized = 0.25 * (T_functional(spec, plus, diagnostics=False).value
                            - T_functional(spec, minus, diagnostics=False).value)
        assert abs(T_bilinear(spec, h1, h2) - polarized) < 1e-10

    def test_cauchy_schwarz_lower_bound(self, spec_two_third, spec_two_gamma2):
        for spec in (spec_two_third, spec_two_gamma2):
            for fn, at0 in [(lambda x: 1.0 / (x + 1.0), 1.0),
                            (lambda x: x, 0.0),
                            (lambda x: np.exp(-x), 1.0)]:
                h = grid_fn(spec, fn, at0)
                t_val = T_functional(spec, h, diagnostics=False).value
                m_val = M_functional(spec, h, diagnostics=False).value
                assert t_val >= m_val**2 - 1e-8

    def test_monte_carlo_trace(self, spec_two_gamma2):
        vals = []
        for seed in range(8):
            lam, _, b2 = two_atom_trace_draw(2.0, 1000, 500 + seed)
            hv = 1.0 / (lam + 0.5)
            vals.append(float(hv @ b2 @ hv) / 1000)
        h = grid_fn(spec_two_gamma2, lambda x: 1.0 / (x + 0.5), 2.0)
        theory = T_functional(spec_two_gamma2, h, diagnostics=False).value
        assert abs(theory - np.mean(vals)) < 3e-2


class TestTwoResolvent:
    def test_monte_carlo_trace(self, spec_two_third):
        z1, z2 = 1 + 1j, 2 + 1j
        vals = []
        for seed in range(8):
            lam, _, b2 = two_atom_trace_draw(1.0 / 3.0, 1000, 700 + seed)
            r1, r2 = 1.0 / (lam - z1), 1.0 / (lam - z2)
            vals.append(complex(r1 @ b2 @ r2) / 1000)
        theory = two_resolvent_limit(spec_two_third, z1, z2)
        assert abs(theory - np.mean(vals)) < 2e-2

    def test_swap_symmetry(self, spec_two_third):
        v1 = two_resolvent_limit(spec_two_third, 1 + 1j, 2 + 0.5j)
        v2 = two_resolvent_limit(spec_two_third, 2 + 0.5j, 1 + 1j)
        assert abs(v1 - v2) < 1e-12

    def test_schwarz_reflection(self, spec_two_third):
        v = two_resolvent_limit(spec_two_third, 1 + 1j, 2 + 0.5j)
        v_conj = two_resolvent_limit(spec_two_third, 1 - 1j, 2 - 0.5j)
        assert abs(v_conj - np.conj(v)) < 1e-12

    def test_coincident_arguments_use_derivative(self, spec_two_third):
        z = 1.5 + 0.8j
        near = two_resolvent_limit(spec_two_third, z, z + 1e-6)
        at = two_resolvent_limit(spec_two_third, z, z + 1e-12)
        assert abs(near - at) < 1e-5 * abs(at)


class TestOptimalShrinkers:
    def test_covariance_shrinker_identity_population(self, spec_unit_half):
        h = lp_covariance_shrinker(spec_unit_half)
        assert np.max(np.abs(h.grid_values - 1.0)) < 1e-6

    def test_covariance_shrinker_at_zero_gamma2(self, spec_unit_two):
        h = lp_covariance_shrinker(spec_unit_two)
        assert abs(h.at_zero - 1.0) < 1e-4

    def test_precision_shrinker_positive_identity_population(self, spec_unit_half):
        h = lp_precision_shrinker(spec_unit_half)
        assert np.all(h.grid_values > 0)
        assert np.max(np.abs(h.grid_values - 1.0)) < 1e-6

    def test_boundary_scale_equivariance(self, h_unit):
        c = 4.0
        f1, g1 = boundary_values(h_unit, 0.5, 1.5)
        fc, gc = boundary_values(h_unit.scaled(c), 0.5, c * 1.5)
        assert abs(fc - f1 / c) < 1e-9
        assert abs(gc - g1 / c) < 1e-9

    def test_frobenius_loss_analytic(self, spec_two_third):
        # h = 0 leaves the full second moment; the optimal shrinker beats the
        # identity map h(x)=x
        zero_loss = frobenius_covariance_loss(spec_two_third,
                                              ShrinkageFunction.zero())
        assert abs(zero_loss - 8.5) < 1e-3
        ident = ShrinkageFunction.from_grid(
            spec_two_third.grid, spec_two_third.grid.copy(), 0.0)
        opt = lp_covariance_shrinker(spec_two_third)
        assert (frobenius_covariance_loss(spec_two_third, opt)
                < frobenius_covariance_loss(spec_two_third, ident))

    def test_frobenius_monte_carlo_comparison(self, spec_two_third, h_two):
        from shrinkage_lab.montecarlo import (
            ExperimentConfig,
            SigmaSpec,
            empirical_frobenius_loss,
            generate_regression_draw,
        )

        cfg = ExperimentConfig(p=1200, n=3600, alpha=0.0,
                               sigma=SigmaSpec.from_atoms(h_two), seed=31)
        draw = generate_regression_draw(cfg)
        opt = lp_covariance_shrinker(spec_two_third)
        ident = ShrinkageFunction.from_grid(
            spec_two_third.grid, spec_two_third.grid.copy(), 0.0)
        loss_opt = empirical_frobenius_loss(draw, opt)
        loss_id = empirical_frobenius_loss(draw, ident)
        ridge_losses = [
            empirical_frobenius_loss(
                draw,
                ShrinkageFunction.from_grid(
                    spec_two_third.grid,
                    spec_two_third.grid / (spec_two_third.grid + lam) * 2.5,
                    0.0,
                ),
            )
            for lam in np.geomspace(0.01, 10, 8)
        ]
        assert loss_opt < loss_id
        assert loss_opt < min(ridge_losses)

    def test_diagnostics_flag_small_errors(self, spec_two_third):
        h = grid_fn(spec_two_third, lambda x: 1.0 / (x + 1.0), 1.0)
        val = M_functional(spec_two_third, h)
        assert val.error_estimate < 1e-6 * abs(val.value) + 1e-9
        assert not val.flagged
