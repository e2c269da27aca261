import json

import numpy as np
import pytest

from shrinkage_lab import (
    AspectRatio,
    ConfigError,
    DomainError,
    PopulationSpectrum,
    boundary_values,
    build_limiting_spectrum,
    companion_at_zero,
    find_support,
    solve_stieltjes,
)
from shrinkage_lab.spectrum import _boundary_grid


def mp_quadratic_root(z: complex, gamma: float) -> complex:
    """Unit-variance solution of m (t(1-g-g z m)-z) = 1 at t=1: the quadratic
    -g z m^2 + (1-g-z) m - 1 = 0, upper-half-plane root."""
    a, b, c = -gamma * z, (1.0 - gamma - z), -1.0
    disc = np.sqrt(b * b - 4 * a * c + 0j)
    for root in ((-b + disc) / (2 * a), (-b - disc) / (2 * a)):
        if root.imag > 0:
            return root
    raise AssertionError("no upper-half-plane root")


def mp_edges(gamma: float) -> tuple[float, float]:
    return (1 - np.sqrt(gamma)) ** 2, (1 + np.sqrt(gamma)) ** 2


def mp_density(x, gamma):
    a, b = mp_edges(gamma)
    return np.sqrt(np.maximum((b - x) * (x - a), 0.0)) / (2 * np.pi * gamma * x)


class TestSolveStieltjes:
    @pytest.mark.parametrize("gamma", [0.25, 0.5, 2.0])
    def test_matches_quadratic_root(self, h_unit, gamma):
        z = 1 + 1j
        m, mc = solve_stieltjes(h_unit, gamma, z)
        assert abs(m - mp_quadratic_root(z, gamma)) < 1e-10
        assert m.imag > 0 and mc.imag > 0
        assert abs(mc - (-(1 - gamma) / z + gamma * m)) < 1e-12

    def test_residual_contract(self, h_two):
        gamma, z = 1.0 / 3.0, 0.7 + 0.05j
        m, _ = solve_stieltjes(h_two, gamma, z)
        u = 1 - gamma - gamma * z * m
        resid = m - sum(
            w / (t * u - z) for t, w in h_two.atoms
        )
        assert abs(resid) < 1e-10

    def test_scale_equivariance(self, h_unit):
        c, gamma, z = 4.0, 0.5, 1.3 + 0.2j
        m_unit, _ = solve_stieltjes(h_unit, gamma, z / c)
        m_scaled, _ = solve_stieltjes(h_unit.scaled(c), gamma, z)
        assert abs(m_scaled - m_unit / c) < 1e-10

    def test_monte_carlo_resolvent(self, h_two):
        gamma, z, p = 1.0 / 3.0, 2 + 0.01j, 4000
        n = int(round(p / gamma))
        rng = np.random.Generator(np.random.Philox(key=99))
        d = np.repeat([1.0, 4.0], [p // 2, p // 2])
        x = np.sqrt(d)[:, None] * rng.standard_normal((p, n))
        lam = np.linalg.eigvalsh(x @ x.T / n)
        m_emp = np.mean(1.0 / (lam - z))
        m, _ = solve_stieltjes(h_two, gamma, z)
        assert abs(m - m_emp) < 2e-2

    def test_requires_upper_half_plane(self, h_unit):
        with pytest.raises(DomainError):
            solve_stieltjes(h_unit, 0.5, 1.0 - 0.5j)


class TestFindSupport:
    def test_unit_mp_edges(self, h_unit):
        (lo, hi), = find_support(h_unit, 0.5)
        a, b = mp_edges(0.5)
        assert abs(lo - a) < 1e-9 and abs(hi - b) < 1e-9

    def test_scaled_atom(self):
        h4 = PopulationSpectrum.from_atoms([4.0])
        (lo, hi), = find_support(h4, 0.5)
        a, b = mp_edges(0.5)
        assert abs(lo - 4 * a) < 1e-8 and abs(hi - 4 * b) < 1e-8

    def test_two_bulks_small_gamma(self, h_two):
        intervals = find_support(h_two, 0.05)
        assert len(intervals) == 2
        assert intervals[0][0] < 1.0 < intervals[0][1]
        assert intervals[1][0] < 4.0 < intervals[1][1]

        # simulated eigenvalues respect the predicted gap
        p, n = 1500, 30000
        rng = np.random.Generator(np.random.Philox(key=4))
        d = np.repeat([1.0, 4.0], [p // 2, p // 2])
        x = np.sqrt(d)[:, None] * rng.standard_normal((p, n))
        lam = np.linalg.eigvalsh(x @ x.T / n)
        gap_lo, gap_hi = intervals[0][1], intervals[1][0]
        margin = 0.02 * (gap_hi - gap_lo)
        assert not np.any((lam > gap_lo + margin) & (lam < gap_hi - margin))
        assert np.any(lam < gap_lo) and np.any(lam > gap_hi)

    def test_single_bulk_when_gamma_large(self, h_two):
        assert len(find_support(h_two, 2.0)) == 1


class TestCompanionAtZero:
    def test_unit(self, h_unit):
        m0, m0p = companion_at_zero(h_unit, 2.0)
        assert abs(m0 - 1.0) < 1e-12
        assert abs(m0p - 2.0) < 1e-10

    def test_scaled(self):
        c = 3.0
        m0, _ = companion_at_zero(PopulationSpectrum.from_atoms([c]), 2.0)
        assert abs(m0 - 1.0 / (c * (2.0 - 1.0))) < 1e-12

    def test_monte_carlo_companion(self, h_two):
        gamma, p = 2.0, 4000
        n = p // 2
        rng = np.random.Generator(np.random.Philox(key=21))
        d = np.repeat([1.0, 4.0], [p // 2, p // 2])
        x = np.sqrt(d)[:, None] * rng.standard_normal((p, n))
        mu = np.linalg.eigvalsh(x.T @ x / n)
        m0, m0p = companion_at_zero(h_two, gamma)
        assert abs(np.mean(1.0 / mu) - m0) < 2e-2
        assert m0 > 0 and m0p > 0

    def test_rejects_small_gamma(self, h_unit):
        with pytest.raises(DomainError):
            companion_at_zero(h_unit, 0.5)


class TestBoundaryValues:
    def test_unit_identity_everywhere(self, spec_unit_half):
        ident = spec_unit_half.grid * spec_unit_half.abs_m2
        assert np.max(np.abs(ident - 1.0)) < 1e-6

    def test_unit_density_closed_form(self, h_unit):
        f, g = boundary_values(h_unit, 0.5, 1.5)
        assert abs(g - 0.5 * np.pi * mp_density(1.5, 0.5)) < 1e-8

    def test_outside_support_raises(self, h_unit):
        with pytest.raises(DomainError):
            boundary_values(h_unit, 0.5, 5.0)

    def test_two_atom_density_vs_kde(self, h_two):
        from scipy.stats import gaussian_kde

        gamma, p = 1.0 / 3.0, 3000
        n = int(round(p / gamma))
        rng = np.random.Generator(np.random.Philox(key=8))
        d = np.repeat([1.0, 4.0], [p // 2, p // 2])
        x = np.sqrt(d)[:, None] * rng.standard_normal((p, n))
        lam = np.linalg.eigvalsh(x @ x.T / n)
        kde = gaussian_kde(lam, bw_method=0.015)
        support = find_support(h_two, gamma)
        xs = np.concatenate(
            [np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 40)
             for lo, hi in support]
        )
        f, g = _boundary_grid(h_two, gamma, xs)
        dens = g / (gamma * np.pi)
        assert np.max(np.abs(kde(xs) - dens)) < 5e-2


class TestBuildLimitingSpectrum:
    @pytest.mark.parametrize("gamma", [0.25, 0.5, 2.0])
    def test_mass_and_moment_unit(self, h_unit, gamma):
        spec = build_limiting_spectrum(h_unit, gamma, 128)
        assert abs(spec.total_mass() - 1.0) < 1e-4
        assert abs(spec.first_moment() - 1.0) < 1e-4
        assert spec.atom0_mass == max(1.0 - 1.0 / gamma, 0.0)

    def test_two_atom_first_moment(self, spec_two_third):
        assert abs(spec_two_third.first_moment() - 2.5) < 1e-4
        assert abs(spec_two_third.total_mass() - 1.0) < 1e-4

    def test_gamma2_has_companion_data(self, spec_two_gamma2):
        assert spec_two_gamma2.m0 > 0 and spec_two_gamma2.m0_prime > 0
        assert spec_two_gamma2.atom0_mass == 0.5

    def test_density_nonnegative_and_edges_vanish(self, spec_two_third):
        spec = spec_two_third
        assert np.all(spec.g_vals >= 0)
        refined = spec.refined
        for lo, hi in spec.support:
            inside = (spec.grid > lo) & (spec.grid < hi)
            edge_vals = spec.g_vals[inside][[0, -1]]
            assert np.all(edge_vals < 0.2 * spec.g_vals[inside].max())
            # halving the node spacing pulls the extreme values further down
            fine = (refined.grid > lo) & (refined.grid < hi)
            fine_edges = refined.g_vals[fine][[0, -1]]
            assert np.all(fine_edges < edge_vals)

    def test_toeplitz_discretized_population(self):
        from scipy.linalg import toeplitz

        p = 200
        evals = np.linalg.eigvalsh(toeplitz(0.5 ** np.arange(p)))
        h = PopulationSpectrum.from_eigenvalues(evals)
        spec = build_limiting_spectrum(h, 2.0 / 3.0, 128)
        assert abs(spec.total_mass() - 1.0) < 1e-4
        assert abs(spec.first_moment() - evals.mean()) < 1e-4

    def test_rejects_small_grid(self, h_unit):
        with pytest.raises(ConfigError):
            build_limiting_spectrum(h_unit, 0.5, 32)


class TestTypesAndSerialization:
    def test_gamma_one_rejected(self):
        with pytest.raises(ConfigError):
            AspectRatio(1.0)
        with pytest.raises(ConfigError):
            AspectRatio(1.0005)
        AspectRatio(1.01)

    def test_population_validation(self):
        with pytest.raises(ConfigError):
            PopulationSpectrum(((1.0, 0.5), (4.0, 0.6)))
        with pytest.raises(ConfigError):
            PopulationSpectrum(((-1.0, 1.0),))
        with pytest.raises(ConfigError):
            PopulationSpectrum(((1.0, -0.2), (4.0, 1.2)))

    def test_population_json_round_trip(self, h_two):
        text = h_two.to_json()
        obj = json.loads(text)
        assert obj == {"atoms": [{"t": 1.0, "w": 0.5}, {"t": 4.0, "w": 0.5}]}
        assert PopulationSpectrum.from_json(text) == h_two

    def test_moments(self, h_two):
        assert h_two.moment(1) == 2.5
        assert h_two.moment(2) == 8.5

    def test_csv_export(self, spec_unit_half, tmp_path):
        path = tmp_path / "spec.csv"
        spec_unit_half.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x,f,g,density"
