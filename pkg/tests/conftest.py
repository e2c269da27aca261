import numpy as np
import pytest

from shrinkage_lab import PopulationSpectrum, build_limiting_spectrum


@pytest.fixture(scope="session")
def h_unit():
    return PopulationSpectrum.from_atoms([1.0])


@pytest.fixture(scope="session")
def h_two():
    return PopulationSpectrum.from_atoms([1.0, 4.0])


@pytest.fixture(scope="session")
def spec_unit_half(h_unit):
    return build_limiting_spectrum(h_unit, 0.5, 384)


@pytest.fixture(scope="session")
def spec_unit_two(h_unit):
    return build_limiting_spectrum(h_unit, 2.0, 384)


@pytest.fixture(scope="session")
def spec_two_third(h_two):
    return build_limiting_spectrum(h_two, 1.0 / 3.0, 384)


@pytest.fixture(scope="session")
def spec_two_gamma2(h_two):
    return build_limiting_spectrum(h_two, 2.0, 384)


def two_atom_trace_draw(gamma: float, p: int, seed: int):
    """One diagonal H=(1,4)/2 draw: (eigenvalues, diag(U'SigU), (U'SigU)^2).

    Shared scaffolding for the Monte Carlo trace oracles.
    """
    n = int(round(p / gamma))
    d = np.repeat([1.0, 4.0], [p // 2, p - p // 2])
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = rng.standard_normal((p, n))
    x = np.sqrt(d)[:, None] * z
    s = x @ x.T / n
    lam, u = np.linalg.eigh(s)
    b = u.T @ (d[:, None] * u)
    return lam, np.diag(b).copy(), b**2
