import numpy as np
import pytest

from borel_ns.bessel import kernel_sup_scan
from borel_ns.borel import compute_v1, picard_solve
from borel_ns.norms import DecayParams, GevreyConstants, PaperConstants, norm_mu_beta
from borel_ns.spectral import SpectralField, WaveGrid, preset_field

SMALL_AMPLITUDE = 1e-6


@pytest.fixture(scope="session")
def grid8():
    return WaveGrid(8)


@pytest.fixture(scope="session")
def decay():
    return DecayParams(4.0, 1.0)


@pytest.fixture(scope="session")
def sup_g():
    return kernel_sup_scan(200.0, 100_000)


@pytest.fixture(scope="session")
def consts(decay, grid8, sup_g):
    return PaperConstants.build(decay, grid8, sup_g=sup_g)


@pytest.fixture(scope="session")
def zero_force(grid8):
    return SpectralField.zeros(grid8)


def _small_presets(grid):
    return {
        "taylor_green_like": preset_field("taylor_green_like", grid, amplitude=SMALL_AMPLITUDE),
        "random_band": preset_field("random_band", grid, target_norm=1e-4, seed=3),
        "single_mode": preset_field("single_mode", grid, amplitude=SMALL_AMPLITUDE),
    }


@pytest.fixture(scope="session")
def presets(grid8):
    return _small_presets(grid8)


class Solved:
    """Picard solution, certificate and data for one preset."""

    def __init__(self, v0, f, decay, consts, tol=1e-30):
        self.v0 = v0
        self.v1 = compute_v1(v0, f)
        self.u, self.diag = picard_solve(v0, f, decay, tol=tol, consts=consts)
        self.cert = GevreyConstants.certify(norm_mu_beta(v0, decay), norm_mu_beta(self.v1, decay),
                                            decay, consts)


@pytest.fixture(scope="session")
def solved(presets, zero_force, decay, consts):
    return {name: Solved(v0, zero_force, decay, consts) for name, v0 in presets.items()}


def random_divfree(grid, rng, scale=1.0):
    """Hermitian, projected random field inside the band."""
    from borel_ns.spectral import hermitian_partner, project_values

    n = grid.n
    raw = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    raw = np.where(grid.mask, raw, 0)
    raw[:, 0, 0, 0] = 0
    raw = 0.5 * (raw + hermitian_partner(raw))
    return SpectralField(grid, scale * project_values(raw, grid))


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
