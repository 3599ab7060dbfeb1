import numpy as np
import pytest
from scipy.stats import unitary_group

from gbsphase import TransmissionMatrix


def haar(n: int, seed: int) -> np.ndarray:
    if n == 1:
        phase = np.random.default_rng(seed).uniform(0, 2 * np.pi)
        return np.array([[np.exp(1j * phase)]])
    return unitary_group.rvs(n, random_state=seed)


def lossy_network(m_out: int, n_in: int, seed: int, scale: float = 0.9) -> TransmissionMatrix:
    """First ``n_in`` columns of a Haar unitary, uniformly attenuated."""
    return TransmissionMatrix(scale * haar(m_out, seed)[:, :n_in])


BEAMSPLITTER = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


@pytest.fixture
def beamsplitter() -> TransmissionMatrix:
    return TransmissionMatrix(BEAMSPLITTER)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title} | {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
