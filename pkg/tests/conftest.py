import numpy as np
import pytest

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def ghz_amplitudes(n: int) -> np.ndarray:
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return amps


def w3_amplitudes() -> np.ndarray:
    amps = np.zeros(8, dtype=complex)
    for idx in (0b001, 0b010, 0b100):
        amps[idx] = 1 / np.sqrt(3)
    return amps
