"""Built-in case studies: a DC motor (ideal case) and a 2x2 mismatch case."""

from __future__ import annotations

import numpy as np

from .controller import ControllerStructure
from .freq_data import FrequencyDataset, RationalTransferMatrix, logspace_frequencies, sample_rational

__all__ = [
    "DC_MOTOR_CONSTANTS",
    "THETA_STAR",
    "THETA_INIT",
    "THETA_F",
    "dc_motor_plant",
    "dc_motor_reference",
    "dc_motor_structure",
    "dc_motor_dataset",
    "ideal_dc_controller",
    "exact_ideal_dc_theta",
    "f16_reference",
    "f16_structure",
    "nmp_demo_plant",
    "mismatch_dataset",
]

# electromagnetic coeff. K [N.m.s/rad], friction f [N.m.s/rad], R [ohm],
# L [H], inertia J [kg.m^2]
DC_MOTOR_CONSTANTS = {"K": 0.021, "f": 0.0182, "R": 0.56, "L": 5.63e-3, "J": 5e-4}

# Reference parameter vectors for the DC motor structure s^2 + b1 s + b2.
THETA_STAR = np.array([20.0, 0.0, 36.51, 4.011, 12.618])
THETA_INIT = np.array([0.2145, 0.1657, 0.5237, 0.2580, 0.8859])
# last entry printed as "0.14.3566"; read as 14.3566
THETA_F = np.array([15.7511, 0.1370, 25.5729, 2.9401, 14.3566])


def dc_motor_plant(**overrides) -> RationalTransferMatrix:
    """Second-order speed response of a DC motor to armature voltage."""
    c = {**DC_MOTOR_CONSTANTS, **overrides}
    K, f, R, L, J = c["K"], c["f"], c["R"], c["L"], c["J"]
    den0 = f * R + K**2
    return RationalTransferMatrix.siso([K / den0], [J * L / den0, (f * L + J * R) / den0, 1.0])


def dc_motor_reference(omega0: float = 10.0, xi: float = 1.0) -> RationalTransferMatrix:
    return RationalTransferMatrix.siso([1.0], [1.0 / omega0**2, 2.0 * xi / omega0, 1.0])


def dc_motor_structure() -> ControllerStructure:
    """Biproper second-order SISO structure, ``theta = [b1, b2, a1, a2, k]``."""
    return ControllerStructure(1, 1, 2, [[2]], "biproper")


def dc_motor_dataset(count: int = 50) -> FrequencyDataset:
    return sample_rational(dc_motor_plant(), logspace_frequencies(1e-2, 1e2, count))


def ideal_dc_controller() -> RationalTransferMatrix:
    """The tabulated ideal controller ``12.618 (s^2+36.51s+4.011) / (s(s+20))``."""
    return RationalTransferMatrix.siso(12.618 * np.array([1.0, 36.51, 4.011]), [1.0, 20.0, 0.0])


def exact_ideal_dc_theta(omega0: float = 10.0, xi: float = 1.0) -> np.ndarray:
    """Parameters of ``Md / (P (1 - Md))`` for :func:`dc_motor_plant`.

    With the second-order reference the ideal controller is
    ``w0^2 / (P(s) s (s + 2 xi w0))``, which fits the DC motor structure
    exactly with ``beta = [2 xi w0, 0]``.
    """
    P = dc_motor_plant()
    gain = P.num[0][0][-1]
    a2, a1, a0 = P.den[0][0]
    k = omega0**2 * a2 / gain
    return np.array([2.0 * xi * omega0, 0.0, a1 / a2, a0 / a2, k])


def f16_reference() -> RationalTransferMatrix:
    """Decoupled 2x2 reference ``diag(5/(s+5), 0.8/(s+0.8))``."""
    return RationalTransferMatrix(
        [[[5.0], [0.0]], [[0.0], [0.8]]],
        [[[1.0, 5.0], [1.0]], [[1.0], [1.0, 0.8]]],
    )


def f16_structure() -> ControllerStructure:
    """2x2, shared second-order denominator, biproper entries: 14 parameters."""
    return ControllerStructure(2, 2, 2, [[2, 2], [2, 2]], "biproper")


def nmp_demo_plant() -> RationalTransferMatrix:
    """Stable coupled 2x2 plant with a transmission zero at ``s = +1``.

    ``P(s) = [[1/(s+1), 2/(s+3)], [1/(s+1), 1/(s+1)]]``, so
    ``det P = (1 - s) / ((s+1)^2 (s+3))``.
    """
    return RationalTransferMatrix(
        [[[1.0], [2.0]], [[1.0], [1.0]]],
        [[[1.0, 1.0], [1.0, 3.0]], [[1.0, 1.0], [1.0, 1.0]]],
    )


def mismatch_dataset(count: int = 200) -> FrequencyDataset:
    return sample_rational(nmp_demo_plant(), logspace_frequencies(1e-2, 1e2, count))
