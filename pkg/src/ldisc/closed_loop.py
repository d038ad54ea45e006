"""Closed-loop quantities computed directly from plant frequency data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import ControllerStructure, controller_response
from .exceptions import DimensionError, GammaEstimationError, IllPosedLoopError
from .freq_data import FrequencyDataset, RationalTransferMatrix
from .linsys import DEFAULT_MARGIN, hinf_norm, spectral_abscissa
from .loewner import realize

__all__ = [
    "ObjectiveValue",
    "closed_loop_samples",
    "matching_objective",
    "g_samples",
    "estimate_gamma",
    "verify_closed_loop_stability",
    "filter_plant_for_integrator",
]

_RCOND_MIN = 1e-12


@dataclass(frozen=True)
class ObjectiveValue:
    """Mean squared Frobenius mismatch and its per-frequency terms."""

    d: float
    per_frequency: np.ndarray

    def __float__(self):
        return self.d


def _check_dims(dataset: FrequencyDataset, structure: ControllerStructure):
    if (structure.n_i, structure.n_o) != (dataset.n_i, dataset.n_o):
        raise DimensionError(
            f"controller is {structure.n_i}x{structure.n_o} but the plant needs "
            f"{dataset.n_i}x{dataset.n_o} (plant inputs x plant outputs)"
        )


def loop_samples(dataset: FrequencyDataset, K: np.ndarray) -> np.ndarray:
    """``(I + Phi K)^-1 Phi K`` for precomputed controller samples ``K``."""
    PK = dataset.responses @ K
    n = PK.shape[-1]
    F = np.eye(n)[None] + PK
    if n == 1:
        f = F[:, 0, 0]
        bad = np.abs(f) <= _RCOND_MIN * (1.0 + np.abs(PK[:, 0, 0]))
    else:
        sv = np.linalg.svd(F, compute_uv=False)
        bad = sv[:, -1] <= _RCOND_MIN * sv[:, 0]
    if np.any(bad):
        raise IllPosedLoopError(float(dataset.omega[np.argmax(bad)]))
    return np.linalg.solve(F, PK)


def closed_loop_samples(dataset: FrequencyDataset, structure: ControllerStructure, theta) -> np.ndarray:
    """``M(K, j w_k)`` for every sample, shape ``(N, n_o, n_o)``."""
    _check_dims(dataset, structure)
    return loop_samples(dataset, controller_response(structure, theta, dataset.omega))


def _reference_samples(dataset, Md):
    if isinstance(Md, RationalTransferMatrix):
        if Md.shape != (dataset.n_o, dataset.n_o):
            raise DimensionError(f"reference model must be {dataset.n_o}x{dataset.n_o}")
        return Md.evaluate(1j * dataset.omega)
    Md = np.asarray(Md, dtype=complex)
    if Md.shape != (len(dataset), dataset.n_o, dataset.n_o):
        raise DimensionError("reference samples must have shape (N, n_o, n_o)")
    return Md


def objective_from_samples(Md_samples: np.ndarray, M: np.ndarray) -> ObjectiveValue:
    per = np.sum(np.abs(Md_samples - M) ** 2, axis=(1, 2))
    return ObjectiveValue(float(np.mean(per)), per)


def matching_objective(dataset: FrequencyDataset, Md, structure: ControllerStructure, theta) -> ObjectiveValue:
    """``(1/N) sum_k ||Md(j w_k) - M(K, j w_k)||_F^2``.

    ``Md`` is a :class:`RationalTransferMatrix` or precomputed samples.
    """
    return objective_from_samples(_reference_samples(dataset, Md),
                                  closed_loop_samples(dataset, structure, theta))


def g_samples(dataset: FrequencyDataset, structure: ControllerStructure, theta_stab) -> np.ndarray:
    """``(I - M(K_stab, j w_k)) Phi_k``: the small-gain transfer on the grid.

    This is ``(I + Phi K)^-1 Phi``, the map seen by an additive controller
    perturbation; for SISO data it equals ``Phi (1 - M)``.
    """
    M = closed_loop_samples(dataset, structure, theta_stab)
    return (np.eye(dataset.n_o)[None] - M) @ dataset.responses


def _is_zero(samples, dataset):
    return not np.any(np.abs(samples) > 1e-14 * max(1.0, np.abs(dataset.responses).max()))


def estimate_gamma(
    dataset: FrequencyDataset,
    structure: ControllerStructure,
    theta_stab,
    svd_rel_tol: float = 1e-10,
    rel_tol: float = 1e-6,
) -> float:
    """Loewner-identify ``G`` from :func:`g_samples` and return its H-infinity norm.

    Raises
    ------
    GammaEstimationError
        If the identified model is unstable.
    """
    G = g_samples(dataset, structure, theta_stab)
    real = realize((dataset.omega, G), svd_rel_tol=svd_rel_tol)
    abscissa = spectral_abscissa(real)
    if not abscissa < 0:
        raise GammaEstimationError(
            f"identified small-gain transfer is unstable (abscissa {abscissa:.4g}); "
            "the loop may not be stabilized or the data are insufficient"
        )
    return float(hinf_norm(real, rel_tol=rel_tol, freq_range=(dataset.omega[0], dataset.omega[-1])))


def verify_closed_loop_stability(
    dataset: FrequencyDataset,
    structure: ControllerStructure,
    theta,
    svd_rel_tol: float = 1e-10,
    margin: float = DEFAULT_MARGIN,
) -> tuple[bool, float]:
    """Identify ``M(K(theta))`` from data and test its poles.

    Returns ``(stable, abscissa)``.  A vanishing closed loop (``K = 0``) is
    reported stable with abscissa ``-inf``.
    """
    M = closed_loop_samples(dataset, structure, theta)
    if _is_zero(M, dataset):
        return True, -np.inf
    abscissa = spectral_abscissa(realize((dataset.omega, M), svd_rel_tol=svd_rel_tol))
    return bool(abscissa < -margin), abscissa


def filter_plant_for_integrator(dataset: FrequencyDataset, a: float) -> FrequencyDataset:
    """Absorb ``F(s)^-1 = (s + a)/s`` into the plant data.

    Lets integrating controllers ``K`` be designed as ``F K`` in RH-infinity.
    """
    if not a > 0:
        raise ValueError(f"filter corner a must be positive, got {a!r}")
    s = 1j * dataset.omega
    return dataset.with_responses(dataset.responses * ((s + a) / s)[:, None, None])
