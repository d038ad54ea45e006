"""Estimator-style wrappers over the functional API.

``LoewnerInterpolator`` fits a descriptor model to frequency samples and
predicts the response at new frequencies.  ``LDISCDesigner`` fits a
structured controller to plant samples and predicts the closed-loop
response.  Both follow the scikit-learn conventions: constructor arguments
are stored verbatim, fitted attributes end in ``_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .closed_loop import closed_loop_samples, matching_objective
from .controller import ControllerStructure, controller_response
from .exceptions import DimensionError
from .freq_data import FrequencyDataset, RationalTransferMatrix
from .linsys import hinf_norm, spectral_abscissa
from .loewner import frequency_response, realize
from .solver import DesignConfig, design

__all__ = ["check_frequency_data", "LoewnerInterpolator", "LDISCDesigner"]


def check_frequency_data(omega, responses=None):
    """Validate ``omega`` (1-D, positive, finite) and optional responses.

    ``responses`` may be ``(N,)`` for SISO data or ``(N, n_o, n_i)``.
    Returns float and complex arrays; responses are reshaped to 3-D.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise ValueError(f"omega must be a non-empty 1-D array, got shape {omega.shape}")
    if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
        raise ValueError("omega must be finite and positive")
    if responses is None:
        return omega
    responses = np.asarray(responses, dtype=complex)
    if responses.ndim == 1:
        responses = responses[:, None, None]
    if responses.ndim != 3 or responses.shape[0] != omega.size:
        raise DimensionError(f"responses must have shape (N,) or (N, n_o, n_i) with N={omega.size}, "
                             f"got {responses.shape}")
    if not np.all(np.isfinite(responses)):
        raise ValueError("responses must be finite")
    return omega, responses


def _as_dataset(omega, responses) -> FrequencyDataset:
    omega, responses = check_frequency_data(omega, responses)
    order = np.argsort(omega, kind="stable")
    return FrequencyDataset(omega[order], responses[order])


class LoewnerInterpolator(BaseEstimator):
    """Minimal descriptor model interpolating frequency samples.

    Parameters
    ----------
    svd_rel_tol : float
        Singular values of the Loewner pencil below this fraction of the
        largest one are truncated.
    order : int or None
        Force the model order instead of reading it from the singular values.
    """

    def __init__(self, svd_rel_tol=1e-10, order=None):
        self.svd_rel_tol = svd_rel_tol
        self.order = order

    def fit(self, omega, responses):
        dataset = _as_dataset(omega, responses)
        self.realization_ = realize(dataset, svd_rel_tol=self.svd_rel_tol, order=self.order)
        self.order_ = self.realization_.order
        self.n_outputs_, self.n_inputs_ = dataset.n_o, dataset.n_i
        self.singular_values_ = self.realization_.singular_values
        return self

    def predict(self, omega):
        """Model response at ``omega``, shape ``(N, n_o, n_i)``."""
        check_is_fitted(self, "realization_")
        return frequency_response(self.realization_, check_frequency_data(omega))

    def score(self, omega, responses):
        """Negative maximum relative error on the given samples."""
        omega, responses = check_frequency_data(omega, responses)
        err = np.abs(self.predict(omega) - responses).max()
        return -float(err / max(np.abs(responses).max(), 1e-300))

    def hinf_norm(self, rel_tol=1e-6):
        check_is_fitted(self, "realization_")
        return hinf_norm(self.realization_, rel_tol=rel_tol)

    def spectral_abscissa(self):
        check_is_fitted(self, "realization_")
        return spectral_abscissa(self.realization_)


class LDISCDesigner(BaseEstimator):
    """Structured controller tuned to match a reference closed loop.

    Parameters
    ----------
    reference : RationalTransferMatrix
        Desired closed loop ``Md``.
    structure : ControllerStructure
        Controller shape and parameter layout.
    theta0 : array-like or None
        Stabilizing initial parameters; ``None`` runs the random multistart
        initialization.
    epsilon, eta, max_iter, svd_rel_tol, seed
        Forwarded to :class:`DesignConfig`.
    config : DesignConfig or None
        Base configuration for the remaining options.
    """

    def __init__(self, reference=None, structure=None, theta0=None, epsilon=1.0, eta=1e-9,
                 max_iter=500, svd_rel_tol=1e-10, seed=0, config=None):
        self.reference = reference
        self.structure = structure
        self.theta0 = theta0
        self.epsilon = epsilon
        self.eta = eta
        self.max_iter = max_iter
        self.svd_rel_tol = svd_rel_tol
        self.seed = seed
        self.config = config

    def _config(self) -> DesignConfig:
        base = self.config.to_dict() if self.config is not None else {}
        base.update(epsilon=self.epsilon, eta=self.eta, max_iter=self.max_iter,
                    svd_rel_tol=self.svd_rel_tol, seed=self.seed)
        return DesignConfig(**base)

    def _check_setup(self, dataset):
        if not isinstance(self.reference, RationalTransferMatrix):
            raise TypeError("reference must be a RationalTransferMatrix")
        if not isinstance(self.structure, ControllerStructure):
            raise TypeError("structure must be a ControllerStructure")
        if (self.structure.n_i, self.structure.n_o) != (dataset.n_i, dataset.n_o):
            raise DimensionError("controller structure does not match the data dimensions")
        if self.reference.shape != (dataset.n_o, dataset.n_o):
            raise DimensionError("reference model does not match the data outputs")

    def fit(self, omega, responses, callback=None):
        dataset = _as_dataset(omega, responses)
        self._check_setup(dataset)
        config = self._config()
        theta0 = None if self.theta0 is None else np.asarray(self.theta0, dtype=float)
        self.report_ = design(dataset, self.reference, self.structure, config, theta0=theta0, callback=callback)
        self.theta0_ = self.report_.records[0].theta
        self.theta_ = self.report_.theta
        self.objective_ = self.report_.objective
        self.n_iter_ = self.report_.n_iter
        return self

    def predict(self, omega, responses):
        """Closed-loop response ``M(K, j omega)`` for plant samples."""
        check_is_fitted(self, "theta_")
        return closed_loop_samples(_as_dataset(omega, responses), self.structure, self.theta_)

    def controller_response(self, omega):
        check_is_fitted(self, "theta_")
        return controller_response(self.structure, self.theta_, check_frequency_data(omega))

    def score(self, omega, responses):
        """Negative matching objective on the given plant samples."""
        check_is_fitted(self, "theta_")
        dataset = _as_dataset(omega, responses)
        return -matching_objective(dataset, self.reference, self.structure, self.theta_).d
