"""Fixed-structure controllers with a shared, factored denominator.

``K(s) = N(s) / d(s)`` where

* ``d(beta, s)`` is a product of monic quadratics ``s^2 + b1 s + b2`` and, for
  odd ``n_p``, one linear factor ``s + b``;
* ``N_ij(s) = k_ij * (same factored form in alpha_ij)``.

The parameter vector is laid out as ``[beta, alpha_11, alpha_12, ..., k_11,
k_12, ...]`` with ``(i, j)`` running row-major over the ``n_i x n_o`` grid.
All-positive ``beta`` puts every root of ``d`` in the open left half plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from .exceptions import DatasetParseError, PreconditionError, SingularityError
from .linsys import hinf_norm
from .loewner import DescriptorRealization

__all__ = [
    "BETA_MIN",
    "ControllerStructure",
    "ControllerParams",
    "theta_dimension",
    "denominator_poly",
    "numerator_poly",
    "evaluate_controller",
    "controller_response",
    "stability_residuals",
    "controller_realization",
    "controller_state_space",
    "controller_difference_norm",
    "difference_peak_on_grid",
    "save_controller",
    "load_controller",
]

BETA_MIN = 1e-8


@dataclass(frozen=True)
class ControllerStructure:
    """Shape of ``K(theta)``: an ``n_i x n_o`` transfer matrix.

    ``n_i`` is the number of plant inputs (controller outputs) and ``n_o``
    the number of plant outputs (controller inputs), so ``Phi K`` is
    ``n_o x n_o``.  ``properness`` is ``"strict"`` (``n_p > n_z`` for every
    entry) or ``"biproper"`` (``n_p >= n_z``).
    """

    n_i: int
    n_o: int
    n_p: int
    n_z: tuple
    properness: str = "strict"

    def __post_init__(self):
        nz = self.n_z
        if np.isscalar(nz):
            nz = [[int(nz)] * self.n_o for _ in range(self.n_i)]
        nz = tuple(tuple(int(v) for v in row) for row in nz)
        object.__setattr__(self, "n_z", nz)
        if self.n_i < 1 or self.n_o < 1:
            raise ValueError("controller dimensions must be positive")
        if len(nz) != self.n_i or any(len(row) != self.n_o for row in nz):
            raise ValueError(f"n_z must be a {self.n_i}x{self.n_o} grid")
        if self.n_p < 0 or any(v < 0 for row in nz for v in row):
            raise ValueError("parameter counts must be nonnegative")
        if self.properness not in ("strict", "biproper"):
            raise ValueError(f"properness must be 'strict' or 'biproper', got {self.properness!r}")
        worst = max(v for row in nz for v in row)
        if self.properness == "strict" and not self.n_p > worst:
            raise ValueError(f"strictly proper structure needs n_p > n_z (n_p={self.n_p}, max n_z={worst})")
        if self.properness == "biproper" and not self.n_p >= worst:
            raise ValueError(f"biproper structure needs n_p >= n_z (n_p={self.n_p}, max n_z={worst})")

    @property
    def n_theta(self) -> int:
        return theta_dimension(self)

    def split(self, theta):
        """Return ``(beta, alpha, k)`` views; ``alpha[i][j]`` are vectors."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ValueError(f"theta must have length {self.n_theta}, got {theta.shape}")
        beta = theta[: self.n_p]
        pos = self.n_p
        alpha = []
        for row in self.n_z:
            arow = []
            for nz in row:
                arow.append(theta[pos:pos + nz])
                pos += nz
            alpha.append(arow)
        k = theta[pos:].reshape(self.n_i, self.n_o)
        return beta, alpha, k

    def to_dict(self) -> dict:
        return {
            "n_i": self.n_i,
            "n_o": self.n_o,
            "n_p": self.n_p,
            "n_z": [list(r) for r in self.n_z],
            "properness": self.properness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerStructure":
        return cls(int(data["n_i"]), int(data["n_o"]), int(data["n_p"]), data["n_z"],
                   data.get("properness", "strict"))


@dataclass(frozen=True)
class ControllerParams:
    """Structured view of a flat parameter vector."""

    beta: np.ndarray
    alpha: list
    k: np.ndarray

    @classmethod
    def from_theta(cls, structure: ControllerStructure, theta) -> "ControllerParams":
        beta, alpha, k = structure.split(theta)
        return cls(beta.copy(), [[a.copy() for a in row] for row in alpha], k.copy())

    def to_theta(self) -> np.ndarray:
        parts = [np.asarray(self.beta, dtype=float)]
        parts += [np.asarray(a, dtype=float) for row in self.alpha for a in row]
        parts.append(np.asarray(self.k, dtype=float).ravel())
        return np.concatenate(parts)


def theta_dimension(structure: ControllerStructure) -> int:
    return structure.n_p + sum(sum(r) for r in structure.n_z) + structure.n_i * structure.n_o


def _factored_poly(params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    poly = np.ones(1)
    n = params.size
    for l in range(n // 2):
        poly = np.polymul(poly, [1.0, params[2 * l], params[2 * l + 1]])
    if n % 2:
        poly = np.polymul(poly, [1.0, params[-1]])
    return poly


def denominator_poly(beta) -> np.ndarray:
    """Monic ``d(beta, s)`` as descending coefficients, degree ``len(beta)``."""
    return _factored_poly(beta)


def numerator_poly(alpha, gain: float) -> np.ndarray:
    """``gain * prod(quadratics) * (linear factor)``; zero gain gives ``[0.]``."""
    if gain == 0:
        return np.zeros(1)
    return gain * _factored_poly(alpha)


def _polys(structure, theta):
    beta, alpha, k = structure.split(theta)
    d = denominator_poly(beta)
    N = [[numerator_poly(alpha[i][j], k[i, j]) for j in range(structure.n_o)]
         for i in range(structure.n_i)]
    return d, N


def evaluate_controller(structure: ControllerStructure, theta, s):
    """``K(theta, s)``: shape ``(n_i, n_o)`` for scalar ``s``, else ``s.shape + (n_i, n_o)``."""
    d, N = _polys(structure, theta)
    s_arr = np.asarray(s, dtype=complex)
    dv = np.polyval(d, s_arr)
    scale = np.polyval(np.abs(d), np.abs(s_arr))
    bad = np.abs(dv) <= 1e-13 * scale
    if np.any(bad):
        where = complex(np.atleast_1d(s_arr)[np.atleast_1d(bad)][0])
        raise SingularityError(f"controller denominator vanishes at s={where!r}")
    out = np.empty(s_arr.shape + (structure.n_i, structure.n_o), dtype=complex)
    for i in range(structure.n_i):
        for j in range(structure.n_o):
            out[..., i, j] = np.polyval(N[i][j], s_arr) / dv
    return out


def controller_response(structure: ControllerStructure, theta, omega) -> np.ndarray:
    """``K(theta, j omega)`` on a frequency array, shape ``(N, n_i, n_o)``."""
    return evaluate_controller(structure, theta, 1j * np.asarray(omega, dtype=float))


def stability_residuals(structure: ControllerStructure, theta) -> np.ndarray:
    """``A theta`` with ``A = [-I 0]``: feasible iff every entry is negative."""
    return -structure.split(theta)[0].copy()


def controller_state_space(structure: ControllerStructure, theta):
    """Standard-form ``(A, B, C, D)`` of ``K(theta)``.

    One controllable-companion block of ``d`` per controller input column;
    the biproper part of each entry goes to ``D``.
    """
    d, N = _polys(structure, theta)
    n = structure.n_p
    n_i, n_o = structure.n_i, structure.n_o
    D = np.zeros((n_i, n_o))
    if n == 0:
        for i in range(n_i):
            for j in range(n_o):
                D[i, j] = N[i][j][-1]
        return np.zeros((0, 0)), np.zeros((0, n_o)), np.zeros((n_i, 0)), D
    comp = np.zeros((n, n))
    comp[:-1, 1:] = np.eye(n - 1)
    comp[-1, :] = -d[1:][::-1]
    A = block_diag(*([comp] * n_o))
    B = np.zeros((n * n_o, n_o))
    C = np.zeros((n_i, n * n_o))
    for j in range(n_o):
        B[(j + 1) * n - 1, j] = 1.0
        for i in range(n_i):
            num = N[i][j]
            if num.size == n + 1:
                D[i, j] = num[0]
                num = num - num[0] * d
            rem = np.zeros(n)
            tail = num[-n:]
            rem[n - tail.size:] = tail
            C[i, j * n:(j + 1) * n] = rem[::-1]
    return A, B, C, D


def _require_feasible(structure, theta):
    beta = structure.split(theta)[0]
    if np.any(beta <= 0):
        raise PreconditionError(f"denominator parameters must be positive, got beta={beta}")


def controller_realization(structure: ControllerStructure, theta) -> DescriptorRealization:
    _require_feasible(structure, theta)
    return DescriptorRealization.from_state_space(*controller_state_space(structure, theta))


def controller_difference_norm(
    structure: ControllerStructure,
    theta_a,
    theta_b,
    rel_tol: float = 1e-6,
    freq_range: tuple[float, float] | None = None,
) -> float:
    """``||K(theta_a) - K(theta_b)||_inf`` from the parallel realization."""
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    if np.array_equal(theta_a, theta_b):
        return 0.0
    _require_feasible(structure, theta_a)
    _require_feasible(structure, theta_b)
    Aa, Ba, Ca, Da = controller_state_space(structure, theta_a)
    Ab, Bb, Cb, Db = controller_state_space(structure, theta_b)
    diff = DescriptorRealization.from_state_space(
        block_diag(Aa, Ab), np.vstack([Ba, Bb]), np.hstack([Ca, -Cb]), Da - Db
    )
    return float(hinf_norm(diff, rel_tol=rel_tol, freq_range=freq_range))


def difference_peak_on_grid(structure: ControllerStructure, theta_a, theta_b, omega) -> float:
    """Max over ``omega`` of the largest singular value of ``K(a) - K(b)``."""
    Ka = controller_response(structure, theta_a, omega)
    Kb = controller_response(structure, theta_b, omega)
    return float(np.linalg.svd(Ka - Kb, compute_uv=False)[:, 0].max())


def save_controller(structure: ControllerStructure, theta, path, extra: dict | None = None) -> None:
    theta = np.asarray(theta, dtype=float)
    d, N = _polys(structure, theta)
    payload = structure.to_dict()
    payload["theta"] = theta.tolist()
    payload["theta_layout"] = "beta, alpha[i][j] row-major, k[i][j] row-major"
    payload["poles"] = [[float(p.real), float(p.imag)] for p in np.roots(d)]
    payload["zeros"] = {
        f"{i + 1},{j + 1}": [[float(z.real), float(z.imag)] for z in np.roots(N[i][j])]
        for i in range(structure.n_i) for j in range(structure.n_o)
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_controller(path):
    """Return ``(structure, theta)``; ``theta`` is ``None`` for structure-only files."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        structure = ControllerStructure.from_dict(data)
        theta = data.get("theta")
        if theta is not None:
            theta = np.asarray(theta, dtype=float)
            structure.split(theta)
        return structure, theta
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"{path}: invalid controller file ({exc})") from exc
