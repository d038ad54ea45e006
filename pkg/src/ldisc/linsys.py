"""Stability and H-infinity analysis of descriptor realizations."""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.linalg

from .exceptions import LDISCError, PreconditionError, SingularityError
from .loewner import DescriptorRealization

__all__ = [
    "HinfWarning",
    "spectral_abscissa",
    "is_stable",
    "hinf_norm",
    "sigma_max",
    "feedback_state_matrix",
]

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 1e-9
SWEEP_POINTS = 400


class HinfWarning(UserWarning):
    """The imaginary-axis eigenvalue test degenerated; result came from a
    local search around the sweep peaks."""


def _finite_poles(real: DescriptorRealization) -> np.ndarray:
    if real.order == 0:
        return np.empty(0, dtype=complex)
    try:
        A = real.to_state_space()[0]
        return np.linalg.eigvals(A) if A.size else np.empty(0, dtype=complex)
    except (SingularityError, np.linalg.LinAlgError):
        pass
    try:
        alpha, beta = scipy.linalg.eig(real.A, real.E, right=False, homogeneous_eigvals=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise LDISCError(f"generalized eigenvalue solver failed: {exc}") from exc
    scale = np.maximum(np.abs(alpha), np.abs(beta))
    finite = np.abs(beta) > 1e-10 * scale
    return alpha[finite] / beta[finite]


def spectral_abscissa(real: DescriptorRealization) -> float:
    """Largest real part over the finite poles; ``-inf`` if there are none."""
    poles = _finite_poles(real)
    if poles.size == 0:
        return -np.inf
    return float(np.max(poles.real))


def is_stable(real: DescriptorRealization, margin: float = DEFAULT_MARGIN) -> bool:
    return spectral_abscissa(real) < -margin


def sigma_max(A, B, C, D, omega) -> np.ndarray:
    """Largest singular value of ``C (jwI - A)^-1 B + D`` on a frequency array."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if A.shape[0] == 0:
        return np.full(omega.shape, np.linalg.norm(D, 2) if D.size else 0.0)
    n = A.shape[0]
    M = 1j * omega[:, None, None] * np.eye(n)[None] - A[None]
    X = np.linalg.solve(M, np.broadcast_to(B.astype(complex), (omega.size,) + B.shape))
    G = C[None] @ X + D[None]
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def _hamiltonian(A, B, C, D, gamma):
    m, p = B.shape[1], C.shape[0]
    R = D.T @ D - gamma**2 * np.eye(m)
    S = D @ D.T - gamma**2 * np.eye(p)
    Ri_DtC = np.linalg.solve(R, D.T @ C)
    Ri_Bt = np.linalg.solve(R, B.T)
    top = np.hstack([A - B @ Ri_DtC, -gamma * B @ Ri_Bt])
    bot = np.hstack([gamma * C.T @ np.linalg.solve(S, C), -A.T + C.T @ D @ Ri_Bt])
    return np.vstack([top, bot])


def _imaginary_axis_frequencies(H, scale):
    ev = np.linalg.eigvals(H)
    on_axis = np.abs(ev.real) <= 1e-8 * (scale + np.abs(ev))
    w = np.sort(np.abs(ev[on_axis].imag))
    if w.size > 1:
        # conjugate pairs produce duplicates
        keep = np.concatenate([[True], np.diff(w) > 1e-10 * (1 + w[1:])])
        w = w[keep]
    return w


def _golden_max(f, a, b, tol=1e-10, max_iter=200):
    """Maximize a unimodal function of log-frequency on ``[a, b]``."""
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1 + abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def hinf_norm(
    real: DescriptorRealization,
    rel_tol: float = 1e-6,
    freq_range: tuple[float, float] | None = None,
    return_peak: bool = False,
):
    """H-infinity norm of a stable realization.

    A logarithmic sweep (plus ``omega = 0`` and the pole frequencies) gives a
    lower bound, which is then raised by the two-step imaginary-axis
    eigenvalue iteration on the level-set Hamiltonian until no crossing
    remains at ``(1 + 2 rel_tol)`` times the bound.

    Parameters
    ----------
    real : DescriptorRealization
    rel_tol : float, default 1e-6
        Relative accuracy, in ``(0, 0.1]``.
    freq_range : (w_lo, w_hi), optional
        Data frequency range; the sweep covers ``[w_lo/100, w_hi*100]``.
        Defaults to the range of pole magnitudes.
    return_peak : bool
        Also return the frequency where the bound is attained.

    Raises
    ------
    PreconditionError
        If the realization is not stable.
    """
    if not 0 < rel_tol <= 0.1:
        raise ValueError(f"rel_tol must lie in (0, 0.1], got {rel_tol!r}")
    A, B, C, D = real.to_state_space()
    n = A.shape[0]
    poles = np.linalg.eigvals(A) if n else np.empty(0, dtype=complex)
    if poles.size and poles.real.max() >= 0:
        raise PreconditionError(
            f"H-infinity norm needs a stable system (spectral abscissa {poles.real.max():.3g})"
        )
    d_norm = np.linalg.norm(D, 2) if D.size else 0.0
    if n == 0:
        return (d_norm, np.inf) if return_peak else d_norm

    if freq_range is None:
        mags = np.abs(poles)
        lo, hi = mags.min(), mags.max()
    else:
        lo, hi = freq_range
    grid = np.concatenate([
        [0.0],
        np.logspace(np.log10(lo / 100), np.log10(hi * 100), SWEEP_POINTS),
        np.abs(poles.imag[poles.imag > 0]),
    ])
    grid = np.unique(grid)
    sv = sigma_max(A, B, C, D, grid)
    k = int(np.argmax(sv))
    lb, w_peak = float(sv[k]), float(grid[k])
    if d_norm > lb:
        lb, w_peak = d_norm, np.inf
    if lb == 0.0:
        return (0.0, 0.0) if return_peak else 0.0

    scale = np.linalg.norm(A, 1)
    degenerate = False
    for _ in range(100):
        gamma = (1.0 + 2.0 * rel_tol) * lb
        try:
            ws = _imaginary_axis_frequencies(_hamiltonian(A, B, C, D, gamma), scale)
        except np.linalg.LinAlgError:
            degenerate = True
            break
        if ws.size == 0:
            break
        cand = ws if ws.size == 1 else np.concatenate([ws, 0.5 * (ws[:-1] + ws[1:])])
        sc = sigma_max(A, B, C, D, cand)
        j = int(np.argmax(sc))
        if sc[j] <= lb * (1.0 + 0.5 * rel_tol):
            degenerate = True
            break
        lb, w_peak = float(sc[j]), float(cand[j])
    else:
        degenerate = True

    if degenerate:
        warnings.warn(
            "Hamiltonian eigenvalue test degenerated; refining sweep peaks by golden section",
            HinfWarning,
            stacklevel=2,
        )
        f = lambda x: float(sigma_max(A, B, C, D, [np.exp(x)])[0])  # noqa: E731
        pos = grid[grid > 0]
        vals = sigma_max(A, B, C, D, pos)
        for idx in np.argsort(vals)[::-1][:5]:
            a = np.log(pos[max(idx - 1, 0)])
            b = np.log(pos[min(idx + 1, pos.size - 1)])
            x, fx = _golden_max(f, a, b)
            if fx > lb:
                lb, w_peak = fx, float(np.exp(x))
    return (lb, w_peak) if return_peak else lb


def feedback_state_matrix(plant, controller) -> np.ndarray:
    """State matrix of the negative-feedback loop ``u = -K y``.

    ``plant`` and ``controller`` are standard-form ``(A, B, C, D)`` tuples
    (use :meth:`DescriptorRealization.to_state_space`).
    """
    Ap, Bp, Cp, Dp = (np.asarray(m, dtype=float) for m in plant)
    Ak, Bk, Ck, Dk = (np.asarray(m, dtype=float) for m in controller)
    m = Bp.shape[1]
    F = np.eye(m) + Dk @ Dp
    if np.linalg.cond(F) > 1e12:
        raise SingularityError("feedback interconnection is ill-posed (I + Dk Dp singular)")
    Fi = np.linalg.inv(F)
    # u = -Fi (Dk Cp xp + Ck xk),  y = Cp xp + Dp u
    Uxp, Uxk = -Fi @ Dk @ Cp, -Fi @ Ck
    Yxp, Yxk = Cp + Dp @ Uxp, Dp @ Uxk
    top = np.hstack([Ap + Bp @ Uxp, Bp @ Uxk])
    bot = np.hstack([Bk @ Yxp, Ak + Bk @ Yxk])
    return np.vstack([top, bot])
