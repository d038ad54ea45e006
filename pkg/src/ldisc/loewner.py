"""Loewner-framework interpolation of frequency data.

The samples are split into two interleaved sets of interpolation points,
each closed under complex conjugation, and the (block) Loewner and shifted
Loewner matrices are formed.  A projection onto the dominant singular
subspaces of the pencil gives a descriptor realization
``E x' = A x + B u, y = C x`` interpolating the data.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .exceptions import DatasetParseError, DegenerateDataError, SingularityError
from .freq_data import FrequencyDataset, FrequencySample

__all__ = [
    "DescriptorRealization",
    "InterpolationSet",
    "LoewnerPencil",
    "RankWarning",
    "partition_points",
    "build_pencil",
    "realize",
    "evaluate_realization",
    "frequency_response",
    "save_realization",
    "load_realization",
]

_REGULARITY_SHIFTS = (0.7313 + 1.1071j, -0.4142 + 2.2360j, 1.7320 - 0.5772j)


class RankWarning(UserWarning):
    """Numerical rank of the Loewner pencil is not clearly separated."""


@dataclass(frozen=True, eq=False)
class DescriptorRealization:
    """Real descriptor system ``(E, A, B, C)`` with transfer ``C (sE - A)^-1 B``.

    ``notes`` carries diagnostics attached during identification (rank
    ambiguity, rank reconciliation) and ``singular_values`` the pencil
    spectrum the order was read from, when available.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    notes: tuple = ()
    singular_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        E, A, B, C = (np.asarray(m, dtype=float) for m in (self.E, self.A, self.B, self.C))
        if A.size == 0:
            if B.ndim != 2 or C.ndim != 2:
                raise ValueError("order-0 realizations need 2-D B (0, m) and C (p, 0)")
            E, A = np.zeros((0, 0)), np.zeros((0, 0))
            B, C = B.reshape(0, B.shape[1]), C.reshape(C.shape[0], 0)
        else:
            E, A, B, C = (np.atleast_2d(m) for m in (E, A, B, C))
        r = A.shape[0]
        if E.shape != (r, r) or A.shape != (r, r) or B.shape[0] != r or C.shape[1] != r:
            raise ValueError(
                f"inconsistent shapes E{E.shape} A{A.shape} B{B.shape} C{C.shape}"
            )
        for name, m in zip("EABC", (E, A, B, C)):
            if not np.all(np.isfinite(m)):
                raise ValueError(f"matrix {name} has non-finite entries")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def __repr__(self):
        return (
            f"DescriptorRealization(order={self.order}, n_outputs={self.n_outputs}, "
            f"n_inputs={self.n_inputs})"
        )

    @classmethod
    def from_state_space(cls, A, B, C, D=None) -> "DescriptorRealization":
        """Embed ``(A, B, C, D)``; a nonzero ``D`` adds E-singular states.

        The feed-through is carried by states obeying ``0 = -x_d + u`` with
        output ``D x_d``.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.zeros((0, 0))
        n = A.shape[0]
        if n:
            B = np.asarray(B, dtype=float).reshape(n, -1)
            C = np.asarray(C, dtype=float).reshape(-1, n)
            m, p = B.shape[1], C.shape[0]
        else:
            p, m = np.atleast_2d(D).shape
            B, C = np.zeros((0, m)), np.zeros((p, 0))
        if D is None or not np.any(D):
            return cls(np.eye(n), A, B, C)
        D = np.asarray(D, dtype=float).reshape(p, m)
        E = block_diag(np.eye(n), np.zeros((m, m)))
        Aa = block_diag(A, -np.eye(m))
        Ba = np.vstack([B, np.eye(m)])
        Ca = np.hstack([C, D])
        return cls(E, Aa, Ba, Ca)

    def to_state_space(self):
        """Reduce to standard form ``(A, B, C, D)``.

        Well-conditioned ``E`` is inverted directly; otherwise the singular
        part is eliminated assuming an index-1 pencil.
        """
        E, A, B, C = self.E, self.A, self.B, self.C
        r = self.order
        if r == 0:
            return (np.zeros((0, 0)), np.zeros((0, self.n_inputs)),
                    np.zeros((self.n_outputs, 0)), np.zeros((self.n_outputs, self.n_inputs)))
        if np.linalg.cond(E) < 1e8:
            As = np.linalg.solve(E, A)
            Bs = np.linalg.solve(E, B)
            return As, Bs, C.copy(), np.zeros((self.n_outputs, self.n_inputs))
        U, s, Vh = np.linalg.svd(E)
        k = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
        At = U.T @ A @ Vh.T
        Bt = U.T @ B
        Ct = C @ Vh.T
        A11, A12, A21, A22 = At[:k, :k], At[:k, k:], At[k:, :k], At[k:, k:]
        B1, B2, C1, C2 = Bt[:k], Bt[k:], Ct[:, :k], Ct[:, k:]
        if np.linalg.cond(A22) > 1e12:
            raise SingularityError("descriptor pencil is not index one (impulsive modes)")
        X = np.linalg.solve(A22, np.hstack([A21, B2]))
        X21, X2b = X[:, :k], X[:, k:]
        Sinv = 1.0 / s[:k]
        As = Sinv[:, None] * (A11 - A12 @ X21)
        Bs = Sinv[:, None] * (B1 - A12 @ X2b)
        Cs = C1 - C2 @ X21
        Ds = -C2 @ X2b
        return As, Bs, Cs, Ds

    def is_regular(self) -> bool:
        if self.order == 0:
            return True
        for s in _REGULARITY_SHIFTS:
            sv = np.linalg.svd(s * self.E - self.A, compute_uv=False)
            if sv[-1] > 1e-13 * max(sv[0], 1e-300):
                return True
        return False

    def evaluate(self, s):
        return evaluate_realization(self, s)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "n_outputs": self.n_outputs,
            "n_inputs": self.n_inputs,
            "E": self.E.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DescriptorRealization":
        r = int(data["order"])
        p, m = int(data["n_outputs"]), int(data["n_inputs"])

        def mat(key, shape):
            a = np.asarray(data[key], dtype=float)
            return a.reshape(shape)

        return cls(mat("E", (r, r)), mat("A", (r, r)), mat("B", (r, m)), mat("C", (p, r)))


@dataclass(frozen=True)
class InterpolationSet:
    """Interpolation points with their matrix data, ``data[k] = G(points[k])``."""

    points: np.ndarray
    data: np.ndarray

    def __len__(self):
        return self.points.size


@dataclass(frozen=True, eq=False)
class LoewnerPencil:
    """Block Loewner pencil in the original complex coordinates.

    Row block ``i`` belongs to ``mu[i]`` (height ``n_o``), column block
    ``j`` to ``lam[j]`` (width ``n_i``).
    """

    L: np.ndarray
    Ls: np.ndarray
    V: np.ndarray
    W: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    n_o: int
    n_i: int

    def real_form(self):
        """Return ``(L, Ls, V, W)`` after the unitary change of coordinates that
        makes conjugate-closed data real.  Sets without conjugate pairing are
        returned unchanged (complex)."""
        if not (_is_conjugate_paired(self.mu) and _is_conjugate_paired(self.lam)):
            return self.L, self.Ls, self.V, self.W
        Jl = _pair_transform(self.mu.size // 2, self.n_o)
        Jr = _pair_transform(self.lam.size // 2, self.n_i)
        L = Jl.conj().T @ self.L @ Jr
        Ls = Jl.conj().T @ self.Ls @ Jr
        V = Jl.conj().T @ self.V
        W = self.W @ Jr
        scale = max(np.abs(L).max(), np.abs(Ls).max(), np.abs(V).max(), np.abs(W).max(), 1e-300)
        imag = max(np.abs(m.imag).max() for m in (L, Ls, V, W))
        if imag > 1e-8 * scale:
            raise ValueError("conjugate-paired data is not conjugate symmetric")
        return L.real, Ls.real, V.real, W.real


def _pair_transform(n_pairs: int, block: int) -> np.ndarray:
    J = np.array([[1.0, -1.0j], [1.0, 1.0j]]) / np.sqrt(2.0)
    # point order is (p1, conj p1, p2, conj p2, ...), each point a block
    return np.kron(np.kron(np.eye(n_pairs), J), np.eye(block))


def _is_conjugate_paired(points: np.ndarray) -> bool:
    if points.size % 2:
        return False
    return bool(np.all(points[1::2] == np.conj(points[0::2])) and np.all(points[0::2].imag != 0))


def _as_arrays(data):
    if isinstance(data, FrequencyDataset):
        return np.asarray(data.omega), np.asarray(data.responses)
    if isinstance(data, tuple) and len(data) == 2:
        w, r = data
        r = np.asarray(r, dtype=complex)
        if r.ndim == 1:
            r = r[:, None, None]
        return np.asarray(w, dtype=float), r
    samples: Sequence[FrequencySample] = list(data)
    return (np.array([s.omega for s in samples], dtype=float),
            np.stack([np.asarray(s.response, dtype=complex) for s in samples]))


def partition_points(data) -> tuple[InterpolationSet, InterpolationSet]:
    """Split samples into conjugate-closed ``mu`` and ``lambda`` sets.

    ``data`` is a :class:`FrequencyDataset`, a sequence of
    :class:`FrequencySample`, or an ``(omega, responses)`` tuple.  After
    sorting by frequency the 1st, 3rd, ... samples go to ``mu`` and the
    2nd, 4th, ... to ``lambda``; each point ``j w`` is followed by ``-j w``
    carrying the conjugated response.
    """
    omega, resp = _as_arrays(data)
    if omega.size < 2:
        raise ValueError("need at least 2 sample points to partition")
    order = np.argsort(omega, kind="stable")
    omega, resp = omega[order], resp[order]
    if np.any(np.diff(omega) == 0):
        raise ValueError("sample frequencies must be distinct")

    def closed(idx):
        w = omega[idx]
        pts = np.empty(2 * w.size, dtype=complex)
        pts[0::2], pts[1::2] = 1j * w, -1j * w
        dat = np.empty((2 * w.size,) + resp.shape[1:], dtype=complex)
        dat[0::2], dat[1::2] = resp[idx], np.conj(resp[idx])
        return InterpolationSet(pts, dat)

    return closed(slice(0, None, 2)), closed(slice(1, None, 2))


def build_pencil(mu_set: InterpolationSet, lam_set: InterpolationSet) -> LoewnerPencil:
    mu = np.asarray(mu_set.points, dtype=complex)
    lam = np.asarray(lam_set.points, dtype=complex)
    Gm = np.asarray(mu_set.data, dtype=complex)
    Gl = np.asarray(lam_set.data, dtype=complex)
    if Gm.ndim == 1:
        Gm = Gm[:, None, None]
    if Gl.ndim == 1:
        Gl = Gl[:, None, None]
    if Gm.shape[1:] != Gl.shape[1:]:
        raise ValueError(f"data shapes differ: {Gm.shape[1:]} vs {Gl.shape[1:]}")
    diff = mu[:, None] - lam[None, :]
    if np.any(diff == 0):
        i, j = np.argwhere(diff == 0)[0]
        raise ValueError(f"interpolation point collision mu[{i}] = lambda[{j}] = {mu[i]!r}")
    p, m = Gm.shape[1:]
    nm, nl = mu.size, lam.size
    dd = diff[:, :, None, None]
    L = (Gm[:, None] - Gl[None, :]) / dd
    Ls = (mu[:, None, None, None] * Gm[:, None] - lam[None, :, None, None] * Gl[None, :]) / dd
    L = L.transpose(0, 2, 1, 3).reshape(nm * p, nl * m)
    Ls = Ls.transpose(0, 2, 1, 3).reshape(nm * p, nl * m)
    V = Gm.reshape(nm * p, m)
    W = Gl.transpose(1, 0, 2).reshape(p, nl * m)
    return LoewnerPencil(L, Ls, V, W, mu, lam, p, m)


def _numerical_rank(sv: np.ndarray, rel_tol: float) -> int:
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def realize(data, svd_rel_tol: float = 1e-10, order: int | None = None) -> DescriptorRealization:
    """Identify a real descriptor realization interpolating ``data``.

    Parameters
    ----------
    data : FrequencyDataset, sequence of FrequencySample, or (omega, responses)
    svd_rel_tol : float
        Singular values of ``[L, Ls]`` above ``svd_rel_tol * sigma_max`` set
        the order.
    order : int, optional
        Force the truncation order instead of reading it from the spectrum.

    Raises
    ------
    DegenerateDataError
        If the Loewner matrix vanishes (constant or zero data).
    """
    if not 0 < svd_rel_tol < 1:
        raise ValueError(f"svd_rel_tol must lie in (0, 1), got {svd_rel_tol!r}")
    mu_set, lam_set = partition_points(data)
    pencil = build_pencil(mu_set, lam_set)
    L, Ls, V, W = pencil.real_form()

    nL, nLs = np.linalg.norm(L), np.linalg.norm(Ls)
    w_max = np.abs(pencil.mu).max()
    if nL == 0 or nL * w_max <= 1e-12 * nLs:
        raise DegenerateDataError("Loewner matrix vanishes; data carry no dynamics")

    Y1, s1, _ = np.linalg.svd(np.hstack([L, Ls]), full_matrices=False)
    _, s2, X2h = np.linalg.svd(np.vstack([L, Ls]), full_matrices=False)
    notes = []
    if order is None:
        r1 = _numerical_rank(s1, svd_rel_tol)
        r2 = _numerical_rank(s2, svd_rel_tol)
        r = min(r1, r2)
        if r1 != r2:
            notes.append(f"rank mismatch between [L, Ls] ({r1}) and [L; Ls] ({r2}); using {r}")
        if r < s1.size and s1[r] > 0 and s1[r - 1] / s1[r] < 10:
            notes.append(
                f"ambiguous rank: sigma_{r}/sigma_{r + 1} = {s1[r - 1] / s1[r]:.3g} < 10"
            )
    else:
        r = int(order)
        if not 0 < r <= min(s1.size, s2.size):
            raise ValueError(f"order must lie in [1, {min(s1.size, s2.size)}], got {r}")
    for msg in notes:
        warnings.warn(msg, RankWarning, stacklevel=2)

    Y = Y1[:, :r]
    X = X2h[:r].conj().T
    E = -Y.conj().T @ L @ X
    A = -Y.conj().T @ Ls @ X
    B = Y.conj().T @ V
    C = W @ X
    if np.iscomplexobj(E):
        E, A, B, C = E.real, A.real, B.real, C.real
    return DescriptorRealization(E, A, B, C, notes=tuple(notes), singular_values=s1)


def evaluate_realization(real: DescriptorRealization, s) -> np.ndarray:
    """``C (sE - A)^-1 B`` at a scalar point; raises on a singular shift."""
    s = complex(s)
    if real.order == 0:
        return np.zeros((real.n_outputs, real.n_inputs), dtype=complex)
    M = s * real.E - real.A
    if np.linalg.cond(M) > 1e14:
        raise SingularityError(f"sE - A is singular at s={s!r}")
    return real.C @ np.linalg.solve(M, real.B.astype(complex))


def frequency_response(real: DescriptorRealization, omega) -> np.ndarray:
    """Transfer at ``s = j omega`` for an array of frequencies, shape (N, p, m).

    ``omega = 0`` is allowed.  No singularity screening; use
    :func:`evaluate_realization` for checked single-point evaluation.
    """
    s = 1j * np.atleast_1d(np.asarray(omega, dtype=float))
    if real.order == 0:
        return np.zeros((s.size, real.n_outputs, real.n_inputs), dtype=complex)
    M = s[:, None, None] * real.E[None] - real.A[None]
    X = np.linalg.solve(M, np.broadcast_to(real.B.astype(complex), (s.size,) + real.B.shape))
    return real.C[None] @ X


def save_realization(real: DescriptorRealization, path, extra: dict | None = None) -> None:
    payload = real.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_realization(path) -> DescriptorRealization:
    try:
        return DescriptorRealization.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"{path}: invalid realization file ({exc})") from exc
