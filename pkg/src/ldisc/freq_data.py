"""Frequency-response datasets and rational transfer matrices.

Frequencies are angular (rad/s) everywhere.  Only positive frequencies are
stored; the conjugate half of the spectrum is implied by realness of the
underlying system and is handled by :mod:`ldisc.loewner`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import signal
from scipy.linalg import block_diag

from .exceptions import DatasetParseError, SingularityError

__all__ = [
    "FrequencySample",
    "FrequencyDataset",
    "RationalTransferMatrix",
    "logspace_frequencies",
    "sample_rational",
    "load_dataset",
    "save_dataset",
    "load_rational",
    "save_rational",
]


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencySample:
    omega: float
    response: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive and finite, got {self.omega!r}")
        resp = np.atleast_2d(np.asarray(self.response, dtype=complex))
        if resp.ndim != 2:
            raise ValueError("response must be a matrix")
        if not np.all(np.isfinite(resp)):
            raise ValueError(f"non-finite response at omega={self.omega!r}")
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "response", _frozen(resp))


class FrequencyDataset:
    """Immutable set of plant samples ``(omega_k, Phi_k)``.

    Parameters
    ----------
    omega : array_like, shape (N,)
        Strictly increasing positive frequencies in rad/s.
    responses : array_like, shape (N, n_o, n_i)
        Complex frequency-response matrices.  A 1-D array is read as SISO.
    """

    __slots__ = ("_omega", "_responses")

    def __init__(self, omega, responses):
        omega = np.asarray(omega, dtype=float)
        responses = np.asarray(responses, dtype=complex)
        if omega.ndim != 1:
            raise ValueError("omega must be one-dimensional")
        if responses.ndim == 1:
            responses = responses[:, None, None]
        if responses.ndim != 3 or responses.shape[0] != omega.size:
            raise ValueError(
                f"responses must have shape (N, n_o, n_i) with N={omega.size}, "
                f"got {responses.shape}"
            )
        if omega.size < 2:
            raise ValueError("a dataset needs at least 2 samples")
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise ValueError("frequencies must be positive and finite")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(responses)):
            raise ValueError("responses contain NaN or Inf")
        if 0 in responses.shape[1:]:
            raise ValueError("empty response matrices")
        self._omega = _frozen(omega)
        self._responses = _frozen(responses)

    @classmethod
    def from_samples(cls, samples: Sequence[FrequencySample]) -> "FrequencyDataset":
        return cls([s.omega for s in samples], np.stack([s.response for s in samples]))

    @property
    def omega(self) -> np.ndarray:
        return self._omega

    @property
    def responses(self) -> np.ndarray:
        return self._responses

    @property
    def n_o(self) -> int:
        return self._responses.shape[1]

    @property
    def n_i(self) -> int:
        return self._responses.shape[2]

    @property
    def samples(self) -> list[FrequencySample]:
        return [FrequencySample(w, r) for w, r in zip(self._omega, self._responses)]

    def __len__(self) -> int:
        return self._omega.size

    def __iter__(self) -> Iterator[FrequencySample]:
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, FrequencyDataset):
            return NotImplemented
        return np.array_equal(self._omega, other._omega) and np.array_equal(
            self._responses, other._responses
        )

    def __repr__(self):
        return (
            f"FrequencyDataset(N={len(self)}, n_o={self.n_o}, n_i={self.n_i}, "
            f"omega=[{self._omega[0]:g}, {self._omega[-1]:g}])"
        )

    def with_responses(self, responses) -> "FrequencyDataset":
        return FrequencyDataset(self._omega, responses)

    def fingerprint(self) -> str:
        """Short content hash used for provenance records."""
        import hashlib

        h = hashlib.sha256()
        h.update(self._omega.tobytes())
        h.update(np.ascontiguousarray(self._responses).tobytes())
        return h.hexdigest()[:16]


def _horner(coeffs: np.ndarray, s):
    out = np.zeros_like(s, dtype=complex)
    for c in coeffs:
        out = out * s + c
    return out


class RationalTransferMatrix:
    """Matrix of real rational functions ``num[i][j](s) / den[i][j](s)``.

    Coefficients are in descending powers of ``s``.
    """

    def __init__(self, num, den):
        num = [[np.trim_zeros(np.atleast_1d(np.asarray(c, dtype=float)), "f") for c in row]
               for row in num]
        den = [[np.trim_zeros(np.atleast_1d(np.asarray(c, dtype=float)), "f") for c in row]
               for row in den]
        n_o = len(num)
        if n_o == 0 or len(den) != n_o:
            raise ValueError("num and den must be non-empty grids of equal shape")
        n_i = len(num[0])
        for rn, rd in zip(num, den):
            if len(rn) != n_i or len(rd) != n_i:
                raise ValueError("num and den must be rectangular grids of equal shape")
        for i in range(n_o):
            for j in range(n_i):
                if den[i][j].size == 0:
                    raise ValueError(f"denominator of entry ({i}, {j}) is zero")
                if num[i][j].size == 0:
                    num[i][j] = np.zeros(1)
                if not (np.all(np.isfinite(num[i][j])) and np.all(np.isfinite(den[i][j]))):
                    raise ValueError(f"non-finite coefficient in entry ({i}, {j})")
        self.num = num
        self.den = den
        self.n_o = n_o
        self.n_i = n_i

    @classmethod
    def siso(cls, num, den) -> "RationalTransferMatrix":
        return cls([[num]], [[den]])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_o, self.n_i

    def __repr__(self):
        return f"RationalTransferMatrix(n_o={self.n_o}, n_i={self.n_i})"

    def evaluate(self, s):
        """Evaluate at a scalar or array of complex points.

        Returns an array of shape ``(n_o, n_i)`` for scalar ``s`` and
        ``s.shape + (n_o, n_i)`` otherwise.
        """
        s_arr = np.asarray(s, dtype=complex)
        out = np.empty(s_arr.shape + (self.n_o, self.n_i), dtype=complex)
        for i in range(self.n_o):
            for j in range(self.n_i):
                d = self.den[i][j]
                dv = _horner(d, s_arr)
                scale = _horner(np.abs(d), np.abs(s_arr))
                bad = np.abs(dv) <= 1e-13 * scale
                if np.any(bad):
                    where = np.atleast_1d(s_arr)[np.atleast_1d(bad)][0]
                    raise SingularityError(
                        f"entry ({i}, {j}) has a pole at s={complex(where)!r}"
                        f" (omega={abs(complex(where).imag)!r})"
                    )
                out[..., i, j] = _horner(self.num[i][j], s_arr) / dv
        return out

    def poles(self) -> np.ndarray:
        """Union of the entry denominator roots (with multiplicity per entry)."""
        roots = [np.roots(d) for row in self.den for d in row]
        return np.concatenate(roots) if roots else np.empty(0)

    def to_state_space(self):
        """Non-minimal real ``(A, B, C, D)`` built entry by entry.

        Every entry must be proper.
        """
        D = np.zeros((self.n_o, self.n_i))
        entries = []
        for i in range(self.n_o):
            for j in range(self.n_i):
                n, d = self.num[i][j], self.den[i][j]
                if n.size > d.size:
                    raise ValueError(f"entry ({i}, {j}) is improper")
                if not np.any(n):
                    continue
                a, b, c, dd = signal.tf2ss(n, d)
                D[i, j] = dd[0, 0] if dd.size else 0.0
                if a.size:
                    entries.append((i, j, a, b, c))
        order = sum(e[2].shape[0] for e in entries)
        A = block_diag(*[e[2] for e in entries]) if entries else np.zeros((0, 0))
        B = np.zeros((order, self.n_i))
        C = np.zeros((self.n_o, order))
        k = 0
        for i, j, a, b, c in entries:
            n = a.shape[0]
            B[k:k + n, j] = b[:, 0]
            C[i, k:k + n] = c[0]
            k += n
        return A, B, C, D

    def to_dict(self) -> dict:
        return {
            "n_outputs": self.n_o,
            "n_inputs": self.n_i,
            "num": [[c.tolist() for c in row] for row in self.num],
            "den": [[c.tolist() for c in row] for row in self.den],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RationalTransferMatrix":
        model = cls(data["num"], data["den"])
        if (model.n_o, model.n_i) != (int(data["n_outputs"]), int(data["n_inputs"])):
            raise ValueError("n_outputs/n_inputs disagree with the coefficient grids")
        return model


def logspace_frequencies(w_min: float, w_max: float, count: int) -> np.ndarray:
    """Return ``count`` geometrically spaced frequencies from w_min to w_max."""
    if not (0 < w_min < w_max) or not np.isfinite(w_max):
        raise ValueError(f"need 0 < w_min < w_max, got ({w_min!r}, {w_max!r})")
    if int(count) != count or count < 2:
        raise ValueError(f"count must be an integer >= 2, got {count!r}")
    w = np.logspace(np.log10(w_min), np.log10(w_max), int(count))
    w[0], w[-1] = w_min, w_max
    return w


def sample_rational(model: RationalTransferMatrix, freqs) -> FrequencyDataset:
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise ValueError("frequencies must be positive and strictly increasing")
    return FrequencyDataset(freqs, model.evaluate(1j * freqs))


def _header(n_o: int, n_i: int) -> list[str]:
    cols = ["omega"]
    for i in range(n_o):
        for j in range(n_i):
            cols += [f"re_{i + 1}_{j + 1}", f"im_{i + 1}_{j + 1}"]
    return cols


def load_dataset(path, n_o: int | None = None, n_i: int | None = None) -> FrequencyDataset:
    """Read a dataset CSV.

    The header fixes the matrix shape; ``n_o``/``n_i`` when given must agree
    with it.  Rows are sorted by frequency and duplicates are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetParseError(f"cannot read {path}: {exc}") from exc

    header = None
    rows: list[tuple[int, list[float]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            header = fields
            if not header or header[0] != "omega" or (len(header) - 1) % 2:
                raise DatasetParseError("malformed header", lineno)
            header_line = lineno
            continue
        if len(fields) != len(header):
            raise DatasetParseError(
                f"expected {len(header)} fields, got {len(fields)}", lineno
            )
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise DatasetParseError(f"bad number ({exc})", lineno) from None
        if not all(np.isfinite(values)) or values[0] <= 0:
            raise DatasetParseError("non-finite value or non-positive omega", lineno)
        rows.append((lineno, values))

    if header is None:
        raise DatasetParseError(f"{path}: no header line")
    n_entries = (len(header) - 1) // 2
    if n_o is None and n_i is None:
        # infer from the last column name re_i_j / im_i_j
        try:
            _, a, b = header[-1].split("_")
            n_o, n_i = int(a), int(b)
        except ValueError:
            raise DatasetParseError("cannot infer matrix shape from header", header_line) from None
    elif n_o is None or n_i is None:
        raise ValueError("give both n_o and n_i, or neither")
    if n_o * n_i != n_entries or header != _header(n_o, n_i):
        raise DatasetParseError(
            f"header does not match a {n_o}x{n_i} response layout", header_line
        )
    if len(rows) < 2:
        raise DatasetParseError(f"{path}: need at least 2 data rows")

    rows.sort(key=lambda r: r[1][0])
    for (_, prev), (lineno, cur) in zip(rows, rows[1:]):
        if cur[0] == prev[0]:
            raise DatasetParseError(f"duplicated frequency omega={cur[0]!r}", lineno)

    data = np.array([r[1] for r in rows])
    resp = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(len(rows), n_o, n_i)
    return FrequencyDataset(data[:, 0], resp)


def save_dataset(dataset: FrequencyDataset, path, comments: Sequence[str] = ()) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(_header(dataset.n_o, dataset.n_i)))
    for w, r in zip(dataset.omega, dataset.responses):
        fields = [repr(float(w))]
        for z in r.ravel():
            fields += [repr(float(z.real)), repr(float(z.imag))]
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_rational(path) -> RationalTransferMatrix:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return RationalTransferMatrix.from_dict(data)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"{path}: invalid rational model ({exc})") from exc


def save_rational(model: RationalTransferMatrix, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")
