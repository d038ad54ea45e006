"""Iterative small-gain constrained controller design.

Each outer iteration identifies ``G_i = (I - M(K_i)) P`` from data, takes
``gamma_i = ||G_i||_inf`` and improves the matching objective over
controllers within ``||K - K_i||_inf < eps / gamma_i``.  By the small-gain
theorem every accepted controller keeps the loop internally stable, and the
current controller is always feasible, so the objective never increases.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .closed_loop import (
    _reference_samples,
    estimate_gamma,
    loop_samples,
    objective_from_samples,
    verify_closed_loop_stability,
)
from .controller import (
    BETA_MIN,
    ControllerStructure,
    controller_difference_norm,
    controller_response,
    _factored_poly,
)
from .exceptions import (
    GammaEstimationError,
    InitializationError,
    LDISCError,
    PreconditionError,
)
from .freq_data import FrequencyDataset

__all__ = [
    "DesignConfig",
    "IterationRecord",
    "DesignReport",
    "SubproblemResult",
    "initial_candidates",
    "initialize_controller",
    "solve_subproblem",
    "run_ldisc",
    "design",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignConfig:
    """Tuning knobs for initialization, the subproblems and the outer loop.

    ``epsilon`` shrinks the small-gain radius ``epsilon / gamma_i`` as a
    safety factor; ``eta`` stops the loop once an iteration improves the
    objective by no more than it.
    """

    epsilon: float = 1.0
    eta: float = 1e-9
    max_iter: int = 500
    svd_rel_tol: float = 1e-10
    hinf_rel_tol: float = 1e-6
    inner_max_evals: int = 200
    fd_step: float = 1e-6
    penalty_init: float = 1e2
    penalty_growth: float = 10.0
    penalty_rounds: int = 3
    constraint_backoff: float = 0.02
    surrogate_points: int = 200
    max_shrink: int = 40
    init_restarts: int = 50
    init_local_evals: int = 40
    init_candidates: int = 5
    pilot_iter: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.svd_rel_tol < 1:
            raise ValueError("svd_rel_tol must lie in (0, 1)")
        if min(self.inner_max_evals, self.init_restarts, self.init_candidates, self.init_local_evals) < 1:
            raise ValueError("evaluation budgets must be positive")
        if self.pilot_iter < 0:
            raise ValueError("pilot_iter must be nonnegative")
        if not 0 <= self.constraint_backoff < 1:
            raise ValueError("constraint_backoff must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    """State after ``index`` accepted outer iterations.

    ``step_norm`` is the exact ``||K(theta_i) - K(theta_{i-1})||_inf`` and
    ``step_radius`` the bound ``eps / gamma_{i-1}`` it had to stay under;
    ``gamma`` is the estimate computed at this iterate (NaN when the loop
    stopped before needing it).
    """

    index: int
    objective: float
    theta: np.ndarray
    gamma: float = float("nan")
    step_norm: float = float("nan")
    step_radius: float = float("nan")
    accepted: bool = False
    status: str = "initial"
    closed_loop_stable: bool = True
    closed_loop_abscissa: float = float("nan")
    wall_ms: float = 0.0

    @property
    def norm_margin(self) -> float:
        return self.step_radius - self.step_norm

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theta"] = np.asarray(self.theta).tolist()
        out["norm_margin"] = self.norm_margin
        return out


@dataclass
class DesignReport:
    records: list
    structure: ControllerStructure
    stop_reason: str
    config: DesignConfig
    dataset_hash: str = ""
    error: str = ""

    @property
    def theta(self) -> np.ndarray:
        return self.records[-1].theta

    @property
    def objective(self) -> float:
        return self.records[-1].objective

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def n_iter(self) -> int:
        return len(self.records) - 1

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "error": self.error,
            "final_objective": self.objective,
            "final_theta": np.asarray(self.theta).tolist(),
            "structure": self.structure.to_dict(),
            "config": self.config.to_dict(),
            "dataset_hash": self.dataset_hash,
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class SubproblemResult:
    theta: np.ndarray
    objective: float
    step_norm: float
    radius: float
    status: str
    n_evals: int = 0


class _Problem:
    """Cached data-side quantities shared by every evaluation."""

    def __init__(self, dataset: FrequencyDataset, Md, structure: ControllerStructure, config: DesignConfig):
        self.dataset = dataset
        self.structure = structure
        self.config = config
        self.Md = _reference_samples(dataset, Md)
        w = dataset.omega
        self.grid = np.unique(np.concatenate([
            [0.0],
            np.logspace(np.log10(w[0] / 100), np.log10(w[-1] * 100), config.surrogate_points),
            w,
        ]))
        self.freq_range = (w[0], w[-1])

    def objective(self, theta) -> float:
        K = controller_response(self.structure, theta, self.dataset.omega)
        return objective_from_samples(self.Md, loop_samples(self.dataset, K)).d

    def diff_gains(self, theta, K_center) -> np.ndarray:
        """Largest singular value of ``K(theta) - K_center`` at every grid point."""
        K = controller_response(self.structure, theta, self.grid)
        if K.shape[1:] == (1, 1):
            return np.abs(K[:, 0, 0] - K_center[:, 0, 0])
        return np.linalg.svd(K - K_center, compute_uv=False)[:, 0]

    def exact_diff(self, theta, theta_center) -> float:
        return controller_difference_norm(self.structure, theta, theta_center,
                                          rel_tol=self.config.hinf_rel_tol,
                                          freq_range=self.freq_range)


def _factor_monic(c) -> np.ndarray:
    """Inverse of the factored parametrization for a monic coefficient vector.

    Conjugate root pairs become quadratics, real roots are paired in sorted
    order and a leftover real root becomes the trailing linear factor.
    """
    roots = np.roots(c)
    cplx = roots[roots.imag > 1e-12 * (1.0 + np.abs(roots))]
    real = np.sort(roots[np.abs(roots.imag) <= 1e-12 * (1.0 + np.abs(roots))].real)
    params = []
    for r in cplx:
        params += [-2.0 * r.real, abs(r) ** 2]
    for a, b in zip(real[0::2], real[1::2]):
        params += [-(a + b), a * b]
    if real.size % 2:
        params.append(-real[-1])
    return np.array(params, dtype=float)


class _Coordinates:
    """Map between ``theta`` and scaled unconstrained variables ``z``.

    ``beta = BETA_MIN + exp(u)`` keeps the denominator strictly feasible.
    Each numerator is moved through its expanded coefficients
    ``k * poly(alpha)``, which removes the near-redundancy between a small
    gain and large zero parameters.  Every coordinate is scaled by
    ``1 + |value at the centre|``.
    """

    def __init__(self, structure: ControllerStructure, theta_center):
        self.structure = structure
        self.n_p = structure.n_p
        beta, alpha, k = structure.split(theta_center)
        parts = [np.log(np.maximum(beta - BETA_MIN, 1e-3 * BETA_MIN))]
        for i, row in enumerate(structure.n_z):
            for j, nz in enumerate(row):
                if k[i, j] == 0:
                    parts.append(np.zeros(nz + 1))
                else:
                    parts.append(k[i, j] * _factored_poly(alpha[i][j]))
        self.phi0 = np.concatenate(parts)
        self.scale = 1.0 + np.abs(self.phi0)
        self.scale[: self.n_p] = 1.0

    def theta(self, z) -> np.ndarray:
        phi = self.phi0 + self.scale * z
        beta = BETA_MIN + np.exp(np.minimum(phi[: self.n_p], 700.0))
        alphas, gains = [], []
        pos = self.n_p
        for row in self.structure.n_z:
            for nz in row:
                c = phi[pos:pos + nz + 1]
                pos += nz + 1
                if c[0] == 0.0:
                    alphas.append(np.full(nz, np.nan))
                    gains.append(0.0)
                    continue
                gains.append(c[0])
                alphas.append(_factor_monic(c / c[0]) if nz else np.zeros(0))
        return np.concatenate([beta, *alphas, gains])


def _fd_gradient(f, z, f0, step):
    g = np.zeros_like(z)
    n_evals = 0
    for i in range(z.size):
        h = step * (1.0 + abs(z[i]))
        e = np.zeros_like(z)
        e[i] = h
        fp, fm = f(z + e), f(z - e)
        n_evals += 2
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2 * h)
        elif np.isfinite(fp):
            g[i] = (fp - f0) / h
        elif np.isfinite(fm):
            g[i] = (f0 - fm) / h
    return g, n_evals


def _bfgs(f, z0, max_evals, step, callback=None):
    """Finite-difference BFGS with Armijo backtracking; returns ``(z, f(z), evals)``."""
    z = np.asarray(z0, dtype=float).copy()
    fz = f(z)
    n_evals = 1
    if not np.isfinite(fz):
        return z, fz, n_evals
    n = z.size
    H = np.eye(n)
    g, k = _fd_gradient(f, z, fz, step)
    n_evals += k
    while n_evals + 2 * n + 1 <= max_evals:
        if not np.any(g):
            break
        p = -H @ g
        slope = g @ p
        if slope >= 0:
            H = np.eye(n)
            p, slope = -g, -(g @ g)
        t = 1.0
        accepted = False
        while n_evals < max_evals:
            z_new = z + t * p
            f_new = f(z_new)
            n_evals += 1
            if np.isfinite(f_new) and f_new <= fz + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
            if t < 1e-12:
                break
        if not accepted:
            break
        if callback is not None:
            callback(z_new, f_new)
        if n_evals + 2 * n > max_evals:
            z, fz = z_new, f_new
            break
        g_new, k = _fd_gradient(f, z_new, f_new, step)
        n_evals += k
        s, y = z_new - z, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        z, fz, g = z_new, f_new, g_new
        if abs(slope) < 1e-15 * max(abs(fz), 1e-300):
            break
    return z, fz, n_evals


def solve_subproblem(
    dataset: FrequencyDataset,
    Md,
    structure: ControllerStructure,
    theta_i,
    gamma_i: float,
    config: DesignConfig = DesignConfig(),
    _problem: _Problem | None = None,
) -> SubproblemResult:
    """Improve the matching objective within the small-gain ball around ``theta_i``.

    The infinity-norm constraint enters the inner descent as a quadratic
    exterior penalty on a frequency-grid surrogate.  The result is then
    checked with the exact state-space norm and, if needed, pulled back along
    the segment towards ``theta_i`` in the search coordinates until it
    satisfies the bound strictly and decreases the objective.  ``theta_i`` itself is returned when no
    such point is found.
    """
    theta_i = np.asarray(theta_i, dtype=float)
    prob = _problem or _Problem(dataset, Md, structure, config)
    beta = theta_i[: structure.n_p]
    if np.any(beta < BETA_MIN):
        raise PreconditionError(f"theta_i violates beta >= {BETA_MIN}: beta={beta}")
    if not gamma_i > 0:
        raise PreconditionError(f"gamma_i must be positive, got {gamma_i!r}")

    radius = config.epsilon / gamma_i
    d_i = prob.objective(theta_i)
    if radius == 0.0 or not np.isfinite(radius) or d_i == 0.0:
        status = "optimal" if d_i == 0.0 else "empty-region"
        return SubproblemResult(theta_i, d_i, 0.0, radius, status)

    coords = _Coordinates(structure, theta_i)
    K_center = controller_response(structure, theta_i, prob.grid)
    target = (1.0 - config.constraint_backoff) * radius
    best = {"z": None, "d": d_i}

    def evaluate(z, mu):
        th = coords.theta(z)
        try:
            d = prob.objective(th)
            excess = np.maximum(prob.diff_gains(th, K_center) / target - 1.0, 0.0)
            viol = float(excess @ excess)
        except (LDISCError, np.linalg.LinAlgError, FloatingPointError):
            return np.inf, np.inf, th
        return d, viol, th

    n_evals = 0
    z = np.zeros(theta_i.size)
    mu = config.penalty_init
    for _ in range(config.penalty_rounds):
        def merit(zz, mu=mu):
            d, viol, th = evaluate(zz, mu)
            if not np.isfinite(d):
                return np.inf
            if viol == 0.0 and d < best["d"]:
                best["z"], best["d"] = np.array(zz, dtype=float), d
            return d / d_i + mu * viol

        budget = config.inner_max_evals - n_evals
        if budget <= 2 * z.size + 1:
            break
        z, _, used = _bfgs(merit, z, budget, config.fd_step)
        n_evals += used
        d_end, viol_end, _ = evaluate(z, mu)
        if viol_end == 0.0:
            break
        mu *= config.penalty_growth

    # no surrogate-feasible improvement: try the raw end point
    z_end = best["z"] if best["z"] is not None else z

    t = 1.0
    for _ in range(config.max_shrink):
        th = coords.theta(t * z_end)
        try:
            d = prob.objective(th)
        except LDISCError:
            d = np.inf
        if d < d_i:
            norm = prob.exact_diff(th, theta_i)
            if norm < radius:
                status = "accepted" if t == 1.0 else f"shrunk(t={t:g})"
                return SubproblemResult(th, d, norm, radius, status, n_evals)
        t *= 0.5
    return SubproblemResult(theta_i, d_i, 0.0, radius, "no-improvement", n_evals)


def _abscissa_or_inf(dataset, structure, theta, svd_rel_tol):
    try:
        return verify_closed_loop_stability(dataset, structure, theta, svd_rel_tol)[1]
    except (LDISCError, np.linalg.LinAlgError):
        return np.inf


def initial_candidates(
    dataset: FrequencyDataset,
    structure: ControllerStructure,
    config: DesignConfig = DesignConfig(),
    rng: np.random.Generator | None = None,
) -> list:
    """Stabilizing starts from a random multistart search, best abscissa first.

    Each start draws ``beta`` and the zero parameters log-uniformly in
    ``[1e-2, 1e2]`` and the gains uniformly in ``[-1, 1]``, then descends
    the spectral abscissa of the Loewner-identified closed loop.  The search
    stops once ``config.init_candidates`` starts are stabilizing or after
    ``config.init_restarts`` starts.

    Raises
    ------
    InitializationError
        When no start stabilizes the loop.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    margin = 1e-9
    n_p = structure.n_p
    n_alpha = structure.n_theta - n_p - structure.n_i * structure.n_o
    best = np.inf
    found = []
    for restart in range(config.init_restarts):
        theta = np.concatenate([
            10.0 ** rng.uniform(-2, 2, n_p),
            10.0 ** rng.uniform(-2, 2, n_alpha),
            rng.uniform(-1, 1, structure.n_i * structure.n_o),
        ])
        z, fz = _descend_abscissa(dataset, structure, theta, config)
        best = min(best, fz)
        if fz < -margin:
            log.info("stabilizing start at restart %d (abscissa %.4g)", restart, fz)
            found.append((fz, restart, _Coordinates(structure, theta).theta(z)))
            if len(found) >= config.init_candidates:
                break
    if not found:
        raise InitializationError(
            f"no stabilizing controller found in {config.init_restarts} restarts "
            f"(best closed-loop abscissa {best:.4g}); try a different controller structure"
        )
    found.sort(key=lambda c: (c[0], c[1]))
    return [theta for _, _, theta in found]


def initialize_controller(
    dataset: FrequencyDataset,
    structure: ControllerStructure,
    config: DesignConfig = DesignConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """The most stable of :func:`initial_candidates`."""
    return initial_candidates(dataset, structure, config, rng)[0]


def _descend_abscissa(dataset, structure, theta, config):
    """Normalized-gradient descent with step doubling/halving on the abscissa."""
    coords = _Coordinates(structure, theta)

    def f(z):
        return _abscissa_or_inf(dataset, structure, coords.theta(z), config.svd_rel_tol)

    z = np.zeros(theta.size)
    fz = f(z)
    evals = 1
    step = 0.1
    while evals < config.init_local_evals and np.isfinite(fz):
        g, k = _fd_gradient(f, z, fz, 1e-4)
        evals += k
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        improved = False
        while step > 1e-6 and evals < config.init_local_evals:
            z_new = z - step * g / gn
            f_new = f(z_new)
            evals += 1
            if f_new < fz:
                z, fz, improved = z_new, f_new, True
                step *= 2.0
                break
            step *= 0.5
        if not improved:
            break
    return z, fz


def _estimate_gamma_checked(prob: _Problem, theta, config: DesignConfig) -> float:
    try:
        return estimate_gamma(prob.dataset, prob.structure, theta, config.svd_rel_tol, config.hinf_rel_tol)
    except GammaEstimationError:
        stable, abscissa = verify_closed_loop_stability(prob.dataset, prob.structure, theta, config.svd_rel_tol)
        if not stable:
            raise GammaEstimationError(
                f"closed loop is not stable (identified abscissa {abscissa:.4g})"
            ) from None
        log.warning("unstable small-gain model with a stable loop; retrying with coarser truncation")
        return estimate_gamma(prob.dataset, prob.structure, theta,
                              min(config.svd_rel_tol * 100, 0.5), config.hinf_rel_tol)


def run_ldisc(
    dataset: FrequencyDataset,
    Md,
    structure: ControllerStructure,
    theta0,
    config: DesignConfig = DesignConfig(),
    callback=None,
) -> DesignReport:
    """Run the outer loop from a stabilizing ``theta0``.

    ``callback(record)`` is called after every iteration.  On a gamma
    estimation failure the raised :class:`GammaEstimationError` carries the
    partial report as ``exc.report``.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    if np.any(theta[: structure.n_p] < BETA_MIN):
        raise PreconditionError(f"theta0 violates beta >= {BETA_MIN}")
    stable, abscissa = verify_closed_loop_stability(dataset, structure, theta, config.svd_rel_tol)
    if not stable:
        raise PreconditionError(f"theta0 does not stabilize the loop (abscissa {abscissa:.4g})")

    prob = _Problem(dataset, Md, structure, config)
    d = prob.objective(theta)
    records = [IterationRecord(0, d, theta.copy(), closed_loop_abscissa=abscissa)]
    report = DesignReport(records, structure, "max_iter", config, dataset.fingerprint())
    if callback:
        callback(records[0])

    delta = np.inf
    i = 0
    while delta > config.eta and i < config.max_iter:
        t0 = time.perf_counter()
        try:
            gamma = _estimate_gamma_checked(prob, theta, config)
        except GammaEstimationError as exc:
            report.stop_reason, report.error = "error", str(exc)
            exc.report = report
            raise
        records[-1].gamma = gamma
        res = solve_subproblem(dataset, Md, structure, theta, gamma, config, _problem=prob)
        accepted = res.theta is not theta
        if accepted:
            stable, abscissa = verify_closed_loop_stability(dataset, structure, res.theta, config.svd_rel_tol)
        delta = d - res.objective
        theta, d = res.theta.copy(), res.objective
        i += 1
        rec = IterationRecord(
            i, d, theta, step_norm=res.step_norm, step_radius=res.radius,
            accepted=accepted, status=res.status, closed_loop_stable=stable,
            closed_loop_abscissa=abscissa, wall_ms=1e3 * (time.perf_counter() - t0),
        )
        records.append(rec)
        log.debug("iter %d: d=%.6g gamma=%.4g status=%s", i, d, gamma, res.status)
        if callback:
            callback(rec)

    report.stop_reason = "converged" if delta <= config.eta else "max_iter"
    return report


def design(
    dataset: FrequencyDataset,
    Md,
    structure: ControllerStructure,
    config: DesignConfig = DesignConfig(),
    theta0=None,
    callback=None,
) -> DesignReport:
    """Full design: :func:`run_ldisc` from ``theta0`` or from the best random start.

    Without ``theta0`` every start from :func:`initial_candidates` gets
    ``config.pilot_iter`` outer iterations; the trajectory with the lowest
    objective is then continued up to ``config.max_iter``.  The returned
    report is a single uninterrupted trajectory from its own ``theta_0``,
    so monotonicity and the per-step constraint hold along it.
    ``callback`` only sees the continued trajectory.
    """
    if theta0 is not None:
        return run_ldisc(dataset, Md, structure, theta0, config, callback)
    starts = initial_candidates(dataset, structure, config)
    if len(starts) == 1 or config.pilot_iter == 0 or config.pilot_iter >= config.max_iter:
        return run_ldisc(dataset, Md, structure, starts[0], config, callback)
    pilot_cfg = replace(config, max_iter=config.pilot_iter)
    pilots = []
    for k, theta in enumerate(starts):
        try:
            rep = run_ldisc(dataset, Md, structure, theta, pilot_cfg)
        except GammaEstimationError as exc:
            log.info("pilot %d failed: %s", k, exc)
            continue
        log.info("pilot %d: d=%.4g after %d iterations", k, rep.objective, rep.n_iter)
        pilots.append((rep.objective, k, rep))
    if not pilots:
        return run_ldisc(dataset, Md, structure, starts[0], config, callback)
    _, k, head = min(pilots, key=lambda p: (p[0], p[1]))
    log.info("continuing pilot %d", k)
    if callback:
        for rec in head.records:
            callback(rec)
    if head.stop_reason == "converged":
        head.config = config
        return head
    rest_cfg = replace(config, max_iter=config.max_iter - head.n_iter)
    try:
        tail = run_ldisc(dataset, Md, structure, head.theta, rest_cfg,
                         callback=_skip_first(callback, head.n_iter))
    except GammaEstimationError as exc:
        if getattr(exc, "report", None) is not None:
            exc.report = _join(head, exc.report, config)
        raise
    return _join(head, tail, config)


def _skip_first(callback, offset):
    """Forward all but the first record, renumbered to follow the head."""
    if callback is None:
        return None
    seen = []

    def wrapped(rec):
        if seen:
            callback(replace(rec, index=rec.index + offset))
        seen.append(True)

    return wrapped


def _join(head: DesignReport, tail: DesignReport, config: DesignConfig) -> DesignReport:
    offset = head.n_iter
    records = list(head.records[:-1])
    first = tail.records[0]
    last = head.records[-1]
    last.gamma = first.gamma
    records.append(last)
    for rec in tail.records[1:]:
        rec.index += offset
        records.append(rec)
    return DesignReport(records, head.structure, tail.stop_reason, config, head.dataset_hash, tail.error)
